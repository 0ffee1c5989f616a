/*
 * Copyright 2026 The ctdesign Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CTDESIGN_RAW_IO_HPP_
#define CTDESIGN_RAW_IO_HPP_

#include <filesystem>
#include <map>
#include <string>

#include <Eigen/Core>

#include "ctdesign/phantom.hpp"

namespace ctdesign {

/// Ordered "key = value" text record. Used for raw-array sidecars, fitted
/// hyperparameters and run manifests.
using KeyValues = std::map<std::string, std::string>;

void write_key_values(const std::filesystem::path& path, const KeyValues& kv);
KeyValues read_key_values(const std::filesystem::path& path);

/// Raw little-endian float64 array at `path`, with a sidecar `path.hdr`
/// holding `count` plus any caller fields.
void write_raw(const std::filesystem::path& path, const Eigen::VectorXd& values,
               KeyValues header = {});
Eigen::VectorXd read_raw(const std::filesystem::path& path, KeyValues* header = nullptr);

void write_image(const std::filesystem::path& path, const Image& image, KeyValues header = {});
Image read_image(const std::filesystem::path& path, KeyValues* header = nullptr);

}  // namespace ctdesign

#endif  // CTDESIGN_RAW_IO_HPP_
