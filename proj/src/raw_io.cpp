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

#include "ctdesign/raw_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ctdesign {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::filesystem::path sidecar(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".hdr");
}

}  // namespace

void write_key_values(const std::filesystem::path& path, const KeyValues& kv) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  KeyValues kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

void write_raw(const std::filesystem::path& path, const Eigen::VectorXd& values, KeyValues header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
  }
  header["count"] = std::to_string(values.size());
  header["dtype"] = "float64-le";
  write_key_values(sidecar(path), header);
}

Eigen::VectorXd read_raw(const std::filesystem::path& path, KeyValues* header) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % 8 != 0) throw std::runtime_error(path.string() + ": size is not a multiple of 8");
  in.seekg(0);
  Eigen::VectorXd values(static_cast<Eigen::Index>(bytes / 8));
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    std::uint64_t bits;
    in.read(reinterpret_cast<char*>(&bits), sizeof(bits));
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    values[i] = std::bit_cast<double>(bits);
  }
  if (header) {
    *header = std::filesystem::exists(sidecar(path)) ? read_key_values(sidecar(path)) : KeyValues{};
    auto it = header->find("count");
    if (it != header->end() && std::stoll(it->second) != values.size())
      throw std::runtime_error(path.string() + ": sidecar count does not match data");
  }
  return values;
}

void write_image(const std::filesystem::path& path, const Image& image, KeyValues header) {
  header["height"] = std::to_string(image.height);
  header["width"] = std::to_string(image.width);
  write_raw(path, image.values, std::move(header));
}

Image read_image(const std::filesystem::path& path, KeyValues* header) {
  KeyValues kv;
  Image img;
  img.values = read_raw(path, &kv);
  if (!kv.count("height") || !kv.count("width"))
    throw std::runtime_error(path.string() + ": sidecar lacks image shape");
  img.height = std::stoi(kv["height"]);
  img.width = std::stoi(kv["width"]);
  if (static_cast<Eigen::Index>(img.height) * img.width != img.values.size())
    throw std::runtime_error(path.string() + ": shape does not match data length");
  if (header) *header = std::move(kv);
  return img;
}

}  // namespace ctdesign
