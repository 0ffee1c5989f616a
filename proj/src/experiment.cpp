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

#include "ctdesign/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <tuple>

#include "ctdesign/errors.hpp"
#include "ctdesign/raw_io.hpp"
#include "ctdesign/recon.hpp"

namespace ctdesign {

namespace fs = std::filesystem;

std::uint64_t phantom_seed(const ExperimentConfig& c, int id) { return derive_seed(c.seed, {1, static_cast<std::uint64_t>(id)}); }
std::uint64_t noise_seed(const ExperimentConfig& c, int id) { return derive_seed(c.seed, {2, static_cast<std::uint64_t>(id)}); }
std::uint64_t design_seed(const ExperimentConfig& c, int id) { return derive_seed(c.seed, {3, static_cast<std::uint64_t>(id)}); }
std::uint64_t baseline_seed(const ExperimentConfig& c, int id) { return derive_seed(c.seed, {4, static_cast<std::uint64_t>(id)}); }
std::uint64_t network_input_seed(const ExperimentConfig& c) { return derive_seed(c.seed, {5}); }
std::uint64_t network_init_seed(const ExperimentConfig& c, int id) { return derive_seed(c.seed, {6, static_cast<std::uint64_t>(id)}); }

ScanGeometry experiment_geometry(const ExperimentConfig& c) {
  return build_geometry(c.height, c.width, c.n_candidates, c.detector_count);
}

ImageData make_image(const ExperimentConfig& config, const RayTransform& op, int image_id) {
  ImageData d;
  d.id = image_id;
  d.phantom = sample_phantom(config.phantom, phantom_seed(config, image_id));
  std::vector<int> all(static_cast<std::size_t>(config.n_candidates));
  std::iota(all.begin(), all.end(), 0);
  d.noise_seed = noise_seed(config, image_id);
  NoisySinogram s = simulate_measurements(d.phantom.image.values, op, AngleSubset(all, config.n_candidates),
                                          config.noise_pct, d.noise_seed, false);
  d.sinogram = std::move(s.y);
  d.noise_std = s.noise_std;
  return d;
}

Eigen::VectorXd slice_measurements(const Eigen::VectorXd& sinogram, const AngleSubset& subset, int dp) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(dp) * subset.size());
  for (int k = 0; k < subset.size(); ++k)
    y.segment(static_cast<Eigen::Index>(k) * dp, dp) = sinogram.segment(static_cast<Eigen::Index>(subset[k]) * dp, dp);
  return y;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

class Logger {
 public:
  explicit Logger(std::ostream* out) : out_(out) {}
  void operator()(const std::string& line) {
    if (!out_) return;
    std::lock_guard<std::mutex> lock(mutex_);
    *out_ << line << std::endl;
  }

 private:
  std::ostream* out_;
  std::mutex mutex_;
};

std::string prior_key(const std::string& method) {
  return method == "lindip-gprior-retrain" ? "lindip-gprior" : method;
}

NetworkSpec network_spec(const ExperimentConfig& c) {
  NetworkSpec s = c.network;
  s.input_seed = network_input_seed(c);
  return s;
}

TrainOptions pilot_training(const ExperimentConfig& c, int image_id) {
  TrainOptions o;
  o.tv_strength = c.dip_fit_tv_strength;
  o.iterations = c.dip_fit_iterations;
  o.learning_rate = c.dip_fit_learning_rate;
  o.seed = network_init_seed(c, image_id);
  return o;
}

std::string fmt(double v) {
  std::ostringstream o;
  o << std::setprecision(10) << v;
  return o.str();
}

}  // namespace

FittedModel fit_model(const ExperimentConfig& config, const RayTransform& op, const ImageData& image,
                      const std::string& method, std::ostream* log) {
  const auto t0 = Clock::now();
  const AngleSubset pilot = equidistant_design(config.pilot_size, config.n_candidates);
  const SparseRows A = op.stacked(pilot);
  const Eigen::VectorXd y = slice_measurements(image.sinogram, pilot, config.detector_count);
  FittedModel m;
  m.method = method;
  if (method == "isotropic" || method == "matern") {
    FittedPrior f = fit_hyperparameters(method == "matern" ? PriorFamily::Matern12 : PriorFamily::Isotropic,
                                        config.height, config.width, A, y);
    m.prior = f.prior;
    m.noise = f.noise;
    m.report = f.report;
  } else if (is_linearised(method)) {
    auto net = std::make_shared<const UNet>(network_spec(config));
    TrainedNetwork trained = train_dip(*net, A, y, pilot_training(config, image.id));
    if (log)
      *log << "[img " << image.id << "] pilot network trained: loss " << trained.loss_trace.front() << " -> "
           << trained.final_loss << " (" << fmt(seconds_since(t0)) << " s)\n";
    auto jac = std::make_shared<const NetworkJacobian>(net, trained.theta);
    LinearisedFit fit = prior_key(method) == "lindip-block" ? fit_block_prior(*jac, A, y) : fit_gprior(*jac, A, y);
    m.network = net;
    m.theta = trained.theta;
    m.theta_prior = fit.theta_prior;
    m.noise = fit.noise;
    m.report = fit.report;
    m.prior = materialise_prior(LinearisedPrior(jac, fit.theta_prior));
  } else {
    throw std::invalid_argument("fit_model: method '" + method + "' has no prior");
  }
  m.seconds = seconds_since(t0);
  return m;
}

// --- per-image pipeline ----------------------------------------------------------------

namespace {

struct CellKey {
  std::string method, objective;
};

std::vector<CellKey> cells_of(const ExperimentConfig& c) {
  std::vector<CellKey> out;
  for (const std::string& m : c.methods) {
    if (is_baseline(m)) {
      out.push_back({m, "none"});
    } else {
      for (Objective o : c.objectives) out.push_back({m, to_string(o)});
    }
  }
  return out;
}

void evaluate_run(const ExperimentConfig& config, const RayTransform& op, const ImageData& image, RunRecord& run) {
  const int dp = config.detector_count;
  const bool full = config.schedule == "full";
  const Schedule tv_sched = full ? full_scale_tv_schedule(config.noise_pct) : desk_tv_schedule(config.noise_pct);
  const Schedule dip_sched = full ? full_scale_dip_schedule(config.noise_pct) : desk_dip_schedule(config.noise_pct);
  for (int n : config.evaluation_points()) {
    AngleSubset subset;
    if (run.method == "equidistant")
      subset = equidistant_design(n, config.n_candidates);
    else if (run.method == "random")
      subset = random_design(n, config.n_candidates, baseline_seed(config, image.id));
    else
      subset = run.selected.prefix(n);
    const Eigen::VectorXd y = slice_measurements(image.sinogram, subset, dp);
    const SparseRows A = op.stacked(subset);
    for (const std::string recon : {"tv", "dip"}) {
      EvaluationRecord ev;
      ev.n_angles = n;
      ev.recon = recon;
      const bool wanted = recon == "tv" ? config.evaluate_tv : config.evaluate_dip;
      if (!wanted) {
        ev.status = "skipped";
        run.evaluations.push_back(ev);
        continue;
      }
      try {
        ReconConfig rc;
        rc.data_range = config.data_range;
        ReconReport rep;
        if (recon == "tv") {
          rc.learning_rate = config.tv_learning_rate;
          rc = rc.with(schedule_lookup(tv_sched, n));
          rep = tv_reconstruct(A, y, config.height, config.width, rc, &image.phantom.image);
        } else {
          rc.learning_rate = config.dip_learning_rate;
          rc.eval_every = config.dip_eval_every;
          rc.seed = network_init_seed(config, image.id);
          rc = rc.with(schedule_lookup(dip_sched, n));
          const UNet net(network_spec(config));
          rep = dip_reconstruct(net, A, y, rc, &image.phantom.image);
        }
        ev.status = "ok";
        ev.psnr = *rep.psnr;
      } catch (const std::exception& e) {
        ev.status = "failed";
        ev.message = e.what();
      }
      run.evaluations.push_back(ev);
    }
  }
}

std::vector<RunRecord> run_image(const ExperimentConfig& config, const RayTransform& op, int image_id, Stage stage,
                                 Logger& log) {
  const ImageData image = make_image(config, op, image_id);
  std::vector<RunRecord> runs;
  if (stage == Stage::Data) return runs;
  const int dp = config.detector_count;
  const AngleSubset pilot = equidistant_design(config.pilot_size, config.n_candidates);
  const Eigen::VectorXd pilot_y = slice_measurements(image.sinogram, pilot, dp);

  std::map<std::string, std::shared_ptr<FittedModel>> fits;
  std::map<std::string, std::string> fit_errors;
  auto get_fit = [&](const std::string& method) -> std::shared_ptr<FittedModel> {
    const std::string key = prior_key(method);
    if (fits.count(key)) return fits[key];
    if (fit_errors.count(key)) throw std::runtime_error(fit_errors[key]);
    try {
      std::ostringstream msg;
      auto f = std::make_shared<FittedModel>(fit_model(config, op, image, key, &msg));
      if (!msg.str().empty()) log(msg.str().substr(0, msg.str().size() - 1));
      log("[img " + std::to_string(image_id) + "] fitted " + key + " (log evidence " + fmt(f->report.log_evidence) +
          ", " + fmt(f->seconds) + " s)");
      fits[key] = f;
      return f;
    } catch (const std::exception& e) {
      fit_errors[key] = e.what();
      throw;
    }
  };

  for (const CellKey& cell : cells_of(config)) {
    RunRecord run;
    run.image_id = image_id;
    run.method = cell.method;
    run.objective = cell.objective;
    run.seed = is_baseline(cell.method) ? baseline_seed(config, image_id) : design_seed(config, image_id);
    run.selected = pilot;
    std::string stage_name = "fit";
    try {
      if (!is_baseline(cell.method)) {
        std::shared_ptr<FittedModel> fit = get_fit(cell.method);
        run.hyperparameters = fit->report.hyperparameters;
        run.prior_family = fit->prior->family();
        run.fit_seconds = fit->seconds;
        if (stage != Stage::Fit) {
          stage_name = "design";
          DesignRunOptions opt;
          opt.objective = parse_objective(cell.objective);
          opt.steps = config.steps;
          opt.samples = config.samples;
          opt.seed = run.seed;
          opt.jitter = config.jitter;
          PriorRefresher refresh;
          if (cell.method == "lindip-gprior-retrain") {
            opt.retrain_every = config.retrain_every;
            auto theta = std::make_shared<Eigen::VectorXd>(fit->theta);
            const double g = fit->theta_prior.g;
            refresh = [&config, &op, fit, theta, g, image_id, &log](const AngleSubset& chosen, const Eigen::VectorXd& y) {
              const auto t0 = Clock::now();
              const SparseRows A = op.stacked(chosen);
              TrainOptions o = pilot_training(config, image_id);
              if (config.retrain_warm_start) o.iterations = config.retrain_iterations;
              TrainedNetwork tr = train_dip(*fit->network, A, y, o, config.retrain_warm_start ? theta.get() : nullptr);
              *theta = tr.theta;
              auto jac = std::make_shared<const NetworkJacobian>(fit->network, tr.theta);
              Eigen::VectorXd s = compute_gprior_scale(*jac, A);
              auto prior = materialise_prior(LinearisedPrior(jac, ThetaPrior::gprior(g, std::move(s))));
              log("[img " + std::to_string(image_id) + "] retrained network and refreshed s at " +
                  std::to_string(chosen.size()) + " angles (" + fmt(seconds_since(t0)) + " s)");
              return std::static_pointer_cast<const PriorCovariance>(prior);
            };
          }
          auto source = [&image, dp](int a) -> Eigen::VectorXd {
            return image.sinogram.segment(static_cast<Eigen::Index>(a) * dp, dp);
          };
          const auto t0 = Clock::now();
          DesignResult res = run_design(fit->prior, fit->noise, op, pilot, pilot_y, source, opt, refresh);
          run.selected = res.selected;
          run.steps = std::move(res.steps);
          run.jitter_trace = std::move(res.jitter_trace);
          log("[img " + std::to_string(image_id) + "] " + cell.method + "/" + cell.objective + " design done (" +
              fmt(seconds_since(t0)) + " s)");
        }
      } else {
        const int n_max = config.pilot_size + config.steps;
        run.selected = cell.method == "equidistant" ? equidistant_design(n_max, config.n_candidates)
                                                    : random_design(n_max, config.n_candidates, run.seed);
      }
      if (stage == Stage::Evaluate) {
        stage_name = "evaluate";
        evaluate_run(config, op, image, run);
        std::string line = "[img " + std::to_string(image_id) + "] " + cell.method + "/" + cell.objective + " PSNR";
        for (const EvaluationRecord& ev : run.evaluations)
          if (ev.status == "ok") line += " " + ev.recon + "@" + std::to_string(ev.n_angles) + "=" + fmt(ev.psnr);
        log(line);
      }
    } catch (const std::exception& e) {
      run.failed = true;
      run.stage = stage_name;
      run.error = e.what();
      log("[img " + std::to_string(image_id) + "] " + cell.method + "/" + cell.objective + " FAILED in " + stage_name +
          ": " + e.what());
    }
    runs.push_back(std::move(run));
  }

  if (stage == Stage::Fit) {
    // Fitted hyperparameters are written by the caller from the run records;
    // checkpoints of pilot networks are written here while the models are alive.
    for (const auto& [key, f] : fits) {
      if (!f->network) continue;
      TrainedNetwork tn;
      tn.theta = f->theta;
      tn.options = pilot_training(config, image_id);
      save_checkpoint(config.output_dir / "fit" / ("img" + std::to_string(image_id) + "_" + key + "_theta.raw"),
                      *f->network, tn);
    }
  }
  return runs;
}

std::string cell_name(const RunRecord& r) {
  return r.method + "_" + r.objective + "_img" + std::to_string(r.image_id);
}

void write_data(const ExperimentConfig& config, const RayTransform& op) {
  const fs::path dir = config.output_dir / "data";
  fs::create_directories(dir);
  for (int k = 0; k < config.n_images; ++k) {
    const ImageData d = make_image(config, op, k);
    KeyValues h;
    h["preferential_deg"] = fmt(d.phantom.preferential_deg);
    h["phantom_seed"] = std::to_string(d.phantom.seed);
    write_image(dir / ("img" + std::to_string(k) + "_phantom.raw"), d.phantom.image, h);
    KeyValues s;
    s["noise_std"] = fmt(d.noise_std);
    s["noise_fraction"] = fmt(config.noise_pct);
    s["noise_seed"] = std::to_string(d.noise_seed);
    s["detector_pixels"] = std::to_string(config.detector_count);
    s["candidate_angles"] = std::to_string(config.n_candidates);
    s["layout"] = "angle-major, detector_pixels values per candidate angle";
    write_raw(dir / ("img" + std::to_string(k) + "_sinogram.raw"), d.sinogram, s);
  }
}

void write_run_artifacts(const ExperimentConfig& config, const ScanGeometry& geometry, const RunRecord& run,
                         Stage stage) {
  if (stage == Stage::Fit) {
    fs::create_directories(config.output_dir / "fit");
    if (run.failed || is_baseline(run.method)) return;
    KeyValues kv;
    kv["prior_family"] = run.prior_family;
    for (const Hyperparameter& h : run.hyperparameters) kv[h.name] = fmt(h.value);
    kv["fit_seconds"] = fmt(run.fit_seconds);
    write_key_values(config.output_dir / "fit" / ("img" + std::to_string(run.image_id) + "_" + run.method + ".txt"), kv);
    return;
  }
  const fs::path sel_dir = config.output_dir / "selected";
  const fs::path score_dir = config.output_dir / "scores";
  const fs::path man_dir = config.output_dir / "manifest";
  fs::create_directories(sel_dir);
  fs::create_directories(score_dir);
  fs::create_directories(man_dir);
  const std::string name = cell_name(run);

  std::ofstream sel(sel_dir / (name + ".csv"));
  sel << "step,angle_index,angle_deg,objective_value,seconds\n";
  const int n_pilot = run.selected.size() - static_cast<int>(run.steps.size());
  for (int k = 0; k < run.selected.size(); ++k) {
    const int a = run.selected[k];
    const double deg = geometry.angles_deg[static_cast<std::size_t>(a)];
    if (k < n_pilot || is_baseline(run.method)) {
      sel << (is_baseline(run.method) ? k : -1) << "," << a << "," << fmt(deg) << ",nan,0\n";
    } else {
      const StepRecord& s = run.steps[static_cast<std::size_t>(k - n_pilot)];
      sel << s.step << "," << a << "," << fmt(deg) << "," << fmt(s.score) << "," << fmt(s.seconds) << "\n";
    }
  }

  std::optional<fs::path> svg;
  if (config.write_svg && !run.steps.empty()) svg = score_dir / (name + ".svg");
  emit_diagnostics(run, geometry, score_dir / (name + ".csv"), svg);

  KeyValues kv;
  kv["image_id"] = std::to_string(run.image_id);
  kv["method"] = run.method;
  kv["objective"] = run.objective;
  kv["prior_family"] = run.prior_family.empty() ? "none" : run.prior_family;
  kv["samples"] = std::to_string(config.samples);
  kv["design_seed"] = std::to_string(run.seed);
  kv["phantom_seed"] = std::to_string(phantom_seed(config, run.image_id));
  kv["noise_seed"] = std::to_string(noise_seed(config, run.image_id));
  kv["experiment_seed"] = std::to_string(config.seed);
  for (const Hyperparameter& h : run.hyperparameters) kv["hyper." + h.name] = fmt(h.value);
  std::string jit;
  for (double j : run.jitter_trace) jit += (jit.empty() ? "" : ",") + fmt(j);
  kv["jitter_trace"] = jit;
  kv["fit_seconds"] = fmt(run.fit_seconds);
  kv["status"] = run.failed ? "failed" : "ok";
  if (run.failed) {
    kv["failed_stage"] = run.stage;
    kv["error"] = run.error;
  }
  write_key_values(man_dir / (name + ".txt"), kv);
}

void write_failures(const fs::path& path, const std::vector<RunRecord>& runs) {
  std::ofstream out(path);
  out << "image_id,method,objective,stage,message\n";
  auto clean = [](std::string s) {
    for (char& c : s)
      if (c == ',' || c == '\n') c = ';';
    return s;
  };
  for (const RunRecord& r : runs) {
    if (r.failed) out << r.image_id << "," << r.method << "," << r.objective << "," << r.stage << "," << clean(r.error) << "\n";
    for (const EvaluationRecord& ev : r.evaluations)
      if (ev.status == "failed")
        out << r.image_id << "," << r.method << "," << r.objective << ",recon-" << ev.recon << "@" << ev.n_angles << ","
            << clean(ev.message) << "\n";
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, Stage stage, std::ostream* log_stream) {
  config.validate();
  Logger log(log_stream);
  fs::create_directories(config.output_dir);
  {
    std::ofstream cfg(config.output_dir / "config.resolved.cfg");
    cfg << config.to_text();
  }
  const ScanGeometry geometry = experiment_geometry(config);
  const RayTransform op(geometry);
  ExperimentResult result;
  if (stage == Stage::Data) {
    write_data(config, op);
    log("wrote " + std::to_string(config.n_images) + " images to " + (config.output_dir / "data").string());
    return result;
  }
  bool any_linearised = false;
  for (const std::string& m : config.methods) any_linearised = any_linearised || is_linearised(m);
  if (any_linearised) {
    const UNet net(network_spec(config));
    Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(net.input().data(), net.input().size());
    KeyValues h;
    h["input_seed"] = std::to_string(network_input_seed(config));
    h["shape"] = std::to_string(net.input().rows()) + "x" + std::to_string(net.input().cols());
    write_raw(config.output_dir / "network_input.raw", flat, h);
  }
  if (stage == Stage::Fit) fs::create_directories(config.output_dir / "fit");

  std::vector<std::vector<RunRecord>> per_image(static_cast<std::size_t>(config.n_images));
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int k = next++; k < config.n_images; k = next++) {
      try {
        per_image[static_cast<std::size_t>(k)] = run_image(config, op, k, stage, log);
      } catch (const std::exception& e) {
        RunRecord r;
        r.image_id = k;
        r.method = "all";
        r.objective = "none";
        r.failed = true;
        r.stage = "data";
        r.error = e.what();
        per_image[static_cast<std::size_t>(k)] = {r};
      }
    }
  };
  const int n_workers = std::min(config.workers, config.n_images);
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& v : per_image)
    for (auto& r : v) result.runs.push_back(std::move(r));

  for (const RunRecord& r : result.runs) {
    if (r.failed) ++result.failures;
    for (const EvaluationRecord& ev : r.evaluations)
      if (ev.status == "failed") ++result.failures;
    if (r.method != "all") write_run_artifacts(config, geometry, r, stage);
  }
  write_failures(config.output_dir / "failures.csv", result.runs);
  if (stage == Stage::Evaluate) {
    write_psnr_csv(config.output_dir / "psnr.csv", result.runs);
    result.summary = summarise(result.runs);
    write_summary_csv(config.output_dir / "summary.csv", result.summary, config.data_range);
  }
  return result;
}

// --- tables ----------------------------------------------------------------------------

namespace {

std::vector<SummaryRow> summarise_rows(
    const std::vector<std::tuple<std::string, std::string, std::string, int, std::string, double>>& rows) {
  // key -> (values, failures); first-seen order is kept for readability.
  std::vector<std::tuple<std::string, std::string, std::string, int>> order;
  std::map<std::tuple<std::string, std::string, std::string, int>, std::pair<std::vector<double>, int>> acc;
  for (const auto& [method, objective, recon, n, status, value] : rows) {
    if (status == "skipped") continue;
    auto key = std::make_tuple(method, objective, recon, n);
    if (!acc.count(key)) order.push_back(key);
    auto& slot = acc[key];
    if (status == "ok")
      slot.first.push_back(value);
    else
      ++slot.second;
  }
  std::vector<SummaryRow> out;
  for (const auto& key : order) {
    const auto& [vals, fails] = acc[key];
    SummaryRow s;
    std::tie(s.method, s.objective, s.recon, s.n_angles) = key;
    s.n_ok = static_cast<int>(vals.size());
    s.n_failed = fails;
    if (!vals.empty()) {
      const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
      double ss = 0.0;
      for (double v : vals) ss += (v - mean) * (v - mean);
      s.mean_psnr = mean;
      s.stderr_psnr = vals.size() > 1 ? std::sqrt(ss / (vals.size() - 1)) / std::sqrt(static_cast<double>(vals.size())) : 0.0;
    } else {
      s.mean_psnr = std::nan("");
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace

std::vector<SummaryRow> summarise(const std::vector<RunRecord>& runs) {
  std::vector<std::tuple<std::string, std::string, std::string, int, std::string, double>> rows;
  for (const RunRecord& r : runs) {
    if (r.method == "all") continue;
    for (const EvaluationRecord& ev : r.evaluations) rows.emplace_back(r.method, r.objective, ev.recon, ev.n_angles, ev.status, ev.psnr);
  }
  return summarise_rows(rows);
}

void write_psnr_csv(const fs::path& path, const std::vector<RunRecord>& runs) {
  std::ofstream out(path);
  out << "image_id,method,objective,n_angles,recon,psnr_db,status\n";
  for (const RunRecord& r : runs) {
    if (r.method == "all") continue;
    for (const EvaluationRecord& ev : r.evaluations)
      out << r.image_id << "," << r.method << "," << r.objective << "," << ev.n_angles << "," << ev.recon << ","
          << (ev.status == "ok" ? fmt(ev.psnr) : "nan") << "," << ev.status << "\n";
  }
}

void write_summary_csv(const fs::path& path, const std::vector<SummaryRow>& rows, double data_range) {
  std::ofstream out(path);
  out << "method,objective,recon,n_angles,mean_psnr_db,stderr_psnr_db,n_ok,n_failed,data_range\n";
  for (const SummaryRow& s : rows)
    out << s.method << "," << s.objective << "," << s.recon << "," << s.n_angles << "," << fmt(s.mean_psnr) << ","
        << fmt(s.stderr_psnr) << "," << s.n_ok << "," << s.n_failed << "," << fmt(data_range) << "\n";
}

std::vector<SummaryRow> summarise_psnr_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::tuple<std::string, std::string, std::string, int, std::string, double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (f.size() != 7) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    rows.emplace_back(f[1], f[2], f[4], std::stoi(f[3]), f[6], f[6] == "ok" ? std::stod(f[5]) : 0.0);
  }
  return summarise_rows(rows);
}

void emit_diagnostics(const RunRecord& run, const ScanGeometry& geometry, const fs::path& csv,
                      const std::optional<fs::path>& svg) {
  std::ofstream out(csv);
  out << "step,angle_index,angle_deg,score\n";
  for (const StepRecord& s : run.steps)
    for (std::size_t k = 0; k < s.scores.angles.size(); ++k) {
      const int a = s.scores.angles[k];
      out << s.step << "," << a << "," << fmt(geometry.angles_deg[static_cast<std::size_t>(a)]) << ","
          << fmt(s.scores.values[k]) << "\n";
    }
  if (!svg) return;
  const int n_rows = std::min<int>(8, static_cast<int>(run.steps.size()));
  const double W = 640, H = 70, pad = 30;
  std::ofstream g(*svg);
  g << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W + 2 * pad << "\" height=\"" << H * n_rows + 2 * pad
    << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  g << "<text x=\"" << pad << "\" y=\"15\">" << run.method << " / " << run.objective << ", image " << run.image_id
    << ": normalised score per candidate angle (0 to 180 deg), first " << n_rows << " steps</text>\n";
  for (int r = 0; r < n_rows; ++r) {
    const StepRecord& s = run.steps[static_cast<std::size_t>(r)];
    const double top = pad + r * H, bottom = top + H - 10;
    double lo = *std::min_element(s.scores.values.begin(), s.scores.values.end());
    double hi = *std::max_element(s.scores.values.begin(), s.scores.values.end());
    if (hi <= lo) hi = lo + 1.0;
    g << "<polyline fill=\"none\" stroke=\"black\" points=\"";
    for (std::size_t k = 0; k < s.scores.angles.size(); ++k) {
      const double x = pad + W * geometry.angles_deg[static_cast<std::size_t>(s.scores.angles[k])] / 180.0;
      const double y = bottom - (bottom - top) * (s.scores.values[k] - lo) / (hi - lo);
      g << fmt(x) << "," << fmt(y) << " ";
    }
    g << "\"/>\n";
    const double xs = pad + W * s.angle_deg / 180.0;
    g << "<line x1=\"" << fmt(xs) << "\" y1=\"" << top << "\" x2=\"" << fmt(xs) << "\" y2=\"" << bottom
      << "\" stroke=\"red\"/>\n";
    g << "<text x=\"2\" y=\"" << (top + bottom) / 2 << "\">t=" << s.step << "</text>\n";
  }
  g << "</svg>\n";
}

}  // namespace ctdesign
