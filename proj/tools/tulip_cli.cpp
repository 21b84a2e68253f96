// Command-line front end: gen, train, calibrate, score, eval, verify-bound, trace-check.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "tulip/calibration.hpp"
#include "tulip/config_io.hpp"
#include "tulip/data.hpp"
#include "tulip/detector.hpp"
#include "tulip/errors.hpp"
#include "tulip/format.hpp"
#include "tulip/linearized.hpp"
#include "tulip/metrics.hpp"
#include "tulip/network.hpp"
#include "tulip/ntk.hpp"
#include "tulip/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tulip;

namespace {

constexpr const char* kVersion = "tulip 0.1.0";

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kTolerance = 3, kIo = 4 };

struct ToleranceViolation : Error {
  using Error::Error;
};

struct Common {
  std::string model, data, calib, config, out;
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

// wall time in manifests is measured from program start
const auto kProcessStart = std::chrono::steady_clock::now();

struct Manifest {
  std::string command;
  std::string config;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;

  void write(const std::string& main_out) const {
    for (const auto& o : outputs) {
      if (!fs::exists(o)) throw IoError("manifest lists missing output " + o);
    }
    nlohmann::ordered_json j;
    j["command"] = command;
    j["config"] = config;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["seed"] = seed;
    j["tool_version"] = kVersion;
    j["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - kProcessStart).count();
    write_text_file(main_out + ".manifest.json", j.dump(1) + "\n");
  }
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing --") + what);
  if (!fs::is_regular_file(path)) throw IoError(std::string("cannot read ") + what + " file: " + path);
}

void require_out(const std::string& path) {
  if (path.empty()) throw ConfigError("missing --out");
}

TulipConfig load_tulip_config(const Common& c) {
  TulipConfig config;
  if (!c.config.empty()) {
    require_file(c.config, "config");
    config = tulip_config_from(KeyValues::load(c.config));
  }
  if (c.seed) config.seed = *c.seed;
  return config;
}

int cmd_gen(const Common& c, const std::string& kind, std::size_t n, double spread, double radius,
            const std::string& split) {
  require_out(c.out);
  Manifest m{"gen", "", {}, {c.out}, c.seed.value_or(0)};
  const std::uint64_t seed = c.seed.value_or(0);
  const Split s = parse_split(split);
  Dataset d;
  if (kind == "moons") {
    d = gen_two_moons(n, spread, seed, s);
  } else if (kind == "gauss") {
    d = gen_gauss_clusters(n, spread, seed, s);
  } else if (kind == "spline") {
    d = gen_spline_regression(n, spread, seed, {}, s);
  } else if (kind == "ring") {
    d = gen_ood_ring(n, radius * two_moons_radius(), seed);
  } else if (kind == "box") {
    d = gen_uniform_box(n, radius * two_moons_radius(), seed);
  } else {
    throw ConfigError("unknown dataset kind '" + kind + "'");
  }
  write_dataset_csv(d, c.out);
  m.write(c.out);
  return kOk;
}

int cmd_train(const Common& c) {
  require_file(c.data, "data");
  require_out(c.out);
  TrainSetup setup;
  if (!c.config.empty()) {
    require_file(c.config, "config");
    setup = train_setup_from(KeyValues::load(c.config));
  }
  if (c.seed) setup.recipe.seed = *c.seed;
  const Dataset train = read_dataset_csv(c.data);
  std::vector<int> dims{train.input_dim()};
  dims.insert(dims.end(), setup.hidden.begin(), setup.hidden.end());
  dims.push_back(train.is_classification() ? train.num_classes : static_cast<int>(train.targets.cols()));
  if (train.is_classification() != (setup.recipe.loss == LossKind::softmax_ce)) {
    throw ConfigError("loss '" + std::string(to_string(setup.recipe.loss)) + "' does not fit this dataset");
  }
  const NetworkSpec spec = NetworkSpec::mlp(dims, setup.activation, true);
  const TrainResult result = train_empirical(spec, setup.recipe, train);
  save_model({spec, result.theta}, c.out);
  std::printf("final loss %.6g  max sample loss %.6g", result.epoch_loss.back(), result.max_sample_loss);
  if (train.is_classification()) std::printf("  train accuracy %.4f", result.accuracy);
  std::printf("\n");
  Manifest{"train", c.config, {c.data}, {c.out}, setup.recipe.seed}.write(c.out);
  return kOk;
}

int cmd_calibrate(const Common& c) {
  require_file(c.model, "model");
  require_file(c.data, "data");
  require_out(c.out);
  const TulipConfig config = load_tulip_config(c);
  const Model model = load_model(c.model);
  const Dataset val = read_dataset_csv(c.data);
  const CalibrationResult calib = calibrate(model.spec, model.params, val, config);
  save_calibration(calib, c.out);
  std::printf("theta_xx %.6g  J* %.6g%s%s\n", calib.theta_xx, calib.J_star, calib.degenerate ? "  (degenerate)" : "",
              calib.pseudo_labels ? "  (pseudo-labels)" : "");
  Manifest{"calibrate", c.config, {c.model, c.data}, {c.out}, config.seed}.write(c.out);
  return kOk;
}

int cmd_score(const Common& c) {
  require_file(c.model, "model");
  require_file(c.calib, "calib");
  require_file(c.data, "data");
  require_out(c.out);
  if (c.threads < 1) throw ConfigError("--threads must be at least 1");
  const TulipConfig config = load_tulip_config(c);
  const Model model = load_model(c.model);
  const CalibrationResult calib = load_calibration(c.calib);
  const Dataset data = read_dataset_csv(c.data);
  const auto rows = score_inputs(model.spec, model.params, data.inputs, config, calib, c.threads);
  write_text_file(c.out, scores_to_csv(rows));
  std::size_t capped = 0;
  for (const auto& r : rows) capped += r.capped ? 1 : 0;
  if (capped) std::fprintf(stderr, "warning: gamma capped on %zu inputs with a vanishing trace estimate\n", capped);
  Manifest{"score", c.config, {c.model, c.calib, c.data}, {c.out}, config.seed}.write(c.out);
  return kOk;
}

int cmd_eval(const Common& c, const std::string& id_path, const std::vector<std::string>& ood_paths) {
  require_file(id_path, "id");
  if (ood_paths.empty()) throw ConfigError("missing --ood");
  require_out(c.out);
  const auto id_rows = scores_from_csv(read_text_file(id_path));
  std::vector<ScoreReport> reports;
  Manifest m{"eval", "", {id_path}, {c.out, c.out + ".txt"}, 0};
  for (const auto& p : ood_paths) {
    require_file(p, "ood");
    reports.push_back(evaluate(id_rows, scores_from_csv(read_text_file(p)), fs::path(p).stem().string()));
    m.inputs.push_back(p);
  }
  write_text_file(c.out, report_csv(reports));
  const std::string text = report_text(reports);
  write_text_file(c.out + ".txt", text);
  std::fputs(text.c_str(), stdout);
  m.write(c.out);
  return kOk;
}

int cmd_verify_bound(const Common& c) {
  require_out(c.out);
  EnsembleConfig config;
  if (!c.config.empty()) {
    require_file(c.config, "config");
    config = ensemble_config_from(KeyValues::load(c.config));
  }
  if (c.seed) config.seed = *c.seed;
  const EnsembleReport report = ensemble_experiment(config);
  write_text_file(c.out, ensemble_csv(report));
  const double dev = report.deviation_coverage(1e-6);
  const double band = report.band_coverage(3.0);
  std::printf("beta %.6g  C %.6g  lambda_max %.6g  T %.6g  deviation coverage %.4f  3-std band coverage %.4f\n",
              report.beta, report.C, report.lambda_max, report.T, dev, band);
  Manifest{"verify-bound", c.config, {}, {c.out}, config.seed}.write(c.out);
  if (dev < 1.0 || band < 0.99) throw ToleranceViolation("fluctuation bound violated on the probe grid");
  return kOk;
}

int cmd_trace_check(const Common& c, std::size_t points, double trace_tol, double var_tol) {
  require_file(c.model, "model");
  TulipConfig config = load_tulip_config(c);
  const Model model = load_model(c.model);
  Eigen::MatrixXd inputs;
  if (!c.data.empty()) {
    require_file(c.data, "data");
    inputs = read_dataset_csv(c.data).inputs;
  } else {
    auto engine = rng::make_engine(config.seed, "trace_check.inputs");
    std::normal_distribution<double> normal(0.0, 1.0);
    inputs.resize(static_cast<Eigen::Index>(points), model.spec.input_dim());
    for (Eigen::Index i = 0; i < inputs.size(); ++i) inputs.data()[i] = normal(engine);
  }
  const auto n = std::min<Eigen::Index>(inputs.rows(), static_cast<Eigen::Index>(points));
  bool ok = true;
  std::printf("point  exact_trace  estimate  rel_err  trace_var  S  var_rel_err\n");
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd z = inputs.row(i).transpose();
    const double exact = param_jacobian(model.spec, model.params, z).squaredNorm();
    const RawSamples raw = sample_raw(model.spec, model.params, z, config, static_cast<std::uint64_t>(i));
    const double est = raw.theta_tr / (config.epsilon * config.epsilon);
    const double rel = std::abs(est - exact) / std::max(exact, 1e-300);
    // Variance matching with theta_xx set to the exact trace so that S > 0.
    CalibrationResult calib;
    calib.epsilon_used = config.epsilon;
    calib.J_star = 1.0;
    calib.theta_xx = config.epsilon * config.epsilon * exact;
    const VarianceMatch vm =
        variance_match_check(model.spec, model.params, z, config, calib, static_cast<std::uint64_t>(i));
    const double vrel = vm.S > 0.0 ? std::abs(vm.trace_var - vm.S) / vm.S : 0.0;
    std::printf("%ld  %.6g  %.6g  %.4f  %.6g  %.6g  %.4f\n", static_cast<long>(i), exact, est, rel, vm.trace_var,
                vm.S, vrel);
    ok = ok && rel <= trace_tol && vrel <= var_tol;
  }
  if (!ok) throw ToleranceViolation("trace or variance estimate outside tolerance");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TULiP uncertainty scoring and linearized-training lab"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Common c;

  auto add_common = [&](CLI::App* sub, bool model, bool data, bool calib, bool config) {
    if (model) sub->add_option("--model", c.model, "model file (tulip-model/1)");
    if (data) sub->add_option("--data", c.data, "dataset CSV");
    if (calib) sub->add_option("--calib", c.calib, "calibration file (tulip-calib/1)");
    if (config) sub->add_option("--config", c.config, "key = value configuration file");
    sub->add_option("--out", c.out, "output path");
    sub->add_option("--seed", c.seed, "global seed");
    sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  };

  std::string kind = "moons", split = "train";
  std::size_t n = 200;
  double spread = 0.1, radius = 1.25;
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  add_common(gen, false, false, false, false);
  gen->add_option("--kind", kind, "moons | gauss | spline | ring | box");
  gen->add_option("-n,--n", n, "number of points");
  gen->add_option("--spread", spread, "noise level (spline: target noise)");
  gen->add_option("--radius", radius, "OOD radius as a multiple of the two-moons radius");
  gen->add_option("--split", split, "train | val | test-id | test-ood");

  auto* train = app.add_subcommand("train", "train a classifier or regressor with minibatch SGD");
  add_common(train, false, true, false, true);
  auto* calibrate_cmd = app.add_subcommand("calibrate", "fit theta_xx and J* on a validation set");
  add_common(calibrate_cmd, true, true, false, true);
  auto* score = app.add_subcommand("score", "score every row of a dataset");
  add_common(score, true, true, true, true);

  std::string id_path;
  std::vector<std::string> ood_paths;
  auto* eval = app.add_subcommand("eval", "AUROC and FPR@95 for ID versus OOD score files");
  add_common(eval, false, false, false, false);
  eval->add_option("--id", id_path, "ID score CSV");
  eval->add_option("--ood", ood_paths, "OOD score CSV (repeatable)");

  auto* verify = app.add_subcommand("verify-bound", "perturb-then-train ensemble against the fluctuation bound");
  add_common(verify, false, false, false, true);

  std::size_t points = 5;
  double trace_tol = 0.05, var_tol = 0.1;
  auto* trace = app.add_subcommand("trace-check", "trace estimator and variance matching against exact values");
  add_common(trace, true, true, false, true);
  trace->add_option("--points", points, "number of inputs checked");
  trace->add_option("--trace-tol", trace_tol, "relative tolerance of the trace estimate");
  trace->add_option("--var-tol", var_tol, "relative tolerance of the variance match");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen(c, kind, n, spread, radius, split);
    if (*train) return cmd_train(c);
    if (*calibrate_cmd) return cmd_calibrate(c);
    if (*score) return cmd_score(c);
    if (*eval) return cmd_eval(c, id_path, ood_paths);
    if (*verify) return cmd_verify_bound(c);
    if (*trace) return cmd_trace_check(c, points, trace_tol, var_tol);
  } catch (const ToleranceViolation& e) {
    std::fprintf(stderr, "tolerance violation: %s\n", e.what());
    return kTolerance;
  } catch (const IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kUsage;
}
