#include "tulip/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <thread>

#include "tulip/errors.hpp"
#include "tulip/format.hpp"

namespace tulip {

namespace {

// Rows are processed in fixed-size chunks whose boundaries never depend on
// the thread count; threads only decide who computes which chunk.
constexpr std::size_t kChunk = 64;

template <class Fn>
void for_each_chunk(std::size_t n, int threads, Fn&& fn) {
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || chunks <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c * kChunk, std::min(n, (c + 1) * kChunk));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, chunks); ++w) {
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < chunks; c = next++) {
        try {
          fn(c * kChunk, std::min(n, (c + 1) * kChunk));
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

void fill_baselines(ScoreRow& row, const Eigen::VectorXd& base) {
  const BaselineScores b = baseline_scores(base);
  row.msp = b.msp;
  row.mls = b.mls;
  row.ebo = b.ebo;
  row.ent = b.ent;
}

void finish_row(ScoreRow& row, const Eigen::VectorXd& base, const Eigen::MatrixXd& raw, double theta_tr, double D,
                double J, const TulipConfig& config, const CalibrationResult& calib) {
  fill_baselines(row, base);
  row.theta_tr = theta_tr;
  row.D = D;
  row.S = score_S(J, theta_tr, calib.theta_xx, config.lambda, D);
  const GammaValue g = gamma_from(row.S, theta_tr);
  row.gamma = g.gamma;
  row.capped = g.capped;
  row.U = envelope_entropy(base, raw, row.gamma);
}

// Shared draw set: the M perturbed parameter vectors are built once, exactly as
// sample_raw would build them in common mode.
std::vector<ParamVector> common_perturbations(const ParamVector& theta_T, const TulipConfig& config) {
  rng::Engine engine = rng::make_engine(config.seed, "tulip.common");
  std::normal_distribution<double> normal(0.0, 1.0);
  const bool scaled = config.gamma_scale.size() != 0;
  std::vector<ParamVector> out;
  out.reserve(static_cast<std::size_t>(config.M));
  for (int i = 0; i < config.M; ++i) {
    ParamVector p = theta_T;
    for (Eigen::Index k = 0; k < p.values().size(); ++k) {
      const double xi = config.noise == NoiseKind::gaussian ? normal(engine) : ((engine() >> 63) ? 1.0 : -1.0);
      p.values()[k] += config.epsilon * (scaled ? config.gamma_scale[k] : 1.0) * xi;
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

std::vector<ScoreRow> score_inputs(const NetworkSpec& spec, const ParamVector& theta_T,
                                   const Eigen::Ref<const Eigen::MatrixXd>& inputs, const TulipConfig& config,
                                   const CalibrationResult& calib, int threads) {
  config.validate(false);
  theta_T.check_matches(spec);
  if (std::abs(calib.epsilon_used - config.epsilon) > 1e-12 * config.epsilon) {
    throw ConfigError("calibration used epsilon = " + format_double(calib.epsilon_used) +
                      " but the configuration has epsilon = " + format_double(config.epsilon));
  }
  if (inputs.cols() != spec.input_dim()) {
    throw ShapeError("layer 0 expects input dimension " + std::to_string(spec.input_dim()) + ", got " +
                     std::to_string(inputs.cols()));
  }
  const auto n = static_cast<std::size_t>(inputs.rows());
  const double J = config.J_scaling * calib.J_star;
  std::vector<ScoreRow> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i].id = i;

  if (config.draws == DrawMode::fresh) {
    for_each_chunk(n, threads, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        const Eigen::VectorXd z = inputs.row(static_cast<Eigen::Index>(i)).transpose();
        const RawSamples raw = sample_raw(spec, theta_T, z, config, i);
        const double D = probe_D(spec, theta_T, z, config);
        finish_row(rows[i], raw.base, raw.raw, raw.theta_tr, D, J, config, calib);
      }
    });
    return rows;
  }

  if (config.gamma_scale.size() != 0 && static_cast<std::size_t>(config.gamma_scale.size()) != theta_T.size()) {
    throw ConfigError("Gamma size does not match the model");
  }
  const std::vector<ParamVector> perturbed = common_perturbations(theta_T, config);
  Eigen::VectorXd dir = theta_T.values();
  if (config.gamma_scale.size() != 0) dir = dir.cwiseProduct(config.gamma_scale);
  const ParamVector probe(theta_T.layout_ptr(), theta_T.values() + config.epsilon * config.delta * dir);
  const int o = spec.output_dim();
  const double sqrt_o = std::sqrt(static_cast<double>(o));

  for_each_chunk(n, threads, [&](std::size_t lo, std::size_t hi) {
    const auto len = static_cast<Eigen::Index>(hi - lo);
    const auto block = inputs.middleRows(static_cast<Eigen::Index>(lo), len);
    const Eigen::MatrixXd base = forward_batch(spec, theta_T, block);
    const Eigen::MatrixXd shifted = forward_batch(spec, probe, block);
    std::vector<Eigen::MatrixXd> outs;
    outs.reserve(perturbed.size());
    for (const auto& p : perturbed) outs.push_back(forward_batch(spec, p, block));
    Eigen::MatrixXd raw(config.M, o);
    for (Eigen::Index r = 0; r < len; ++r) {
      const Eigen::VectorXd b = base.row(r).transpose();
      double sum = 0.0;
      for (int i = 0; i < config.M; ++i) {
        raw.row(i) = outs[static_cast<std::size_t>(i)].row(r);
        sum += (raw.row(i).transpose() - b).squaredNorm();
      }
      const double D = sqrt_o * (shifted.row(r) - base.row(r)).norm();
      finish_row(rows[lo + static_cast<std::size_t>(r)], b, raw, sum / config.M, D, J, config, calib);
    }
  });
  return rows;
}

std::vector<ScoreRow> baseline_inputs(const NetworkSpec& spec, const ParamVector& theta_T,
                                      const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  const Eigen::MatrixXd logits = forward_batch(spec, theta_T, inputs);
  std::vector<ScoreRow> rows(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    auto& row = rows[static_cast<std::size_t>(i)];
    row.id = static_cast<std::size_t>(i);
    fill_baselines(row, logits.row(i).transpose());
    row.U = row.ent;
  }
  return rows;
}

std::string scores_to_csv(const std::vector<ScoreRow>& rows) {
  std::string out = "id,U,msp,mls,ebo,ent,gamma,S,theta_tr,D\n";
  out.reserve(out.size() + rows.size() * 200);
  for (const auto& r : rows) {
    out += std::to_string(r.id);
    for (double v : {r.U, r.msp, r.mls, r.ebo, r.ent, r.gamma, r.S, r.theta_tr, r.D}) {
      out += ',';
      append_double(out, v);
    }
    out += '\n';
  }
  return out;
}

std::vector<ScoreRow> scores_from_csv(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty() || trim(lines.front()) != "id,U,msp,mls,ebo,ent,gamma,S,theta_tr,D") {
    throw IoError("score CSV must start with the header id,U,msp,mls,ebo,ent,gamma,S,theta_tr,D");
  }
  std::vector<ScoreRow> rows;
  rows.reserve(lines.size() - 1);
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto f = split_fields(lines[l]);
    if (f.size() != 10) throw IoError("score CSV line " + std::to_string(l + 1) + " has " + std::to_string(f.size()) +
                                      " fields, expected 10");
    ScoreRow r;
    r.id = static_cast<std::size_t>(parse_integer(f[0]));
    double* dst[] = {&r.U, &r.msp, &r.mls, &r.ebo, &r.ent, &r.gamma, &r.S, &r.theta_tr, &r.D};
    for (std::size_t k = 0; k < 9; ++k) *dst[k] = parse_double(f[k + 1]);
    rows.push_back(r);
  }
  return rows;
}

double oriented_score(const ScoreRow& row, const std::string& method) {
  if (method == "tulip") return row.U;
  if (method == "msp") return -row.msp;
  if (method == "mls") return -row.mls;
  if (method == "ebo") return row.ebo;
  if (method == "ent") return row.ent;
  throw DomainError("unknown method '" + method + "'");
}

std::vector<double> oriented_scores(const std::vector<ScoreRow>& rows, const std::string& method) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(oriented_score(r, method));
  return out;
}

ScoreReport evaluate(const std::vector<ScoreRow>& id_rows, const std::vector<ScoreRow>& ood_rows,
                     const std::string& ood_name) {
  ScoreReport report;
  report.ood_name = ood_name;
  report.n_id = id_rows.size();
  report.n_ood = ood_rows.size();
  for (const auto& m : score_methods()) {
    const auto id = oriented_scores(id_rows, m);
    const auto ood = oriented_scores(ood_rows, m);
    report.methods.push_back({m, auroc(id, ood), fpr_at_tpr(id, ood)});
  }
  return report;
}

std::string report_csv(const std::vector<ScoreReport>& reports) {
  std::string out = "ood_set,method,auroc,fpr95,n_id,n_ood\n";
  for (const auto& r : reports) {
    for (const auto& m : r.methods) {
      out += r.ood_name + "," + m.method + ",";
      append_double(out, m.auroc);
      out += ',';
      append_double(out, m.fpr95);
      out += "," + std::to_string(r.n_id) + "," + std::to_string(r.n_ood) + "\n";
    }
  }
  return out;
}

std::string report_text(const std::vector<ScoreReport>& reports) {
  std::string out;
  char buf[160];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%s (ID %zu vs OOD %zu)\n", r.ood_name.c_str(), r.n_id, r.n_ood);
    out += buf;
    for (const auto& m : r.methods) {
      std::snprintf(buf, sizeof buf, "  %-6s AUROC %.4f  FPR@95 %.4f\n", m.method.c_str(), m.auroc, m.fpr95);
      out += buf;
    }
  }
  return out;
}

CostProfile cost_profile(const NetworkSpec& spec, const ParamVector& theta_T,
                         const Eigen::Ref<const Eigen::MatrixXd>& inputs, const TulipConfig& config,
                         const CalibrationResult& calib, int repeats) {
  using clock = std::chrono::steady_clock;
  auto best_of = [&](auto&& run) {
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < std::max(1, repeats); ++r) {
      const auto t0 = clock::now();
      run();
      best = std::min(best, std::chrono::duration<double>(clock::now() - t0).count());
    }
    return best;
  };
  std::atomic<std::size_t> sink{0};
  CostProfile profile;
  profile.M = config.M;
  profile.ent_seconds = best_of([&] { sink += scores_to_csv(baseline_inputs(spec, theta_T, inputs)).size(); });
  profile.tulip_seconds =
      best_of([&] { sink += scores_to_csv(score_inputs(spec, theta_T, inputs, config, calib, 1)).size(); });
  return profile;
}

MoonsData moons_data(const MoonsSetup& s) {
  const double r = two_moons_radius();
  MoonsData d;
  d.train = gen_two_moons(s.n_train, s.spread, rng::substream_seed(s.seed, "moons.train"), Split::train);
  d.val = gen_two_moons(s.n_val, s.spread, rng::substream_seed(s.seed, "moons.val"), Split::val);
  d.val_ood = gen_ood_ring(s.n_val, s.near_factor * r, rng::substream_seed(s.seed, "moons.val_ood"));
  d.val_ood.split = Split::val;
  d.test_id = gen_two_moons(s.n_test, s.spread, rng::substream_seed(s.seed, "moons.test"), Split::test_id);
  d.near_ood = gen_ood_ring(s.n_ood, s.near_factor * r, rng::substream_seed(s.seed, "moons.near"));
  d.far_ood = gen_uniform_box(s.n_ood, s.far_factor * r, rng::substream_seed(s.seed, "moons.far"));
  if (s.input_scale != 1.0) {
    for (Dataset* set : {&d.train, &d.val, &d.val_ood, &d.test_id, &d.near_ood, &d.far_ood}) {
      set->inputs *= s.input_scale;
    }
  }
  return d;
}

double select_J_scaling(const NetworkSpec& spec, const ParamVector& theta_T, const Dataset& val_id,
                        const Dataset& val_ood, const TulipConfig& config, const CalibrationResult& calib,
                        const std::vector<double>& grid, int threads) {
  if (grid.empty()) throw ConfigError("empty J_scaling grid");
  double best_value = grid.front();
  double best_auc = -1.0;
  for (double a : grid) {
    TulipConfig c = config;
    c.J_scaling = a;
    const auto id = oriented_scores(score_inputs(spec, theta_T, val_id.inputs, c, calib, threads), "tulip");
    const auto ood = oriented_scores(score_inputs(spec, theta_T, val_ood.inputs, c, calib, threads), "tulip");
    const double auc = auroc(id, ood);
    if (auc > best_auc) {
      best_auc = auc;
      best_value = a;
    }
  }
  return best_value;
}

MoonsOutcome run_moons(const MoonsSetup& setup) {
  const MoonsData data = moons_data(setup);
  std::vector<int> dims{2};
  dims.insert(dims.end(), setup.hidden.begin(), setup.hidden.end());
  dims.push_back(2);
  MoonsOutcome out;
  out.model.spec = NetworkSpec::mlp(dims, setup.activation, true);
  TrainRecipe recipe = setup.recipe;
  recipe.seed = rng::substream_seed(setup.seed, "moons.recipe");
  out.training = train_empirical(out.model.spec, recipe, data.train);
  out.model.params = out.training.theta;

  TulipConfig config = setup.tulip;
  config.seed = rng::substream_seed(setup.seed, "moons.tulip");
  out.calib = calibrate(out.model.spec, out.model.params, data.val, config);
  out.J_scaling = select_J_scaling(out.model.spec, out.model.params, data.val, data.val_ood, config, out.calib,
                                   setup.scaling_grid, setup.threads);
  config.J_scaling = out.J_scaling;

  const auto id_rows = score_inputs(out.model.spec, out.model.params, data.test_id.inputs, config, out.calib,
                                    setup.threads);
  const auto near_rows = score_inputs(out.model.spec, out.model.params, data.near_ood.inputs, config, out.calib,
                                      setup.threads);
  const auto far_rows = score_inputs(out.model.spec, out.model.params, data.far_ood.inputs, config, out.calib,
                                     setup.threads);
  out.near = evaluate(id_rows, near_rows, "near");
  out.far = evaluate(id_rows, far_rows, "far");
  return out;
}

}  // namespace tulip
