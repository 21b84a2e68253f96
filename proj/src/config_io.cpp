#include "tulip/config_io.hpp"

#include <charconv>

#include "tulip/errors.hpp"
#include "tulip/format.hpp"

namespace tulip {

KeyValues KeyValues::parse(std::string_view text) {
  KeyValues kv;
  std::size_t lineno = 0;
  for (std::string_view line : split_lines(text)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (kv.entries_.count(key)) throw ConfigError("duplicate key '" + key + "'");
    kv.entries_[key] = std::string(trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValues KeyValues::load(const std::string& path) { return parse(read_text_file(path)); }

bool KeyValues::has(const std::string& key) const { return entries_.count(key) > 0; }

const std::string& KeyValues::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("missing key '" + key + "'");
  return it->second;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  try {
    return parse_double(get(key));
  } catch (const IoError&) {
    throw ConfigError("key '" + key + "' is not a number: " + get(key));
  }
}

long long KeyValues::get_int(const std::string& key, long long fallback) const {
  if (!has(key)) return fallback;
  try {
    return parse_integer(get(key));
  } catch (const IoError&) {
    throw ConfigError("key '" + key + "' is not an integer: " + get(key));
  }
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}

std::vector<int> KeyValues::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<int> out;
  for (std::string_view field : split_fields(get(key))) {
    field = trim(field);
    if (field.empty()) continue;
    try {
      out.push_back(static_cast<int>(parse_integer(field)));
    } catch (const IoError&) {
      throw ConfigError("key '" + key + "' must be a comma-separated integer list");
    }
  }
  return out;
}

void KeyValues::reject_unknown(const std::set<std::string>& allowed) const {
  for (const auto& [key, value] : entries_) {
    if (!allowed.count(key)) throw ConfigError("unknown configuration key '" + key + "'");
  }
}

namespace {

std::uint64_t get_seed(const KeyValues& kv, std::uint64_t fallback) {
  if (!kv.has("seed")) return fallback;
  const std::string& s = kv.get("seed");
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ConfigError("seed must be a nonnegative integer");
  return v;
}

}  // namespace

TulipConfig tulip_config_from(const KeyValues& kv) {
  kv.reject_unknown({"epsilon", "delta", "lambda", "M", "J_scaling", "seed", "noise", "draws", "gamma"});
  TulipConfig c;
  c.epsilon = kv.get_double("epsilon", c.epsilon);
  c.delta = kv.get_double("delta", c.delta);
  c.lambda = kv.get_double("lambda", c.lambda);
  c.M = static_cast<int>(kv.get_int("M", c.M));
  c.J_scaling = kv.get_double("J_scaling", c.J_scaling);
  c.seed = get_seed(kv, c.seed);
  c.noise = parse_noise(kv.get_string("noise", "gaussian"));
  c.draws = parse_draw_mode(kv.get_string("draws", "fresh"));
  if (kv.has("gamma")) {
    std::vector<double> g;
    for (std::string_view field : split_fields(kv.get("gamma"))) {
      field = trim(field);
      if (!field.empty()) g.push_back(parse_double(field));
    }
    c.gamma_scale = Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
  }
  c.validate();
  return c;
}

std::string tulip_config_to_text(const TulipConfig& config) {
  std::string out;
  out += "epsilon = " + format_double(config.epsilon) + "\n";
  out += "delta = " + format_double(config.delta) + "\n";
  out += "lambda = " + format_double(config.lambda) + "\n";
  out += "M = " + std::to_string(config.M) + "\n";
  out += "J_scaling = " + format_double(config.J_scaling) + "\n";
  out += "seed = " + std::to_string(config.seed) + "\n";
  out += "noise = " + std::string(to_string(config.noise)) + "\n";
  out += "draws = " + std::string(to_string(config.draws)) + "\n";
  if (config.gamma_scale.size() != 0) {
    out += "gamma = ";
    for (Eigen::Index k = 0; k < config.gamma_scale.size(); ++k) {
      if (k) out += ',';
      append_double(out, config.gamma_scale[k]);
    }
    out += '\n';
  }
  return out;
}

TrainSetup train_setup_from(const KeyValues& kv) {
  kv.reject_unknown({"hidden", "activation", "eta", "epochs", "batch_size", "loss", "seed"});
  TrainSetup s;
  s.hidden = kv.get_int_list("hidden", s.hidden);
  s.activation = parse_activation(kv.get_string("activation", std::string(to_string(s.activation))));
  s.recipe.eta = kv.get_double("eta", s.recipe.eta);
  s.recipe.epochs = static_cast<int>(kv.get_int("epochs", s.recipe.epochs));
  s.recipe.batch_size = static_cast<int>(kv.get_int("batch_size", s.recipe.batch_size));
  s.recipe.loss = parse_loss(kv.get_string("loss", std::string(to_string(s.recipe.loss))));
  s.recipe.seed = get_seed(kv, s.recipe.seed);
  s.recipe.validate();
  return s;
}

EnsembleConfig ensemble_config_from(const KeyValues& kv) {
  kv.reject_unknown({"train_points", "noise", "hidden", "activation", "probe_points", "probe_lo", "probe_hi",
                     "ensemble", "alpha", "eta", "horizon", "switch_fraction", "fourier_features", "bandwidth",
                     "headroom", "seed"});
  EnsembleConfig c;
  c.train_points = static_cast<std::size_t>(kv.get_int("train_points", static_cast<long long>(c.train_points)));
  c.noise = kv.get_double("noise", c.noise);
  c.hidden = kv.get_int_list("hidden", c.hidden);
  c.activation = parse_activation(kv.get_string("activation", std::string(to_string(c.activation))));
  c.probe_points = static_cast<std::size_t>(kv.get_int("probe_points", static_cast<long long>(c.probe_points)));
  c.probe_lo = kv.get_double("probe_lo", c.probe_lo);
  c.probe_hi = kv.get_double("probe_hi", c.probe_hi);
  c.ensemble = static_cast<std::size_t>(kv.get_int("ensemble", static_cast<long long>(c.ensemble)));
  c.alpha = kv.get_double("alpha", c.alpha);
  c.eta = kv.get_double("eta", c.eta);
  c.horizon = kv.get_double("horizon", c.horizon);
  c.switch_fraction = kv.get_double("switch_fraction", c.switch_fraction);
  c.fourier_features = static_cast<int>(kv.get_int("fourier_features", c.fourier_features));
  c.bandwidth = kv.get_double("bandwidth", c.bandwidth);
  c.headroom = kv.get_double("headroom", c.headroom);
  c.seed = get_seed(kv, c.seed);
  c.validate();
  return c;
}

}  // namespace tulip
