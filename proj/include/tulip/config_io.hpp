#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "tulip/data.hpp"
#include "tulip/detector.hpp"
#include "tulip/linearized.hpp"

namespace tulip {

/// Flat `key = value` text. '#' starts a comment; blank lines are ignored.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text);
  static KeyValues load(const std::string& path);

  [[nodiscard]] bool has(const std::string& key) const;
  [[nodiscard]] const std::string& get(const std::string& key) const;
  [[nodiscard]] double get_double(const std::string& key, double fallback) const;
  [[nodiscard]] long long get_int(const std::string& key, long long fallback) const;
  [[nodiscard]] std::string get_string(const std::string& key, const std::string& fallback) const;
  [[nodiscard]] std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

  /// Throws ConfigError naming the first key not in `allowed`.
  void reject_unknown(const std::set<std::string>& allowed) const;

  [[nodiscard]] const std::map<std::string, std::string>& entries() const { return entries_; }
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }

 private:
  std::map<std::string, std::string> entries_;
};

/// Keys: epsilon, delta, lambda, M, J_scaling, seed, noise, draws, gamma (comma list).
TulipConfig tulip_config_from(const KeyValues& kv);
std::string tulip_config_to_text(const TulipConfig& config);

/// Training setup: architecture plus recipe.
struct TrainSetup {
  std::vector<int> hidden{32, 32};
  Activation activation = Activation::tanh;
  TrainRecipe recipe;
};

/// Keys: hidden, activation, eta, epochs, batch_size, loss, seed.
TrainSetup train_setup_from(const KeyValues& kv);

/// Keys: train_points, noise, hidden, activation, probe_points, probe_lo, probe_hi,
/// ensemble, alpha, eta, horizon, switch_fraction, fourier_features, bandwidth, headroom, seed.
EnsembleConfig ensemble_config_from(const KeyValues& kv);

}  // namespace tulip
