#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "splitct/core.hpp"
#include "splitct/noise.hpp"
#include "splitct/phantom.hpp"
#include "splitct/radon.hpp"
#include "splitct/solver.hpp"
#include "splitct/spectral.hpp"
#include "splitct/training.hpp"

namespace splitct {

class ConfigError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Flat `section.key = value` text. Blank lines and lines starting with `#`
/// are ignored; duplicate keys, unknown sections or keys are errors.
class Config {
 public:
  static Config parse(std::string_view text, const std::string& origin = "<config>");
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  void set(const std::string& key, std::string value);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Every configurable value of a run, defaults applied.
struct Settings {
  int size = 64;
  int n_angles = 16;
  int n_dets = 0;  // 0: ceil(size·√2) rounded up to odd

  int energies = 150;
  int bins = 5;
  int materials = 3;

  NoiseKind noise_kind = NoiseKind::poisson_electronic;
  double i0 = 1e5;
  double sigma_e = 1e-3;
  double sigma_g = 1e-2;

  int solver_iters = 200;
  std::optional<double> solver_step;
  double solver_relative_step = kDefaultRelativeStep;

  int net_channels = 16;

  int max_epochs = 15000;
  int patience = 500;
  int eval_interval = 25;
  double lr = 1e-4;
  bool shuffle = false;

  int n_train = 5;
  int n_val = 2;
  int n_test = 2;
  double contrast_scale = 0.05;
  double deform_amplitude = 0.1;

  int verify_draws = 2000;
  std::string verify_map = "net";
  bool verify_probe = true;

  std::uint64_t master_seed = 0;

  static Settings from_config(const Config& cfg);
  Config to_config() const;
  /// `section.key = value` lines in a fixed order, one per setting.
  std::string dump() const;

  Geometry geometry() const;
  SpectralModel spectral_model() const;
  SolverConfig solver() const;
  NoiseConfig noise() const;
  PhantomConfig phantom() const;
  NetConfig net() const;
  MethodConfig method_config(Method method) const;

  /// Seed of the named random stream, derived from the master seed.
  std::uint64_t stream_seed(std::string_view label) const;
};

}  // namespace splitct
