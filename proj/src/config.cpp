#include "splitct/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace splitct {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "geometry.size",         "geometry.n_angles",     "geometry.n_dets",
      "spectral.E",            "spectral.B",            "spectral.M",
      "noise.kind",            "noise.I0",              "noise.sigma_e",
      "noise.sigma_g",         "solver.iters",          "solver.step",
      "solver.relative_step",  "net.channels",          "train.max_epochs",
      "train.patience",        "train.eval_interval",   "train.lr",
      "train.shuffle",         "dataset.n_train",       "dataset.n_val",
      "dataset.n_test",        "dataset.contrast_scale", "dataset.deform_amplitude",
      "verify.draws",          "verify.map",
      "verify.probe",          "seed.master",
  };
  return keys;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "' as a number");
  }
  return value;
}

}  // namespace

Config Config::parse(std::string_view text, const std::string& origin) {
  Config cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto where = origin + ":" + std::to_string(lineno);
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'section.key = value'");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(where + ": empty key or value");
    if (!known_keys().count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    if (cfg.values_.count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    cfg.values_[key] = value;
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str(), path.string());
}

std::optional<std::string> Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

void Config::set(const std::string& key, std::string value) {
  if (!known_keys().count(key)) throw ConfigError("unknown key '" + key + "'");
  values_[key] = std::move(value);
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

int Config::get_int(const std::string& key, int fallback) const {
  const auto v = get(key);
  return v ? parse_number<int>(key, *v) : fallback;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto v = get(key);
  return v ? parse_number<double>(key, *v) : fallback;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto v = get(key);
  return v ? parse_number<std::uint64_t>(key, *v) : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + *v + "'");
}

// ---------------------------------------------------------------------------

Settings Settings::from_config(const Config& c) {
  Settings s;
  s.size = c.get_int("geometry.size", s.size);
  s.n_angles = c.get_int("geometry.n_angles", s.n_angles);
  s.n_dets = c.get_int("geometry.n_dets", s.n_dets);
  s.energies = c.get_int("spectral.E", s.energies);
  s.bins = c.get_int("spectral.B", s.bins);
  s.materials = c.get_int("spectral.M", s.materials);
  try {
    s.noise_kind = parse_noise_kind(c.get_string("noise.kind", to_string(s.noise_kind)));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("noise.kind: ") + e.what());
  }
  s.i0 = c.get_double("noise.I0", s.i0);
  s.sigma_e = c.get_double("noise.sigma_e", s.sigma_e);
  s.sigma_g = c.get_double("noise.sigma_g", s.sigma_g);
  s.solver_iters = c.get_int("solver.iters", s.solver_iters);
  if (const auto step = c.get("solver.step"); step && *step != "auto") {
    s.solver_step = parse_number<double>("solver.step", *step);
  }
  s.solver_relative_step = c.get_double("solver.relative_step", s.solver_relative_step);
  s.net_channels = c.get_int("net.channels", s.net_channels);
  s.max_epochs = c.get_int("train.max_epochs", s.max_epochs);
  s.patience = c.get_int("train.patience", s.patience);
  s.eval_interval = c.get_int("train.eval_interval", s.eval_interval);
  s.lr = c.get_double("train.lr", s.lr);
  s.shuffle = c.get_bool("train.shuffle", s.shuffle);
  s.n_train = c.get_int("dataset.n_train", s.n_train);
  s.n_val = c.get_int("dataset.n_val", s.n_val);
  s.n_test = c.get_int("dataset.n_test", s.n_test);
  s.contrast_scale = c.get_double("dataset.contrast_scale", s.contrast_scale);
  s.deform_amplitude = c.get_double("dataset.deform_amplitude", s.deform_amplitude);
  s.verify_draws = c.get_int("verify.draws", s.verify_draws);
  s.verify_map = c.get_string("verify.map", s.verify_map);
  s.verify_probe = c.get_bool("verify.probe", s.verify_probe);
  s.master_seed = c.get_u64("seed.master", s.master_seed);

  require(s.size >= 4 && s.size % 2 == 0, "geometry.size must be even and >= 4");
  require(s.n_angles >= 2, "geometry.n_angles must be >= 2");
  require(s.n_dets >= 0, "geometry.n_dets must be >= 0");
  require(s.solver_iters >= 1, "solver.iters must be >= 1");
  require(s.n_train >= 0 && s.n_val >= 0 && s.n_test >= 0, "dataset counts must be >= 0");
  static const std::set<std::string> maps = {"net", "constant", "local_average", "identity"};
  require(maps.count(s.verify_map) != 0,
          "verify.map must be net, constant, local_average or identity");
  return s;
}

Config Settings::to_config() const {
  return Config::parse(dump(), "<effective config>");
}

std::string Settings::dump() const {
  std::ostringstream o;
  auto line = [&](const std::string& k, const std::string& v) { o << k << " = " << v << '\n'; };
  line("geometry.size", std::to_string(size));
  line("geometry.n_angles", std::to_string(n_angles));
  line("geometry.n_dets", std::to_string(n_dets));
  line("spectral.E", std::to_string(energies));
  line("spectral.B", std::to_string(bins));
  line("spectral.M", std::to_string(materials));
  line("noise.kind", to_string(noise_kind));
  line("noise.I0", format_double(i0));
  line("noise.sigma_e", format_double(sigma_e));
  line("noise.sigma_g", format_double(sigma_g));
  line("solver.iters", std::to_string(solver_iters));
  line("solver.step", solver_step ? format_double(*solver_step) : "auto");
  line("solver.relative_step", format_double(solver_relative_step));
  line("net.channels", std::to_string(net_channels));
  line("train.max_epochs", std::to_string(max_epochs));
  line("train.patience", std::to_string(patience));
  line("train.eval_interval", std::to_string(eval_interval));
  line("train.lr", format_double(lr));
  line("train.shuffle", shuffle ? "true" : "false");
  line("dataset.n_train", std::to_string(n_train));
  line("dataset.n_val", std::to_string(n_val));
  line("dataset.n_test", std::to_string(n_test));
  line("dataset.contrast_scale", format_double(contrast_scale));
  line("dataset.deform_amplitude", format_double(deform_amplitude));
  line("verify.draws", std::to_string(verify_draws));
  line("verify.map", verify_map);
  line("verify.probe", verify_probe ? "true" : "false");
  line("seed.master", std::to_string(master_seed));
  return o.str();
}

Geometry Settings::geometry() const { return Geometry::uniform(size, n_angles, n_dets); }

SpectralModel Settings::spectral_model() const {
  return build_default_model(energies, bins, materials);
}

SolverConfig Settings::solver() const {
  SolverConfig c;
  c.iters = solver_iters;
  c.step = solver_step;
  c.relative_step = solver_relative_step;
  c.validate();
  return c;
}

NoiseConfig Settings::noise() const {
  NoiseConfig c;
  c.kind = noise_kind;
  c.i0 = i0;
  c.sigma_e = sigma_e;
  c.sigma_g = sigma_g;
  c.seed = stream_seed("noise");
  c.validate();
  return c;
}

PhantomConfig Settings::phantom() const {
  PhantomConfig c;
  c.size = size;
  c.n_materials = materials;
  c.contrast_scale = contrast_scale;
  c.deform_amplitude = deform_amplitude;
  c.seed = stream_seed("dataset");
  c.validate();
  return c;
}

NetConfig Settings::net() const {
  NetConfig c;
  c.channels = net_channels;
  c.validate();
  return c;
}

MethodConfig Settings::method_config(Method method) const {
  MethodConfig c = MethodConfig::for_method(method, geometry());
  c.solver = solver();
  c.net = net();
  c.adam.lr = lr;
  c.max_epochs = max_epochs;
  c.patience = patience;
  c.eval_interval = eval_interval;
  c.seed = stream_seed("train");
  c.shuffle = shuffle;
  c.validate();
  return c;
}

std::uint64_t Settings::stream_seed(std::string_view label) const {
  return RngStream(master_seed, label).at(0);
}

}  // namespace splitct
