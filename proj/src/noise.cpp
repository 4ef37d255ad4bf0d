#include "splitct/noise.hpp"

#include <algorithm>

namespace splitct {

NoiseKind parse_noise_kind(const std::string& text) {
  if (text == "none") return NoiseKind::none;
  if (text == "gaussian") return NoiseKind::gaussian;
  if (text == "poisson_electronic") return NoiseKind::poisson_electronic;
  throw ContractError("unknown noise kind '" + text + "'");
}

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::none: return "none";
    case NoiseKind::gaussian: return "gaussian";
    case NoiseKind::poisson_electronic: return "poisson_electronic";
  }
  return "?";
}

void NoiseConfig::validate() const {
  require(i0 >= 1.0, "NoiseConfig: I0 must be >= 1");
  require(sigma_e >= 0.0, "NoiseConfig: sigma_e must be >= 0");
  if (kind == NoiseKind::gaussian) {
    require(sigma_g.has_value(), "NoiseConfig: gaussian noise requires sigma_g");
  }
  require(!sigma_g || *sigma_g >= 0.0, "NoiseConfig: sigma_g must be >= 0");
}

SpectralSinogram apply_noise(const NoiseConfig& cfg, const SpectralSinogram& clean) {
  cfg.validate();
  SpectralSinogram out = clean;
  if (cfg.kind == NoiseKind::none) return out;

  const RngStream base(cfg.seed, "noise");
  if (cfg.kind == NoiseKind::gaussian) {
    const double sigma = *cfg.sigma_g;
    if (sigma == 0.0) return out;
    for (std::size_t k = 0; k < out.data.size(); ++k) {
      RngStream rng = base.substream(k);
      out.data[k] += sigma * rng.normal();
    }
    return out;
  }

  require(all_finite(clean.data), "apply_noise: non-finite clean measurement");
  for (std::size_t k = 0; k < out.data.size(); ++k) {
    RngStream rng = base.substream(k);
    const double mean = cfg.i0 * std::max(clean.data[k], 0.0);
    double v = double(rng.poisson(mean)) / cfg.i0;
    if (cfg.sigma_e > 0.0) v += cfg.sigma_e * rng.normal();
    out.data[k] = v;
  }
  return out;
}

}  // namespace splitct
