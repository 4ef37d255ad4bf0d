#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "splitct/core.hpp"

namespace splitct {

enum class NoiseKind { none, gaussian, poisson_electronic };

NoiseKind parse_noise_kind(const std::string& text);
std::string to_string(NoiseKind kind);

struct NoiseConfig {
  NoiseKind kind = NoiseKind::poisson_electronic;
  double i0 = 1e5;        // photons per ray per bin
  double sigma_e = 1e-3;  // electronic noise, normalized intensity units
  std::optional<double> sigma_g;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Entry k of the output depends only on (seed, k) and the clean value, so
/// the result is independent of evaluation order.
///   poisson_electronic: Poisson(I0·y)/I0 + N(0, σ_e²)
///   gaussian:           y + N(0, σ_g²)
///   none:               y
SpectralSinogram apply_noise(const NoiseConfig& cfg, const SpectralSinogram& clean);

}  // namespace splitct
