#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "splitct/core.hpp"

namespace splitct {

inline constexpr double kPsnrCap = 99.0;

/// Peak value used by PSNR/SSIM. `reference` takes the maximum of the second
/// (ground-truth) argument, `pair` the maximum over both images, `fixed` a
/// caller-supplied value.
struct DataRange {
  enum class Mode { reference, pair, fixed } mode = Mode::reference;
  double value = 1.0;

  static DataRange of_reference() { return {Mode::reference, 0.0}; }
  static DataRange of_pair() { return {Mode::pair, 0.0}; }
  static DataRange fixed(double v) { return {Mode::fixed, v}; }

  double resolve(std::span<const double> a, std::span<const double> b) const;
  std::string name() const;
};

/// 10·log10(range²/MSE), capped at 99 dB.
double psnr(std::span<const double> a, std::span<const double> b, DataRange range);
double psnr(const Image& a, const Image& b, DataRange range);

/// Mean SSIM with an 11×11 Gaussian window (σ = 1.5), K1 = 0.01, K2 = 0.03.
/// Near the border the window is truncated and its weights renormalized.
double ssim(const Image& a, const Image& b, DataRange range);

struct MaterialScore {
  std::string material;
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::string range_mode;
};

std::string material_name(int channel, int n_materials);

/// Per-channel PSNR/SSIM of `recon` against `truth` (reference data range).
std::vector<MaterialScore> evaluate(const MaterialImage& recon, const MaterialImage& truth);
double mean_psnr(const std::vector<MaterialScore>& scores);

/// CSV `material,psnr_db,ssim,data_range_mode`.
void write_scores_csv(const std::filesystem::path& path, const std::vector<MaterialScore>& scores);

}  // namespace splitct
