#include "splitct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace splitct {

double DataRange::resolve(std::span<const double> a, std::span<const double> b) const {
  switch (mode) {
    case Mode::fixed: return value;
    case Mode::reference: return b.empty() ? 0.0 : *std::max_element(b.begin(), b.end());
    case Mode::pair: {
      double m = a.empty() ? 0.0 : *std::max_element(a.begin(), a.end());
      if (!b.empty()) m = std::max(m, *std::max_element(b.begin(), b.end()));
      return m;
    }
  }
  return value;
}

std::string DataRange::name() const {
  switch (mode) {
    case Mode::fixed: return "fixed";
    case Mode::reference: return "max_of_reference";
    case Mode::pair: return "max_of_pair";
  }
  return "?";
}

double psnr(std::span<const double> a, std::span<const double> b, DataRange range) {
  require(a.size() == b.size() && !a.empty(), "psnr: shape mismatch");
  const double peak = range.resolve(a, b);
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sse += d * d;
  }
  const double mse = sse / double(a.size());
  if (!(peak > 0.0)) {
    std::cerr << "warning: psnr data range is not positive; returning the cap\n";
    return kPsnrCap;
  }
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double psnr(const Image& a, const Image& b, DataRange range) {
  require(a.height == b.height && a.width == b.width, "psnr: shape mismatch");
  return psnr(std::span<const double>(a.data), std::span<const double>(b.data), range);
}

double ssim(const Image& a, const Image& b, DataRange range) {
  require(a.height == b.height && a.width == b.width, "ssim: shape mismatch");
  constexpr int kRadius = 5;
  require(a.height >= 2 * kRadius + 1 && a.width >= 2 * kRadius + 1,
          "ssim: image smaller than the 11x11 window");
  const double peak = range.resolve(a.data, b.data);
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);

  double kernel[2 * kRadius + 1];
  for (int k = -kRadius; k <= kRadius; ++k) kernel[k + kRadius] = std::exp(-(k * k) / (2.0 * 1.5 * 1.5));

  const int h = a.height, w = a.width;
  double total = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double wsum = 0.0, mx = 0.0, my = 0.0, mxx = 0.0, myy = 0.0, mxy = 0.0;
      for (int dr = -kRadius; dr <= kRadius; ++dr) {
        const int rr = r + dr;
        if (rr < 0 || rr >= h) continue;
        for (int dc = -kRadius; dc <= kRadius; ++dc) {
          const int cc = c + dc;
          if (cc < 0 || cc >= w) continue;
          const double wt = kernel[dr + kRadius] * kernel[dc + kRadius];
          const double x = a(rr, cc), y = b(rr, cc);
          wsum += wt;
          mx += wt * x;
          my += wt * y;
          mxx += wt * (x * x);
          myy += wt * (y * y);
          mxy += wt * (x * y);
        }
      }
      mx /= wsum;
      my /= wsum;
      const double vx = mxx / wsum - mx * mx;
      const double vy = myy / wsum - my * my;
      const double cov = mxy / wsum - mx * my;
      const double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
      const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
      total += den == 0.0 ? 1.0 : num / den;
    }
  }
  return total / double(h * w);
}

std::string material_name(int channel, int n_materials) {
  static const char* names[] = {"water", "iodine", "gadolinium"};
  if (n_materials <= 3 && channel < 3) return names[channel];
  return "material" + std::to_string(channel);
}

std::vector<MaterialScore> evaluate(const MaterialImage& recon, const MaterialImage& truth) {
  require(recon.materials == truth.materials && recon.height == truth.height &&
              recon.width == truth.width,
          "evaluate: reconstruction and truth shapes differ");
  std::vector<MaterialScore> scores;
  const auto range = DataRange::of_reference();
  for (int m = 0; m < recon.materials; ++m) {
    const Image a = recon.channel_image(m);
    const Image b = truth.channel_image(m);
    scores.push_back({material_name(m, recon.materials), psnr(a, b, range), ssim(a, b, range),
                      range.name()});
  }
  return scores;
}

double mean_psnr(const std::vector<MaterialScore>& scores) {
  double s = 0.0;
  for (const auto& sc : scores) s += sc.psnr_db;
  return scores.empty() ? 0.0 : s / double(scores.size());
}

void write_scores_csv(const std::filesystem::path& path, const std::vector<MaterialScore>& scores) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "material,psnr_db,ssim,data_range_mode\n" << std::setprecision(10);
  for (const auto& s : scores) {
    out << s.material << ',' << s.psnr_db << ',' << s.ssim << ',' << s.range_mode << '\n';
  }
}

}  // namespace splitct
