#include "splitct/radon.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace splitct {

int default_detector_count(int size) {
  int n = int(std::ceil(size * std::numbers::sqrt2));
  return n % 2 == 0 ? n + 1 : n;
}

Geometry Geometry::uniform(int size, int n_angles, int n_dets) {
  require(n_angles >= 1, "Geometry: need at least one angle");
  Geometry g;
  g.size = size;
  g.n_dets = n_dets > 0 ? n_dets : default_detector_count(size);
  g.angles.resize(n_angles);
  for (int a = 0; a < n_angles; ++a) g.angles[a] = std::numbers::pi * a / n_angles;
  g.validate();
  return g;
}

void Geometry::validate() const {
  require(size >= 2, "Geometry: image size must be at least 2");
  require(!angles.empty(), "Geometry: no angles");
  require(n_dets >= int(std::ceil(size * std::numbers::sqrt2)),
          "Geometry: detector array must cover the image diagonal");
  for (std::size_t a = 0; a < angles.size(); ++a) {
    require(angles[a] >= 0.0 && angles[a] < std::numbers::pi, "Geometry: angle outside [0, pi)");
    require(a == 0 || angles[a] > angles[a - 1], "Geometry: angles must be strictly increasing");
  }
}

Geometry restrict_geometry(const Geometry& geom, std::span<const int> angle_indices) {
  require(!angle_indices.empty(), "restrict_geometry: empty index list");
  Geometry g;
  g.size = geom.size;
  g.n_dets = geom.n_dets;
  for (std::size_t i = 0; i < angle_indices.size(); ++i) {
    const int a = angle_indices[i];
    require(a >= 0 && a < geom.n_angles(), "restrict_geometry: index out of range");
    require(i == 0 || a > angle_indices[i - 1], "restrict_geometry: indices must increase");
    g.angles.push_back(geom.angles[a]);
  }
  return g;
}

RadonOperator::RadonOperator(Geometry geom) : geom_(std::move(geom)) {
  geom_.validate();
  dets_.resize(geom_.n_dets);
  std::iota(dets_.begin(), dets_.end(), 0);
  build();
}

RadonOperator::RadonOperator(Geometry geom, std::vector<int> detector_subset)
    : geom_(std::move(geom)), dets_(std::move(detector_subset)) {
  geom_.validate();
  require(!dets_.empty(), "RadonOperator: empty detector subset");
  for (std::size_t i = 0; i < dets_.size(); ++i) {
    require(dets_[i] >= 0 && dets_[i] < geom_.n_dets, "RadonOperator: detector out of range");
    require(i == 0 || dets_[i] > dets_[i - 1], "RadonOperator: detectors must increase");
  }
  build();
}

// Joseph's method: march the ray one unit along its dominant axis and
// interpolate linearly across the other axis. Pixel (r, c) sits at
// x = c − (W−1)/2, y = (H−1)/2 − r; detector d at s = d − (P2−1)/2 along
// n = (cos θ, sin θ).
void RadonOperator::build() {
  const int n = geom_.size;
  const double half = 0.5 * (n - 1);
  const double det_half = 0.5 * (geom_.n_dets - 1);
  row_start_.assign(1, 0);
  cols_.clear();
  weights_.clear();

  auto emit = [&](int r, int c, double w) {
    if (r < 0 || r >= n || c < 0 || c >= n || w == 0.0) return;
    cols_.push_back(std::uint32_t(r * n + c));
    weights_.push_back(w);
  };

  for (double theta : geom_.angles) {
    const double cs = std::cos(theta);
    const double sn = std::sin(theta);
    const bool row_major = std::abs(cs) >= std::abs(sn);
    for (int d : dets_) {
      const double s = d - det_half;
      if (row_major) {
        const double step = 1.0 / std::abs(cs);
        for (int r = 0; r < n; ++r) {
          const double y = half - r;
          const double u = (s - y * sn) / cs + half;
          const double c0 = std::floor(u);
          const double f = u - c0;
          emit(r, int(c0), (1.0 - f) * step);
          emit(r, int(c0) + 1, f * step);
        }
      } else {
        const double step = 1.0 / std::abs(sn);
        for (int c = 0; c < n; ++c) {
          const double x = c - half;
          const double v = half - (s - x * cs) / sn;
          const double r0 = std::floor(v);
          const double f = v - r0;
          emit(int(r0), c, (1.0 - f) * step);
          emit(int(r0) + 1, c, f * step);
        }
      }
      row_start_.push_back(cols_.size());
    }
  }
}

Sinogram RadonOperator::project(const Image& img) const {
  require(img.height == geom_.size && img.width == geom_.size, "project: image/geometry mismatch");
  Sinogram out(n_angles(), n_dets());
  for (std::size_t ray = 0; ray < n_rays(); ++ray) {
    double acc = 0.0;
    for (std::size_t k = row_start_[ray]; k < row_start_[ray + 1]; ++k) {
      acc += weights_[k] * img.data[cols_[k]];
    }
    out.data[ray] = acc;
  }
  return out;
}

Image RadonOperator::backproject(const Sinogram& sino) const {
  require(sino.n_angles == n_angles() && sino.n_dets == n_dets(),
          "backproject: sinogram/geometry mismatch");
  Image out(geom_.size, geom_.size);
  for (std::size_t ray = 0; ray < n_rays(); ++ray) {
    const double v = sino.data[ray];
    if (v == 0.0) continue;
    for (std::size_t k = row_start_[ray]; k < row_start_[ray + 1]; ++k) {
      out.data[cols_[k]] += weights_[k] * v;
    }
  }
  return out;
}

LineIntegrals RadonOperator::project_stack(const MaterialImage& img) const {
  require(img.height == geom_.size && img.width == geom_.size,
          "project_stack: image/geometry mismatch");
  const int m_count = img.materials;
  const std::size_t npix = img.pixels();
  LineIntegrals out(n_angles(), n_dets(), m_count);
  for (int m = 0; m < m_count; ++m) {
    const double* src = img.data.data() + m * npix;
    for (std::size_t ray = 0; ray < n_rays(); ++ray) {
      double acc = 0.0;
      for (std::size_t k = row_start_[ray]; k < row_start_[ray + 1]; ++k) {
        acc += weights_[k] * src[cols_[k]];
      }
      out.data[ray * m_count + m] = acc;
    }
  }
  return out;
}

MaterialImage RadonOperator::backproject_stack(const LineIntegrals& sino) const {
  require(sino.n_angles == n_angles() && sino.n_dets == n_dets(),
          "backproject_stack: sinogram/geometry mismatch");
  const int m_count = sino.channels;
  MaterialImage out(m_count, geom_.size, geom_.size);
  const std::size_t npix = out.pixels();
  for (int m = 0; m < m_count; ++m) {
    double* dst = out.data.data() + m * npix;
    for (std::size_t ray = 0; ray < n_rays(); ++ray) {
      const double v = sino.data[ray * m_count + m];
      if (v == 0.0) continue;
      for (std::size_t k = row_start_[ray]; k < row_start_[ray + 1]; ++k) {
        dst[cols_[k]] += weights_[k] * v;
      }
    }
  }
  return out;
}

double RadonOperator::normal_operator_norm(int iterations) const {
  Image x(geom_.size, geom_.size, 1.0);
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    double norm = 0.0;
    for (double v : x.data) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : x.data) v /= norm;
    Image y = backproject(project(x));
    lambda = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) lambda += x.data[i] * y.data[i];
    x = std::move(y);
  }
  return lambda;
}

Sinogram project(const Geometry& geom, const Image& img) { return RadonOperator(geom).project(img); }

Image backproject(const Geometry& geom, const Sinogram& sino) {
  return RadonOperator(geom).backproject(sino);
}

LineIntegrals project_stack(const Geometry& geom, const MaterialImage& img) {
  return RadonOperator(geom).project_stack(img);
}

MaterialImage backproject_stack(const Geometry& geom, const LineIntegrals& sino) {
  return RadonOperator(geom).backproject_stack(sino);
}

}  // namespace splitct
