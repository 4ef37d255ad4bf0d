#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "splitct/core.hpp"

namespace splitct {

/// Parallel-beam acquisition geometry on a unit-pitch square grid. The image
/// and the detector array are both centered on the origin.
struct Geometry {
  int size = 0;                 // H = W
  std::vector<double> angles;   // radians, strictly increasing in [0, π)
  int n_dets = 0;

  int n_angles() const { return int(angles.size()); }

  /// `n_angles` uniform angles k·π/n_angles. A detector count of 0 selects
  /// default_detector_count(size).
  static Geometry uniform(int size, int n_angles, int n_dets = 0);

  void validate() const;
  bool operator==(const Geometry&) const = default;
};

/// ceil(size·√2), rounded up to the next odd number.
int default_detector_count(int size);

Geometry restrict_geometry(const Geometry& geom, std::span<const int> angle_indices);

/// Joseph-method projector stored as a sparse matrix (one row per ray), so
/// that backprojection is its exact transpose. Optionally restricted to a
/// subset of detector positions; rows are then packed in (angle, selected
/// detector) order.
class RadonOperator {
 public:
  explicit RadonOperator(Geometry geom);
  RadonOperator(Geometry geom, std::vector<int> detector_subset);

  const Geometry& geometry() const { return geom_; }
  int n_angles() const { return geom_.n_angles(); }
  /// Number of detector columns in the output (the subset size if restricted).
  int n_dets() const { return int(dets_.size()); }
  const std::vector<int>& detectors() const { return dets_; }
  std::size_t n_rays() const { return row_start_.size() - 1; }
  std::size_t nonzeros() const { return cols_.size(); }

  Sinogram project(const Image& img) const;
  Image backproject(const Sinogram& sino) const;

  /// Channel-wise projection of an M×H×W stack into P1×P2×M.
  LineIntegrals project_stack(const MaterialImage& img) const;
  MaterialImage backproject_stack(const LineIntegrals& sino) const;

  /// ‖RᵀR‖₂ by deterministic power iteration.
  double normal_operator_norm(int iterations = 60) const;

 private:
  void build();

  Geometry geom_;
  std::vector<int> dets_;
  std::vector<std::size_t> row_start_;
  std::vector<std::uint32_t> cols_;
  std::vector<double> weights_;
};

Sinogram project(const Geometry& geom, const Image& img);
Image backproject(const Geometry& geom, const Sinogram& sino);
LineIntegrals project_stack(const Geometry& geom, const MaterialImage& img);
MaterialImage backproject_stack(const Geometry& geom, const LineIntegrals& sino);

}  // namespace splitct
