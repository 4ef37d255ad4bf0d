#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

#include "splitct/partition.hpp"
#include "splitct/radon.hpp"
#include "splitct/spectral.hpp"

namespace splitct {

/// Relative step found by tune_step on a 64×64 validation phantom (64 views,
/// default spectral model): the largest rung of the √2 ladder whose residual
/// stays monotone. See README.
inline constexpr double kDefaultRelativeStep = 1.4142135623730951;

struct SolverConfig {
  int iters = 200;
  /// Absolute constant step s. When unset the step is relative_step/‖RᵀR‖
  /// for whichever projector the solve uses.
  std::optional<double> step;
  double relative_step = kDefaultRelativeStep;
  /// Explicit per-iteration steps; overrides `step` when non-empty.
  std::vector<double> schedule;
  bool record_residuals = false;
  double log_floor = kLogFloor;

  void validate() const;
};

class SolverDivergence : public std::runtime_error {
 public:
  SolverDivergence(int iteration, const std::string& what)
      : std::runtime_error(what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

struct SolveResult {
  MaterialImage image;
  std::vector<double> residuals;  // ‖log A(x⁽ᵏ⁾) − log y‖ for k = 0..K−1
};

/// One-step preconditioned iteration from x⁽⁰⁾ = 0:
///   x⁽ᵏ⁺¹⁾ = x⁽ᵏ⁾ + s_k Rᵀ (log A(x⁽ᵏ⁾) − log y) (U‡)ᵀ
/// The sign makes the update a descent step: near x = 0, log A(x) ≈ −(R x)Uᵀ,
/// so for a single material at a single energy this is Landweber on
/// R x = −log y.
SolveResult cp_fast(const SpectralModel& model, const RadonOperator& op,
                    const SpectralSinogram& y, const SolverConfig& cfg);

/// s_k for iteration k given ‖RᵀR‖.
double step_size(const SolverConfig& cfg, int k, double normal_norm);

/// Bracketing search for the largest relative step whose residual trace is
/// monotone non-increasing over `probe_iters` iterations.
double tune_step(const SpectralModel& model, const RadonOperator& op, const SpectralSinogram& y,
                 int probe_iters = 50);

/// Fill the detector columns missing from `packed` (selected columns `dets`)
/// by linear interpolation along the detector axis; edge columns replicate
/// the nearest known column.
SpectralSinogram interpolate_detectors(const SpectralSinogram& packed, const std::vector<int>& dets,
                                       int n_dets);

/// Fixed reconstruction operator B_Ω for any subset of the parity partitions.
/// Angular subsets run cp_fast on the restricted geometry; detector subsets
/// interpolate the missing columns and run cp_fast on the full geometry.
class PartialReconstructor {
 public:
  PartialReconstructor(const SpectralModel& model, const Geometry& geom, SolverConfig cfg);

  MaterialImage reconstruct(const SpectralSinogram& packed, const Subset& subset) const;
  SolveResult reconstruct_full(const SpectralSinogram& y) const;

  const Geometry& geometry() const { return full_.geometry(); }
  const SolverConfig& config() const { return cfg_; }

 private:
  SpectralModel model_;
  SolverConfig cfg_;
  RadonOperator full_;
  RadonOperator odd_;
  RadonOperator even_;
  double full_norm_;
  double odd_norm_;
  double even_norm_;
};

MaterialImage partial_reconstruction(const SpectralModel& model, const Geometry& geom_full,
                                     const SpectralSinogram& y_subset, const Subset& subset,
                                     const SolverConfig& cfg);

void write_residual_trace(const std::filesystem::path& path, const std::vector<double>& residuals);

}  // namespace splitct
