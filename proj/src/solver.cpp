#include "splitct/solver.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

namespace splitct {

void SolverConfig::validate() const {
  require(iters >= 1, "SolverConfig: iters must be >= 1");
  require(!step || *step > 0.0, "SolverConfig: step must be positive");
  require(relative_step > 0.0, "SolverConfig: relative_step must be positive");
  for (double s : schedule) require(s > 0.0, "SolverConfig: schedule steps must be positive");
  require(schedule.empty() || int(schedule.size()) >= iters,
          "SolverConfig: schedule shorter than iters");
  require(log_floor > 0.0, "SolverConfig: log floor must be positive");
}

double step_size(const SolverConfig& cfg, int k, double normal_norm) {
  if (!cfg.schedule.empty()) return cfg.schedule[std::size_t(k)];
  if (cfg.step) return *cfg.step;
  return cfg.relative_step / normal_norm;
}

namespace {

SolveResult run_cp_fast(const SpectralModel& model, const RadonOperator& op,
                        const SpectralSinogram& y, const SolverConfig& cfg, double normal_norm) {
  cfg.validate();
  require(y.n_angles == op.n_angles() && y.n_dets == op.n_dets(),
          "cp_fast: measurement does not match the geometry");
  require(y.channels == model.n_bins(), "cp_fast: bin count mismatch");
  require(all_finite(y.data), "cp_fast: non-finite measurement");

  const int m_count = model.n_materials();
  const int b_count = model.n_bins();
  const int n = op.geometry().size;
  const Eigen::MatrixXd& pinv = model.mixing_pinv();  // M×B

  std::vector<double> log_y(y.data.size());
  for (std::size_t k = 0; k < y.data.size(); ++k) {
    log_y[k] = std::log(std::max(y.data[k], cfg.log_floor));
  }

  SolveResult result;
  result.image = MaterialImage(m_count, n, n);
  MaterialImage& x = result.image;
  LineIntegrals precond(y.n_angles, y.n_dets, m_count);

  for (int k = 0; k < cfg.iters; ++k) {
    const SpectralSinogram a = forward(model, op, x);
    double norm2 = 0.0;
    for (std::size_t r = 0; r < a.rays(); ++r) {
      double diff[64];
      for (int b = 0; b < b_count; ++b) {
        const std::size_t idx = r * b_count + b;
        diff[b] = std::log(a.data[idx]) - log_y[idx];
        norm2 += diff[b] * diff[b];
      }
      for (int m = 0; m < m_count; ++m) {
        double acc = 0.0;
        for (int b = 0; b < b_count; ++b) acc += diff[b] * pinv(m, b);
        precond.data[r * m_count + m] = acc;
      }
    }
    if (!std::isfinite(norm2)) {
      throw SolverDivergence(k, "cp_fast: non-finite residual at iteration " + std::to_string(k) +
                                    " (step size too large?)");
    }
    if (cfg.record_residuals) result.residuals.push_back(std::sqrt(norm2));

    const double s = step_size(cfg, k, normal_norm);
    const MaterialImage update = op.backproject_stack(precond);
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += s * update.data[i];
    if (!all_finite(x.data)) {
      throw SolverDivergence(k, "cp_fast: non-finite iterate at iteration " + std::to_string(k) +
                                    " (step size too large?)");
    }
  }
  return result;
}

bool needs_norm(const SolverConfig& cfg) { return cfg.schedule.empty() && !cfg.step; }

}  // namespace

SolveResult cp_fast(const SpectralModel& model, const RadonOperator& op,
                    const SpectralSinogram& y, const SolverConfig& cfg) {
  require(model.n_bins() <= 64, "cp_fast: at most 64 energy bins supported");
  const double norm = needs_norm(cfg) ? op.normal_operator_norm() : 1.0;
  return run_cp_fast(model, op, y, cfg, norm);
}

double tune_step(const SpectralModel& model, const RadonOperator& op, const SpectralSinogram& y,
                 int probe_iters) {
  const double norm = op.normal_operator_norm();
  SolverConfig cfg;
  cfg.iters = probe_iters;
  cfg.record_residuals = true;
  double best = 0.0;
  // Geometric ladder in steps of √2 from 1/8 to 4 (relative to 1/‖RᵀR‖).
  for (int e = -6; e <= 4; ++e) {
    cfg.relative_step = std::pow(2.0, 0.5 * e);
    bool monotone = true;
    try {
      const auto res = run_cp_fast(model, op, y, cfg, norm);
      for (std::size_t k = 1; k < res.residuals.size() && monotone; ++k) {
        monotone = res.residuals[k] <= res.residuals[k - 1];
      }
    } catch (const SolverDivergence&) {
      monotone = false;
    }
    if (!monotone) break;
    best = cfg.relative_step;
  }
  require(best > 0.0, "tune_step: no stable step found");
  return best;
}

SpectralSinogram interpolate_detectors(const SpectralSinogram& packed, const std::vector<int>& dets,
                                       int n_dets) {
  require(int(dets.size()) == packed.n_dets && !dets.empty(),
          "interpolate_detectors: detector list does not match data");
  SpectralSinogram full(packed.n_angles, n_dets, packed.channels);
  // For each full column: the bracketing known columns (as packed indices).
  std::vector<int> left(n_dets, -1), right(n_dets, -1);
  for (int d = 0, j = 0; d < n_dets; ++d) {
    while (j < int(dets.size()) && dets[j] < d) ++j;
    if (j < int(dets.size()) && dets[j] == d) {
      left[d] = right[d] = j;
    } else {
      left[d] = j - 1;
      right[d] = j < int(dets.size()) ? j : -1;
    }
  }
  for (int a = 0; a < packed.n_angles; ++a) {
    for (int d = 0; d < n_dets; ++d) {
      const int l = left[d] >= 0 ? left[d] : right[d];
      const int r = right[d] >= 0 ? right[d] : left[d];
      for (int b = 0; b < packed.channels; ++b) {
        double v;
        if (l == r) {
          v = packed.at(a, l, b);
        } else {
          const double t = double(d - dets[l]) / double(dets[r] - dets[l]);
          v = (1.0 - t) * packed.at(a, l, b) + t * packed.at(a, r, b);
        }
        full.at(a, d, b) = v;
      }
    }
  }
  return full;
}

PartialReconstructor::PartialReconstructor(const SpectralModel& model, const Geometry& geom,
                                           SolverConfig cfg)
    : model_(model),
      cfg_(std::move(cfg)),
      full_(geom),
      odd_(subset_operator(geom, resolve_subset(geom, {SplitAxis::angular, Parity::odd}))),
      even_(subset_operator(geom, resolve_subset(geom, {SplitAxis::angular, Parity::even}))) {
  cfg_.validate();
  const bool norm = needs_norm(cfg_);
  full_norm_ = norm ? full_.normal_operator_norm() : 1.0;
  odd_norm_ = norm ? odd_.normal_operator_norm() : 1.0;
  even_norm_ = norm ? even_.normal_operator_norm() : 1.0;
}

MaterialImage PartialReconstructor::reconstruct(const SpectralSinogram& packed,
                                                const Subset& subset) const {
  if (subset.desc.axis == SplitAxis::angular) {
    const bool odd = subset.desc.parity == Parity::odd;
    return run_cp_fast(model_, odd ? odd_ : even_, packed, cfg_, odd ? odd_norm_ : even_norm_)
        .image;
  }
  if (subset.desc.axis == SplitAxis::detector) {
    require(packed.n_angles == full_.n_angles(), "partial_reconstruction: angle count mismatch");
    const auto filled = interpolate_detectors(packed, subset.dets, full_.n_dets());
    return run_cp_fast(model_, full_, filled, cfg_, full_norm_).image;
  }
  throw ContractError("partial_reconstruction: unknown subset kind");
}

SolveResult PartialReconstructor::reconstruct_full(const SpectralSinogram& y) const {
  return run_cp_fast(model_, full_, y, cfg_, full_norm_);
}

MaterialImage partial_reconstruction(const SpectralModel& model, const Geometry& geom_full,
                                     const SpectralSinogram& y_subset, const Subset& subset,
                                     const SolverConfig& cfg) {
  return PartialReconstructor(model, geom_full, cfg).reconstruct(y_subset, subset);
}

void write_residual_trace(const std::filesystem::path& path, const std::vector<double>& residuals) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "iter,residual\n" << std::setprecision(17);
  for (std::size_t k = 0; k < residuals.size(); ++k) out << k << ',' << residuals[k] << '\n';
}

}  // namespace splitct
