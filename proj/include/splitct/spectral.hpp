#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <span>

#include "splitct/core.hpp"
#include "splitct/radon.hpp"

namespace splitct {

/// Discretized spectral response. With S (B×E, rows summing to one) and
/// attenuation table Mmat (E×M), a ray with material line integrals z sees
/// Φ_b(z) = Σ_i S[b,i]·exp(−Σ_m Mmat[i,m]·z_m).
class SpectralModel {
 public:
  /// Builds U = S·Mmat and its Moore–Penrose pseudoinverse. Throws
  /// ContractError on inconsistent shapes and std::runtime_error if U is
  /// rank deficient.
  static SpectralModel from_tables(Eigen::MatrixXd spectra, Eigen::MatrixXd attenuation);

  int n_energies() const { return int(spectra_.cols()); }
  int n_bins() const { return int(spectra_.rows()); }
  int n_materials() const { return int(attenuation_.cols()); }

  const Eigen::MatrixXd& spectra() const { return spectra_; }          // S, B×E
  const Eigen::MatrixXd& attenuation() const { return attenuation_; }  // Mmat, E×M
  const Eigen::MatrixXd& mixing() const { return mixing_; }            // U, B×M
  const Eigen::MatrixXd& mixing_pinv() const { return mixing_pinv_; }  // U‡, M×B
  double condition_number() const { return condition_; }

 private:
  Eigen::MatrixXd spectra_;
  Eigen::MatrixXd attenuation_;
  Eigen::MatrixXd mixing_;
  Eigen::MatrixXd mixing_pinv_;
  Eigen::MatrixXd attenuation_t_;  // M×E copy for the per-ray inner loop
  double condition_ = 0.0;

  friend void phi(const SpectralModel&, std::span<const double>, std::span<double>, bool*);
  friend Eigen::MatrixXd phi_jacobian(const SpectralModel&, std::span<const double>);
};

inline constexpr double kLogFloor = 1e-6;
inline constexpr double kExponentClamp = 50.0;

/// Energy nodes e_i = i·150/E keV, i = 1..E.
std::vector<double> energy_nodes(int n_energies);

/// Synthetic water / iodine / gadolinium tables with K-edges at 33.2 and
/// 50.2 keV, and B smooth, overlapping bin responses of a tungsten-like source.
/// Attenuation is expressed per pixel length for unit density.
SpectralModel build_default_model(int n_energies = 150, int n_bins = 5, int n_materials = 3);

/// Φ for one ray: z has M entries, out has B entries. Exponent arguments are
/// clamped at +50; `clamped` (optional) is set when that happens.
void phi(const SpectralModel& model, std::span<const double> z, std::span<double> out,
         bool* clamped = nullptr);

/// ∂Φ_b/∂z_m, B×M.
Eigen::MatrixXd phi_jacobian(const SpectralModel& model, std::span<const double> z);

struct PhiStats {
  std::size_t clamped_rays = 0;
};

SpectralSinogram apply_phi(const SpectralModel& model, const LineIntegrals& z,
                           PhiStats* stats = nullptr);

/// A(x) = Φ(R x).
SpectralSinogram forward(const SpectralModel& model, const RadonOperator& op,
                         const MaterialImage& x, PhiStats* stats = nullptr);
SpectralSinogram forward(const SpectralModel& model, const Geometry& geom,
                         const MaterialImage& x);

/// log A(x) − log max(y, floor).
SpectralSinogram log_forward_residual(const SpectralModel& model, const RadonOperator& op,
                                      const MaterialImage& x, const SpectralSinogram& y,
                                      double floor = kLogFloor);

/// Writes S, Mmat, U, U‡ as TensorFiles plus a `model.txt` metadata file.
void save_model(const std::filesystem::path& dir, const SpectralModel& model);
SpectralModel load_model(const std::filesystem::path& dir);

}  // namespace splitct
