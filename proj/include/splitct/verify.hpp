#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "splitct/training.hpp"

namespace splitct {

/// Forward map and partial reconstructions of one partitioned inverse
/// problem. Measurements are flat vectors in full-tensor order; restricted
/// measurements are packed in subset order.
class SplitProblem {
 public:
  virtual ~SplitProblem() = default;

  virtual int partitions() const = 0;
  virtual int subsets(int i) const = 0;
  virtual std::vector<double> forward(const MaterialImage& x) const = 0;
  virtual std::vector<double> restrict(const std::vector<double>& y, int i, int j) const = 0;
  virtual std::vector<double> restricted_forward(const MaterialImage& x, int i, int j) const = 0;
  /// B^c_{i,j} y^c_{i,j}
  virtual MaterialImage complement_reconstruction(const std::vector<double>& y, int i,
                                                  int j) const = 0;
};

/// A = Φ∘R with CP-fast partial reconstructions.
class SpectralSplitProblem : public SplitProblem {
 public:
  explicit SpectralSplitProblem(const SplitContext& ctx) : ctx_(ctx) {}

  int partitions() const override { return ctx_.scheme().count(); }
  int subsets(int i) const override;
  std::vector<double> forward(const MaterialImage& x) const override;
  std::vector<double> restrict(const std::vector<double>& y, int i, int j) const override;
  std::vector<double> restricted_forward(const MaterialImage& x, int i, int j) const override;
  MaterialImage complement_reconstruction(const std::vector<double>& y, int i,
                                          int j) const override;

 private:
  SpectralSinogram as_sinogram(const std::vector<double>& y) const;
  const Subset& subset(int i, int j) const;

  const SplitContext& ctx_;
};

/// A = R applied channel-wise (Φ = identity) with Landweber partial
/// reconstructions on the complement rays.
class LinearSplitProblem : public SplitProblem {
 public:
  LinearSplitProblem(Geometry geom, PartitionScheme scheme, int materials, int iters);

  int partitions() const override { return scheme_.count(); }
  int subsets(int i) const override;
  std::vector<double> forward(const MaterialImage& x) const override;
  std::vector<double> restrict(const std::vector<double>& y, int i, int j) const override;
  std::vector<double> restricted_forward(const MaterialImage& x, int i, int j) const override;
  MaterialImage complement_reconstruction(const std::vector<double>& y, int i,
                                          int j) const override;

 private:
  const Subset& subset(int i, int j) const;

  Geometry geom_;
  PartitionScheme scheme_;
  int materials_;
  int iters_;
  RadonOperator full_;
  std::map<SubsetDescriptor, RadonOperator> ops_;
  std::map<SubsetDescriptor, double> norms_;
};

struct MonteCarloReport {
  double lhs = 0.0;
  double sup = 0.0;
  double noise_analytic = 0.0;
  double gap = 0.0;
  double se = 0.0;
  bool pass = false;
  int draws = 0;
};

using ImageMap = std::function<MaterialImage(const MaterialImage&)>;

/// Untrained network used as the fixed map in gap tests: init_params plus a
/// last layer drawn from U(±0.1·√(6/fan_in)), so it is not the identity.
ModelParams frozen_network(const NetConfig& cfg, std::uint64_t seed);

/// Monte Carlo check of E[L_self] = E[L_sup] + E‖η‖² with Gaussian noise of
/// std `sigma`. Partial reconstructions are recomputed from every noisy draw.
MonteCarloReport verify_theorem1(const SplitProblem& problem, const MaterialImage& x,
                                 const ImageMap& f, double sigma, int draws, std::uint64_t seed);

using DenoiseMap = std::function<Image(const Image&)>;

/// Pixel checkerboard (r + c parity): mask 0 holds even r + c.
std::vector<std::vector<std::uint8_t>> checkerboard_masks(int height, int width);

/// g(z) = Σ_Ω 1_Ω · f(h_Ω(z)), where h_Ω replaces the pixels of Ω by the mean
/// of their 4-neighbours outside Ω.
DenoiseMap make_diagonal_free(DenoiseMap f, int height, int width);

/// First pixel inside some mask whose output moved when inputs inside that
/// mask were perturbed, over `trials` random perturbations of `z`.
std::optional<std::size_t> probe_diagonal_free(const DenoiseMap& g, const Image& z, int trials,
                                               std::uint64_t seed);

struct Noise2SelfOptions {
  bool require_diagonal_free = true;
  int probe_trials = 100;
};

/// Same gap test for denoising: NOISE = N·σ². Throws ContractError naming the
/// violating pixel when the probe is enabled and g is not diagonal-free.
MonteCarloReport verify_prop_noise2self(const DenoiseMap& g, const Image& x, double sigma,
                                        int draws, std::uint64_t seed,
                                        Noise2SelfOptions options = {});

/// CSV `lhs,sup,noise_analytic,gap,se,pass` plus a human-readable summary.
void write_report_csv(const std::filesystem::path& path, const MonteCarloReport& report);
std::string format_report(const std::string& title, const MonteCarloReport& report);

}  // namespace splitct
