#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "splitct/net.hpp"
#include "splitct/noise.hpp"
#include "splitct/partition.hpp"
#include "splitct/phantom.hpp"
#include "splitct/solver.hpp"
#include "splitct/spectral.hpp"

namespace splitct {

enum class Method { xspace, single_split, double_split };

/// Accepts `xspace`, `single-split`/`single_split`, `double-split`/`double_split`.
Method parse_method(const std::string& text);
std::string to_string(Method method);

struct MethodConfig {
  Method method = Method::single_split;
  PartitionScheme scheme;
  SolverConfig solver;
  NetConfig net;
  AdamConfig adam;
  int max_epochs = 15000;
  int patience = 500;  // epochs without a new best metric
  int eval_interval = 25;
  std::uint64_t seed = 0;
  bool shuffle = false;

  /// Scheme for `method` on `geom` (double split for double_split, the
  /// angular parity partition otherwise).
  static MethodConfig for_method(Method method, const Geometry& geom);

  void validate() const;
};

/// One (partition i, subset j) training pair.
struct ReconPair {
  int partition = 0;
  Subset subset;
  MaterialImage input;          // B^c_{i,j} y^c_{i,j}
  SpectralSinogram target;      // y_{i,j}, packed
  MaterialImage target_image;   // B_{i,j} y_{i,j}
};

/// Partial reconstructions are stored as float32 TensorFiles, so freshly
/// computed pairs are rounded the same way as cached ones.
class PairCache {
 public:
  explicit PairCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::optional<MaterialImage> load(const std::string& key) const;
  void store(const std::string& key, const MaterialImage& img) const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

/// Forward operators and partial reconstructions for one geometry/scheme.
class SplitContext {
 public:
  SplitContext(SpectralModel model, Geometry geom, PartitionScheme scheme, SolverConfig solver);

  const SpectralModel& model() const { return model_; }
  const Geometry& geometry() const { return geom_; }
  const PartitionScheme& scheme() const { return scheme_; }
  const SolverConfig& solver() const { return recon_.config(); }
  const RadonOperator& full_operator() const { return full_; }
  const RadonOperator& subset_op(const SubsetDescriptor& desc) const;
  const PartialReconstructor& reconstructor() const { return recon_; }

 private:
  SpectralModel model_;
  Geometry geom_;
  PartitionScheme scheme_;
  RadonOperator full_;
  std::map<SubsetDescriptor, RadonOperator> subset_ops_;
  PartialReconstructor recon_;
};

/// Pairs in scheme order (partition-major). When `cache` is given, partial
/// reconstructions are looked up under `<sample_id>_<subset>` plus a hash of
/// the measurement and solver settings; corrupt entries are recomputed.
std::vector<ReconPair> precompute_pairs(const SplitContext& ctx, const SpectralSinogram& y,
                                        const std::string& sample_id = {},
                                        const PairCache* cache = nullptr);

struct LossResult {
  double value = 0.0;
  std::vector<double> grad;  // ∂loss/∂θ
};

/// ‖Φ(R z) − y‖² for one subset operator, with ∂/∂z (M×H×W) when `grad` is set.
double measurement_misfit(const SpectralModel& model, const RadonOperator& op,
                          const MaterialImage& z, const SpectralSinogram& y,
                          MaterialImage* grad = nullptr);

/// (1/K) Σ_{i,j} ‖A_{i,j} net(input_{i,j}) − y_{i,j}‖²
LossResult loss_y(const SplitContext& ctx, const ModelParams& params,
                  const std::vector<ReconPair>& pairs);
/// (1/K) Σ_{i,j} ‖net(input_{i,j}) − target_image_{i,j}‖²
LossResult loss_x(const ModelParams& params, const std::vector<ReconPair>& pairs, int partitions);

/// Loss for `method`; the x-space loss only uses the first partition.
LossResult method_loss(Method method, const SplitContext& ctx, const ModelParams& params,
                       const std::vector<ReconPair>& pairs);

/// Mean over partitions and materials of PSNR (max-of-pair range) between
/// the network outputs on the two subset reconstructions of each partition.
double early_stop_metric(const ModelParams& params, const std::vector<ReconPair>& pairs);

/// (1/K) Σ_i (1/|P_i|) Σ_j net(B^c_{i,j} y^c_{i,j}).
MaterialImage infer_from_pairs(const ModelParams& params, const std::vector<ReconPair>& pairs);
MaterialImage infer(const SplitContext& ctx, const ModelParams& params, const SpectralSinogram& y);

struct TrainRecord {
  int epoch = 0;
  double loss = 0.0;
  double stop_metric = 0.0;
  double psnr_iodine = std::numeric_limits<double>::quiet_NaN();
  double psnr_gadolinium = std::numeric_limits<double>::quiet_NaN();
  double psnr_water = std::numeric_limits<double>::quiet_NaN();
};

/// CSV `epoch,loss,stop_metric,psnr_iodine,psnr_gadolinium,psnr_water`.
void write_trace(const std::filesystem::path& path, const std::vector<TrainRecord>& trace);

/// A phantom with its simulated measurement.
struct Sample {
  std::string id;
  MaterialImage truth;
  SpectralSinogram y;
};

/// Noise for sample `id` is seeded from (noise.seed, id).
Sample simulate_sample(const SplitContext& ctx, const NoiseConfig& noise, std::string id,
                       MaterialImage truth);

/// Loads and simulates every entry of `split` from a dataset directory.
std::vector<Sample> load_split(const SplitContext& ctx, const NoiseConfig& noise,
                               const std::filesystem::path& data_dir, const std::string& split);

struct TrainResult {
  Checkpoint best;
  Checkpoint last;
  std::vector<TrainRecord> trace;
  int best_epoch = 0;
  bool diverged = false;
  std::string divergence_message;
};

struct TrainHooks {
  std::function<void(const TrainRecord&)> on_eval;
};

/// One Adam step per training sample per epoch; early stopping on the
/// validation samples' metric (maximum, with patience).
TrainResult train(const MethodConfig& cfg, const SplitContext& ctx,
                  const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const PairCache* cache = nullptr, const TrainHooks& hooks = {});

/// Per-material PSNR (reference range) of inference against truth, averaged
/// over samples; indexed by channel.
std::vector<double> mean_test_psnr(const SplitContext& ctx, const ModelParams& params,
                                   const std::vector<Sample>& samples,
                                   const PairCache* cache = nullptr);

}  // namespace splitct
