#include "splitct/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "splitct/metrics.hpp"

namespace splitct {

Method parse_method(const std::string& text) {
  if (text == "xspace" || text == "x-space") return Method::xspace;
  if (text == "single-split" || text == "single_split") return Method::single_split;
  if (text == "double-split" || text == "double_split") return Method::double_split;
  throw ContractError("unknown method '" + text + "' (expected xspace, single-split or double-split)");
}

std::string to_string(Method method) {
  switch (method) {
    case Method::xspace: return "xspace";
    case Method::single_split: return "single-split";
    case Method::double_split: return "double-split";
  }
  return "?";
}

MethodConfig MethodConfig::for_method(Method method, const Geometry& geom) {
  MethodConfig cfg;
  cfg.method = method;
  cfg.scheme = method == Method::double_split ? make_double_split(geom) : make_single_split(geom);
  return cfg;
}

void MethodConfig::validate() const {
  scheme.validate();
  solver.validate();
  net.validate();
  require(max_epochs >= 0, "MethodConfig: max_epochs must be >= 0");
  require(patience >= 1, "MethodConfig: patience must be >= 1");
  require(eval_interval >= 1, "MethodConfig: eval_interval must be >= 1");
  require(adam.lr > 0.0, "MethodConfig: learning rate must be positive");
  if (method == Method::double_split) {
    require(scheme.is_double(), "MethodConfig: double-split needs the angular+detector scheme");
  } else {
    require(scheme.is_single_angular(),
            "MethodConfig: " + to_string(method) + " needs a single angular partition");
  }
}

// ---------------------------------------------------------------------------

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t hash_doubles(std::span<const double> v, std::uint64_t h) {
  return fnv1a(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(v.data()),
                                             v.size_bytes()),
               h);
}

std::uint64_t setup_hash(const SplitContext& ctx) {
  const auto& g = ctx.geometry();
  const auto& s = ctx.solver();
  std::ostringstream text;
  text << std::setprecision(17) << g.size << ' ' << g.n_dets << ' ' << s.iters << ' '
       << (s.step ? *s.step : -1.0) << ' ' << s.relative_step << ' ' << s.log_floor;
  std::uint64_t h = fnv1a(text.str());
  h = hash_doubles(g.angles, h);
  h = hash_doubles(s.schedule, h);
  const auto& u = ctx.model().mixing();
  h = hash_doubles({u.data(), std::size_t(u.size())}, h);
  const auto& sp = ctx.model().spectra();
  return hash_doubles({sp.data(), std::size_t(sp.size())}, h);
}

MaterialImage round_to_float(MaterialImage img) {
  for (double& v : img.data) v = double(float(v));
  return img;
}

std::string file_safe(std::string s) {
  std::replace(s.begin(), s.end(), ':', '-');
  return s;
}

}  // namespace

std::optional<MaterialImage> PairCache::load(const std::string& key) const {
  const auto path = dir_ / (key + ".splt");
  const auto sum = dir_ / (key + ".fnv");
  if (!std::filesystem::exists(path) || !std::filesystem::exists(sum)) return std::nullopt;
  try {
    const auto bytes = read_file_bytes(path);
    std::ifstream in(sum);
    std::string expected;
    in >> expected;
    if (expected != hex64(fnv1a(std::span<const std::uint8_t>(bytes)))) {
      std::cerr << "warning: pair cache entry " << path.string()
                << " fails its checksum; recomputing\n";
      return std::nullopt;
    }
    auto t = decode_tensor(bytes);
    require(t.dims.size() == 3, "pair cache entry is not M×H×W");
    MaterialImage img(int(t.dims[0]), int(t.dims[1]), int(t.dims[2]));
    img.data = std::move(t.values);
    return img;
  } catch (const std::exception& e) {
    std::cerr << "warning: pair cache entry " << path.string() << " unreadable (" << e.what()
              << "); recomputing\n";
    return std::nullopt;
  }
}

void PairCache::store(const std::string& key, const MaterialImage& img) const {
  std::filesystem::create_directories(dir_);
  const std::uint32_t dims[] = {std::uint32_t(img.materials), std::uint32_t(img.height),
                                std::uint32_t(img.width)};
  const auto bytes = encode_tensor(dims, img.data);
  write_file_bytes(dir_ / (key + ".splt"), bytes);
  std::ofstream out(dir_ / (key + ".fnv"), std::ios::trunc);
  out << hex64(fnv1a(std::span<const std::uint8_t>(bytes))) << '\n';
}

// ---------------------------------------------------------------------------

SplitContext::SplitContext(SpectralModel model, Geometry geom, PartitionScheme scheme,
                           SolverConfig solver)
    : model_(std::move(model)),
      geom_(std::move(geom)),
      scheme_(std::move(scheme)),
      full_(geom_),
      recon_(model_, geom_, std::move(solver)) {
  scheme_.validate();
  require(scheme_.n_angles == geom_.n_angles() && scheme_.n_dets == geom_.n_dets,
          "SplitContext: scheme does not match the geometry");
  for (const auto& part : scheme_.partitions) {
    for (const auto& subset : part) {
      for (const auto& desc : {subset.desc, subset.desc.complement()}) {
        if (!subset_ops_.count(desc)) {
          subset_ops_.emplace(desc, subset_operator(geom_, resolve_subset(geom_, desc)));
        }
      }
    }
  }
}

const RadonOperator& SplitContext::subset_op(const SubsetDescriptor& desc) const {
  const auto it = subset_ops_.find(desc);
  require(it != subset_ops_.end(), "SplitContext: subset " + desc.to_string() + " not in scheme");
  return it->second;
}

std::vector<ReconPair> precompute_pairs(const SplitContext& ctx, const SpectralSinogram& y,
                                        const std::string& sample_id, const PairCache* cache) {
  const auto& geom = ctx.geometry();
  require(y.n_angles == geom.n_angles() && y.n_dets == geom.n_dets &&
              y.channels == ctx.model().n_bins(),
          "precompute_pairs: measurement does not match the geometry");
  require(!cache || !sample_id.empty(), "precompute_pairs: caching needs a sample id");

  const std::uint64_t base = cache ? hash_doubles(y.data, setup_hash(ctx)) : 0;
  std::map<SubsetDescriptor, MaterialImage> recon;
  auto partial = [&](const Subset& subset) -> const MaterialImage& {
    auto it = recon.find(subset.desc);
    if (it != recon.end()) return it->second;
    std::optional<MaterialImage> img;
    std::string key;
    if (cache) {
      key = file_safe(sample_id + "_" + subset.desc.to_string()) + "_" + hex64(base);
      img = cache->load(key);
    }
    if (!img) {
      img = round_to_float(ctx.reconstructor().reconstruct(restrict_data(y, subset), subset));
      if (cache) cache->store(key, *img);
    }
    return recon.emplace(subset.desc, std::move(*img)).first->second;
  };

  std::vector<ReconPair> pairs;
  for (int i = 0; i < ctx.scheme().count(); ++i) {
    for (const auto& subset : ctx.scheme().partitions[std::size_t(i)]) {
      ReconPair p;
      p.partition = i;
      p.subset = subset;
      p.input = partial(resolve_subset(geom, subset.desc.complement()));
      p.target = restrict_data(y, subset);
      p.target_image = partial(subset);
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

// ---------------------------------------------------------------------------

double measurement_misfit(const SpectralModel& model, const RadonOperator& op,
                          const MaterialImage& z, const SpectralSinogram& y, MaterialImage* grad) {
  const LineIntegrals li = op.project_stack(z);
  require(y.n_angles == li.n_angles && y.n_dets == li.n_dets && y.channels == model.n_bins(),
          "measurement_misfit: target does not match the operator");
  const int b_count = model.n_bins();
  const int m_count = model.n_materials();
  const SpectralSinogram a = apply_phi(model, li);
  double value = 0.0;
  LineIntegrals back(li.n_angles, li.n_dets, m_count);
  for (std::size_t r = 0; r < a.rays(); ++r) {
    double res[64];
    for (int b = 0; b < b_count; ++b) {
      res[b] = a.data[r * b_count + b] - y.data[r * b_count + b];
      value += res[b] * res[b];
    }
    if (grad) {
      const Eigen::MatrixXd jac = phi_jacobian(model, li.ray(r));
      for (int m = 0; m < m_count; ++m) {
        double acc = 0.0;
        for (int b = 0; b < b_count; ++b) acc += jac(b, m) * res[b];
        back.data[r * m_count + m] = 2.0 * acc;
      }
    }
  }
  if (grad) *grad = op.backproject_stack(back);
  return value;
}

namespace {

void check_finite_loss(double value, const ReconPair& p) {
  if (!std::isfinite(value)) {
    throw std::runtime_error("non-finite loss on pair (partition " + std::to_string(p.partition) +
                             ", " + p.subset.desc.to_string() + ")");
  }
}

}  // namespace

LossResult loss_y(const SplitContext& ctx, const ModelParams& params,
                  const std::vector<ReconPair>& pairs) {
  const int k = ctx.scheme().count();
  LossResult out;
  out.grad.assign(params.values.size(), 0.0);
  for (const auto& p : pairs) {
    std::vector<NetTape> tapes;
    const MaterialImage z = net_apply(params, p.input, &tapes);
    MaterialImage gz;
    const double v = measurement_misfit(ctx.model(), ctx.subset_op(p.subset.desc), z, p.target, &gz);
    check_finite_loss(v, p);
    out.value += v / k;
    for (double& g : gz.data) g /= k;
    for (int m = 0; m < z.materials; ++m) {
      net_backward_accumulate(params, tapes[std::size_t(m)], gz.channel_image(m), out.grad,
                              nullptr);
    }
  }
  return out;
}

LossResult loss_x(const ModelParams& params, const std::vector<ReconPair>& pairs, int partitions) {
  require(partitions >= 1, "loss_x: partition count must be >= 1");
  LossResult out;
  out.grad.assign(params.values.size(), 0.0);
  for (const auto& p : pairs) {
    require(p.target_image.data.size() == p.input.data.size(), "loss_x: pair lacks a target image");
    for (int m = 0; m < p.input.materials; ++m) {
      NetTape tape;
      const Image z = net_forward(params, p.input.channel_image(m), &tape);
      const auto target = p.target_image.channel(m);
      Image g(z.height, z.width);
      double v = 0.0;
      for (std::size_t q = 0; q < z.size(); ++q) {
        const double d = z.data[q] - target[q];
        v += d * d;
        g.data[q] = 2.0 * d / partitions;
      }
      check_finite_loss(v, p);
      out.value += v / partitions;
      net_backward_accumulate(params, tape, g, out.grad, nullptr);
    }
  }
  return out;
}

LossResult method_loss(Method method, const SplitContext& ctx, const ModelParams& params,
                       const std::vector<ReconPair>& pairs) {
  if (method == Method::xspace) {
    std::vector<ReconPair> first;
    for (const auto& p : pairs) {
      if (p.partition == 0) first.push_back(p);
    }
    return loss_x(params, first, 1);
  }
  return loss_y(ctx, params, pairs);
}

double early_stop_metric(const ModelParams& params, const std::vector<ReconPair>& pairs) {
  // Pairs of one partition share their subset reconstructions: the target
  // image of subset j is the input of its complement.
  std::map<int, std::vector<const ReconPair*>> by_partition;
  for (const auto& p : pairs) by_partition[p.partition].push_back(&p);
  double total = 0.0;
  int terms = 0;
  for (const auto& [i, members] : by_partition) {
    require(members.size() == 2, "early_stop_metric: partitions must have two subsets");
    const MaterialImage a = net_apply(params, members[1]->target_image);
    const MaterialImage b = net_apply(params, members[0]->target_image);
    for (int m = 0; m < a.materials; ++m) {
      total += psnr(a.channel(m), b.channel(m), DataRange::of_pair());
      ++terms;
    }
  }
  return terms ? total / terms : 0.0;
}

MaterialImage infer_from_pairs(const ModelParams& params, const std::vector<ReconPair>& pairs) {
  require(!pairs.empty(), "infer: no pairs");
  std::map<int, int> subset_counts;
  for (const auto& p : pairs) subset_counts[p.partition] += 1;
  const double k = double(subset_counts.size());
  const auto& first = pairs.front().input;
  MaterialImage out(first.materials, first.height, first.width);
  for (const auto& p : pairs) {
    const MaterialImage z = net_apply(params, p.input);
    const double w = 1.0 / (k * subset_counts[p.partition]);
    for (std::size_t q = 0; q < z.data.size(); ++q) out.data[q] += w * z.data[q];
  }
  return out;
}

MaterialImage infer(const SplitContext& ctx, const ModelParams& params, const SpectralSinogram& y) {
  return infer_from_pairs(params, precompute_pairs(ctx, y));
}

// ---------------------------------------------------------------------------

void write_trace(const std::filesystem::path& path, const std::vector<TrainRecord>& trace) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,loss,stop_metric,psnr_iodine,psnr_gadolinium,psnr_water\n" << std::setprecision(10);
  for (const auto& r : trace) {
    out << r.epoch << ',' << r.loss << ',' << r.stop_metric << ',' << r.psnr_iodine << ','
        << r.psnr_gadolinium << ',' << r.psnr_water << '\n';
  }
  if (!out) throw IoError("cannot write " + path.string());
}

Sample simulate_sample(const SplitContext& ctx, const NoiseConfig& noise, std::string id,
                       MaterialImage truth) {
  require(truth.materials == ctx.model().n_materials() && truth.height == ctx.geometry().size &&
              truth.width == ctx.geometry().size,
          "simulate_sample: phantom " + id + " does not match geometry/model");
  NoiseConfig per_sample = noise;
  per_sample.seed = RngStream::mix(noise.seed ^ fnv1a(id));
  Sample s;
  s.y = apply_noise(per_sample, forward(ctx.model(), ctx.full_operator(), truth));
  s.id = std::move(id);
  s.truth = std::move(truth);
  return s;
}

std::vector<Sample> load_split(const SplitContext& ctx, const NoiseConfig& noise,
                               const std::filesystem::path& data_dir, const std::string& split) {
  std::vector<Sample> samples;
  for (const auto& e : read_manifest(data_dir).split(split)) {
    const std::string id = std::filesystem::path(e.file).stem().string();
    samples.push_back(simulate_sample(ctx, noise, id, read_material_image(data_dir / e.file)));
  }
  return samples;
}

// ---------------------------------------------------------------------------

namespace {

struct PreparedSample {
  const Sample* sample;
  std::vector<ReconPair> pairs;
};

std::vector<PreparedSample> prepare(const SplitContext& ctx, const std::vector<Sample>& set,
                                    const PairCache* cache) {
  std::vector<PreparedSample> out;
  for (const auto& s : set) out.push_back({&s, precompute_pairs(ctx, s.y, s.id, cache)});
  return out;
}

TrainRecord evaluate_epoch(int epoch, double loss, const ModelParams& params,
                           const std::vector<PreparedSample>& val) {
  TrainRecord rec;
  rec.epoch = epoch;
  rec.loss = loss;
  if (val.empty()) return rec;
  double metric = 0.0;
  std::vector<double> ps(3, 0.0);
  int channels = 0;
  for (const auto& v : val) {
    metric += early_stop_metric(params, v.pairs);
    const MaterialImage recon = infer_from_pairs(params, v.pairs);
    const auto scores = evaluate(recon, v.sample->truth);
    channels = int(scores.size());
    for (int m = 0; m < std::min(3, channels); ++m) ps[std::size_t(m)] += scores[std::size_t(m)].psnr_db;
  }
  const double n = double(val.size());
  rec.stop_metric = metric / n;
  if (channels > kWater) rec.psnr_water = ps[kWater] / n;
  if (channels > kIodine) rec.psnr_iodine = ps[kIodine] / n;
  if (channels > kGadolinium) rec.psnr_gadolinium = ps[kGadolinium] / n;
  return rec;
}

Checkpoint snapshot(const ModelParams& params, const AdamState& adam, int epoch,
                    const MethodConfig& cfg) {
  Checkpoint c;
  c.params = params;
  c.adam = adam;
  c.epoch = epoch;
  c.meta["method"] = to_string(cfg.method);
  return c;
}

}  // namespace

TrainResult train(const MethodConfig& cfg, const SplitContext& ctx,
                  const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const PairCache* cache, const TrainHooks& hooks) {
  cfg.validate();
  require(cfg.scheme.partitions.size() == ctx.scheme().partitions.size() &&
              cfg.scheme.is_double() == ctx.scheme().is_double(),
          "train: method scheme differs from the context scheme");
  require(!train_set.empty(), "train: empty training set");

  const auto train_pairs = prepare(ctx, train_set, cache);
  const auto val_pairs = prepare(ctx, val_set, cache);

  ModelParams params = init_params(cfg.net, RngStream(cfg.seed, "net").at(0));
  AdamState adam = AdamState::fresh(params.values.size(), cfg.adam);

  auto mean_loss = [&](const ModelParams& p) {
    double total = 0.0;
    for (const auto& s : train_pairs) total += method_loss(cfg.method, ctx, p, s.pairs).value;
    return total / double(train_pairs.size());
  };

  TrainResult result;
  double best_metric = -std::numeric_limits<double>::infinity();
  auto record = [&](int epoch, double loss) {
    TrainRecord rec = evaluate_epoch(epoch, loss, params, val_pairs);
    result.trace.push_back(rec);
    if (hooks.on_eval) hooks.on_eval(rec);
    if (rec.stop_metric > best_metric || result.trace.size() == 1) {
      best_metric = rec.stop_metric;
      result.best_epoch = epoch;
      result.best = snapshot(params, adam, epoch, cfg);
    }
  };

  record(0, mean_loss(params));

  std::vector<std::size_t> order(train_pairs.size());
  int epoch = 0;
  while (epoch < cfg.max_epochs) {
    ++epoch;
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (cfg.shuffle) {
      RngStream rng = RngStream(cfg.seed, "shuffle").substream(std::uint64_t(epoch));
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[std::size_t(rng.next_u64() % i)]);
      }
    }
    double epoch_loss = 0.0;
    bool diverged = false;
    for (std::size_t idx : order) {
      LossResult lr;
      try {
        lr = method_loss(cfg.method, ctx, params, train_pairs[idx].pairs);
      } catch (const std::runtime_error& e) {
        result.divergence_message = std::string(e.what()) + " (sample " +
                                    train_pairs[idx].sample->id + ", epoch " +
                                    std::to_string(epoch) + ")";
        diverged = true;
        break;
      }
      if (!std::isfinite(lr.value) || lr.value > 1e6 || !all_finite(lr.grad)) {
        result.divergence_message = "training diverged at epoch " + std::to_string(epoch) +
                                    " on sample " + train_pairs[idx].sample->id;
        diverged = true;
        break;
      }
      epoch_loss += lr.value;
      adam_step(adam, params.values, lr.grad);
    }
    if (diverged) {
      result.diverged = true;
      break;
    }
    epoch_loss /= double(order.size());
    if (epoch % cfg.eval_interval == 0 || epoch == cfg.max_epochs) {
      record(epoch, epoch_loss);
      if (epoch - result.best_epoch >= cfg.patience) break;
    }
  }
  result.last = snapshot(params, adam, epoch, cfg);
  result.best.meta["best_epoch"] = std::to_string(result.best_epoch);
  result.last.meta["best_epoch"] = std::to_string(result.best_epoch);
  return result;
}

std::vector<double> mean_test_psnr(const SplitContext& ctx, const ModelParams& params,
                                   const std::vector<Sample>& samples, const PairCache* cache) {
  std::vector<double> out(std::size_t(ctx.model().n_materials()), 0.0);
  for (const auto& s : samples) {
    const auto pairs = precompute_pairs(ctx, s.y, s.id, cache);
    const auto scores = evaluate(infer_from_pairs(params, pairs), s.truth);
    for (std::size_t m = 0; m < out.size(); ++m) out[m] += scores[m].psnr_db;
  }
  for (double& v : out) v /= double(std::max<std::size_t>(1, samples.size()));
  return out;
}

}  // namespace splitct
