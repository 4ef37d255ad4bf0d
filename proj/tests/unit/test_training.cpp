#include <cmath>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "splitct/metrics.hpp"
#include "splitct/training.hpp"

using namespace splitct;

namespace {

struct Fixture {
  Geometry geom = Geometry::uniform(16, 8);
  SplitContext ctx;
  Sample sample;

  explicit Fixture(Method method = Method::double_split)
      : ctx(build_default_model(), geom, MethodConfig::for_method(method, geom).scheme, solver()),
        sample(make_sample(ctx, "s0", 1)) {}

  static SolverConfig solver() {
    SolverConfig s;
    s.iters = 10;
    return s;
  }

  static Sample make_sample(const SplitContext& ctx, const std::string& id, std::uint64_t seed) {
    PhantomConfig pc;
    pc.size = ctx.geometry().size;
    pc.seed = seed;
    NoiseConfig nc;
    nc.seed = 5;
    return simulate_sample(ctx, nc, id, generate_phantom(pc));
  }
};

ModelParams perturbed(int channels, std::uint64_t seed) {
  NetConfig cfg;
  cfg.channels = channels;
  ModelParams p = init_params(cfg, seed);
  RngStream rng(seed, "perturb");
  for (double& v : p.values) v += 0.02 * rng.normal();
  return p;
}

}  // namespace

TEST_CASE("method names") {
  CHECK(parse_method("xspace") == Method::xspace);
  CHECK(parse_method("single-split") == Method::single_split);
  CHECK(parse_method("double_split") == Method::double_split);
  CHECK(to_string(Method::double_split) == "double-split");
  CHECK_THROWS_AS(parse_method("triple"), ContractError);
  const Geometry g = Geometry::uniform(16, 8);
  CHECK(MethodConfig::for_method(Method::double_split, g).scheme.is_double());
  CHECK(MethodConfig::for_method(Method::xspace, g).scheme.is_single_angular());
}

TEST_CASE("pairs use complement reconstructions as inputs") {
  Fixture f;
  const auto pairs = precompute_pairs(f.ctx, f.sample.y);
  REQUIRE(pairs.size() == 4);
  for (int i = 0; i < 2; ++i) {
    const auto& a = pairs[std::size_t(2 * i)];
    const auto& b = pairs[std::size_t(2 * i + 1)];
    CHECK(a.partition == i);
    CHECK(b.partition == i);
    CHECK(a.input.data == b.target_image.data);
    CHECK(b.input.data == a.target_image.data);
    CHECK(a.target.data == restrict_data(f.sample.y, a.subset).data);
  }
  const Subset odd = resolve_subset(f.geom, SubsetDescriptor::parse("angular:odd"));
  MaterialImage direct = f.ctx.reconstructor().reconstruct(restrict_data(f.sample.y, odd), odd);
  for (double& v : direct.data) v = double(float(v));
  CHECK(pairs[1].input.data == direct.data);
}

TEST_CASE("pair cache hits, checksums and recomputation") {
  Fixture f;
  const auto dir = testutil::temp_dir("pair_cache");
  const PairCache cache(dir);
  const auto fresh = precompute_pairs(f.ctx, f.sample.y, "s0", &cache);
  int files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) files += e.path().extension() == ".splt";
  CHECK(files == 4);
  const auto cached = precompute_pairs(f.ctx, f.sample.y, "s0", &cache);
  for (std::size_t k = 0; k < fresh.size(); ++k) CHECK(cached[k].input.data == fresh[k].input.data);
  CHECK(precompute_pairs(f.ctx, f.sample.y)[0].input.data == fresh[0].input.data);

  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() != ".splt") continue;
    auto bytes = read_file_bytes(e.path());
    bytes[bytes.size() - 1] ^= 0x40;
    write_file_bytes(e.path(), bytes);
  }
  const auto repaired = precompute_pairs(f.ctx, f.sample.y, "s0", &cache);
  for (std::size_t k = 0; k < fresh.size(); ++k) CHECK(repaired[k].input.data == fresh[k].input.data);
  CHECK_THROWS_AS(precompute_pairs(f.ctx, f.sample.y, "", &cache), ContractError);
}

TEST_CASE("measurement misfit gradient matches finite differences") {
  Fixture f;
  const Subset s = resolve_subset(f.geom, SubsetDescriptor::parse("detector:even"));
  const RadonOperator& op = f.ctx.subset_op(s.desc);
  const SpectralSinogram y = restrict_data(f.sample.y, s);
  const MaterialImage z = testutil::random_stack(3, 16, 16, 4, 0.0, 0.3);
  MaterialImage grad;
  measurement_misfit(f.ctx.model(), op, z, y, &grad);
  RngStream pick(1, "pick");
  for (int t = 0; t < 20; ++t) {
    const std::size_t k = pick.next_u64() % z.data.size();
    MaterialImage zp = z, zm = z;
    const double h = 1e-6;
    zp.data[k] += h;
    zm.data[k] -= h;
    const double fd = (measurement_misfit(f.ctx.model(), op, zp, y) - measurement_misfit(f.ctx.model(), op, zm, y)) / (2 * h);
    CHECK(grad.data[k] == doctest::Approx(fd).epsilon(1e-6).scale(1e-9));
  }
}

TEST_CASE("measurement loss parameter gradient matches finite differences") {
  const Geometry geom = Geometry::uniform(32, 16);
  SolverConfig sc;
  sc.iters = 10;
  const SplitContext ctx(build_default_model(), geom, make_double_split(geom), sc);
  const Sample sample = Fixture::make_sample(ctx, "g", 7);
  const auto pairs = precompute_pairs(ctx, sample.y);
  const ModelParams p = perturbed(4, 2);
  const LossResult lr = loss_y(ctx, p, pairs);
  RngStream pick(3, "coords");
  double num = 0, den = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t k = pick.next_u64() % p.values.size();
    const double h = 1e-5;
    ModelParams pp = p, pm = p;
    pp.values[k] += h;
    pm.values[k] -= h;
    const double fd = (loss_y(ctx, pp, pairs).value - loss_y(ctx, pm, pairs).value) / (2 * h);
    num += (fd - lr.grad[k]) * (fd - lr.grad[k]);
    den += fd * fd;
  }
  CHECK(std::sqrt(num / den) < 1e-3);
}

TEST_CASE("image loss parameter gradient matches finite differences") {
  Fixture f;
  const auto pairs = precompute_pairs(f.ctx, f.sample.y);
  const ModelParams p = perturbed(3, 4);
  const LossResult lr = loss_x(p, pairs, 2);
  RngStream pick(4, "coords");
  double num = 0, den = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t k = pick.next_u64() % p.values.size();
    const double h = 1e-6;
    ModelParams pp = p, pm = p;
    pp.values[k] += h;
    pm.values[k] -= h;
    const double fd = (loss_x(pp, pairs, 2).value - loss_x(pm, pairs, 2).value) / (2 * h);
    num += (fd - lr.grad[k]) * (fd - lr.grad[k]);
    den += fd * fd;
  }
  CHECK(std::sqrt(num / den) < 1e-5);
}

TEST_CASE("loss scaling by hand at the identity network") {
  Fixture f;
  const auto pairs = precompute_pairs(f.ctx, f.sample.y);
  NetConfig cfg;
  cfg.channels = 2;
  const ModelParams id = init_params(cfg, 1);
  double ly = 0, lx0 = 0;
  for (const auto& p : pairs) {
    ly += measurement_misfit(f.ctx.model(), f.ctx.subset_op(p.subset.desc), p.input, p.target);
    if (p.partition != 0) continue;
    for (std::size_t q = 0; q < p.input.data.size(); ++q) {
      lx0 += (p.input.data[q] - p.target_image.data[q]) * (p.input.data[q] - p.target_image.data[q]);
    }
  }
  CHECK(loss_y(f.ctx, id, pairs).value == doctest::Approx(ly / 2).epsilon(1e-12));
  CHECK(method_loss(Method::xspace, f.ctx, id, pairs).value == doctest::Approx(lx0).epsilon(1e-12));
  CHECK(method_loss(Method::double_split, f.ctx, id, pairs).value == doctest::Approx(ly / 2).epsilon(1e-12));
}

TEST_CASE("inference averages the complement outputs") {
  Fixture f;
  const auto pairs = precompute_pairs(f.ctx, f.sample.y);
  NetConfig cfg;
  cfg.channels = 2;
  const ModelParams id = init_params(cfg, 1);
  const MaterialImage x = infer_from_pairs(id, pairs);
  for (std::size_t q = 0; q < x.data.size(); ++q) {
    const double expected = 0.5 * (0.5 * (pairs[0].input.data[q] + pairs[1].input.data[q]) +
                                   0.5 * (pairs[2].input.data[q] + pairs[3].input.data[q]));
    CHECK(x.data[q] == doctest::Approx(expected).epsilon(1e-14));
  }
  CHECK(infer(f.ctx, id, f.sample.y).data == x.data);
}

TEST_CASE("early stopping metric at the identity network") {
  Fixture f;
  const auto pairs = precompute_pairs(f.ctx, f.sample.y);
  NetConfig cfg;
  cfg.channels = 2;
  const ModelParams id = init_params(cfg, 1);
  double expected = 0;
  for (int i = 0; i < 2; ++i) {
    const auto& a = pairs[std::size_t(2 * i + 1)].target_image;
    const auto& b = pairs[std::size_t(2 * i)].target_image;
    for (int m = 0; m < 3; ++m) expected += psnr(a.channel(m), b.channel(m), DataRange::of_pair());
  }
  CHECK(early_stop_metric(id, pairs) == doctest::Approx(expected / 6).epsilon(1e-12));
}

TEST_CASE("training is deterministic and records its trace") {
  Fixture f(Method::single_split);
  const std::vector<Sample> train_set = {f.sample, Fixture::make_sample(f.ctx, "s1", 2)};
  const std::vector<Sample> val_set = {Fixture::make_sample(f.ctx, "v0", 3)};
  MethodConfig mc = MethodConfig::for_method(Method::single_split, f.geom);
  mc.solver = Fixture::solver();
  mc.net.channels = 2;
  mc.adam.lr = 1e-3;
  mc.max_epochs = 6;
  mc.eval_interval = 2;
  mc.seed = 9;
  const TrainResult a = train(mc, f.ctx, train_set, val_set);
  const TrainResult b = train(mc, f.ctx, train_set, val_set);
  CHECK_FALSE(a.diverged);
  CHECK(a.last.params.values == b.last.params.values);
  CHECK(a.best.params.values == b.best.params.values);
  REQUIRE(a.trace.size() == 4);
  CHECK(a.trace[0].epoch == 0);
  CHECK(a.trace[3].epoch == 6);
  CHECK(a.last.epoch == 6);
  CHECK(a.last.adam.t == 12);
  CHECK(a.last.meta.at("method") == "single-split");
  double best = -1e9;
  for (const auto& r : a.trace) best = std::max(best, r.stop_metric);
  for (const auto& r : a.trace) {
    if (r.epoch == a.best_epoch) CHECK(r.stop_metric == best);
  }

  const auto dir = testutil::temp_dir("trace");
  write_trace(dir / "trace.csv", a.trace);
  std::ifstream in(dir / "trace.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,loss,stop_metric,psnr_iodine,psnr_gadolinium,psnr_water");
}

TEST_CASE("patience stops training after the last improvement") {
  Fixture f(Method::single_split);
  MethodConfig mc = MethodConfig::for_method(Method::single_split, f.geom);
  mc.solver = Fixture::solver();
  mc.net.channels = 2;
  mc.adam.lr = 5e-3;
  mc.max_epochs = 40;
  mc.eval_interval = 1;
  mc.patience = 3;
  const TrainResult r = train(mc, f.ctx, {f.sample}, {f.sample});
  REQUIRE_FALSE(r.diverged);
  const bool stopped_early = r.last.epoch < mc.max_epochs;
  if (stopped_early) CHECK(r.last.epoch - r.best_epoch == mc.patience);
  for (const auto& rec : r.trace) {
    if (rec.epoch > r.best_epoch) CHECK(rec.stop_metric <= r.trace[std::size_t(r.best_epoch)].stop_metric);
    if (rec.epoch < r.last.epoch && rec.epoch >= r.best_epoch + mc.patience) FAIL("ran past patience");
  }
  CHECK(r.best.epoch == r.best_epoch);
}
