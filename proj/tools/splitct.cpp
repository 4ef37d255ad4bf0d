#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "splitct/config.hpp"
#include "splitct/metrics.hpp"
#include "splitct/render.hpp"
#include "splitct/training.hpp"
#include "splitct/verify.hpp"

namespace fs = std::filesystem;
using namespace splitct;

namespace {

// Outputs created by the running subcommand; removed again unless committed.
class OutputGuard {
 public:
  OutputGuard() = default;
  OutputGuard(const OutputGuard&) = delete;
  OutputGuard& operator=(const OutputGuard&) = delete;
  ~OutputGuard() {
    if (committed_) return;
    for (auto it = paths_.rbegin(); it != paths_.rend(); ++it) {
      std::error_code ec;
      fs::remove_all(*it, ec);
    }
  }

  void file(const fs::path& p) { paths_.push_back(p); }
  // Directories are only removed when this command created them.
  void directory(const fs::path& p) {
    if (!fs::exists(p)) paths_.push_back(p);
  }
  void commit() { committed_ = true; }

 private:
  std::vector<fs::path> paths_;
  bool committed_ = false;
};

Settings load_settings(const fs::path& path) { return Settings::from_config(Config::load(path)); }

fs::path config_echo_path(const fs::path& out) {
  return out.parent_path() / (out.filename().string() + ".effective_config.txt");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

void echo_config(OutputGuard& guard, const fs::path& path, const Settings& s) {
  guard.file(path);
  write_text(path, s.dump());
}

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw IoError("no such file: " + p.string());
}

void check_image_shape(const MaterialImage& x, const Settings& s, const std::string& what) {
  if (x.materials != s.materials || x.height != s.size || x.width != s.size) {
    throw ContractError(what + " has shape " + std::to_string(x.materials) + "x" +
                        std::to_string(x.height) + "x" + std::to_string(x.width) +
                        " but the config expects " + std::to_string(s.materials) + "x" +
                        std::to_string(s.size) + "x" + std::to_string(s.size));
  }
}

void check_sino_shape(const SpectralSinogram& y, const Geometry& g, int bins) {
  if (y.n_angles != g.n_angles() || y.n_dets != g.n_dets || y.channels != bins) {
    throw ContractError("sinogram has shape " + std::to_string(y.n_angles) + "x" +
                        std::to_string(y.n_dets) + "x" + std::to_string(y.channels) +
                        " but the geometry expects " + std::to_string(g.n_angles()) + "x" +
                        std::to_string(g.n_dets) + "x" + std::to_string(bins));
  }
}

// ---------------------------------------------------------------------------

struct Args {
  std::string config, out, in, phantom, sino, trace, method, data, ckpt, recon, truth, cache;
  std::string layout = "chw";
  bool overwrite = false;
};

int cmd_dataset_gen(const Args& a) {
  const Settings s = load_settings(a.config);
  OutputGuard guard;
  guard.directory(a.out);
  const auto manifest =
      generate_dataset(s.phantom(), s.n_train, s.n_val, s.n_test, a.out, a.overwrite);
  echo_config(guard, fs::path(a.out) / "effective_config.txt", s);
  std::cerr << "wrote " << manifest.entries.size() << " phantoms to " << a.out << "\n";
  guard.commit();
  return 0;
}

int cmd_forward(const Args& a) {
  const Settings s = load_settings(a.config);
  require_file(a.phantom);
  const MaterialImage x = read_material_image(a.phantom);
  check_image_shape(x, s, a.phantom);
  OutputGuard guard;
  guard.file(a.out);
  write_sinogram(a.out, forward(s.spectral_model(), s.geometry(), x));
  echo_config(guard, config_echo_path(a.out), s);
  guard.commit();
  return 0;
}

int cmd_noise(const Args& a) {
  const Settings s = load_settings(a.config);
  require_file(a.in);
  const SpectralSinogram y = read_sinogram(a.in);
  NoiseConfig nc = s.noise();
  nc.seed = RngStream::mix(nc.seed ^ fnv1a(std::span<const std::uint8_t>(read_file_bytes(a.in))));
  OutputGuard guard;
  guard.file(a.out);
  write_sinogram(a.out, apply_noise(nc, y));
  echo_config(guard, config_echo_path(a.out), s);
  guard.commit();
  return 0;
}

int cmd_reconstruct(const Args& a) {
  const Settings s = load_settings(a.config);
  require_file(a.sino);
  const SpectralSinogram y = read_sinogram(a.sino);
  const Geometry geom = s.geometry();
  check_sino_shape(y, geom, s.bins);
  SolverConfig cfg = s.solver();
  cfg.record_residuals = !a.trace.empty();
  OutputGuard guard;
  guard.file(a.out);
  const SolveResult res = cp_fast(s.spectral_model(), RadonOperator(geom), y, cfg);
  write_image(a.out, res.image);
  if (!a.trace.empty()) {
    guard.file(a.trace);
    write_residual_trace(a.trace, res.residuals);
  }
  echo_config(guard, config_echo_path(a.out), s);
  guard.commit();
  return 0;
}

int cmd_train(const Args& a) {
  const Settings s = load_settings(a.config);
  const Method method = parse_method(a.method);
  const MethodConfig mc = s.method_config(method);
  if (!fs::is_regular_file(fs::path(a.data) / "manifest.txt")) {
    throw IoError("no dataset manifest in " + a.data);
  }
  OutputGuard guard;
  guard.directory(a.out);
  fs::create_directories(a.out);
  const SplitContext ctx(s.spectral_model(), s.geometry(), mc.scheme, mc.solver);
  const NoiseConfig noise = s.noise();
  const auto train_set = load_split(ctx, noise, a.data, "train");
  const auto val_set = load_split(ctx, noise, a.data, "val");
  if (train_set.empty()) throw ContractError("dataset has no training samples");
  const PairCache cache(a.cache.empty() ? fs::path(a.out) / "pair_cache" : fs::path(a.cache));

  TrainHooks hooks;
  hooks.on_eval = [](const TrainRecord& r) {
    std::fprintf(stderr, "epoch %6d  loss %.6g  stop %.4f dB\n", r.epoch, r.loss, r.stop_metric);
  };
  TrainResult res = train(mc, ctx, train_set, val_set, &cache, hooks);
  res.best.meta["method"] = to_string(method);
  save_checkpoint(a.out, res.best);
  write_trace(fs::path(a.out) / "trace.csv", res.trace);
  write_text(fs::path(a.out) / "effective_config.txt", s.dump());
  guard.commit();
  if (res.diverged) {
    std::cerr << "error: " << res.divergence_message << "; kept checkpoint from epoch "
              << res.best_epoch << "\n";
    return 3;
  }
  std::cerr << "best epoch " << res.best_epoch << ", checkpoint in " << a.out << "\n";
  return 0;
}

int cmd_infer(const Args& a) {
  const fs::path cfg_path = fs::path(a.ckpt) / "effective_config.txt";
  require_file(cfg_path);
  require_file(a.sino);
  const Settings s = load_settings(cfg_path);
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const auto method_it = ckpt.meta.find("method");
  if (method_it == ckpt.meta.end()) throw FormatError("checkpoint lacks its training method");
  const Method method = parse_method(method_it->second);
  if (ckpt.params.cfg.channels != s.net_channels) {
    throw ContractError("checkpoint network width does not match its effective config");
  }
  const Geometry geom = s.geometry();
  const SpectralSinogram y = read_sinogram(a.sino);
  check_sino_shape(y, geom, s.bins);
  const auto scheme = MethodConfig::for_method(method, geom).scheme;
  const SplitContext ctx(s.spectral_model(), geom, scheme, s.solver());
  OutputGuard guard;
  guard.file(a.out);
  write_image(a.out, infer(ctx, ckpt.params, y));
  guard.commit();
  return 0;
}

int cmd_eval(const Args& a) {
  require_file(a.recon);
  require_file(a.truth);
  const auto scores = evaluate(read_material_image(a.recon), read_material_image(a.truth));
  OutputGuard guard;
  guard.file(a.out);
  write_scores_csv(a.out, scores);
  for (const auto& sc : scores) {
    std::printf("%-12s psnr %7.3f dB  ssim %.4f\n", sc.material.c_str(), sc.psnr_db, sc.ssim);
  }
  guard.commit();
  return 0;
}

int report(OutputGuard& guard, const std::string& out, const std::string& title,
           const MonteCarloReport& r) {
  guard.file(out);
  write_report_csv(out, r);
  const std::string text = format_report(title, r);
  const fs::path txt = fs::path(out).replace_extension(".txt");
  guard.file(txt);
  write_text(txt, text);
  std::cout << text;
  guard.commit();
  return r.pass ? 0 : 1;
}

void require_gaussian(const Settings& s, const std::string& test) {
  if (s.noise_kind != NoiseKind::gaussian) {
    throw ContractError("verify " + test + " needs noise.kind = gaussian (mean-zero independent "
                        "noise with known variance noise.sigma_g)");
  }
}

int cmd_verify_theorem1(const Args& a) {
  const Settings s = load_settings(a.config);
  require_gaussian(s, "theorem1");
  const Geometry geom = s.geometry();
  const SplitContext ctx(s.spectral_model(), geom, make_double_split(geom), s.solver());
  PhantomConfig pc = s.phantom();
  const MaterialImage x = generate_phantom(pc);
  const std::uint64_t seed = s.stream_seed("verify");

  ImageMap f;
  if (s.verify_map == "net") {
    const ModelParams p = frozen_network(s.net(), seed);
    f = [p](const MaterialImage& z) { return net_apply(p, z); };
  } else if (s.verify_map == "constant") {
    const MaterialImage c(x.materials, x.height, x.width, 0.0);
    f = [c](const MaterialImage&) { return c; };
  } else {
    f = [](const MaterialImage& z) { return z; };
  }
  const SpectralSplitProblem problem(ctx);
  OutputGuard guard;
  const auto r = verify_theorem1(problem, x, f, s.sigma_g, s.verify_draws, seed);
  return report(guard, a.out, "Theorem 1 gap test, f = " + s.verify_map, r);
}

int cmd_verify_noise2self(const Args& a) {
  const Settings s = load_settings(a.config);
  require_gaussian(s, "noise2self");
  PhantomConfig pc = s.phantom();
  const Image x = generate_phantom(pc).channel_image(kWater);
  const std::uint64_t seed = s.stream_seed("verify");
  DenoiseMap g;
  if (s.verify_map == "identity") {
    g = [](const Image& z) { return z; };
  } else if (s.verify_map == "net") {
    NetConfig nc = s.net();
    const ModelParams p = frozen_network(nc, seed);
    g = make_diagonal_free([p](const Image& z) { return net_forward(p, z); }, x.height, x.width);
  } else if (s.verify_map == "constant") {
    g = make_diagonal_free([](const Image& z) { return Image(z.height, z.width, 0.5); }, x.height,
                           x.width);
  } else {
    g = make_diagonal_free([](const Image& z) { return z; }, x.height, x.width);
  }
  Noise2SelfOptions opt;
  opt.require_diagonal_free = s.verify_probe;
  OutputGuard guard;
  const auto r = verify_prop_noise2self(g, x, s.sigma_g, s.verify_draws, seed, opt);
  return report(guard, a.out, "Noise2Self gap test, g = " + s.verify_map, r);
}

int cmd_render(const Args& a) {
  require_file(a.in);
  const Tensor t = read_tensor(a.in);
  OutputGuard guard;
  for (const auto& f : render_tensor(t, a.out, parse_layout(a.layout))) {
    guard.file(f.path);
    write_file_bytes(f.path, f.bytes);
    std::cerr << "wrote " << f.path.string() << "\n";
  }
  guard.commit();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"splitct: self-supervised multi-partition reconstruction for multispectral CT"};
  app.require_subcommand(1);
  Args a;
  int (*action)(const Args&) = nullptr;

  auto config_opt = [&](CLI::App* c) {
    c->add_option("--config", a.config, "flat section.key = value config")->required()
        ->check(CLI::ExistingFile);
  };

  auto* dataset = app.add_subcommand("dataset", "phantom datasets");
  dataset->require_subcommand(1);
  auto* gen = dataset->add_subcommand("gen", "generate a phantom dataset and manifest");
  config_opt(gen);
  gen->add_option("--out", a.out, "output directory")->required();
  gen->add_flag("--overwrite", a.overwrite, "allow a non-empty output directory");
  gen->callback([&] { action = cmd_dataset_gen; });

  auto* fwd = app.add_subcommand("forward", "clean spectral sinogram of a phantom");
  config_opt(fwd);
  fwd->add_option("--phantom", a.phantom, "material image tensor")->required();
  fwd->add_option("--out", a.out, "output sinogram tensor")->required();
  fwd->callback([&] { action = cmd_forward; });

  auto* noise = app.add_subcommand("noise", "add measurement noise to a sinogram");
  config_opt(noise);
  noise->add_option("--in", a.in, "clean sinogram tensor")->required();
  noise->add_option("--out", a.out, "noisy sinogram tensor")->required();
  noise->callback([&] { action = cmd_noise; });

  auto* recon = app.add_subcommand("reconstruct", "classical reconstruction");
  recon->require_subcommand(1);
  auto* cpfast = recon->add_subcommand("cpfast", "one-step preconditioned iteration");
  config_opt(cpfast);
  cpfast->add_option("--sino", a.sino, "sinogram tensor")->required();
  cpfast->add_option("--out", a.out, "output material image tensor")->required();
  cpfast->add_option("--trace", a.trace, "residual trace CSV");
  cpfast->callback([&] { action = cmd_reconstruct; });

  auto* tr = app.add_subcommand("train", "self-supervised training");
  tr->add_option("--method", a.method, "xspace | single-split | double-split")
      ->required()
      ->check(CLI::IsMember({"xspace", "single-split", "double-split"}));
  config_opt(tr);
  tr->add_option("--data", a.data, "dataset directory")->required();
  tr->add_option("--out", a.out, "checkpoint directory")->required();
  tr->add_option("--cache", a.cache, "partial reconstruction cache (default <out>/pair_cache)");
  tr->callback([&] { action = cmd_train; });

  auto* inf = app.add_subcommand("infer", "learned reconstruction from a checkpoint");
  inf->add_option("--ckpt", a.ckpt, "checkpoint directory")->required();
  inf->add_option("--sino", a.sino, "sinogram tensor")->required();
  inf->add_option("--out", a.out, "output material image tensor")->required();
  inf->callback([&] { action = cmd_infer; });

  auto* ev = app.add_subcommand("eval", "per-material PSNR and SSIM");
  ev->add_option("--recon", a.recon, "reconstruction tensor")->required();
  ev->add_option("--truth", a.truth, "ground-truth tensor")->required();
  ev->add_option("--out", a.out, "output CSV")->required();
  ev->callback([&] { action = cmd_eval; });

  auto* ver = app.add_subcommand("verify", "Monte Carlo gap tests");
  ver->require_subcommand(1);
  auto* thm = ver->add_subcommand("theorem1", "multi-partition measurement-loss identity");
  config_opt(thm);
  thm->add_option("--out", a.out, "report CSV")->required();
  thm->callback([&] { action = cmd_verify_theorem1; });
  auto* n2s = ver->add_subcommand("noise2self", "denoising identity for diagonal-free maps");
  config_opt(n2s);
  n2s->add_option("--out", a.out, "report CSV")->required();
  n2s->callback([&] { action = cmd_verify_noise2self; });

  auto* ren = app.add_subcommand("render", "16-bit PGM rendering of a tensor");
  ren->add_option("--in", a.in, "input tensor")->required();
  ren->add_option("--out", a.out, "output PGM (per-channel files for 3-d tensors)")->required();
  ren->add_option("--layout", a.layout, "channel layout of 3-d tensors")
      ->check(CLI::IsMember({"chw", "hwc"}));
  ren->callback([&] { action = cmd_render; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  if (!action) return 2;
  try {
    return action(a);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
