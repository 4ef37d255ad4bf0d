#include "splitct/verify.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace splitct {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "squared_distance: length mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

MonteCarloReport summarize(const std::vector<double>& lhs, const std::vector<double>& sup,
                           double noise) {
  MonteCarloReport r;
  r.draws = int(lhs.size());
  r.noise_analytic = noise;
  if (lhs.empty()) return r;
  const double n = double(lhs.size());
  std::vector<double> gaps(lhs.size());
  for (std::size_t k = 0; k < lhs.size(); ++k) {
    r.lhs += lhs[k];
    r.sup += sup[k];
    gaps[k] = lhs[k] - sup[k] - noise;
    r.gap += gaps[k];
  }
  r.lhs /= n;
  r.sup /= n;
  r.gap /= n;
  if (lhs.size() > 1) {
    double var = 0.0;
    for (double g : gaps) var += (g - r.gap) * (g - r.gap);
    var /= n - 1.0;
    r.se = std::sqrt(var / n);
  }
  r.pass = std::abs(r.gap) <= 3.0 * r.se;
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------

int SpectralSplitProblem::subsets(int i) const {
  return int(ctx_.scheme().partitions.at(std::size_t(i)).size());
}

const Subset& SpectralSplitProblem::subset(int i, int j) const {
  return ctx_.scheme().partitions.at(std::size_t(i)).at(std::size_t(j));
}

SpectralSinogram SpectralSplitProblem::as_sinogram(const std::vector<double>& y) const {
  SpectralSinogram s(ctx_.geometry().n_angles(), ctx_.geometry().n_dets, ctx_.model().n_bins());
  require(y.size() == s.data.size(), "SpectralSplitProblem: measurement size mismatch");
  s.data = y;
  return s;
}

std::vector<double> SpectralSplitProblem::forward(const MaterialImage& x) const {
  return splitct::forward(ctx_.model(), ctx_.full_operator(), x).data;
}

std::vector<double> SpectralSplitProblem::restrict(const std::vector<double>& y, int i,
                                                   int j) const {
  return restrict_data(as_sinogram(y), subset(i, j)).data;
}

std::vector<double> SpectralSplitProblem::restricted_forward(const MaterialImage& x, int i,
                                                             int j) const {
  return splitct::forward(ctx_.model(), ctx_.subset_op(subset(i, j).desc), x).data;
}

MaterialImage SpectralSplitProblem::complement_reconstruction(const std::vector<double>& y, int i,
                                                              int j) const {
  const Subset comp = resolve_subset(ctx_.geometry(), subset(i, j).desc.complement());
  return ctx_.reconstructor().reconstruct(restrict_data(as_sinogram(y), comp), comp);
}

// ---------------------------------------------------------------------------

LinearSplitProblem::LinearSplitProblem(Geometry geom, PartitionScheme scheme, int materials,
                                       int iters)
    : geom_(std::move(geom)),
      scheme_(std::move(scheme)),
      materials_(materials),
      iters_(iters),
      full_(geom_) {
  scheme_.validate();
  require(materials_ >= 1 && iters_ >= 1, "LinearSplitProblem: bad materials/iters");
  for (const auto& part : scheme_.partitions) {
    for (const auto& s : part) {
      for (const auto& desc : {s.desc, s.desc.complement()}) {
        if (ops_.count(desc)) continue;
        auto op = subset_operator(geom_, resolve_subset(geom_, desc));
        norms_[desc] = op.normal_operator_norm();
        ops_.emplace(desc, std::move(op));
      }
    }
  }
}

int LinearSplitProblem::subsets(int i) const {
  return int(scheme_.partitions.at(std::size_t(i)).size());
}

const Subset& LinearSplitProblem::subset(int i, int j) const {
  return scheme_.partitions.at(std::size_t(i)).at(std::size_t(j));
}

std::vector<double> LinearSplitProblem::forward(const MaterialImage& x) const {
  return full_.project_stack(x).data;
}

std::vector<double> LinearSplitProblem::restrict(const std::vector<double>& y, int i,
                                                 int j) const {
  SpectralSinogram s(geom_.n_angles(), geom_.n_dets, materials_);
  require(y.size() == s.data.size(), "LinearSplitProblem: measurement size mismatch");
  s.data = y;
  return restrict_data(s, subset(i, j)).data;
}

std::vector<double> LinearSplitProblem::restricted_forward(const MaterialImage& x, int i,
                                                           int j) const {
  return ops_.at(subset(i, j).desc).project_stack(x).data;
}

MaterialImage LinearSplitProblem::complement_reconstruction(const std::vector<double>& y, int i,
                                                            int j) const {
  const SubsetDescriptor cdesc = subset(i, j).desc.complement();
  const Subset comp = resolve_subset(geom_, cdesc);
  SpectralSinogram s(geom_.n_angles(), geom_.n_dets, materials_);
  s.data = y;
  const SpectralSinogram packed = restrict_data(s, comp);
  const RadonOperator& op = ops_.at(cdesc);
  const double step = kDefaultRelativeStep / norms_.at(cdesc);
  MaterialImage x(materials_, geom_.size, geom_.size);
  LineIntegrals residual(packed.n_angles, packed.n_dets, materials_);
  for (int k = 0; k < iters_; ++k) {
    const LineIntegrals rx = op.project_stack(x);
    for (std::size_t q = 0; q < rx.data.size(); ++q) residual.data[q] = packed.data[q] - rx.data[q];
    const MaterialImage update = op.backproject_stack(residual);
    for (std::size_t q = 0; q < x.data.size(); ++q) x.data[q] += step * update.data[q];
  }
  return x;
}

// ---------------------------------------------------------------------------

ModelParams frozen_network(const NetConfig& cfg, std::uint64_t seed) {
  ModelParams p = init_params(cfg, seed);
  const auto last = net_layout(cfg).back();
  RngStream rng(seed, "frozen");
  const double bound = 0.1 * std::sqrt(6.0 / (9.0 * last.in));
  for (std::size_t k = 0; k < last.weight_count(); ++k) {
    p.values[last.weights + k] = rng.uniform(-bound, bound);
  }
  return p;
}

MonteCarloReport verify_theorem1(const SplitProblem& problem, const MaterialImage& x,
                                 const ImageMap& f, double sigma, int draws, std::uint64_t seed) {
  require(sigma >= 0.0 && draws >= 1, "verify_theorem1: need sigma >= 0 and draws >= 1");
  const std::vector<double> clean = problem.forward(x);
  const int k_parts = problem.partitions();
  std::vector<std::vector<std::vector<double>>> ax(static_cast<std::size_t>(k_parts));
  for (int i = 0; i < k_parts; ++i) {
    for (int j = 0; j < problem.subsets(i); ++j) {
      ax[std::size_t(i)].push_back(problem.restricted_forward(x, i, j));
    }
  }

  const RngStream root(seed, "theorem1");
  std::vector<double> lhs(static_cast<std::size_t>(draws)), sup(static_cast<std::size_t>(draws));
  for (int r = 0; r < draws; ++r) {
    RngStream rng = root.substream(std::uint64_t(r));
    std::vector<double> y = clean;
    if (sigma > 0.0) {
      for (double& v : y) v += sigma * rng.normal();
    }
    double l = 0.0, s = 0.0;
    for (int i = 0; i < k_parts; ++i) {
      for (int j = 0; j < problem.subsets(i); ++j) {
        const MaterialImage z = f(problem.complement_reconstruction(y, i, j));
        const std::vector<double> az = problem.restricted_forward(z, i, j);
        l += squared_distance(az, problem.restrict(y, i, j));
        s += squared_distance(az, ax[std::size_t(i)][std::size_t(j)]);
      }
    }
    lhs[std::size_t(r)] = l / k_parts;
    sup[std::size_t(r)] = s / k_parts;
  }
  return summarize(lhs, sup, double(clean.size()) * sigma * sigma);
}

// ---------------------------------------------------------------------------

std::vector<std::vector<std::uint8_t>> checkerboard_masks(int height, int width) {
  std::vector<std::vector<std::uint8_t>> masks(2, std::vector<std::uint8_t>(std::size_t(height) * width, 0));
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) masks[std::size_t((r + c) % 2)][std::size_t(r) * width + c] = 1;
  }
  return masks;
}

DenoiseMap make_diagonal_free(DenoiseMap f, int height, int width) {
  auto masks = checkerboard_masks(height, width);
  return [f = std::move(f), masks = std::move(masks), height, width](const Image& z) {
    require(z.height == height && z.width == width, "diagonal-free map: image shape mismatch");
    Image out(height, width);
    for (const auto& mask : masks) {
      Image h = z;
      for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
          const std::size_t q = std::size_t(r) * width + c;
          if (!mask[q]) continue;
          double sum = 0.0;
          int count = 0;
          const int nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
          for (const auto& p : nb) {
            if (p[0] < 0 || p[0] >= height || p[1] < 0 || p[1] >= width) continue;
            const std::size_t qn = std::size_t(p[0]) * width + p[1];
            if (mask[qn]) continue;
            sum += z.data[qn];
            ++count;
          }
          h.data[q] = count ? sum / count : 0.0;
        }
      }
      const Image fz = f(h);
      for (std::size_t q = 0; q < out.size(); ++q) {
        if (mask[q]) out.data[q] = fz.data[q];
      }
    }
    return out;
  };
}

std::optional<std::size_t> probe_diagonal_free(const DenoiseMap& g, const Image& z, int trials,
                                               std::uint64_t seed) {
  const auto masks = checkerboard_masks(z.height, z.width);
  const Image base = g(z);
  RngStream rng(seed, "probe");
  for (int t = 0; t < trials; ++t) {
    const auto& mask = masks[std::size_t(t) % masks.size()];
    Image perturbed = z;
    for (std::size_t q = 0; q < z.size(); ++q) {
      if (mask[q]) perturbed.data[q] += rng.normal();
    }
    const Image out = g(perturbed);
    for (std::size_t q = 0; q < z.size(); ++q) {
      if (mask[q] && out.data[q] != base.data[q]) return q;
    }
  }
  return std::nullopt;
}

MonteCarloReport verify_prop_noise2self(const DenoiseMap& g, const Image& x, double sigma,
                                        int draws, std::uint64_t seed, Noise2SelfOptions options) {
  require(sigma >= 0.0 && draws >= 1, "verify_prop_noise2self: need sigma >= 0 and draws >= 1");
  if (options.require_diagonal_free) {
    if (const auto bad = probe_diagonal_free(g, x, options.probe_trials, seed)) {
      throw ContractError("verify_prop_noise2self: map is not diagonal-free (output pixel " +
                          std::to_string(*bad) + " depends on its own partition subset)");
    }
  }
  const RngStream root(seed, "noise2self");
  std::vector<double> lhs(static_cast<std::size_t>(draws)), sup(static_cast<std::size_t>(draws));
  for (int r = 0; r < draws; ++r) {
    RngStream rng = root.substream(std::uint64_t(r));
    Image y = x;
    if (sigma > 0.0) {
      for (double& v : y.data) v += sigma * rng.normal();
    }
    const Image gy = g(y);
    lhs[std::size_t(r)] = squared_distance(gy.data, y.data);
    sup[std::size_t(r)] = squared_distance(gy.data, x.data);
  }
  return summarize(lhs, sup, double(x.size()) * sigma * sigma);
}

// ---------------------------------------------------------------------------

void write_report_csv(const std::filesystem::path& path, const MonteCarloReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "lhs,sup,noise_analytic,gap,se,pass\n" << std::setprecision(17) << report.lhs << ','
      << report.sup << ',' << report.noise_analytic << ',' << report.gap << ',' << report.se << ','
      << (report.pass ? 1 : 0) << '\n';
  if (!out) throw IoError("cannot write " + path.string());
}

std::string format_report(const std::string& title, const MonteCarloReport& report) {
  std::ostringstream s;
  s << std::setprecision(6) << title << " (" << report.draws << " draws)\n"
    << "  self-supervised loss   " << report.lhs << "\n"
    << "  supervised loss        " << report.sup << "\n"
    << "  analytic noise energy  " << report.noise_analytic << "\n"
    << "  gap                    " << report.gap << "  (SE " << report.se << ")\n"
    << "  |gap| <= 3 SE          " << (report.pass ? "yes" : "no") << "\n";
  return s.str();
}

}  // namespace splitct
