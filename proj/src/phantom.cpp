#include "splitct/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace splitct {

namespace {

struct Ellipse {
  double a, b, x0, y0, phi, value;

  bool contains(double x, double y) const {
    const double dx = x - x0;
    const double dy = y - y0;
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    const double u = (dx * c + dy * s) / a;
    const double v = (-dx * s + dy * c) / b;
    return u * u + v * v <= 1.0;
  }
};

constexpr double kDeg = std::numbers::pi / 180.0;

// Modified (high-contrast) Shepp–Logan layout.
const std::array<Ellipse, 10> kSheppLogan = {{
    {0.69, 0.92, 0.0, 0.0, 0.0, 1.0},
    {0.6624, 0.874, 0.0, -0.0184, 0.0, -0.8},
    {0.11, 0.31, 0.22, 0.0, -18.0 * kDeg, -0.2},
    {0.16, 0.41, -0.22, 0.0, 18.0 * kDeg, -0.2},
    {0.21, 0.25, 0.0, 0.35, 0.0, 0.1},
    {0.046, 0.046, 0.0, 0.1, 0.0, 0.1},
    {0.046, 0.046, 0.0, -0.1, 0.0, 0.1},
    {0.046, 0.023, -0.08, -0.605, 0.0, 0.1},
    {0.023, 0.023, 0.0, -0.606, 0.0, 0.1},
    {0.023, 0.046, 0.06, -0.605, 0.0, 0.1},
}};

Ellipse jitter(const Ellipse& e, const std::array<double, 5>& u) {
  Ellipse out = e;
  out.a *= 1.0 + u[0];
  out.b *= 1.0 + u[1];
  const double minor = std::min(e.a, e.b);
  out.x0 += u[2] * minor;
  out.y0 += u[3] * minor;
  out.phi += u[4] * std::numbers::pi / 4.0;
  return out;
}

struct ContrastRegion {
  Ellipse shape;
  double level;  // fraction of contrast_scale
};

}  // namespace

void PhantomConfig::validate() const {
  require(size >= 2 && size % 2 == 0, "PhantomConfig: size must be even and >= 2");
  require(n_materials == 3, "PhantomConfig: phantoms have exactly 3 materials");
  require(contrast_scale > 0.0 && contrast_scale <= 0.2,
          "PhantomConfig: contrast_scale must lie in (0, 0.2]");
  require(deform_amplitude >= 0.0 && deform_amplitude <= 0.3,
          "PhantomConfig: deform_amplitude must lie in [0, 0.3]");
}

MaterialImage generate_phantom(const PhantomConfig& cfg) {
  cfg.validate();
  RngStream rng(cfg.seed, "phantom");
  const double amp = cfg.deform_amplitude;
  auto draw = [&] {
    std::array<double, 5> u{};
    for (double& v : u) v = rng.uniform(-amp, amp);
    return u;
  };

  std::array<Ellipse, 10> ellipses{};
  const auto skull = draw();
  ellipses[0] = jitter(kSheppLogan[0], skull);
  ellipses[1] = jitter(kSheppLogan[1], skull);
  for (std::size_t k = 2; k < kSheppLogan.size(); ++k) ellipses[k] = jitter(kSheppLogan[k], draw());

  Ellipse enlarged = ellipses[6];
  enlarged.a *= 2.5;
  enlarged.b *= 2.5;
  const std::array<ContrastRegion, 2> iodine = {{{ellipses[2], 1.0}, {ellipses[3], 0.7}}};
  const std::array<ContrastRegion, 2> gadolinium = {{{ellipses[4], 1.0}, {enlarged, 0.7}}};

  auto contrast_at = [](const std::array<ContrastRegion, 2>& regions, double x, double y) {
    double v = 0.0;
    for (const auto& r : regions) {
      if (r.shape.contains(x, y)) v = std::max(v, r.level);
    }
    return v;
  };

  const int n = cfg.size;
  MaterialImage img(3, n, n);
  constexpr double offsets[2] = {-0.25, 0.25};
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      double water = 0.0, iod = 0.0, gad = 0.0;
      for (double oy : offsets) {
        for (double ox : offsets) {
          const double x = 2.0 * (c + 0.5 + ox) / n - 1.0;
          const double y = 1.0 - 2.0 * (r + 0.5 + oy) / n;
          double w = 0.0;
          for (const auto& e : ellipses) {
            if (e.contains(x, y)) w += e.value;
          }
          water += std::clamp(w, 0.0, 1.1);
          iod += contrast_at(iodine, x, y);
          gad += contrast_at(gadolinium, x, y);
        }
      }
      img.at(kWater, r, c) = 0.25 * water;
      img.at(kIodine, r, c) = 0.25 * iod * cfg.contrast_scale;
      img.at(kGadolinium, r, c) = 0.25 * gad * cfg.contrast_scale;
    }
  }
  return img;
}

std::vector<DatasetEntry> DatasetManifest::split(const std::string& name) const {
  std::vector<DatasetEntry> out;
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
               [&](const DatasetEntry& e) { return e.split == name; });
  return out;
}

DatasetManifest generate_dataset(const PhantomConfig& cfg, int n_train, int n_val, int n_test,
                                 const std::filesystem::path& out_dir, bool overwrite) {
  namespace fs = std::filesystem;
  cfg.validate();
  require(n_train >= 1 && n_val >= 1 && n_test >= 1, "generate_dataset: counts must be >= 1");
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !overwrite) {
    throw IoError("refusing to write into non-empty directory " + out_dir.string());
  }
  fs::create_directories(out_dir);

  DatasetManifest manifest;
  RngStream seeds(cfg.seed, "dataset");
  std::set<std::uint64_t> used;
  int index = 0;
  const std::pair<const char*, int> splits[] = {{"train", n_train}, {"val", n_val}, {"test", n_test}};
  for (const auto& [name, count] : splits) {
    for (int k = 0; k < count; ++k, ++index) {
      PhantomConfig pc = cfg;
      pc.seed = seeds.at(std::uint64_t(index));
      if (!used.insert(pc.seed).second) throw std::logic_error("generate_dataset: seed collision");
      char file[32];
      std::snprintf(file, sizeof file, "phantom_%04d.splt", index);
      write_image(out_dir / file, generate_phantom(pc));
      manifest.entries.push_back({name, file, pc.seed});
    }
  }

  std::ofstream out(out_dir / "manifest.txt", std::ios::trunc);
  for (const auto& e : manifest.entries) out << e.split << ' ' << e.file << '\n';
  if (!out) throw IoError("cannot write manifest in " + out_dir.string());
  return manifest;
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw IoError("cannot open " + (dir / "manifest.txt").string());
  DatasetManifest manifest;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    DatasetEntry e;
    if (!(ss >> e.split >> e.file) || (e.split != "train" && e.split != "val" && e.split != "test")) {
      throw FormatError("manifest line " + std::to_string(lineno) + " is malformed");
    }
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

}  // namespace splitct
