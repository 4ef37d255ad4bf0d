#include "splitct/spectral.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace splitct {

SpectralModel SpectralModel::from_tables(Eigen::MatrixXd spectra, Eigen::MatrixXd attenuation) {
  require(spectra.rows() >= 1 && spectra.cols() >= 1, "SpectralModel: empty spectra");
  require(attenuation.rows() == spectra.cols(),
          "SpectralModel: spectra columns must match attenuation rows (E)");
  require(attenuation.cols() >= 1, "SpectralModel: need at least one material");
  require(spectra.rows() >= attenuation.cols(), "SpectralModel: need B >= M");
  require((spectra.array() >= 0.0).all(), "SpectralModel: spectra must be nonnegative");
  require(spectra.allFinite() && attenuation.allFinite(), "SpectralModel: non-finite table");

  SpectralModel model;
  model.spectra_ = std::move(spectra);
  model.attenuation_ = std::move(attenuation);
  model.attenuation_t_ = model.attenuation_.transpose();
  model.mixing_ = model.spectra_ * model.attenuation_;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(model.mixing_, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff = 1e-10 * sv(0);
  if (sv(sv.size() - 1) <= cutoff) {
    throw std::runtime_error("SpectralModel: U = S·Mmat is rank deficient");
  }
  Eigen::VectorXd inv = sv.cwiseInverse();
  model.mixing_pinv_ = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  model.condition_ = sv(0) / sv(sv.size() - 1);
  return model;
}

std::vector<double> energy_nodes(int n_energies) {
  std::vector<double> e(n_energies);
  for (int i = 0; i < n_energies; ++i) e[i] = 150.0 * (i + 1) / n_energies;
  return e;
}

namespace {

constexpr double kPixelLengthCm = 0.075;

std::size_t nearest_node(const std::vector<double>& nodes, double energy) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    if (std::abs(nodes[i] - energy) < std::abs(nodes[best] - energy)) best = i;
  }
  return best;
}

// Mass attenuation (cm²/g) as constant + photoelectric-like e⁻³ term, with a
// multiplicative jump of the e⁻³ term from the K-edge node on.
std::vector<double> attenuation_curve(const std::vector<double>& nodes, double constant,
                                      double photo, double edge_kev, double jump) {
  const std::size_t edge = edge_kev > 0.0 ? nearest_node(nodes, edge_kev) : nodes.size();
  std::vector<double> mu(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double ratio = 30.0 / nodes[i];
    const double pe = photo * ratio * ratio * ratio * (i >= edge ? jump : 1.0);
    mu[i] = (constant + pe) * kPixelLengthCm;
  }
  return mu;
}

double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

}  // namespace

SpectralModel build_default_model(int n_energies, int n_bins, int n_materials) {
  require(n_materials >= 1 && n_materials <= 3, "build_default_model: M must be 1, 2 or 3");
  require(n_bins >= n_materials, "build_default_model: need B >= M");
  require(n_energies >= n_bins, "build_default_model: need E >= B");

  const auto nodes = energy_nodes(n_energies);

  Eigen::MatrixXd attenuation(n_energies, n_materials);
  const std::vector<double> curves[3] = {
      attenuation_curve(nodes, 0.148, 0.227, 0.0, 1.0),   // water
      attenuation_curve(nodes, 0.2, 8.5, 33.2, 5.2),      // iodine
      attenuation_curve(nodes, 0.2, 35.0, 50.2, 3.5),     // gadolinium
  };
  for (int m = 0; m < n_materials; ++m) {
    for (int i = 0; i < n_energies; ++i) attenuation(i, m) = curves[m][i];
  }

  // Bin thresholds straddle the two K-edges for the standard five-bin layout.
  std::vector<double> thresholds;
  if (n_bins == 5) {
    thresholds = {20.0, 33.0, 50.0, 65.0, 85.0, 150.0};
  } else {
    for (int b = 0; b <= n_bins; ++b) thresholds.push_back(20.0 + 130.0 * b / n_bins);
  }

  Eigen::MatrixXd spectra(n_bins, n_energies);
  for (int i = 0; i < n_energies; ++i) {
    const double e = nodes[i];
    const double ratio = 30.0 / e;
    // Photon-number spectrum of a 150 kVp source behind filtration.
    const double source = std::max(0.0, (150.0 - e) / e) * std::exp(-0.4 * ratio * ratio * ratio);
    for (int b = 0; b < n_bins; ++b) {
      const double window =
          logistic((e - thresholds[b]) / 2.0) * logistic((thresholds[b + 1] - e) / 2.0);
      spectra(b, i) = source * window;
    }
  }
  for (int b = 0; b < n_bins; ++b) {
    const double sum = spectra.row(b).sum();
    require(sum > 0.0, "build_default_model: empty energy bin");
    spectra.row(b) /= sum;
  }
  return SpectralModel::from_tables(std::move(spectra), std::move(attenuation));
}

void phi(const SpectralModel& model, std::span<const double> z, std::span<double> out,
         bool* clamped) {
  const int m_count = model.n_materials();
  const int b_count = model.n_bins();
  const int e_count = model.n_energies();
  require(int(z.size()) == m_count && int(out.size()) == b_count, "phi: size mismatch");
  const double* mu = model.attenuation_t_.data();  // column-major M×E: mu[i*M + m]
  const double* s = model.spectra_.data();         // column-major B×E: s[i*B + b]
  std::fill(out.begin(), out.end(), 0.0);
  bool hit = false;
  for (int i = 0; i < e_count; ++i) {
    double arg = 0.0;
    for (int m = 0; m < m_count; ++m) arg -= mu[i * m_count + m] * z[m];
    if (arg > kExponentClamp) {
      arg = kExponentClamp;
      hit = true;
    }
    const double e = std::exp(arg);
    for (int b = 0; b < b_count; ++b) out[b] += s[i * b_count + b] * e;
  }
  if (clamped) *clamped = hit;
}

Eigen::MatrixXd phi_jacobian(const SpectralModel& model, std::span<const double> z) {
  const int m_count = model.n_materials();
  const int b_count = model.n_bins();
  require(int(z.size()) == m_count, "phi_jacobian: size mismatch");
  const double* mu = model.attenuation_t_.data();
  const double* s = model.spectra_.data();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(b_count, m_count);
  for (int i = 0; i < model.n_energies(); ++i) {
    double arg = 0.0;
    for (int m = 0; m < m_count; ++m) arg -= mu[i * m_count + m] * z[m];
    if (arg > kExponentClamp) continue;
    const double e = std::exp(arg);
    for (int m = 0; m < m_count; ++m) {
      const double factor = mu[i * m_count + m] * e;
      for (int b = 0; b < b_count; ++b) jac(b, m) -= s[i * b_count + b] * factor;
    }
  }
  return jac;
}

SpectralSinogram apply_phi(const SpectralModel& model, const LineIntegrals& z, PhiStats* stats) {
  require(z.channels == model.n_materials(), "apply_phi: material count mismatch");
  SpectralSinogram out(z.n_angles, z.n_dets, model.n_bins());
  std::size_t clamped_rays = 0;
  for (std::size_t r = 0; r < z.rays(); ++r) {
    bool clamped = false;
    phi(model, z.ray(r), out.ray(r), &clamped);
    clamped_rays += clamped;
  }
  if (stats) stats->clamped_rays += clamped_rays;
  return out;
}

SpectralSinogram forward(const SpectralModel& model, const RadonOperator& op,
                         const MaterialImage& x, PhiStats* stats) {
  return apply_phi(model, op.project_stack(x), stats);
}

SpectralSinogram forward(const SpectralModel& model, const Geometry& geom,
                         const MaterialImage& x) {
  return forward(model, RadonOperator(geom), x);
}

SpectralSinogram log_forward_residual(const SpectralModel& model, const RadonOperator& op,
                                      const MaterialImage& x, const SpectralSinogram& y,
                                      double floor) {
  require(all_finite(y.data), "log_forward_residual: non-finite measurement");
  SpectralSinogram res = forward(model, op, x);
  require(res.same_shape(y), "log_forward_residual: measurement shape mismatch");
  for (std::size_t k = 0; k < res.data.size(); ++k) {
    res.data[k] = std::log(res.data[k]) - std::log(std::max(y.data[k], floor));
  }
  return res;
}

namespace {

void save_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::vector<double> rowmajor(std::size_t(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) rowmajor[std::size_t(r * m.cols() + c)] = m(r, c);
  }
  const std::uint32_t dims[] = {std::uint32_t(m.rows()), std::uint32_t(m.cols())};
  write_tensor(path, dims, rowmajor);
}

Eigen::MatrixXd load_matrix(const std::filesystem::path& path) {
  auto t = read_tensor(path);
  if (t.dims.size() != 2) throw FormatError("expected a matrix: " + path.string());
  Eigen::MatrixXd m(t.dims[0], t.dims[1]);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = t.values[std::size_t(r * m.cols() + c)];
  }
  return m;
}

}  // namespace

void save_model(const std::filesystem::path& dir, const SpectralModel& model) {
  std::filesystem::create_directories(dir);
  save_matrix(dir / "S.splt", model.spectra());
  save_matrix(dir / "Mmat.splt", model.attenuation());
  save_matrix(dir / "U.splt", model.mixing());
  save_matrix(dir / "U_pinv.splt", model.mixing_pinv());
  std::ofstream meta(dir / "model.txt");
  meta << "energies = " << model.n_energies() << "\n"
       << "bins = " << model.n_bins() << "\n"
       << "materials = " << model.n_materials() << "\n";
  if (!meta) throw IoError("cannot write " + (dir / "model.txt").string());
}

SpectralModel load_model(const std::filesystem::path& dir) {
  Eigen::MatrixXd s = load_matrix(dir / "S.splt");
  // Float storage perturbs the row sums; restore the normalization.
  for (Eigen::Index b = 0; b < s.rows(); ++b) s.row(b) /= s.row(b).sum();
  return SpectralModel::from_tables(std::move(s), load_matrix(dir / "Mmat.splt"));
}

}  // namespace splitct
