#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "helpers.hpp"
#include "splitct/radon.hpp"

using namespace splitct;

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("detector count covers the diagonal and is odd") {
  CHECK(default_detector_count(64) == 91);
  CHECK(default_detector_count(32) == 47);
  CHECK(default_detector_count(256) == 363);
  const Geometry g = Geometry::uniform(64, 16);
  CHECK(g.n_dets == 91);
  CHECK(g.n_angles() == 16);
  CHECK(g.angles[4] == doctest::Approx(std::numbers::pi / 4));
}

TEST_CASE("geometry validation") {
  Geometry g = Geometry::uniform(16, 4);
  g.n_dets = 10;
  CHECK_THROWS_AS(g.validate(), ContractError);
  g = Geometry::uniform(16, 4);
  g.angles[2] = g.angles[1];
  CHECK_THROWS_AS(g.validate(), ContractError);
  g.angles[2] = 4.0;
  CHECK_THROWS_AS(g.validate(), ContractError);
  const int idx[] = {2, 1};
  CHECK_THROWS_AS(restrict_geometry(Geometry::uniform(16, 4), idx), ContractError);
}

TEST_CASE("backprojection is the exact adjoint of projection") {
  const Geometry g = Geometry::uniform(64, 16);
  const RadonOperator op(g);
  std::mt19937_64 gen(5);
  std::normal_distribution<double> n01;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Image x(64, 64);
    for (double& v : x.data) v = n01(gen);
    Sinogram y(g.n_angles(), g.n_dets);
    for (double& v : y.data) v = n01(gen);
    const Sinogram rx = op.project(x);
    const Image rty = op.backproject(y);
    const double lhs = dot(rx.data, y.data);
    const double rhs = dot(x.data, rty.data);
    const double scale = std::sqrt(dot(rx.data, rx.data)) * std::sqrt(dot(y.data, y.data));
    worst = std::max(worst, std::abs(lhs - rhs) / scale);
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("a single pixel keeps unit mass at axis-aligned angles") {
  const Geometry g = Geometry::uniform(16, 2);  // 0 and 90 degrees
  const RadonOperator op(g);
  for (int r : {3, 7, 8, 12}) {
    for (int c : {0, 5, 9, 15}) {
      Image x(16, 16);
      x(r, c) = 1.0;
      const Sinogram s = op.project(x);
      for (int a = 0; a < 2; ++a) {
        double mass = 0.0;
        int hits = 0;
        for (int d = 0; d < g.n_dets; ++d) {
          mass += s(a, d);
          hits += s(a, d) != 0.0;
        }
        CAPTURE(r);
        CAPTURE(c);
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(hits <= 2);  // even grid: pixel centers fall midway between detectors
      }
    }
  }
}

TEST_CASE("projection of a Gaussian blob matches its analytic line integrals") {
  // ∫ exp(−|p − p0|²/2σ²) along the line p·n = s equals √(2π)σ·exp(−(s − p0·n)²/2σ²).
  const int n = 64;
  const double sigma = 4.0, x0 = 5.0, y0 = -3.0;
  const Geometry g = Geometry::uniform(n, 12);
  Image img(n, n);
  const double half = 0.5 * (n - 1);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double x = c - half, y = half - r;
      img(r, c) = std::exp(-((x - x0) * (x - x0) + (y - y0) * (y - y0)) / (2 * sigma * sigma));
    }
  }
  const Sinogram s = project(g, img);
  const double peak = std::sqrt(2 * std::numbers::pi) * sigma;
  const double det_half = 0.5 * (g.n_dets - 1);
  double worst = 0.0;
  for (int a = 0; a < g.n_angles(); ++a) {
    const double th = g.angles[a];
    const double s0 = x0 * std::cos(th) + y0 * std::sin(th);
    for (int d = 0; d < g.n_dets; ++d) {
      const double t = d - det_half - s0;
      const double exact = peak * std::exp(-t * t / (2 * sigma * sigma));
      worst = std::max(worst, std::abs(s(a, d) - exact) / peak);
    }
  }
  CHECK(worst < 0.01);
}

TEST_CASE("disk mass is conserved at every angle") {
  const int n = 48;
  const Geometry g = Geometry::uniform(n, 24);
  Image disk(n, n);
  const double half = 0.5 * (n - 1);
  double mass = 0.0;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double x = c - half, y = half - r;
      disk(r, c) = x * x + y * y <= 15.0 * 15.0 ? 1.0 : 0.0;
      mass += disk(r, c);
    }
  }
  const Sinogram s = project(g, disk);
  for (int a = 0; a < g.n_angles(); ++a) {
    double total = 0.0;
    for (int d = 0; d < g.n_dets; ++d) total += s(a, d);
    CAPTURE(a);
    CHECK(std::abs(total - mass) / mass < 0.01);
  }
}

TEST_CASE("restricted operators reproduce rows of the full operator bit for bit") {
  const Geometry g = Geometry::uniform(24, 8);
  const RadonOperator full(g);
  const Image x = testutil::random_image(24, 24, 3);
  const Sinogram s = full.project(x);

  const std::vector<int> dets = {0, 2, 5, 17, 33};
  const RadonOperator sub(g, dets);
  const Sinogram ss = sub.project(x);
  CHECK(sub.n_dets() == 5);
  for (int a = 0; a < g.n_angles(); ++a) {
    for (int k = 0; k < 5; ++k) CHECK(ss(a, k) == s(a, dets[std::size_t(k)]));
  }

  const int angles[] = {1, 4, 6};
  const RadonOperator ang(restrict_geometry(g, angles));
  const Sinogram sa = ang.project(x);
  for (int k = 0; k < 3; ++k) {
    for (int d = 0; d < g.n_dets; ++d) CHECK(sa(k, d) == s(angles[k], d));
  }
}

TEST_CASE("stack projection is channel-wise") {
  const Geometry g = Geometry::uniform(16, 6);
  const RadonOperator op(g);
  const MaterialImage x = testutil::random_stack(3, 16, 16, 8);
  const LineIntegrals z = op.project_stack(x);
  CHECK(z.channels == 3);
  for (int m = 0; m < 3; ++m) {
    const Sinogram s = op.project(x.channel_image(m));
    for (int a = 0; a < g.n_angles(); ++a) {
      for (int d = 0; d < g.n_dets; ++d) CHECK(z.at(a, d, m) == s(a, d));
    }
  }
}

TEST_CASE("normal operator norm matches the dense spectrum") {
  const Geometry g = Geometry::uniform(8, 5);
  const RadonOperator op(g);
  const int n = 64;
  const int rows = g.n_angles() * g.n_dets;
  Eigen::MatrixXd dense(rows, n);
  for (int j = 0; j < n; ++j) {
    Image e(8, 8);
    e.data[std::size_t(j)] = 1.0;
    const Sinogram col = op.project(e);
    for (int i = 0; i < rows; ++i) dense(i, j) = col.data[std::size_t(i)];
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dense.transpose() * dense);
  CHECK(op.normal_operator_norm() == doctest::Approx(eig.eigenvalues().maxCoeff()).epsilon(1e-6));
}
