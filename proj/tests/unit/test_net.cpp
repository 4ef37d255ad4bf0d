#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "splitct/net.hpp"

using namespace splitct;

namespace {

using Planes = std::vector<Image>;

// Straightforward per-pixel network, written from the architecture
// description rather than the library's tape layout.
Planes naive_conv(const Planes& in, const std::vector<double>& p, const ConvLayout& l) {
  const int h = in[0].height, w = in[0].width;
  Planes out;
  for (int co = 0; co < l.out; ++co) {
    Image o(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double s = p[l.bias + std::size_t(co)];
        for (int ci = 0; ci < l.in; ++ci) {
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              const int yy = y + ky - 1, xx = x + kx - 1;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              s += p[l.weights + ((std::size_t(co) * l.in + ci) * 9) + std::size_t(ky * 3 + kx)] *
                   in[std::size_t(ci)](yy, xx);
            }
          }
        }
        o(y, x) = s;
      }
    }
    out.push_back(o);
  }
  return out;
}

Planes relu(Planes v) {
  for (auto& img : v) {
    for (double& q : img.data) q = std::max(q, 0.0);
  }
  return v;
}

Image naive_net(const ModelParams& params, const Image& x) {
  const auto layout = net_layout(params.cfg);
  const Planes a2 = relu(naive_conv(relu(naive_conv({x}, params.values, layout[0])), params.values, layout[1]));
  Planes pooled;
  for (const auto& img : a2) {
    Image p(img.height / 2, img.width / 2);
    for (int y = 0; y < p.height; ++y) {
      for (int c = 0; c < p.width; ++c) {
        p(y, c) = (img(2 * y, 2 * c) + img(2 * y, 2 * c + 1) + img(2 * y + 1, 2 * c) + img(2 * y + 1, 2 * c + 1)) / 4;
      }
    }
    pooled.push_back(p);
  }
  const Planes a4 = relu(naive_conv(relu(naive_conv(pooled, params.values, layout[2])), params.values, layout[3]));
  Planes cat;
  for (const auto& img : a4) {
    Image u(x.height, x.width);
    for (int y = 0; y < u.height; ++y) {
      for (int c = 0; c < u.width; ++c) u(y, c) = img(y / 2, c / 2);
    }
    cat.push_back(u);
  }
  for (const auto& img : a2) cat.push_back(img);
  const Planes a5 = relu(naive_conv(cat, params.values, layout[4]));
  Image out = naive_conv(a5, params.values, layout[5])[0];
  if (params.cfg.residual) {
    for (std::size_t q = 0; q < out.size(); ++q) out.data[q] += x.data[q];
  }
  return out;
}

ModelParams randomized(const NetConfig& cfg, std::uint64_t seed) {
  ModelParams p = init_params(cfg, seed);
  RngStream rng(seed, "test-tail");
  const auto layout = net_layout(cfg);
  const auto& last = layout.back();
  for (std::size_t k = 0; k < last.weight_count() + std::size_t(last.out); ++k) {
    p.values[last.weights + k] = rng.uniform(-0.3, 0.3);
  }
  for (double& v : p.values) v += 0.01 * rng.normal();  // nonzero biases everywhere
  return p;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("parameter layout") {
  for (int c : {1, 4, 16}) {
    NetConfig cfg;
    cfg.channels = c;
    CHECK(param_count(cfg) == std::size_t(9 * (10 * c * c + 2 * c) + 7 * c + 1));
  }
  NetConfig cfg;
  cfg.channels = 0;
  CHECK_THROWS_AS(param_count(cfg), ContractError);
}

TEST_CASE("initialization bounds and the identity start") {
  NetConfig cfg;
  cfg.channels = 4;
  const ModelParams p = init_params(cfg, 3);
  const auto layout = net_layout(cfg);
  for (int l = 0; l < kNetLayers; ++l) {
    const double bound = std::sqrt(6.0 / (9.0 * layout[std::size_t(l)].in));
    for (std::size_t k = 0; k < layout[std::size_t(l)].weight_count(); ++k) {
      const double v = p.values[layout[std::size_t(l)].weights + k];
      CHECK(std::abs(v) <= bound);
      if (l == kNetLayers - 1) CHECK(v == 0.0);
    }
  }
  const Image x = testutil::random_image(8, 10, 2);
  CHECK(net_forward(p, x).data == x.data);
  CHECK(init_params(cfg, 3).values == p.values);
  CHECK(init_params(cfg, 4).values != p.values);

  NetConfig plain = cfg;
  plain.residual = false;
  const ModelParams q = init_params(plain, 3);
  CHECK(q.values[layout.back().weights] != 0.0);
}

TEST_CASE("network forward agrees with a per-pixel evaluation") {
  NetConfig cfg;
  cfg.channels = 3;
  const ModelParams p = randomized(cfg, 5);
  const Image x = testutil::random_image(8, 6, 9, -1, 1);
  const Image a = net_forward(p, x);
  const Image b = naive_net(p, x);
  for (std::size_t q = 0; q < a.size(); ++q) CHECK(a.data[q] == doctest::Approx(b.data[q]).epsilon(1e-13));
  CHECK_THROWS_AS(net_forward(p, Image(7, 6)), ContractError);
}

TEST_CASE("conv3x3 gradients match finite differences") {
  const int ci = 2, co = 3, h = 5, w = 6;
  const auto in = testutil::random_image(1, ci * h * w, 1, -1, 1).data;
  const auto wts = testutil::random_image(1, co * ci * 9, 2, -1, 1).data;
  const auto bias = testutil::random_image(1, co, 3, -1, 1).data;
  const auto probe = testutil::random_image(1, co * h * w, 4, -1, 1).data;
  auto objective = [&](const std::vector<double>& i, const std::vector<double>& k, const std::vector<double>& b) {
    std::vector<double> out(std::size_t(co) * h * w);
    conv3x3_forward(i, ci, h, w, k, b, co, out);
    return dot(out, probe);
  };
  std::vector<double> gi(in.size()), gw(wts.size()), gb(bias.size());
  conv3x3_backward(in, ci, h, w, wts, co, probe, gi, gw, gb);
  const double eps = 1e-6;
  auto check = [&](std::vector<double> base, const std::vector<double>& grad, int which) {
    for (std::size_t k = 0; k < base.size(); ++k) {
      auto plus = base, minus = base;
      plus[k] += eps;
      minus[k] -= eps;
      double fp, fm;
      if (which == 0) {
        fp = objective(plus, wts, bias);
        fm = objective(minus, wts, bias);
      } else if (which == 1) {
        fp = objective(in, plus, bias);
        fm = objective(in, minus, bias);
      } else {
        fp = objective(in, wts, plus);
        fm = objective(in, wts, minus);
      }
      CHECK(grad[k] == doctest::Approx((fp - fm) / (2 * eps)).epsilon(1e-7));
    }
  };
  check(in, gi, 0);
  check(wts, gw, 1);
  check(bias, gb, 2);
}

TEST_CASE("network gradients match finite differences") {
  NetConfig cfg;
  cfg.channels = 2;
  const ModelParams p = randomized(cfg, 11);
  const Image x = testutil::random_image(6, 8, 12, -1, 1);
  const Image probe = testutil::random_image(6, 8, 13, -1, 1);
  NetTape tape;
  net_forward(p, x, &tape);
  const NetGradients g = net_backward(p, tape, probe);
  auto objective = [&](const ModelParams& q, const Image& z) { return dot(net_forward(q, z).data, probe.data); };
  const double eps = 1e-6;
  double num = 0, den = 0;
  for (std::size_t k = 0; k < p.values.size(); ++k) {
    ModelParams plus = p, minus = p;
    plus.values[k] += eps;
    minus.values[k] -= eps;
    const double fd = (objective(plus, x) - objective(minus, x)) / (2 * eps);
    num += (fd - g.params[k]) * (fd - g.params[k]);
    den += fd * fd;
  }
  CHECK(std::sqrt(num / den) < 1e-6);
  num = den = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    Image plus = x, minus = x;
    plus.data[k] += eps;
    minus.data[k] -= eps;
    const double fd = (objective(p, plus) - objective(p, minus)) / (2 * eps);
    num += (fd - g.input.data[k]) * (fd - g.input.data[k]);
    den += fd * fd;
  }
  CHECK(std::sqrt(num / den) < 1e-6);
}

TEST_CASE("net_apply shares weights across channels") {
  NetConfig cfg;
  cfg.channels = 2;
  const ModelParams p = randomized(cfg, 1);
  const MaterialImage x = testutil::random_stack(3, 4, 4, 2);
  const MaterialImage y = net_apply(p, x);
  for (int m = 0; m < 3; ++m) CHECK(y.channel_image(m).data == net_forward(p, x.channel_image(m)).data);
}

TEST_CASE("adam matches a hand computation") {
  AdamConfig cfg;
  cfg.lr = 0.1;
  AdamState st = AdamState::fresh(2, cfg);
  std::vector<double> theta = {1.0, -2.0};
  adam_step(st, theta, std::vector<double>{0.5, -4.0});
  // First step: m̂ = g, v̂ = g², update = lr·g/(|g| + eps).
  CHECK(theta[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
  CHECK(theta[1] == doctest::Approx(-2.0 + 0.1 * 4.0 / (4.0 + 1e-8)).epsilon(1e-14));
  adam_step(st, theta, std::vector<double>{1.0, 0.0});
  const double m = 0.9 * 0.05 + 0.1 * 1.0;
  const double v = 0.999 * 0.00025 + 0.001 * 1.0;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
  const double first = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
  CHECK(theta[0] == doctest::Approx(first - 0.1 * mhat / (std::sqrt(vhat) + 1e-8)).epsilon(1e-13));
  CHECK(st.t == 2);
  CHECK_THROWS_AS(adam_step(st, theta, std::vector<double>{std::nan(""), 0.0}), std::runtime_error);
  CHECK(st.t == 2);
}

TEST_CASE("checkpoints round trip through float32 files") {
  const auto dir = testutil::temp_dir("ckpt");
  NetConfig cfg;
  cfg.channels = 2;
  Checkpoint c;
  c.params = randomized(cfg, 3);
  c.adam = AdamState::fresh(c.params.values.size(), AdamConfig{2e-3, 0.8, 0.99, 1e-7});
  c.adam.m.assign(c.adam.m.size(), 0.25);
  c.adam.v.assign(c.adam.v.size(), 0.125);
  c.adam.t = 17;
  c.epoch = 40;
  c.meta["method"] = "single-split";
  save_checkpoint(dir, c);
  const Checkpoint back = load_checkpoint(dir);
  CHECK(back.epoch == 40);
  CHECK(back.params.cfg == cfg);
  CHECK(back.adam.t == 17);
  CHECK(back.adam.cfg.lr == 2e-3);
  CHECK(back.adam.cfg.beta1 == 0.8);
  CHECK(back.adam.cfg.eps == 1e-7);
  CHECK(back.meta.at("method") == "single-split");
  for (std::size_t k = 0; k < c.params.values.size(); ++k) {
    CHECK(back.params.values[k] == double(float(c.params.values[k])));
  }
  CHECK(back.adam.m[0] == 0.25);
  CHECK_THROWS_AS(load_checkpoint(dir / "nope"), IoError);
}
