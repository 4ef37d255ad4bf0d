#include "splitct/net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace splitct {

void NetConfig::validate() const { require(channels >= 1, "NetConfig: channels must be >= 1"); }

std::array<ConvLayout, kNetLayers> net_layout(const NetConfig& cfg) {
  cfg.validate();
  const int c = cfg.channels;
  const int io[kNetLayers][2] = {{1, c}, {c, c}, {c, 2 * c}, {2 * c, 2 * c}, {3 * c, c}, {c, 1}};
  std::array<ConvLayout, kNetLayers> layout{};
  std::size_t offset = 0;
  for (int l = 0; l < kNetLayers; ++l) {
    layout[l].in = io[l][0];
    layout[l].out = io[l][1];
    layout[l].weights = offset;
    offset += layout[l].weight_count();
    layout[l].bias = offset;
    offset += std::size_t(layout[l].out);
  }
  return layout;
}

std::size_t param_count(const NetConfig& cfg) {
  const auto layout = net_layout(cfg);
  return layout.back().bias + std::size_t(layout.back().out);
}

ModelParams init_params(const NetConfig& cfg, std::uint64_t seed) {
  ModelParams p{cfg, std::vector<double>(param_count(cfg), 0.0)};
  RngStream rng(seed, "init");
  const auto layout = net_layout(cfg);
  for (int l = 0; l < kNetLayers; ++l) {
    const auto& layer = layout[std::size_t(l)];
    if (cfg.residual && l == kNetLayers - 1) break;
    const double bound = std::sqrt(6.0 / (9.0 * layer.in));
    for (std::size_t k = 0; k < layer.weight_count(); ++k) {
      p.values[layer.weights + k] = rng.uniform(-bound, bound);
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Convolution kernels. Each output element accumulates bias first, then the
// (input channel, ky, kx) terms in lexicographic order, skipping taps that
// fall outside the image.

void conv3x3_forward(std::span<const double> in, int c_in, int h, int w,
                     std::span<const double> weights, std::span<const double> bias, int c_out,
                     std::span<double> out) {
  const std::size_t plane = std::size_t(h) * w;
  require(in.size() == plane * c_in && out.size() == plane * c_out, "conv3x3_forward: size");
  for (int co = 0; co < c_out; ++co) {
    double* dst = out.data() + co * plane;
    std::fill(dst, dst + plane, bias[co]);
    for (int ci = 0; ci < c_in; ++ci) {
      const double* src = in.data() + ci * plane;
      const double* k = weights.data() + (std::size_t(co) * c_in + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int y0 = std::max(0, 1 - ky);
        const int y1 = std::min(h, h + 1 - ky);
        for (int kx = 0; kx < 3; ++kx) {
          const double wt = k[ky * 3 + kx];
          const int x0 = std::max(0, 1 - kx);
          const int x1 = std::min(w, w + 1 - kx);
          for (int y = y0; y < y1; ++y) {
            double* orow = dst + std::size_t(y) * w;
            const double* irow = src + std::size_t(y + ky - 1) * w + (kx - 1);
            for (int x = x0; x < x1; ++x) orow[x] += wt * irow[x];
          }
        }
      }
    }
  }
}

void conv3x3_backward(std::span<const double> in, int c_in, int h, int w,
                      std::span<const double> weights, int c_out, std::span<const double> grad_out,
                      std::span<double> grad_in, std::span<double> grad_weights,
                      std::span<double> grad_bias) {
  const std::size_t plane = std::size_t(h) * w;
  const bool want_in = !grad_in.empty();
  // Column partial sums keep the weight-gradient reduction vectorizable while
  // fixing its order.
  std::vector<double> column(std::size_t(w) + 2);
  for (int co = 0; co < c_out; ++co) {
    const double* g = grad_out.data() + co * plane;
    double bsum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) bsum += g[i];
    grad_bias[co] += bsum;
    for (int ci = 0; ci < c_in; ++ci) {
      const double* src = in.data() + ci * plane;
      double* gin = want_in ? grad_in.data() + ci * plane : nullptr;
      const std::size_t kidx = (std::size_t(co) * c_in + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int y0 = std::max(0, 1 - ky);
        const int y1 = std::min(h, h + 1 - ky);
        for (int kx = 0; kx < 3; ++kx) {
          const double wt = weights[kidx + ky * 3 + kx];
          const int x0 = std::max(0, 1 - kx);
          const int x1 = std::min(w, w + 1 - kx);
          std::fill(column.begin(), column.end(), 0.0);
          double* col = column.data();
          for (int y = y0; y < y1; ++y) {
            const double* grow = g + std::size_t(y) * w;
            const std::size_t off = std::size_t(y + ky - 1) * w + (kx - 1);
            const double* irow = src + off;
            for (int x = x0; x < x1; ++x) col[x] += grow[x] * irow[x];
            if (want_in) {
              double* girow = gin + off;
              for (int x = x0; x < x1; ++x) girow[x] += wt * grow[x];
            }
          }
          double acc = 0.0;
          for (int x = x0; x < x1; ++x) acc += col[x];
          grad_weights[kidx + ky * 3 + kx] += acc;
        }
      }
    }
  }
}

namespace {

void relu_inplace(std::vector<double>& v) {
  for (double& x : v) x = x > 0.0 ? x : 0.0;
}

void relu_mask(std::span<double> grad, const std::vector<double>& activation) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(activation[i] > 0.0)) grad[i] = 0.0;
  }
}

void avgpool2(const std::vector<double>& in, int c, int h, int w, std::vector<double>& out) {
  const int hh = h / 2, ww = w / 2;
  out.assign(std::size_t(c) * hh * ww, 0.0);
  for (int k = 0; k < c; ++k) {
    const double* src = in.data() + std::size_t(k) * h * w;
    double* dst = out.data() + std::size_t(k) * hh * ww;
    for (int y = 0; y < hh; ++y) {
      for (int x = 0; x < ww; ++x) {
        const double* p = src + std::size_t(2 * y) * w + 2 * x;
        dst[y * ww + x] = 0.25 * (((p[0] + p[1]) + p[w]) + p[w + 1]);
      }
    }
  }
}

void avgpool2_backward(const std::vector<double>& grad, int c, int h, int w,
                       std::vector<double>& grad_in) {
  const int hh = h / 2, ww = w / 2;
  for (int k = 0; k < c; ++k) {
    const double* g = grad.data() + std::size_t(k) * hh * ww;
    double* dst = grad_in.data() + std::size_t(k) * h * w;
    for (int y = 0; y < hh; ++y) {
      for (int x = 0; x < ww; ++x) {
        const double v = 0.25 * g[y * ww + x];
        double* p = dst + std::size_t(2 * y) * w + 2 * x;
        p[0] += v;
        p[1] += v;
        p[w] += v;
        p[w + 1] += v;
      }
    }
  }
}

// Nearest upsampling of `in` (c × h/2 × w/2) into the first c planes of `out`.
void upsample2(const std::vector<double>& in, int c, int h, int w, std::vector<double>& out) {
  const int hh = h / 2, ww = w / 2;
  for (int k = 0; k < c; ++k) {
    const double* src = in.data() + std::size_t(k) * hh * ww;
    double* dst = out.data() + std::size_t(k) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) dst[std::size_t(y) * w + x] = src[(y / 2) * ww + x / 2];
    }
  }
}

void upsample2_backward(std::span<const double> grad, int c, int h, int w,
                        std::vector<double>& grad_in) {
  const int hh = h / 2, ww = w / 2;
  grad_in.assign(std::size_t(c) * hh * ww, 0.0);
  for (int k = 0; k < c; ++k) {
    const double* g = grad.data() + std::size_t(k) * h * w;
    double* dst = grad_in.data() + std::size_t(k) * hh * ww;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) dst[(y / 2) * ww + x / 2] += g[std::size_t(y) * w + x];
    }
  }
}

std::span<const double> layer_weights(const ModelParams& p, const ConvLayout& l) {
  return {p.values.data() + l.weights, l.weight_count()};
}

std::span<const double> layer_bias(const ModelParams& p, const ConvLayout& l) {
  return {p.values.data() + l.bias, std::size_t(l.out)};
}

}  // namespace

Image net_forward(const ModelParams& params, const Image& img, NetTape* tape) {
  require(img.height % 2 == 0 && img.width % 2 == 0 && img.height >= 2 && img.width >= 2,
          "net_forward: image sides must be even");
  require(params.values.size() == param_count(params.cfg), "net_forward: parameter count");
  const auto layout = net_layout(params.cfg);
  const int c = params.cfg.channels;
  const int h = img.height, w = img.width;
  const int hh = h / 2, ww = w / 2;
  const std::size_t plane = std::size_t(h) * w;

  NetTape local;
  NetTape& t = tape ? *tape : local;
  t.height = h;
  t.width = w;
  t.input = img.data;

  auto conv = [&](int l, const std::vector<double>& in, int hgt, int wid, std::vector<double>& out) {
    out.assign(std::size_t(layout[l].out) * hgt * wid, 0.0);
    conv3x3_forward(in, layout[l].in, hgt, wid, layer_weights(params, layout[l]),
                    layer_bias(params, layout[l]), layout[l].out, out);
  };

  conv(0, t.input, h, w, t.a1);
  relu_inplace(t.a1);
  conv(1, t.a1, h, w, t.a2);
  relu_inplace(t.a2);
  avgpool2(t.a2, c, h, w, t.pooled);
  conv(2, t.pooled, hh, ww, t.a3);
  relu_inplace(t.a3);
  conv(3, t.a3, hh, ww, t.a4);
  relu_inplace(t.a4);
  t.concat.assign(3 * std::size_t(c) * plane, 0.0);
  upsample2(t.a4, 2 * c, h, w, t.concat);
  std::copy(t.a2.begin(), t.a2.end(), t.concat.begin() + 2 * std::ptrdiff_t(c) * std::ptrdiff_t(plane));
  conv(4, t.concat, h, w, t.a5);
  relu_inplace(t.a5);

  Image out(h, w);
  std::vector<double> last;
  conv(5, t.a5, h, w, last);
  for (std::size_t i = 0; i < plane; ++i) {
    out.data[i] = params.cfg.residual ? last[i] + img.data[i] : last[i];
  }
  return out;
}

void net_backward_accumulate(const ModelParams& params, const NetTape& tape, const Image& grad_out,
                             std::span<double> grad_params, Image* grad_input) {
  require(grad_out.height == tape.height && grad_out.width == tape.width,
          "net_backward: gradient shape does not match the tape");
  require(grad_params.size() == params.values.size(), "net_backward: gradient buffer size");
  require(!tape.a5.empty() && tape.a1.size() == std::size_t(params.cfg.channels) * grad_out.size(),
          "net_backward: tape does not match the parameters");
  const auto layout = net_layout(params.cfg);
  const int c = params.cfg.channels;
  const int h = tape.height, w = tape.width;
  const int hh = h / 2, ww = w / 2;
  const std::size_t plane = std::size_t(h) * w;

  auto conv_back = [&](int l, const std::vector<double>& in, int hgt, int wid,
                       std::span<const double> g, std::span<double> gin) {
    const auto& L = layout[l];
    conv3x3_backward(in, L.in, hgt, wid, layer_weights(params, L), L.out, g, gin,
                     grad_params.subspan(L.weights, L.weight_count()),
                     grad_params.subspan(L.bias, std::size_t(L.out)));
  };

  std::vector<double> g5(std::size_t(c) * plane, 0.0);
  conv_back(5, tape.a5, h, w, grad_out.data, g5);
  relu_mask(g5, tape.a5);

  std::vector<double> gcat(3 * std::size_t(c) * plane, 0.0);
  conv_back(4, tape.concat, h, w, g5, gcat);

  std::vector<double> g4;
  upsample2_backward(std::span<const double>(gcat).first(2 * std::size_t(c) * plane), 2 * c, h, w,
                     g4);
  relu_mask(g4, tape.a4);

  std::vector<double> g3(2 * std::size_t(c) * hh * ww, 0.0);
  conv_back(3, tape.a3, hh, ww, g4, g3);
  relu_mask(g3, tape.a3);

  std::vector<double> gpool(std::size_t(c) * hh * ww, 0.0);
  conv_back(2, tape.pooled, hh, ww, g3, gpool);

  std::vector<double> g2(gcat.begin() + 2 * std::ptrdiff_t(c) * std::ptrdiff_t(plane), gcat.end());
  avgpool2_backward(gpool, c, h, w, g2);
  relu_mask(g2, tape.a2);

  std::vector<double> g1(std::size_t(c) * plane, 0.0);
  conv_back(1, tape.a1, h, w, g2, g1);
  relu_mask(g1, tape.a1);

  if (grad_input) {
    *grad_input = Image(h, w);
    conv_back(0, tape.input, h, w, g1, grad_input->data);
    if (params.cfg.residual) {
      for (std::size_t i = 0; i < plane; ++i) grad_input->data[i] += grad_out.data[i];
    }
  } else {
    conv_back(0, tape.input, h, w, g1, {});
  }
}

NetGradients net_backward(const ModelParams& params, const NetTape& tape, const Image& grad_out) {
  NetGradients g;
  g.params.assign(params.values.size(), 0.0);
  net_backward_accumulate(params, tape, grad_out, g.params, &g.input);
  return g;
}

MaterialImage net_apply(const ModelParams& params, const MaterialImage& x,
                        std::vector<NetTape>* tapes) {
  MaterialImage out(x.materials, x.height, x.width);
  if (tapes) tapes->assign(std::size_t(x.materials), NetTape{});
  for (int m = 0; m < x.materials; ++m) {
    out.set_channel(m, net_forward(params, x.channel_image(m), tapes ? &(*tapes)[m] : nullptr));
  }
  return out;
}

// ---------------------------------------------------------------------------

AdamState AdamState::fresh(std::size_t n, AdamConfig cfg) {
  AdamState s;
  s.cfg = cfg;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  return s;
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  require(params.size() == grads.size() && state.m.size() == params.size() &&
              state.v.size() == params.size(),
          "adam_step: length mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw std::runtime_error("adam_step: non-finite gradient at parameter " + std::to_string(i));
    }
  }
  const auto& c = state.cfg;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, double(state.t));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const double g = grads[i];
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir);
  const std::uint32_t dims[] = {std::uint32_t(ckpt.params.values.size())};
  write_tensor(dir / "params.splt", dims, ckpt.params.values);
  if (!ckpt.adam.m.empty()) {
    write_tensor(dir / "adam_m.splt", dims, ckpt.adam.m);
    write_tensor(dir / "adam_v.splt", dims, ckpt.adam.v);
  }
  std::ofstream meta(dir / "meta.txt", std::ios::trunc);
  meta << "epoch = " << ckpt.epoch << "\n"
       << "net.channels = " << ckpt.params.cfg.channels << "\n"
       << "net.residual = " << (ckpt.params.cfg.residual ? 1 : 0) << "\n"
       << "adam.t = " << ckpt.adam.t << "\n"
       << "adam.lr = " << format_double(ckpt.adam.cfg.lr) << "\n"
       << "adam.beta1 = " << format_double(ckpt.adam.cfg.beta1) << "\n"
       << "adam.beta2 = " << format_double(ckpt.adam.cfg.beta2) << "\n"
       << "adam.eps = " << format_double(ckpt.adam.cfg.eps) << "\n";
  for (const auto& [k, v] : ckpt.meta) meta << k << " = " << v << "\n";
  if (!meta) throw IoError("cannot write " + (dir / "meta.txt").string());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.txt");
  if (!in) throw IoError("cannot open " + (dir / "meta.txt").string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  auto take = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("checkpoint meta.txt lacks '" + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };

  Checkpoint ckpt;
  ckpt.epoch = std::stoi(take("epoch"));
  ckpt.params.cfg.channels = std::stoi(take("net.channels"));
  ckpt.params.cfg.residual = take("net.residual") == "1";
  ckpt.adam.t = std::stoll(take("adam.t"));
  ckpt.adam.cfg.lr = std::stod(take("adam.lr"));
  ckpt.adam.cfg.beta1 = std::stod(take("adam.beta1"));
  ckpt.adam.cfg.beta2 = std::stod(take("adam.beta2"));
  ckpt.adam.cfg.eps = std::stod(take("adam.eps"));
  ckpt.meta = std::move(kv);

  auto params = read_tensor(dir / "params.splt");
  if (params.values.size() != param_count(ckpt.params.cfg)) {
    throw FormatError("checkpoint parameter count does not match its network config");
  }
  ckpt.params.values = std::move(params.values);
  if (std::filesystem::exists(dir / "adam_m.splt")) {
    ckpt.adam.m = read_tensor(dir / "adam_m.splt").values;
    ckpt.adam.v = read_tensor(dir / "adam_v.splt").values;
    if (ckpt.adam.m.size() != ckpt.params.values.size() ||
        ckpt.adam.v.size() != ckpt.params.values.size()) {
      throw FormatError("checkpoint optimizer state size mismatch");
    }
  } else {
    ckpt.adam.m.assign(ckpt.params.values.size(), 0.0);
    ckpt.adam.v.assign(ckpt.params.values.size(), 0.0);
  }
  return ckpt;
}

}  // namespace splitct
