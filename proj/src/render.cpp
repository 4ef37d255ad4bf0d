#include "splitct/render.hpp"

#include <algorithm>
#include <cmath>

namespace splitct {

std::vector<std::uint8_t> encode_pgm16(std::span<const double> values, int height, int width) {
  require(height >= 1 && width >= 1 && values.size() == std::size_t(height) * width,
          "encode_pgm16: shape mismatch");
  require(all_finite(values), "encode_pgm16: non-finite value");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  const std::string header = "P5\n# scale min=" + format_double(lo) + " max=" + format_double(hi) +
                             "\n" + std::to_string(width) + " " + std::to_string(height) +
                             "\n65535\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + 2 * values.size());
  for (double v : values) {
    const double scaled = hi > lo ? (v - lo) / (hi - lo) * 65535.0 : 0.0;
    const auto q = std::uint16_t(std::clamp(std::lround(scaled), 0L, 65535L));
    out.push_back(std::uint8_t(q >> 8));
    out.push_back(std::uint8_t(q & 0xff));
  }
  return out;
}

ChannelLayout parse_layout(const std::string& text) {
  if (text == "chw") return ChannelLayout::chw;
  if (text == "hwc") return ChannelLayout::hwc;
  throw ContractError("unknown layout '" + text + "' (expected chw or hwc)");
}

std::vector<RenderedFile> render_tensor(const Tensor& t, const std::filesystem::path& out,
                                        ChannelLayout layout) {
  require(t.dims.size() == 2 || t.dims.size() == 3, "render: tensor must be 2-d or 3-d");
  if (t.dims.size() == 2) {
    return {{out, encode_pgm16(t.values, int(t.dims[0]), int(t.dims[1]))}};
  }
  const bool chw = layout == ChannelLayout::chw;
  const int channels = int(chw ? t.dims[0] : t.dims[2]);
  const int height = int(chw ? t.dims[1] : t.dims[0]);
  const int width = int(chw ? t.dims[2] : t.dims[1]);
  std::vector<RenderedFile> files;
  std::vector<double> plane(std::size_t(height) * width);
  for (int m = 0; m < channels; ++m) {
    for (std::size_t q = 0; q < plane.size(); ++q) {
      plane[q] = chw ? t.values[std::size_t(m) * plane.size() + q]
                     : t.values[q * std::size_t(channels) + std::size_t(m)];
    }
    std::filesystem::path path = out;
    if (channels > 1) {
      path = out.parent_path() /
             (out.stem().string() + "_ch" + std::to_string(m) + out.extension().string());
    }
    files.push_back({path, encode_pgm16(plane, height, width)});
  }
  return files;
}

}  // namespace splitct
