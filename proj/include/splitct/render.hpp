#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "splitct/core.hpp"

namespace splitct {

/// Binary 16-bit PGM (P5, maxval 65535, big-endian samples), min–max scaled:
///   P5\n# scale min=<v> max=<v>\n<width> <height>\n65535\n<samples>
/// A constant image maps to all zeros.
std::vector<std::uint8_t> encode_pgm16(std::span<const double> values, int height, int width);

enum class ChannelLayout { chw, hwc };

ChannelLayout parse_layout(const std::string& text);

struct RenderedFile {
  std::filesystem::path path;
  std::vector<std::uint8_t> bytes;
};

/// PGM files for a 2-d tensor (written to `out`) or a 3-d tensor (one file
/// per channel named `<stem>_ch<m><ext>` next to `out`; a single channel
/// keeps `out`).
std::vector<RenderedFile> render_tensor(const Tensor& t, const std::filesystem::path& out,
                                        ChannelLayout layout);

}  // namespace splitct
