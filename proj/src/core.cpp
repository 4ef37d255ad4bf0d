#include "splitct/core.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace splitct {

void require(bool condition, const std::string& message) {
  if (!condition) throw ContractError(message);
}

Image::Image(int h, int w, double fill) : height(h), width(w), data(std::size_t(h) * w, fill) {
  require(h >= 0 && w >= 0, "Image: negative size");
}

MaterialImage::MaterialImage(int m, int h, int w, double fill)
    : materials(m), height(h), width(w), data(std::size_t(m) * h * w, fill) {
  require(m >= 0 && h >= 0 && w >= 0, "MaterialImage: negative size");
}

Image MaterialImage::channel_image(int m) const {
  Image img(height, width);
  auto src = channel(m);
  std::copy(src.begin(), src.end(), img.data.begin());
  return img;
}

void MaterialImage::set_channel(int m, const Image& img) {
  require(img.height == height && img.width == width, "set_channel: shape mismatch");
  std::copy(img.data.begin(), img.data.end(), channel(m).begin());
}

void MaterialImage::validate() const {
  require(materials >= 1, "MaterialImage: need at least one material");
  require(height >= 2 && width >= 2, "MaterialImage: H and W must be at least 2");
  require(data.size() == std::size_t(materials) * height * width, "MaterialImage: data size");
  require(all_finite(data), "MaterialImage: non-finite value");
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes[offset + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(std::span<const std::uint32_t> dims,
                                        std::span<const double> values) {
  require(!dims.empty(), "write_tensor: dims must be nonempty");
  std::size_t count = 1;
  for (auto d : dims) count *= d;
  require(count == values.size(), "write_tensor: values length does not match product(dims)");

  std::vector<std::uint8_t> out;
  out.reserve(12 + 4 * dims.size() + 4 + 4 * values.size());
  for (char c : std::string_view("SPLT")) out.push_back(std::uint8_t(c));
  put_u32(out, kTensorVersion);
  put_u32(out, std::uint32_t(dims.size()));
  for (auto d : dims) put_u32(out, d);
  put_u32(out, kDtypeFloat32);
  for (double v : values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw FormatError("truncated header");
  if (std::memcmp(bytes.data(), "SPLT", 4) != 0) throw FormatError("bad magic");
  if (get_u32(bytes, 4) != kTensorVersion) throw FormatError("bad version");
  const std::uint32_t ndim = get_u32(bytes, 8);
  const std::size_t header = 12 + 4 * std::size_t(ndim) + 4;
  if (bytes.size() < header) throw FormatError("truncated header");

  Tensor t;
  t.dims.resize(ndim);
  for (std::uint32_t i = 0; i < ndim; ++i) t.dims[i] = get_u32(bytes, 12 + 4 * i);
  if (get_u32(bytes, 12 + 4 * ndim) != kDtypeFloat32) throw FormatError("bad dtype");

  const std::size_t count = t.element_count();
  if (bytes.size() - header < 4 * count) throw FormatError("truncated payload");
  if (bytes.size() - header > 4 * count) throw FormatError("trailing bytes after payload");
  t.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    t.values[i] = std::bit_cast<float>(get_u32(bytes, header + 4 * i));
  }
  return t;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void write_tensor(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
                  std::span<const double> values) {
  write_file_bytes(path, encode_tensor(dims, values));
}

Tensor read_tensor(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(std::string(e.what()) + ": " + path.string());
  }
}

void write_image(const std::filesystem::path& path, const MaterialImage& img) {
  const std::uint32_t dims[] = {std::uint32_t(img.materials), std::uint32_t(img.height),
                                std::uint32_t(img.width)};
  write_tensor(path, dims, img.data);
}

MaterialImage read_material_image(const std::filesystem::path& path) {
  auto t = read_tensor(path);
  if (t.dims.size() == 2) t.dims.insert(t.dims.begin(), 1u);
  if (t.dims.size() != 3) throw FormatError("expected a 3-d material image: " + path.string());
  MaterialImage img(int(t.dims[0]), int(t.dims[1]), int(t.dims[2]));
  img.data = std::move(t.values);
  return img;
}

void write_sinogram(const std::filesystem::path& path, const SpectralSinogram& sino) {
  const std::uint32_t dims[] = {std::uint32_t(sino.n_angles), std::uint32_t(sino.n_dets),
                                std::uint32_t(sino.channels)};
  write_tensor(path, dims, sino.data);
}

SpectralSinogram read_sinogram(const std::filesystem::path& path) {
  auto t = read_tensor(path);
  if (t.dims.size() != 3) throw FormatError("expected a 3-d sinogram: " + path.string());
  SpectralSinogram s(int(t.dims[0]), int(t.dims[1]), int(t.dims[2]));
  s.data = std::move(t.values);
  return s;
}

// ---------------------------------------------------------------------------

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t h) {
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a(std::string_view text) {
  return fnv1a(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
}

// SplitMix64 finalizer.
std::uint64_t RngStream::mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::string_view label)
    : key_(mix(mix(seed) ^ fnv1a(label))) {}

std::uint64_t RngStream::at(std::uint64_t position) const {
  return mix(key_ + (position + 1) * kGolden);
}

std::uint64_t RngStream::next_u64() { return at(counter_++); }

double RngStream::uniform() {
  // 53 random bits, shifted off zero.
  return (double(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RngStream::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::poisson(double mean) {
  require(mean >= 0.0 && std::isfinite(mean), "poisson: mean must be finite and nonnegative");
  if (mean == 0.0) return 0;
  if (mean < 10.0) {
    // Multiplication method.
    const double limit = std::exp(-mean);
    double prod = uniform();
    std::uint64_t k = 0;
    while (prod > limit) {
      prod *= uniform();
      ++k;
    }
    return k;
  }
  // Transformed rejection with squeeze (Hörmann's PTRS).
  const double slam = std::sqrt(mean);
  const double loglam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = uniform() - 0.5;
    const double v = uniform();
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= vr) return std::uint64_t(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        -mean + k * loglam - std::lgamma(k + 1.0)) {
      return std::uint64_t(k);
    }
  }
}

RngStream RngStream::substream(std::uint64_t index) const {
  return RngStream(mix(key_ ^ mix(index * kGolden + 0x632be59bd9b4e019ULL)));
}

}  // namespace splitct
