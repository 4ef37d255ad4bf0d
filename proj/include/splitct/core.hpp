#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace splitct {

/// Violated precondition of a library call (shape mismatch, bad index, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed TensorFile or other on-disk artifact.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require(bool condition, const std::string& message);

/// Single-channel H×W image, row-major.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, double fill = 0.0);

  double& operator()(int r, int c) { return data[std::size_t(r) * width + c]; }
  double operator()(int r, int c) const { return data[std::size_t(r) * width + c]; }
  std::size_t size() const { return data.size(); }
};

/// Stack of M per-material density maps, layout M×H×W.
struct MaterialImage {
  int materials = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  MaterialImage() = default;
  MaterialImage(int m, int h, int w, double fill = 0.0);

  std::size_t pixels() const { return std::size_t(height) * width; }
  std::span<double> channel(int m) { return {data.data() + m * pixels(), pixels()}; }
  std::span<const double> channel(int m) const { return {data.data() + m * pixels(), pixels()}; }
  double& at(int m, int r, int c) { return data[m * pixels() + std::size_t(r) * width + c]; }
  double at(int m, int r, int c) const { return data[m * pixels() + std::size_t(r) * width + c]; }

  Image channel_image(int m) const;
  void set_channel(int m, const Image& img);

  /// Throws ContractError unless M ≥ 1, H, W ≥ 2 and all values are finite.
  void validate() const;
};

/// Ray-indexed data: n_angles × n_dets × channels, channel index fastest.
/// The tag distinguishes line-integral stacks (channels = materials) from
/// spectral measurements (channels = energy bins).
template <class Tag>
struct RayData {
  int n_angles = 0;
  int n_dets = 0;
  int channels = 0;
  std::vector<double> data;

  RayData() = default;
  RayData(int a, int d, int c, double fill = 0.0)
      : n_angles(a), n_dets(d), channels(c), data(std::size_t(a) * d * c, fill) {}

  std::size_t rays() const { return std::size_t(n_angles) * n_dets; }
  std::size_t index(int a, int d, int c) const {
    return (std::size_t(a) * n_dets + d) * channels + c;
  }
  double& at(int a, int d, int c) { return data[index(a, d, c)]; }
  double at(int a, int d, int c) const { return data[index(a, d, c)]; }
  std::span<double> ray(std::size_t r) { return {data.data() + r * channels, std::size_t(channels)}; }
  std::span<const double> ray(std::size_t r) const {
    return {data.data() + r * channels, std::size_t(channels)};
  }
  bool same_shape(const RayData& o) const {
    return n_angles == o.n_angles && n_dets == o.n_dets && channels == o.channels;
  }
};

struct MaterialAxis {};
struct EnergyBinAxis {};

/// Per-ray line integrals of each material channel (P1×P2×M).
using LineIntegrals = RayData<MaterialAxis>;
/// Multispectral measurements (P1×P2×B).
using SpectralSinogram = RayData<EnergyBinAxis>;

/// Single-channel sinogram, n_angles × n_dets.
struct Sinogram {
  int n_angles = 0;
  int n_dets = 0;
  std::vector<double> data;

  Sinogram() = default;
  Sinogram(int a, int d, double fill = 0.0)
      : n_angles(a), n_dets(d), data(std::size_t(a) * d, fill) {}
  double& operator()(int a, int d) { return data[std::size_t(a) * n_dets + d]; }
  double operator()(int a, int d) const { return data[std::size_t(a) * n_dets + d]; }
};

bool all_finite(std::span<const double> values);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

// ---------------------------------------------------------------------------
// TensorFile: "SPLT" | u32 version=1 | u32 ndim | u32 dims[ndim] | u32 dtype=1
// | float32 payload, all little-endian, row-major.

inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::uint32_t kDtypeFloat32 = 1;

struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> values;

  std::size_t element_count() const;
};

std::vector<std::uint8_t> encode_tensor(std::span<const std::uint32_t> dims,
                                        std::span<const double> values);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
                  std::span<const double> values);
Tensor read_tensor(const std::filesystem::path& path);

void write_image(const std::filesystem::path& path, const MaterialImage& img);
MaterialImage read_material_image(const std::filesystem::path& path);
void write_sinogram(const std::filesystem::path& path, const SpectralSinogram& sino);
SpectralSinogram read_sinogram(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Counter-based random streams. Draw i of stream (seed, label) is a pure
// function of (seed, label, i), so reordering work cannot reorder draws.

class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view label);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  /// Value at an absolute counter position; does not advance the stream.
  std::uint64_t at(std::uint64_t position) const;

  std::uint64_t next_u64();
  /// Uniform in the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  std::uint64_t poisson(double mean);

  /// Independent child stream, e.g. one per measurement entry.
  RngStream substream(std::uint64_t index) const;

  static std::uint64_t mix(std::uint64_t z);

 private:
  explicit RngStream(std::uint64_t key) : key_(key) {}

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

std::uint64_t fnv1a(std::string_view text);
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace splitct
