#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "splitct/core.hpp"

using namespace splitct;

namespace {

std::vector<std::uint8_t> hand_encoded(const std::vector<std::uint32_t>& dims,
                                       const std::vector<float>& values) {
  std::vector<std::uint8_t> out = {'S', 'P', 'L', 'T'};
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
  };
  u32(1);
  u32(std::uint32_t(dims.size()));
  for (auto d : dims) u32(d);
  u32(1);
  for (float f : values) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    u32(bits);
  }
  return out;
}

}  // namespace

TEST_CASE("tensor encoding matches a hand-built byte layout") {
  const std::vector<std::uint32_t> dims = {2, 3};
  const std::vector<double> values = {0.0, -1.5, 2.25, 1e-3, 7.0, -0.0};
  const auto bytes = encode_tensor(dims, values);
  const std::vector<float> as_float(values.begin(), values.end());
  CHECK(bytes == hand_encoded(dims, as_float));
  CHECK(bytes.size() == 12 + 8 + 4 + 24);

  const Tensor t = decode_tensor(bytes);
  CHECK(t.dims == dims);
  REQUIRE(t.values.size() == values.size());
  for (std::size_t i = 0; i < values.size(); ++i) CHECK(t.values[i] == double(float(values[i])));
}

TEST_CASE("tensor decoding rejects malformed input") {
  const std::vector<std::uint32_t> dims = {2, 2};
  const std::vector<double> values = {1, 2, 3, 4};
  const auto good = encode_tensor(dims, values);

  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_tensor(bad_magic), FormatError);

  auto bad_version = good;
  bad_version[4] = 2;
  CHECK_THROWS_AS(decode_tensor(bad_version), FormatError);

  auto bad_dtype = good;
  bad_dtype[12 + 8] = 7;
  CHECK_THROWS_AS(decode_tensor(bad_dtype), FormatError);

  auto truncated = good;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_tensor(truncated), FormatError);

  auto trailing = good;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_tensor(trailing), FormatError);

  CHECK_THROWS_AS(decode_tensor(std::vector<std::uint8_t>(good.begin(), good.begin() + 6)),
                  FormatError);
  CHECK_THROWS_AS(encode_tensor(dims, std::vector<double>{1, 2, 3}), ContractError);
}

TEST_CASE("image and sinogram files round trip through float32") {
  const auto dir = testutil::temp_dir("core_io");
  MaterialImage img = testutil::random_stack(3, 5, 4, 11);
  write_image(dir / "x.splt", img);
  const MaterialImage back = read_material_image(dir / "x.splt");
  CHECK(back.materials == 3);
  CHECK(back.height == 5);
  CHECK(back.width == 4);
  for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(back.data[i] == double(float(img.data[i])));

  SpectralSinogram s(4, 7, 5);
  for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] = 0.01 * double(i);
  write_sinogram(dir / "y.splt", s);
  const SpectralSinogram sb = read_sinogram(dir / "y.splt");
  CHECK(sb.same_shape(s));
  CHECK(sb.at(3, 6, 4) == double(float(s.at(3, 6, 4))));

  CHECK_THROWS_AS(read_tensor(dir / "missing.splt"), IoError);
  const std::uint32_t flat[] = {2, 2};
  const double four[] = {1, 2, 3, 4};
  write_tensor(dir / "flat.splt", flat, four);
  CHECK_THROWS_AS(read_sinogram(dir / "flat.splt"), FormatError);
  CHECK(read_material_image(dir / "flat.splt").materials == 1);
}

TEST_CASE("fnv1a and mixing agree with published reference values") {
  CHECK(fnv1a(std::string_view("")) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a(std::string_view("a")) == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a(std::string_view("foobar")) == 0x85944171f73967e8ULL);
  // First SplitMix64 output for state 0.
  CHECK(RngStream::mix(0x9e3779b97f4a7c15ULL) == 0xe220a8397b1dcdafULL);
}

TEST_CASE("random streams are pure functions of seed, label and position") {
  RngStream a(42, "noise"), b(42, "noise"), c(42, "dataset"), d(43, "noise");
  for (int i = 0; i < 8; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    CHECK(va == RngStream(42, "noise").at(std::uint64_t(i)));
    CHECK(va != c.next_u64());
    CHECK(va != d.next_u64());
  }
  CHECK(a.counter() == 8);
  CHECK(a.substream(3).at(0) == RngStream(42, "noise").substream(3).at(0));
  CHECK(a.substream(3).at(0) != a.substream(4).at(0));
}

TEST_CASE("random stream moments") {
  RngStream rng(7, "moments");
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  double umin = 1, umax = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    umin = std::min(umin, u);
    umax = std::max(umax, u);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(umin > 0.0);
  CHECK(umax < 1.0);
  CHECK(std::abs(su / n - 0.5) < 5 * std::sqrt(1.0 / 12 / n));
  CHECK(std::abs(sn / n) < 5 / std::sqrt(double(n)));
  CHECK(std::abs(sn2 / n - 1.0) < 5 * std::sqrt(2.0 / n));

  for (double mean : {0.5, 4.0, 30.0, 1e4}) {
    RngStream p(9, "poisson");
    const int m = 40000;
    double s = 0, s2 = 0;
    for (int i = 0; i < m; ++i) {
      const double k = double(p.poisson(mean));
      s += k;
      s2 += k * k;
    }
    const double mu = s / m;
    const double var = s2 / m - mu * mu;
    CAPTURE(mean);
    CHECK(std::abs(mu - mean) < 5 * std::sqrt(mean / m));
    CHECK(std::abs(var / mean - 1.0) < 0.05);
  }
  CHECK(RngStream(1, "p").poisson(0.0) == 0);
}

TEST_CASE("format_double round trips") {
  for (double v : {0.1, 1e5, 1e-3, 1.4142135623730951, -2.5, 0.0}) {
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.9) == "0.9");
  CHECK(format_double(100000.0) == "1e+05");
}

TEST_CASE("material image validation") {
  MaterialImage img(2, 4, 4);
  CHECK_NOTHROW(img.validate());
  img.at(1, 2, 3) = std::nan("");
  CHECK_THROWS_AS(img.validate(), ContractError);
  CHECK_THROWS_AS(MaterialImage(0, 4, 4).validate(), ContractError);
}
