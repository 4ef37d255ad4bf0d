#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "splitct/core.hpp"

namespace testutil {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("splitct_unit_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline splitct::Image random_image(int h, int w, unsigned seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  splitct::Image img(h, w);
  for (double& v : img.data) v = u(gen);
  return img;
}

inline splitct::MaterialImage random_stack(int m, int h, int w, unsigned seed, double lo = 0.0,
                                           double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  splitct::MaterialImage img(m, h, w);
  for (double& v : img.data) v = u(gen);
  return img;
}

inline double rel_diff(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace testutil
