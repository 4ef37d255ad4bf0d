#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "splitct/core.hpp"

namespace splitct {

/// Channel order of generated phantoms.
enum MaterialChannel : int { kWater = 0, kIodine = 1, kGadolinium = 2 };

struct PhantomConfig {
  int size = 64;
  int n_materials = 3;
  double contrast_scale = 0.05;   // (0, 0.2]
  double deform_amplitude = 0.1;  // [0, 0.3]
  std::uint64_t seed = 0;

  void validate() const;
};

/// Randomly deformed modified Shepp–Logan phantom split into water, iodine
/// and gadolinium channels.
///
/// Water is the modified Shepp–Logan intensity clipped to [0, 1.1]. Iodine
/// fills the two tilted inner ellipses, gadolinium the upper ellipse and an
/// enlarged copy of the lower small one. Every ellipse's axes are scaled by
/// (1 + u), its center moved by u times its minor semi-axis in each
/// direction, and its rotation changed by u·π/4, with independent
/// u ~ U(−a, a). The two outer (skull) ellipses share one draw. Pixel values
/// are averaged over 2×2 subsamples.
MaterialImage generate_phantom(const PhantomConfig& cfg);

struct DatasetEntry {
  std::string split;  // "train", "val" or "test"
  std::string file;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  std::vector<DatasetEntry> entries;

  std::vector<DatasetEntry> split(const std::string& name) const;
};

/// Writes one TensorFile per phantom plus `manifest.txt` (`<split> <file>` per
/// line). Per-phantom seeds derive from `cfg.seed`. Refuses a non-empty
/// `out_dir` unless `overwrite` is set.
DatasetManifest generate_dataset(const PhantomConfig& cfg, int n_train, int n_val, int n_test,
                                 const std::filesystem::path& out_dir, bool overwrite = false);

DatasetManifest read_manifest(const std::filesystem::path& dir);

}  // namespace splitct
