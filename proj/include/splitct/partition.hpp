#pragma once

#include <compare>
#include <string>
#include <string_view>
#include <vector>

#include "splitct/core.hpp"
#include "splitct/radon.hpp"
#include "splitct/spectral.hpp"

namespace splitct {

enum class SplitAxis { angular, detector };
/// Positional parity over 1-based indices: `odd` holds 0-based 0, 2, 4, ...
enum class Parity { odd, even };

/// Serialized as `angular:odd`, `angular:even`, `detector:odd`, `detector:even`.
struct SubsetDescriptor {
  SplitAxis axis = SplitAxis::angular;
  Parity parity = Parity::odd;

  std::string to_string() const;
  static SubsetDescriptor parse(std::string_view text);
  SubsetDescriptor complement() const;

  auto operator<=>(const SubsetDescriptor&) const = default;
};

/// 0-based indices in [0, extent) whose 1-based position has the given parity.
std::vector<int> parity_indices(int extent, Parity parity);

/// A measurement subset Ω = angles × dets × (all energy bins).
struct Subset {
  SubsetDescriptor desc;
  std::vector<int> angles;
  std::vector<int> dets;

  std::size_t rays() const { return angles.size() * dets.size(); }
};

Subset resolve_subset(const Geometry& geom, const SubsetDescriptor& desc);

struct PartitionScheme {
  int n_angles = 0;
  int n_dets = 0;
  std::vector<std::vector<Subset>> partitions;

  int count() const { return int(partitions.size()); }
  /// 0/1 mask over the full P1×P2×B index set.
  std::vector<double> mask(const Subset& subset, int n_bins) const;
  void validate() const;
  bool is_single_angular() const;
  bool is_double() const;
};

/// Partition 1: angular parity; partition 2: detector parity.
PartitionScheme make_double_split(const Geometry& geom);
/// Angular parity only.
PartitionScheme make_single_split(const Geometry& geom);

/// Entries of y inside Ω, packed angle-major, then detector, then bin.
SpectralSinogram restrict_data(const SpectralSinogram& y, const Subset& subset);
/// Entries of y outside Ω; for the two-subset parity partitions this is the
/// restriction to the complementary subset.
SpectralSinogram complement_data(const SpectralSinogram& y, const Subset& subset,
                                 const Geometry& geom);
/// Writes packed subset data back into the full tensor.
void scatter_data(const SpectralSinogram& packed, const Subset& subset, SpectralSinogram& full);

/// Projector over exactly the rays of Ω, bit-identical to the matching rows
/// of the full projector.
RadonOperator subset_operator(const Geometry& geom, const Subset& subset);

/// A_Ω(x) = (A x)|_Ω, computed on the selected rays only.
SpectralSinogram restricted_forward(const SpectralModel& model, const Geometry& geom,
                                    const MaterialImage& x, const Subset& subset);

}  // namespace splitct
