#include "splitct/partition.hpp"

#include <numeric>

namespace splitct {

std::string SubsetDescriptor::to_string() const {
  return std::string(axis == SplitAxis::angular ? "angular" : "detector") + ":" +
         (parity == Parity::odd ? "odd" : "even");
}

SubsetDescriptor SubsetDescriptor::parse(std::string_view text) {
  const auto colon = text.find(':');
  require(colon != std::string_view::npos, "subset descriptor needs 'axis:parity'");
  const auto axis = text.substr(0, colon);
  const auto parity = text.substr(colon + 1);
  SubsetDescriptor d;
  if (axis == "angular") {
    d.axis = SplitAxis::angular;
  } else if (axis == "detector") {
    d.axis = SplitAxis::detector;
  } else {
    throw ContractError("unknown subset axis '" + std::string(axis) + "'");
  }
  if (parity == "odd") {
    d.parity = Parity::odd;
  } else if (parity == "even") {
    d.parity = Parity::even;
  } else {
    throw ContractError("unknown subset parity '" + std::string(parity) + "'");
  }
  return d;
}

SubsetDescriptor SubsetDescriptor::complement() const {
  return {axis, parity == Parity::odd ? Parity::even : Parity::odd};
}

std::vector<int> parity_indices(int extent, Parity parity) {
  std::vector<int> out;
  for (int i = parity == Parity::odd ? 0 : 1; i < extent; i += 2) out.push_back(i);
  return out;
}

Subset resolve_subset(const Geometry& geom, const SubsetDescriptor& desc) {
  Subset s;
  s.desc = desc;
  std::vector<int> all_angles(geom.n_angles());
  std::iota(all_angles.begin(), all_angles.end(), 0);
  std::vector<int> all_dets(geom.n_dets);
  std::iota(all_dets.begin(), all_dets.end(), 0);
  if (desc.axis == SplitAxis::angular) {
    require(geom.n_angles() >= 2, "angular split needs at least 2 angles");
    s.angles = parity_indices(geom.n_angles(), desc.parity);
    s.dets = std::move(all_dets);
  } else {
    require(geom.n_dets >= 2, "detector split needs at least 2 detectors");
    s.angles = std::move(all_angles);
    s.dets = parity_indices(geom.n_dets, desc.parity);
  }
  return s;
}

std::vector<double> PartitionScheme::mask(const Subset& subset, int n_bins) const {
  std::vector<double> m(std::size_t(n_angles) * n_dets * n_bins, 0.0);
  for (int a : subset.angles) {
    for (int d : subset.dets) {
      for (int b = 0; b < n_bins; ++b) m[(std::size_t(a) * n_dets + d) * n_bins + b] = 1.0;
    }
  }
  return m;
}

void PartitionScheme::validate() const {
  require(!partitions.empty(), "PartitionScheme: no partitions");
  for (const auto& part : partitions) {
    std::vector<int> cover(std::size_t(n_angles) * n_dets, 0);
    for (const auto& s : part) {
      for (int a : s.angles) {
        for (int d : s.dets) ++cover[std::size_t(a) * n_dets + d];
      }
    }
    for (int c : cover) require(c == 1, "PartitionScheme: subsets do not form an exact cover");
  }
}

bool PartitionScheme::is_single_angular() const {
  return partitions.size() == 1 && partitions[0].size() == 2 &&
         partitions[0][0].desc.axis == SplitAxis::angular;
}

bool PartitionScheme::is_double() const {
  return partitions.size() == 2 && partitions[0].size() == 2 && partitions[1].size() == 2 &&
         partitions[0][0].desc.axis == SplitAxis::angular &&
         partitions[1][0].desc.axis == SplitAxis::detector;
}

namespace {

std::vector<Subset> parity_partition(const Geometry& geom, SplitAxis axis) {
  return {resolve_subset(geom, {axis, Parity::odd}), resolve_subset(geom, {axis, Parity::even})};
}

}  // namespace

PartitionScheme make_double_split(const Geometry& geom) {
  require(geom.n_angles() >= 2 && geom.n_dets >= 2, "make_double_split: need P1, P2 >= 2");
  PartitionScheme s;
  s.n_angles = geom.n_angles();
  s.n_dets = geom.n_dets;
  s.partitions.push_back(parity_partition(geom, SplitAxis::angular));
  s.partitions.push_back(parity_partition(geom, SplitAxis::detector));
  return s;
}

PartitionScheme make_single_split(const Geometry& geom) {
  require(geom.n_angles() >= 2, "make_single_split: need P1 >= 2");
  PartitionScheme s;
  s.n_angles = geom.n_angles();
  s.n_dets = geom.n_dets;
  s.partitions.push_back(parity_partition(geom, SplitAxis::angular));
  return s;
}

namespace {

void check_subset(const SpectralSinogram& y, const Subset& subset) {
  require(!subset.angles.empty() && !subset.dets.empty(), "subset is empty");
  require(subset.angles.back() < y.n_angles && subset.dets.back() < y.n_dets,
          "subset does not match the measurement geometry");
}

}  // namespace

SpectralSinogram restrict_data(const SpectralSinogram& y, const Subset& subset) {
  check_subset(y, subset);
  SpectralSinogram out(int(subset.angles.size()), int(subset.dets.size()), y.channels);
  std::size_t k = 0;
  for (int a : subset.angles) {
    for (int d : subset.dets) {
      for (int b = 0; b < y.channels; ++b) out.data[k++] = y.at(a, d, b);
    }
  }
  return out;
}

SpectralSinogram complement_data(const SpectralSinogram& y, const Subset& subset,
                                 const Geometry& geom) {
  return restrict_data(y, resolve_subset(geom, subset.desc.complement()));
}

void scatter_data(const SpectralSinogram& packed, const Subset& subset, SpectralSinogram& full) {
  check_subset(full, subset);
  require(packed.n_angles == int(subset.angles.size()) &&
              packed.n_dets == int(subset.dets.size()) && packed.channels == full.channels,
          "scatter_data: packed shape does not match subset");
  std::size_t k = 0;
  for (int a : subset.angles) {
    for (int d : subset.dets) {
      for (int b = 0; b < full.channels; ++b) full.at(a, d, b) = packed.data[k++];
    }
  }
}

RadonOperator subset_operator(const Geometry& geom, const Subset& subset) {
  return RadonOperator(restrict_geometry(geom, subset.angles), subset.dets);
}

SpectralSinogram restricted_forward(const SpectralModel& model, const Geometry& geom,
                                    const MaterialImage& x, const Subset& subset) {
  return forward(model, subset_operator(geom, subset), x);
}

}  // namespace splitct
