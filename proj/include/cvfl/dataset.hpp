#pragma once

// Datasets: synthetic Gaussian-cluster generation, IDX file loading, the
// shard-based unbalanced/non-iid partitioner, concept-shift injection and
// the per-vehicle diversity index.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cvfl/errors.hpp"
#include "cvfl/rng.hpp"

namespace cvfl {

struct LabeledDataset {
  std::size_t dims = 0;
  int num_classes = 0;
  std::vector<double> features;  // row-major, size() == n * dims
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * dims, dims};
  }

  void validate() const {
    if (labels.empty()) throw ConfigError("dataset: empty");
    if (features.size() != labels.size() * dims)
      throw ConfigError("dataset: feature/label size mismatch");
    if (num_classes < 1) throw ConfigError("dataset: num_classes must be >= 1");
    for (int y : labels)
      if (y < 0 || y >= num_classes) throw ConfigError("dataset: label out of range");
  }
};

/// Equal-count Gaussian class clusters with unit covariance. Means sit on
/// scaled basis directions (a lattice along the first axis when classes
/// outnumber dims) with pairwise distance >= separation.
inline LabeledDataset synth_dataset(int classes, int dims, int samples, std::uint64_t seed,
                                    double separation = 4.0) {
  if (classes < 2) throw ConfigError("synth_dataset: need at least 2 classes");
  if (dims < 1) throw ConfigError("synth_dataset: need at least 1 dimension");
  if (samples < classes) throw ConfigError("synth_dataset: need at least one sample per class");
  if (separation <= 0) throw ConfigError("synth_dataset: separation must be > 0");

  std::vector<std::vector<double>> means(classes, std::vector<double>(dims, 0.0));
  for (int c = 0; c < classes; ++c) {
    if (classes <= dims) {
      means[c][c] = separation / std::sqrt(2.0);
    } else {
      means[c][0] = separation * c;
    }
  }

  Rng rng(seed);
  LabeledDataset ds;
  ds.dims = dims;
  ds.num_classes = classes;
  ds.features.resize(static_cast<std::size_t>(samples) * dims);
  ds.labels.resize(samples);

  const int base = samples / classes;
  const int extra = samples % classes;
  std::size_t i = 0;
  for (int c = 0; c < classes; ++c) {
    const int count = base + (c < extra ? 1 : 0);
    for (int s = 0; s < count; ++s, ++i) {
      ds.labels[i] = c;
      for (int j = 0; j < dims; ++j)
        ds.features[i * dims + j] = means[c][j] + rng.normal();
    }
  }

  // Shuffle rows so class order carries no information.
  std::vector<std::size_t> perm(samples);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  LabeledDataset out;
  out.dims = ds.dims;
  out.num_classes = ds.num_classes;
  out.features.resize(ds.features.size());
  out.labels.resize(ds.labels.size());
  for (std::size_t r = 0; r < perm.size(); ++r) {
    out.labels[r] = ds.labels[perm[r]];
    std::copy_n(ds.features.begin() + perm[r] * ds.dims, ds.dims,
                out.features.begin() + r * ds.dims);
  }
  return out;
}

namespace detail {

inline std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw FormatError("idx: truncated header in " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace detail

/// Load an IDX image/label file pair (the MNIST binary layout, big-endian).
/// Pixels are scaled to [0, 1], rows flattened row-major.
inline LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw FormatError("idx: cannot open " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw FormatError("idx: cannot open " + labels_path);

  if (detail::read_be_u32(img, images_path) != 0x00000803u)
    throw FormatError("idx: bad image magic in " + images_path);
  const std::uint32_t n_img = detail::read_be_u32(img, images_path);
  const std::uint32_t rows = detail::read_be_u32(img, images_path);
  const std::uint32_t cols = detail::read_be_u32(img, images_path);

  if (detail::read_be_u32(lab, labels_path) != 0x00000801u)
    throw FormatError("idx: bad label magic in " + labels_path);
  const std::uint32_t n_lab = detail::read_be_u32(lab, labels_path);
  if (n_img != n_lab) throw FormatError("idx: image/label count mismatch");

  LabeledDataset ds;
  ds.dims = static_cast<std::size_t>(rows) * cols;
  ds.features.resize(static_cast<std::size_t>(n_img) * ds.dims);
  ds.labels.resize(n_img);

  std::vector<unsigned char> buf(ds.dims);
  for (std::uint32_t i = 0; i < n_img; ++i) {
    if (!img.read(reinterpret_cast<char*>(buf.data()), buf.size()))
      throw FormatError("idx: truncated image data in " + images_path);
    for (std::size_t j = 0; j < ds.dims; ++j)
      ds.features[i * ds.dims + j] = buf[j] / 255.0;
  }
  int max_label = 0;
  for (std::uint32_t i = 0; i < n_lab; ++i) {
    unsigned char y;
    if (!lab.read(reinterpret_cast<char*>(&y), 1))
      throw FormatError("idx: truncated label data in " + labels_path);
    ds.labels[i] = y;
    max_label = std::max(max_label, static_cast<int>(y));
  }
  ds.num_classes = max_label + 1;
  return ds;
}

struct PartitionSpec {
  int num_shards = 1200;
  int shard_size = 50;
  int min_shards = 1;
  int max_shards = 30;

  void validate(std::size_t dataset_size) const {
    if (num_shards < 1 || shard_size < 1) throw ConfigError("partition: shard counts must be >= 1");
    if (static_cast<std::size_t>(num_shards) * shard_size > dataset_size)
      throw ConfigError("partition: shards exceed dataset size");
    if (min_shards < 1 || min_shards > max_shards)
      throw ConfigError("partition: need 1 <= min_shards <= max_shards");
  }
};

struct PartitionResult {
  std::vector<LabeledDataset> vehicle_data;
  std::vector<int> shard_to_vehicle;                       // -1 = unassigned
  std::vector<std::vector<std::size_t>> vehicle_samples;   // original row indices
  int shard_size = 0;
};

/// Sort by label, cut into fixed-size shards (single-label when the shard
/// size divides the class counts), hand each vehicle a uniform-random shard
/// count in [min, max] without replacement. If the drawn demand exceeds the
/// shard supply the max is rescaled and the draw repeated.
inline PartitionResult partition_shards(const LabeledDataset& ds, int num_vehicles,
                                        const PartitionSpec& spec, std::uint64_t seed) {
  ds.validate();
  spec.validate(ds.size());
  if (num_vehicles < 1) throw ConfigError("partition: need at least one vehicle");

  Rng rng(seed);

  std::vector<int> counts(num_vehicles);
  int max_eff = spec.max_shards;
  while (true) {
    long long total = 0;
    for (int& c : counts) {
      c = static_cast<int>(rng.uniform_int(spec.min_shards, max_eff));
      total += c;
    }
    if (total <= spec.num_shards) break;
    const int rescaled = spec.num_shards / num_vehicles;
    if (rescaled < spec.min_shards || rescaled >= max_eff)
      throw ConfigError("partition: demand cannot fit the shard supply");
    detail::warn("partition: shard demand " + std::to_string(total) + " exceeds supply " +
                 std::to_string(spec.num_shards) + ", rescaling max_shards to " +
                 std::to_string(rescaled));
    max_eff = rescaled;
  }

  // Label-sorted order makes shards single-label wherever class counts allow.
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ds.labels[a] < ds.labels[b]; });

  std::vector<int> shard_ids(spec.num_shards);
  std::iota(shard_ids.begin(), shard_ids.end(), 0);
  rng.shuffle(shard_ids);

  PartitionResult result;
  result.shard_size = spec.shard_size;
  result.shard_to_vehicle.assign(spec.num_shards, -1);
  result.vehicle_samples.resize(num_vehicles);
  result.vehicle_data.resize(num_vehicles);

  std::size_t next = 0;
  for (int k = 0; k < num_vehicles; ++k) {
    for (int j = 0; j < counts[k]; ++j) {
      const int shard = shard_ids[next++];
      result.shard_to_vehicle[shard] = k;
      const std::size_t begin = static_cast<std::size_t>(shard) * spec.shard_size;
      for (int s = 0; s < spec.shard_size; ++s)
        result.vehicle_samples[k].push_back(order[begin + s]);
    }
    auto& part = result.vehicle_data[k];
    part.dims = ds.dims;
    part.num_classes = ds.num_classes;
    part.labels.reserve(result.vehicle_samples[k].size());
    part.features.reserve(result.vehicle_samples[k].size() * ds.dims);
    for (std::size_t idx : result.vehicle_samples[k]) {
      part.labels.push_back(ds.labels[idx]);
      auto r = ds.row(idx);
      part.features.insert(part.features.end(), r.begin(), r.end());
    }
  }
  return result;
}

/// Reproducibility artifact: which vehicle owns each shard.
inline nlohmann::ordered_json partition_index_json(const PartitionResult& p) {
  nlohmann::ordered_json j;
  j["shard_size"] = p.shard_size;
  j["shard_to_vehicle"] = p.shard_to_vehicle;
  return j;
}

struct ConceptShiftSpec {
  // One entry per group; each entry lists the label pairs that group swaps.
  std::vector<std::vector<std::pair<int, int>>> group_swaps;

  int num_groups() const { return std::max<int>(1, static_cast<int>(group_swaps.size())); }

  void validate(int num_classes) const {
    for (const auto& pairs : group_swaps) {
      std::vector<int> seen;
      for (auto [a, b] : pairs) {
        if (a < 0 || a >= num_classes || b < 0 || b >= num_classes)
          throw ConfigError("concept shift: label outside [0, C)");
        for (int s : seen)
          if (s == a || s == b)
            throw ConfigError("concept shift: label repeated within a group");
        seen.push_back(a);
        seen.push_back(b);
      }
    }
  }
};

/// Exchange the labels of each listed pair, in place.
inline void swap_labels(LabeledDataset& ds, const std::vector<std::pair<int, int>>& pairs) {
  for (int& y : ds.labels) {
    for (auto [a, b] : pairs) {
      if (y == a) {
        y = b;
        break;
      }
      if (y == b) {
        y = a;
        break;
      }
    }
  }
}

struct ConceptShiftResult {
  std::vector<LabeledDataset> data;
  std::vector<int> group_of_vehicle;
};

/// Split vehicles into contiguous groups (sizes differ by at most one) and
/// apply each group's label swaps to its members' partitions. Feature
/// matrices and dataset sizes are untouched.
inline ConceptShiftResult apply_concept_shift(std::vector<LabeledDataset> partitions,
                                              const ConceptShiftSpec& spec) {
  const int k = static_cast<int>(partitions.size());
  if (k == 0) throw ConfigError("concept shift: no partitions");
  if (!partitions.empty()) spec.validate(partitions.front().num_classes);

  const int groups = spec.num_groups();
  ConceptShiftResult result;
  result.group_of_vehicle.resize(k);
  for (int v = 0; v < k; ++v) {
    const int g = static_cast<int>(static_cast<long long>(v) * groups / k);
    result.group_of_vehicle[v] = g;
    if (g < static_cast<int>(spec.group_swaps.size()))
      swap_labels(partitions[v], spec.group_swaps[g]);
  }
  result.data = std::move(partitions);
  return result;
}

/// Shannon entropy of the label histogram, in nats.
inline double label_entropy(const LabeledDataset& ds) {
  std::vector<std::size_t> counts(ds.num_classes, 0);
  for (int y : ds.labels) counts[y]++;
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / ds.size();
    h -= p * std::log(p);
  }
  return h;
}

struct DatasetMeta {
  std::size_t size = 0;
  double label_entropy_nats = 0.0;
  double age_rounds = 0.0;  // rounds since the vehicle last uploaded
};

inline DatasetMeta dataset_meta(const LabeledDataset& ds, double age_rounds) {
  return {ds.size(), label_entropy(ds), age_rounds};
}

struct DiversityWeights {
  double diversity = 0.4;
  double size = 0.4;
  double age = 0.2;

  void validate() const {
    if (diversity < 0 || size < 0 || age < 0)
      throw ConfigError("diversity weights: negative weight");
    if (std::abs(diversity + size + age - 1.0) > 1e-9)
      throw ConfigError("diversity weights: must sum to 1");
  }
};

/// Weighted sum of min-max-normalized dataset metrics across the fleet.
/// A metric that is constant over the fleet contributes 0 for everyone.
inline std::vector<double> diversity_index(const std::vector<DatasetMeta>& fleet,
                                           const DiversityWeights& weights = {}) {
  if (fleet.empty()) throw DomainError("diversity_index: empty fleet");
  weights.validate();

  auto normalized = [&](auto metric) {
    double lo = metric(fleet.front());
    double hi = lo;
    for (const auto& m : fleet) {
      lo = std::min(lo, metric(m));
      hi = std::max(hi, metric(m));
    }
    std::vector<double> phi(fleet.size(), 0.0);
    if (hi > lo) {
      for (std::size_t i = 0; i < fleet.size(); ++i)
        phi[i] = (metric(fleet[i]) - lo) / (hi - lo);
    }
    return phi;
  };

  const auto phi_div = normalized([](const DatasetMeta& m) { return m.label_entropy_nats; });
  const auto phi_size =
      normalized([](const DatasetMeta& m) { return static_cast<double>(m.size); });
  const auto phi_age = normalized([](const DatasetMeta& m) { return m.age_rounds; });

  std::vector<double> index(fleet.size());
  for (std::size_t i = 0; i < fleet.size(); ++i)
    index[i] =
        weights.diversity * phi_div[i] + weights.size * phi_size[i] + weights.age * phi_age[i];
  return index;
}

}  // namespace cvfl
