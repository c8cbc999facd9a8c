#pragma once

// Local SGD training of a small MLP over a flat parameter vector, weighted
// federated averaging, update cosine similarity, agglomerative update
// clustering and accuracy evaluation. Everything runs in 64-bit floats so
// tests can pin values against independent oracles.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cvfl/dataset.hpp"
#include "cvfl/errors.hpp"
#include "cvfl/rng.hpp"

namespace cvfl {

struct ModelArch {
  int input = 0;
  std::vector<int> hidden;
  int output = 0;

  void validate() const {
    if (input < 1 || output < 1) throw ConfigError("arch: input/output width must be >= 1");
    if (hidden.empty()) throw ConfigError("arch: need at least one hidden layer");
    for (int w : hidden)
      if (w < 1) throw ConfigError("arch: hidden width must be >= 1");
  }

  /// Layer widths including input and output.
  std::vector<int> widths() const {
    std::vector<int> w;
    w.push_back(input);
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(output);
    return w;
  }

  int num_layers() const { return static_cast<int>(hidden.size()) + 1; }

  std::size_t param_count() const {
    const auto w = widths();
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l)
      n += static_cast<std::size_t>(w[l + 1]) * w[l] + w[l + 1];
    return n;
  }

  bool operator==(const ModelArch&) const = default;
};

/// Flat canonical layout: for each layer, the weight matrix (row-major,
/// out x in) followed by the bias vector.
struct ModelParams {
  ModelArch arch;
  int version = 0;
  std::vector<double> theta;

  void validate() const {
    arch.validate();
    if (theta.size() != arch.param_count())
      throw ConfigError("params: theta length does not match arch");
  }
};

struct Update {
  int vehicle_id = -1;
  int model_version = 0;
  std::vector<double> delta;
  std::size_t num_samples = 0;
};

inline ModelParams init_params(const ModelArch& arch, std::uint64_t seed) {
  arch.validate();
  ModelParams p;
  p.arch = arch;
  p.theta.resize(arch.param_count());
  Rng rng(seed);
  const auto w = arch.widths();
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w[l]));
    const std::size_t span = static_cast<std::size_t>(w[l + 1]) * w[l] + w[l + 1];
    for (std::size_t i = 0; i < span; ++i) p.theta[off + i] = rng.uniform(-bound, bound);
    off += span;
  }
  return p;
}

namespace detail {

struct ForwardPass {
  // activations[0] is the input row; activations[l+1] the post-layer output
  // (ReLU on hidden, raw logits on the last layer).
  std::vector<std::vector<double>> activations;
};

inline void affine(std::span<const double> theta, std::size_t w_off, std::size_t b_off, int in,
                   int out, const std::vector<double>& x, std::vector<double>& z) {
  z.assign(out, 0.0);
  for (int o = 0; o < out; ++o) {
    double acc = theta[b_off + o];
    const std::size_t row = w_off + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) acc += theta[row + i] * x[i];
    z[o] = acc;
  }
}

inline ForwardPass forward(const ModelParams& p, std::span<const double> x) {
  const auto w = p.arch.widths();
  ForwardPass fp;
  fp.activations.resize(w.size());
  fp.activations[0].assign(x.begin(), x.end());
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const int in = w[l];
    const int out = w[l + 1];
    affine(p.theta, off, off + static_cast<std::size_t>(out) * in, in, out,
           fp.activations[l], fp.activations[l + 1]);
    off += static_cast<std::size_t>(out) * in + out;
    if (l + 2 < w.size()) {
      for (double& v : fp.activations[l + 1]) v = v > 0.0 ? v : 0.0;
    }
  }
  return fp;
}

inline double log_sum_exp(const std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace detail

/// Mean softmax cross-entropy over the dataset.
inline double model_loss(const ModelParams& p, const LabeledDataset& ds) {
  p.validate();
  if (ds.dims != static_cast<std::size_t>(p.arch.input))
    throw ConfigError("model_loss: dataset dims do not match arch");
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto fp = detail::forward(p, ds.row(i));
    const auto& logits = fp.activations.back();
    total += detail::log_sum_exp(logits) - logits[ds.labels[i]];
  }
  return total / static_cast<double>(ds.size());
}

/// Mean loss and gradient over the given sample indices (backprop).
inline double loss_and_gradient(const ModelParams& p, const LabeledDataset& ds,
                                std::span<const std::size_t> batch,
                                std::vector<double>& grad) {
  p.validate();
  if (ds.dims != static_cast<std::size_t>(p.arch.input))
    throw ConfigError("loss_and_gradient: dataset dims do not match arch");
  if (batch.empty()) throw DomainError("loss_and_gradient: empty batch");

  const auto w = p.arch.widths();
  const int layers = p.arch.num_layers();
  grad.assign(p.theta.size(), 0.0);

  // Per-layer offsets into the flat vector.
  std::vector<std::size_t> w_off(layers), b_off(layers);
  std::size_t off = 0;
  for (int l = 0; l < layers; ++l) {
    w_off[l] = off;
    b_off[l] = off + static_cast<std::size_t>(w[l + 1]) * w[l];
    off = b_off[l] + w[l + 1];
  }

  double total_loss = 0.0;
  std::vector<double> dz, dz_prev;
  for (std::size_t idx : batch) {
    const auto fp = detail::forward(p, ds.row(idx));
    const auto& logits = fp.activations.back();
    const double lse = detail::log_sum_exp(logits);
    total_loss += lse - logits[ds.labels[idx]];

    // dL/dz at the output: softmax - onehot
    dz.resize(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c)
      dz[c] = std::exp(logits[c] - lse) - (static_cast<int>(c) == ds.labels[idx] ? 1.0 : 0.0);

    for (int l = layers - 1; l >= 0; --l) {
      const int in = w[l];
      const int out = w[l + 1];
      const auto& a_prev = fp.activations[l];
      for (int o = 0; o < out; ++o) {
        const std::size_t row = w_off[l] + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) grad[row + i] += dz[o] * a_prev[i];
        grad[b_off[l] + o] += dz[o];
      }
      if (l > 0) {
        dz_prev.assign(in, 0.0);
        for (int o = 0; o < out; ++o) {
          const std::size_t row = w_off[l] + static_cast<std::size_t>(o) * in;
          for (int i = 0; i < in; ++i) dz_prev[i] += p.theta[row + i] * dz[o];
        }
        // ReLU mask from the stored activation (a > 0 iff z > 0).
        for (int i = 0; i < in; ++i)
          if (a_prev[i] <= 0.0) dz_prev[i] = 0.0;
        std::swap(dz, dz_prev);
      }
    }
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& g : grad) g *= inv;
  return total_loss * inv;
}

/// Full-batch convenience overload.
inline double loss_and_gradient(const ModelParams& p, const LabeledDataset& ds,
                                std::vector<double>& grad) {
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  return loss_and_gradient(p, ds, all, grad);
}

/// Minibatch SGD for `epochs` passes; the returned delta is theta_after -
/// theta_before. Shuffle order is pinned by the seed.
inline Update local_train(const ModelParams& params, const LabeledDataset& ds, int epochs,
                          double lr, int batch_size, std::uint64_t seed) {
  params.validate();
  ds.validate();
  if (ds.dims != static_cast<std::size_t>(params.arch.input) ||
      ds.num_classes > params.arch.output)
    throw ConfigError("local_train: dataset does not match arch");
  if (epochs < 0) throw ConfigError("local_train: negative epochs");
  if (batch_size < 1) throw ConfigError("local_train: batch_size must be >= 1");

  ModelParams work = params;
  Rng rng(seed);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad;

  for (int e = 0; e < epochs; ++e) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t len = std::min<std::size_t>(batch_size, order.size() - start);
      loss_and_gradient(work, ds, {order.data() + start, len}, grad);
      for (std::size_t i = 0; i < work.theta.size(); ++i) work.theta[i] -= lr * grad[i];
    }
  }

  Update u;
  u.model_version = params.version;
  u.num_samples = ds.size();
  u.delta.resize(params.theta.size());
  for (std::size_t i = 0; i < u.delta.size(); ++i) u.delta[i] = work.theta[i] - params.theta[i];
  return u;
}

/// Weighted aggregation: theta + sum_k (n_k / n) * delta_k.
inline ModelParams fedavg(const ModelParams& base, const std::vector<Update>& updates) {
  base.validate();
  if (updates.empty()) {
    detail::warn("fedavg: no updates, returning base model unchanged");
    return base;
  }
  std::size_t total = 0;
  for (const auto& u : updates) {
    if (u.model_version != base.version)
      throw DomainError("fedavg: update version does not match base model");
    if (u.delta.size() != base.theta.size())
      throw DomainError("fedavg: update length does not match base model");
    if (u.num_samples < 1) throw DomainError("fedavg: update with no samples");
    total += u.num_samples;
  }

  ModelParams out = base;
  double weight_sum = 0.0;
  for (const auto& u : updates) {
    const double w = static_cast<double>(u.num_samples) / static_cast<double>(total);
    weight_sum += w;
    for (std::size_t i = 0; i < out.theta.size(); ++i) out.theta[i] += w * u.delta[i];
  }
  if (std::abs(weight_sum - 1.0) > 1e-12)
    throw DomainError("fedavg: aggregation weights do not sum to 1");
  return out;
}

/// Cosine of the angle between two update directions, in [-1, 1].
/// A zero-norm argument yields 0 by convention.
inline double cosine_similarity(const Update& a, const Update& b) {
  if (a.delta.size() != b.delta.size())
    throw DomainError("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.delta.size(); ++i) {
    dot += a.delta[i] * b.delta[i];
    na += a.delta[i] * a.delta[i];
    nb += b.delta[i] * b.delta[i];
  }
  if (na == 0.0 || nb == 0.0) {
    detail::warn("cosine_similarity: zero-norm update, similarity set to 0");
    return 0.0;
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct ClusterPartition {
  std::vector<int> assignment;  // update index -> cluster id, ids contiguous from 0
  int num_clusters = 0;
};

/// Agglomerative clustering on cosine distance (1 - sim) with average
/// linkage. Merging stops once the cluster count reaches max_clusters; ties
/// pick the pair with the lowest (smallest-member) indices.
inline ClusterPartition hierarchical_cluster(const std::vector<Update>& updates,
                                             int max_clusters) {
  if (updates.empty()) throw DomainError("hierarchical_cluster: no updates");
  if (max_clusters < 1) throw ConfigError("hierarchical_cluster: max_clusters must be >= 1");

  const int n = static_cast<int>(updates.size());
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      dist[i][j] = dist[j][i] = 1.0 - cosine_similarity(updates[i], updates[j]);

  std::vector<std::vector<int>> clusters(n);
  for (int i = 0; i < n; ++i) clusters[i] = {i};

  auto linkage = [&](const std::vector<int>& a, const std::vector<int>& b) {
    double sum = 0.0;
    for (int i : a)
      for (int j : b) sum += dist[i][j];
    return sum / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
  };

  while (static_cast<int>(clusters.size()) > max_clusters) {
    int best_a = -1, best_b = -1;
    double best = 0.0;
    for (std::size_t a = 0; a < clusters.size(); ++a) {
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        const double d = linkage(clusters[a], clusters[b]);
        if (best_a < 0 || d < best) {
          best = d;
          best_a = static_cast<int>(a);
          best_b = static_cast<int>(b);
        }
        // equal distances fall through: the earlier (a, b) pair wins because
        // clusters stay ordered by smallest member
      }
    }
    auto& into = clusters[best_a];
    into.insert(into.end(), clusters[best_b].begin(), clusters[best_b].end());
    std::sort(into.begin(), into.end());
    clusters.erase(clusters.begin() + best_b);
    std::sort(clusters.begin(), clusters.end(),
              [](const auto& x, const auto& y) { return x.front() < y.front(); });
  }

  ClusterPartition part;
  part.num_clusters = static_cast<int>(clusters.size());
  part.assignment.resize(n);
  for (std::size_t c = 0; c < clusters.size(); ++c)
    for (int i : clusters[c]) part.assignment[i] = static_cast<int>(c);
  return part;
}

/// One aggregated model per cluster, versions renumbered 0..num_clusters-1.
inline std::vector<ModelParams> spawn_cluster_models(const ModelParams& base,
                                                     const std::vector<Update>& updates,
                                                     const ClusterPartition& partition) {
  if (partition.assignment.size() != updates.size())
    throw DomainError("spawn_cluster_models: partition does not cover updates");
  std::vector<ModelParams> models;
  models.reserve(partition.num_clusters);
  for (int c = 0; c < partition.num_clusters; ++c) {
    std::vector<Update> members;
    for (std::size_t i = 0; i < updates.size(); ++i)
      if (partition.assignment[i] == c) members.push_back(updates[i]);
    if (members.empty()) throw DomainError("spawn_cluster_models: empty cluster");
    ModelParams m = fedavg(base, members);
    m.version = c;
    models.push_back(std::move(m));
  }
  return models;
}

/// Argmax prediction accuracy; logit ties resolve to the lowest class index.
inline double evaluate_accuracy(const ModelParams& p, const LabeledDataset& ds) {
  p.validate();
  if (ds.dims != static_cast<std::size_t>(p.arch.input))
    throw ConfigError("evaluate_accuracy: dataset dims do not match arch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto fp = detail::forward(p, ds.row(i));
    const auto& logits = fp.activations.back();
    int arg = 0;
    for (std::size_t c = 1; c < logits.size(); ++c)
      if (logits[c] > logits[arg]) arg = static_cast<int>(c);
    if (arg == ds.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

// ---- checkpoint format: one JSON header line, then little-endian float64 ----

namespace detail {

inline void write_le_double(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

inline double read_le_double(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw FormatError("checkpoint: truncated parameter data");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline void save_params(const std::string& path, const ModelParams& p) {
  p.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("checkpoint: cannot open " + path + " for writing");
  nlohmann::ordered_json header;
  header["input"] = p.arch.input;
  header["hidden"] = p.arch.hidden;
  header["output"] = p.arch.output;
  header["version"] = p.version;
  header["count"] = p.theta.size();
  out << header.dump() << '\n';
  for (double v : p.theta) detail::write_le_double(out, v);
}

inline ModelParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("checkpoint: missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  }
  ModelParams p;
  p.arch.input = header.at("input").get<int>();
  p.arch.hidden = header.at("hidden").get<std::vector<int>>();
  p.arch.output = header.at("output").get<int>();
  p.version = header.at("version").get<int>();
  const auto count = header.at("count").get<std::size_t>();
  if (count != p.arch.param_count()) throw FormatError("checkpoint: count does not match arch");
  p.theta.resize(count);
  for (auto& v : p.theta) v = detail::read_le_double(in);
  return p;
}

}  // namespace cvfl
