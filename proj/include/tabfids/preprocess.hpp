#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tabfids/data.hpp"
#include "tabfids/error.hpp"
#include "tabfids/matrix.hpp"
#include "tabfids/rng.hpp"

namespace tabfids {

struct SplitConfig {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    for (double f : {train, val, test}) {
      if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split fractions must lie in [0,1]");
    }
    if (train + val + test > 1.0 + 1e-9) {
      throw ConfigError("split fractions sum to more than 1");
    }
  }
};

struct SplitParts {
  LabeledStream train;
  LabeledStream val;
  LabeledStream test;
};

inline std::size_t fraction_count(std::size_t n, double frac) noexcept {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * frac + 1e-9));
}

/// Stratified, seeded assignment of each class to train/val/test. Every
/// part keeps capture order; the unassigned remainder is dropped.
inline SplitParts split(const LabeledStream& stream, const SplitConfig& cfg) {
  cfg.validate();
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < stream.samples.size(); ++i) {
    by_class[stream.samples[i].label].push_back(i);
  }
  // 0 = discard, 1 = train, 2 = val, 3 = test
  std::vector<std::uint8_t> part(stream.samples.size(), 0);
  for (auto& [label, idx] : by_class) {
    if (idx.size() < 3) {
      throw DataError("class '" + stream.classes.name(label) + "' has " +
                      std::to_string(idx.size()) +
                      " samples; at least 3 are needed to stratify");
    }
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(label)));
    rng.shuffle(idx.begin(), idx.end());
    const std::size_t n = idx.size();
    const std::size_t n_train = fraction_count(n, cfg.train);
    const std::size_t n_val = fraction_count(n, cfg.val);
    const std::size_t n_test = fraction_count(n, cfg.test);
    std::size_t k = 0;
    for (; k < n_train; ++k) part[idx[k]] = 1;
    for (; k < n_train + n_val; ++k) part[idx[k]] = 2;
    for (; k < n_train + n_val + n_test; ++k) part[idx[k]] = 3;
  }
  SplitParts out{stream.empty_like(), stream.empty_like(), stream.empty_like()};
  for (std::size_t i = 0; i < stream.samples.size(); ++i) {
    switch (part[i]) {
      case 1: out.train.samples.push_back(stream.samples[i]); break;
      case 2: out.val.samples.push_back(stream.samples[i]); break;
      case 3: out.test.samples.push_back(stream.samples[i]); break;
      default: break;
    }
  }
  return out;
}

/// Per-feature min-max statistics fitted on one node's training data.
struct NormStats {
  std::vector<double> min;
  std::vector<double> max;

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

inline NormStats fit_norm(const LabeledStream& train) {
  if (train.samples.empty()) throw DataError("fit_norm: empty training stream");
  const std::size_t f = train.samples.front().features.size();
  NormStats s{std::vector<double>(f, HUGE_VAL), std::vector<double>(f, -HUGE_VAL)};
  for (const auto& sample : train.samples) {
    for (std::size_t i = 0; i < f; ++i) {
      s.min[i] = std::min(s.min[i], sample.features[i]);
      s.max[i] = std::max(s.max[i], sample.features[i]);
    }
  }
  return s;
}

// Scales to [0,1] with clamping; constant features map to 0.
inline double normalize_value(const NormStats& s, std::size_t i, double v) noexcept {
  const double range = s.max[i] - s.min[i];
  if (!(range > 0.0)) return 0.0;
  return std::clamp((v - s.min[i]) / range, 0.0, 1.0);
}

inline LabeledStream apply_norm(const NormStats& stats, LabeledStream stream) {
  for (auto& sample : stream.samples) {
    if (sample.features.size() != stats.min.size()) {
      throw ShapeError("apply_norm: feature count mismatch");
    }
    for (std::size_t i = 0; i < sample.features.size(); ++i) {
      sample.features[i] = normalize_value(stats, i, sample.features[i]);
    }
  }
  return stream;
}

/// Mean of the last `window` samples of the same class.
///
/// Each class is averaged as its own sub-stream, so every output keeps an
/// unambiguous label. The first window-1 samples of each class produce no
/// output; a class shorter than the window is dropped and reported in
/// `warnings` when provided.
inline LabeledStream temporal_average(const LabeledStream& stream, std::size_t window,
                                      std::vector<std::string>* warnings = nullptr) {
  if (window == 0) throw ConfigError("temporal window must be >= 1");
  if (window == 1) return stream;
  std::map<int, std::vector<const Sample*>> by_class;
  for (const auto& s : stream.samples) by_class[s.label].push_back(&s);

  LabeledStream out = stream.empty_like();
  for (const auto& [label, members] : by_class) {
    if (members.size() < window) {
      if (warnings != nullptr) {
        warnings->push_back("class '" + stream.classes.name(label) + "' has " +
                            std::to_string(members.size()) +
                            " samples, fewer than window " + std::to_string(window));
      }
      continue;
    }
    const std::size_t f = members.front()->features.size();
    std::vector<double> sum(f, 0.0);
    for (std::size_t t = 0; t < members.size(); ++t) {
      for (std::size_t i = 0; i < f; ++i) sum[i] += members[t]->features[i];
      if (t >= window) {
        for (std::size_t i = 0; i < f; ++i) sum[i] -= members[t - window]->features[i];
      }
      if (t + 1 < window) continue;
      // Recompute from scratch occasionally to stop drift in the running sum.
      if ((t + 1 - window) % 256 == 0) {
        std::ranges::fill(sum, 0.0);
        for (std::size_t k = t + 1 - window; k <= t; ++k) {
          for (std::size_t i = 0; i < f; ++i) sum[i] += members[k]->features[i];
        }
      }
      Sample y{std::vector<double>(f), label, members[t]->order};
      for (std::size_t i = 0; i < f; ++i) y.features[i] = sum[i] / static_cast<double>(window);
      out.samples.push_back(std::move(y));
    }
  }
  std::ranges::sort(out.samples, {}, &Sample::order);
  return out;
}

/// Appends seeded with-replacement draws of the minority side (benign vs
/// any attack) until both sides have the same count.
inline LabeledStream bootstrap_balance(LabeledStream train, std::uint64_t seed) {
  std::vector<std::size_t> benign, attack;
  std::uint64_t max_order = 0;
  for (std::size_t i = 0; i < train.samples.size(); ++i) {
    (train.samples[i].label == kBenign ? benign : attack).push_back(i);
    max_order = std::max(max_order, train.samples[i].order);
  }
  if (benign.empty() || attack.empty()) {
    throw DataError("bootstrap_balance needs both benign and attack samples");
  }
  const auto& minority = benign.size() < attack.size() ? benign : attack;
  const std::size_t deficit = std::max(benign.size(), attack.size()) - minority.size();
  Rng rng(seed);
  train.samples.reserve(train.samples.size() + deficit);
  for (std::size_t k = 0; k < deficit; ++k) {
    Sample copy = train.samples[minority[rng.below(minority.size())]];
    copy.order = ++max_order;
    train.samples.push_back(std::move(copy));
  }
  return train;
}

/// One simulated node's local data.
struct NodePartition {
  std::size_t node_id = 0;
  int attack_class = 1;
  LabeledStream train;
  LabeledStream val;
  NormStats norm;
};

struct Partitioning {
  std::vector<NodePartition> nodes;
  // class_tests[j] = benign test shard + attack class j+1 test samples.
  std::vector<LabeledStream> class_tests;
};

namespace detail {

inline std::vector<LabeledStream> benign_shards(const LabeledStream& part, std::size_t k) {
  std::vector<const Sample*> benign;
  for (const auto& s : part.samples) {
    if (s.label == kBenign) benign.push_back(&s);
  }
  std::vector<LabeledStream> shards(k, part.empty_like());
  const std::size_t base = benign.size() / k, extra = benign.size() % k;
  std::size_t pos = 0;
  for (std::size_t node = 0; node < k; ++node) {
    const std::size_t len = base + (node < extra ? 1 : 0);
    for (std::size_t i = 0; i < len; ++i) shards[node].samples.push_back(*benign[pos++]);
  }
  return shards;
}

inline void merge_class(LabeledStream& dst, const LabeledStream& src, int label) {
  for (const auto& s : src.samples) {
    if (s.label == label) dst.samples.push_back(s);
  }
  std::ranges::sort(dst.samples, {}, &Sample::order);
}

}  // namespace detail

/// Node k gets the k-th contiguous benign chunk of train/val plus every
/// train/val sample of attack class k+1.
inline Partitioning partition_nodes(const LabeledStream& train, const LabeledStream& val,
                                    const LabeledStream& test, std::size_t attacks) {
  if (attacks < 2) throw DataError("partition_nodes needs at least 2 attack classes");
  if (train.count(kBenign) == 0) throw DataError("no benign samples in training data");
  for (std::size_t a = 1; a <= attacks; ++a) {
    if (train.count(static_cast<int>(a)) == 0) {
      const std::string name = a < train.classes.size() ? train.classes.name(static_cast<int>(a))
                                                         : "#" + std::to_string(a);
      throw DataError("attack class '" + name + "' absent from training data");
    }
  }
  auto train_shards = detail::benign_shards(train, attacks);
  auto val_shards = detail::benign_shards(val, attacks);

  Partitioning out;
  for (std::size_t k = 0; k < attacks; ++k) {
    NodePartition node;
    node.node_id = k;
    node.attack_class = static_cast<int>(k + 1);
    node.train = std::move(train_shards[k]);
    node.val = std::move(val_shards[k]);
    detail::merge_class(node.train, train, node.attack_class);
    detail::merge_class(node.val, val, node.attack_class);
    out.nodes.push_back(std::move(node));
  }
  for (std::size_t k = 0; k < attacks; ++k) {
    LabeledStream t = test.empty_like();
    for (const auto& s : test.samples) {
      if (s.label == kBenign || s.label == static_cast<int>(k + 1)) t.samples.push_back(s);
    }
    out.class_tests.push_back(std::move(t));
  }
  return out;
}

/// Binary-labelled design matrix: y = 1 for any attack class.
struct Dataset {
  Matrix x;
  std::vector<int> y;

  std::size_t size() const noexcept { return y.size(); }
};

inline Dataset to_dataset(const LabeledStream& stream, const NormStats* norm = nullptr) {
  const std::size_t f = stream.feature_count() != 0
                            ? stream.feature_count()
                            : (stream.samples.empty() ? 0 : stream.samples.front().features.size());
  Dataset d{Matrix(stream.samples.size(), f), std::vector<int>(stream.samples.size())};
  for (std::size_t r = 0; r < stream.samples.size(); ++r) {
    const auto& s = stream.samples[r];
    if (s.features.size() != f) throw ShapeError("to_dataset: ragged sample");
    for (std::size_t i = 0; i < f; ++i) {
      d.x(r, i) = norm != nullptr ? normalize_value(*norm, i, s.features[i]) : s.features[i];
    }
    d.y[r] = s.label == kBenign ? 0 : 1;
  }
  return d;
}

inline Dataset select_rows(const Dataset& d, std::span<const std::size_t> rows) {
  Dataset out{Matrix(rows.size(), d.x.cols()), std::vector<int>(rows.size())};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::ranges::copy(d.x.row(rows[r]), out.x.row(r).begin());
    out.y[r] = d.y[rows[r]];
  }
  return out;
}

}  // namespace tabfids
