#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabfids/data.hpp"
#include "tabfids/error.hpp"
#include "tabfids/rng.hpp"

namespace tabfids {

/// Gaussian-cluster traffic generator.
///
/// Benign samples sit at `benign_center` on every feature. Attack classes
/// are grouped by the declared overlaps (transitively); each group gets
/// its own centroid `benign_center + separation * h / sqrt(S)`, where h is
/// a signed row of an S x S Hadamard matrix over the first S features.
/// Distinct groups are therefore orthogonal (or opposite) as seen from
/// the benign centroid, and overlapping classes share a centroid. The
/// remaining F - S features are pure noise with the same law for all
/// classes.
struct SyntheticSpec {
  std::size_t attacks = 5;
  std::size_t per_class = 200;
  std::size_t benign = 0;  // 0 -> per_class
  std::size_t features = 20;
  std::size_t signal_features = 4;
  double separation = 4.0;
  double noise_std = 1.0;
  double benign_center = 2.0;
  std::vector<std::pair<int, int>> overlaps;
  std::uint64_t seed = 0;

  std::size_t benign_count() const noexcept { return benign == 0 ? per_class : benign; }

  static SyntheticSpec from_json(const nlohmann::json& j) {
    SyntheticSpec s;
    try {
      s.attacks = j.value("attacks", s.attacks);
      s.per_class = j.value("per_class", s.per_class);
      s.benign = j.value("benign", s.benign);
      s.features = j.value("features", s.features);
      s.signal_features = j.value("signal_features", s.signal_features);
      s.separation = j.value("separation", s.separation);
      s.noise_std = j.value("noise_std", s.noise_std);
      s.benign_center = j.value("benign_center", s.benign_center);
      s.seed = j.value("seed", s.seed);
      if (j.contains("overlaps")) {
        for (const auto& p : j["overlaps"]) s.overlaps.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid synthetic spec: ") + e.what());
    }
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json ov = nlohmann::json::array();
    for (auto [a, b] : overlaps) ov.push_back({a, b});
    return {{"attacks", attacks},          {"per_class", per_class},
            {"benign", benign},            {"features", features},
            {"signal_features", signal_features}, {"separation", separation},
            {"noise_std", noise_std},      {"benign_center", benign_center},
            {"overlaps", ov},              {"seed", seed}};
  }
};

// group_of[a] for attack ids 1..A (index 0 unused); groups numbered in
// order of their smallest member.
inline std::vector<std::size_t> overlap_groups(const SyntheticSpec& spec) {
  const std::size_t a = spec.attacks;
  std::vector<std::size_t> parent(a + 1);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (auto [x, y] : spec.overlaps) {
    if (x < 1 || y < 1 || static_cast<std::size_t>(x) > a || static_cast<std::size_t>(y) > a) {
      throw ConfigError("overlap (" + std::to_string(x) + "," + std::to_string(y) +
                        ") references an attack outside 1.." + std::to_string(a));
    }
    if (x == y) throw ConfigError("overlap pair must name two different attacks");
    const auto rx = find(static_cast<std::size_t>(x)), ry = find(static_cast<std::size_t>(y));
    parent[std::max(rx, ry)] = std::min(rx, ry);
  }
  std::vector<std::size_t> group(a + 1, 0);
  std::vector<std::size_t> root_to_group(a + 1, SIZE_MAX);
  std::size_t next = 0;
  for (std::size_t k = 1; k <= a; ++k) {
    const auto r = find(k);
    if (root_to_group[r] == SIZE_MAX) root_to_group[r] = next++;
    group[k] = root_to_group[r];
  }
  return group;
}

// Ordered (train, test) attack pairs that share a centroid.
inline std::vector<std::pair<int, int>> engineered_pairs(const SyntheticSpec& spec) {
  const auto group = overlap_groups(spec);
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 1; i <= spec.attacks; ++i) {
    for (std::size_t j = 1; j <= spec.attacks; ++j) {
      if (i != j && group[i] == group[j]) out.emplace_back(static_cast<int>(i), static_cast<int>(j));
    }
  }
  return out;
}

inline double hadamard_entry(std::size_t row, std::size_t col) noexcept {
  return (std::popcount(row & col) % 2 == 0) ? 1.0 : -1.0;
}

inline void validate(const SyntheticSpec& spec) {
  if (spec.attacks < 2) throw ConfigError("synthetic data needs at least 2 attack classes");
  if (spec.features < 4) throw ConfigError("synthetic data needs at least 4 features");
  const std::size_t s = spec.signal_features;
  if (s == 0 || (s & (s - 1)) != 0 || s > spec.features) {
    throw ConfigError("signal_features must be a power of two no larger than features");
  }
  if (spec.per_class < 1) throw ConfigError("per_class must be positive");
  const auto group = overlap_groups(spec);
  const std::size_t groups = *std::max_element(group.begin() + 1, group.end()) + 1;
  if (groups > 2 * s) {
    throw ConfigError(std::to_string(groups) + " centroid groups need at least " +
                      std::to_string((groups + 1) / 2) + " signal features");
  }
}

inline std::vector<double> attack_centroid(const SyntheticSpec& spec, std::size_t group) {
  const std::size_t s = spec.signal_features;
  const double sign = group < s ? 1.0 : -1.0;
  const double scale = spec.separation / std::sqrt(static_cast<double>(s));
  std::vector<double> c(spec.features, spec.benign_center);
  for (std::size_t i = 0; i < s; ++i) c[i] += sign * scale * hadamard_entry(group % s, i);
  return c;
}

/// Deterministic per seed. Order indices interleave all classes.
inline LabeledStream gen_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  const auto group = overlap_groups(spec);
  LabeledStream out;
  for (std::size_t i = 0; i < spec.features; ++i) {
    out.feature_names.push_back((i < spec.signal_features ? "sig" : "noise") + std::to_string(i));
  }
  for (std::size_t a = 1; a <= spec.attacks; ++a) out.classes.add("Attack" + std::to_string(a));

  Rng rng(derive_seed(spec.seed, "synthetic"));
  auto draw = [&](const std::vector<double>& centre, int label) {
    Sample s{std::vector<double>(spec.features), label, 0};
    for (std::size_t i = 0; i < spec.features; ++i) {
      s.features[i] = centre[i] + spec.noise_std * rng.normal();
    }
    out.samples.push_back(std::move(s));
  };
  const std::vector<double> benign(spec.features, spec.benign_center);
  for (std::size_t k = 0; k < spec.benign_count(); ++k) draw(benign, kBenign);
  for (std::size_t a = 1; a <= spec.attacks; ++a) {
    const auto centre = attack_centroid(spec, group[a]);
    for (std::size_t k = 0; k < spec.per_class; ++k) draw(centre, static_cast<int>(a));
  }
  std::vector<std::uint64_t> order(out.samples.size());
  std::iota(order.begin(), order.end(), std::uint64_t{1});
  rng.shuffle(order.begin(), order.end());
  for (std::size_t i = 0; i < order.size(); ++i) out.samples[i].order = order[i];
  std::ranges::sort(out.samples, {}, &Sample::order);
  return out;
}

}  // namespace tabfids
