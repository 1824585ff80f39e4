#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "tabfids/error.hpp"
#include "tabfids/network.hpp"
#include "tabfids/preprocess.hpp"

namespace tabfids {

// tp/fn count attack rows, tn/fp benign rows.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const noexcept { return tp + tn + fp + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

inline ConfusionCounts confusion(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw ShapeError("confusion: length mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool attack = truth[i] != 0, flagged = predicted[i] != 0;
    if (attack) {
      (flagged ? c.tp : c.fn) += 1;
    } else {
      (flagged ? c.fp : c.tn) += 1;
    }
  }
  return c;
}

inline ConfusionCounts confusion(const ModelSpec& spec, const BlockedWeights& w,
                                 const Dataset& test) {
  if (test.size() == 0) throw DataError("confusion: empty test set");
  const auto predicted = predict(spec, w, test.x);
  return confusion(test.y, predicted);
}

/// Mean of benign recall and attack recall.
///
/// Computed as one division of exact integer numerator and denominator,
/// so the result is the correctly rounded value of the rational whenever
/// both fit in 53 bits.
inline double attack_accuracy(const ConfusionCounts& c) {
  const std::uint64_t benign = c.tn + c.fp;
  const std::uint64_t attack = c.tp + c.fn;
  if (benign == 0 || attack == 0) {
    throw DataError("attack accuracy undefined: test set lacks " +
                    std::string(benign == 0 ? "benign" : "attack") + " samples");
  }
  using u128 = unsigned __int128;
  const u128 num = static_cast<u128>(c.tn) * attack + static_cast<u128>(c.tp) * benign;
  const u128 den = static_cast<u128>(2) * benign * attack;
  constexpr u128 kExact = u128{1} << 53;
  if (num < kExact && den < kExact) {
    return static_cast<double>(static_cast<std::uint64_t>(num)) /
           static_cast<double>(static_cast<std::uint64_t>(den));
  }
  return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
}

inline double attack_accuracy(const ModelSpec& spec, const BlockedWeights& w,
                              const Dataset& data) {
  return attack_accuracy(confusion(spec, w, data));
}

}  // namespace tabfids
