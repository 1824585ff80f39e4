#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tabfids/tabfids.hpp"

namespace tabfids::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

inline std::vector<int> random_labels(std::size_t n, Rng& rng) {
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(rng.below(2));
  return y;
}

// Mean softmax cross-entropy computed straight from logits.
inline double reference_loss(const ModelSpec& spec, const BlockedWeights& w, const Matrix& x,
                             const std::vector<int>& y) {
  const Matrix z = forward(spec, w, x);
  long double total = 0.0L;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const long double z0 = z(i, 0), z1 = z(i, 1);
    const long double m = std::max(z0, z1);
    const long double lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
    total += lse - (y[i] == 0 ? z0 : z1);
  }
  return static_cast<double>(total / static_cast<long double>(z.rows()));
}

// Fresh biases away from zero, so no pre-activation sits exactly on a
// ReLU kink (zero biases + a dead upstream layer would put it there).
inline BlockedWeights with_random_biases(BlockedWeights w, Rng& rng) {
  for (auto& block : w.blocks()) {
    for (auto& m : block.params) {
      for (std::size_t r = 0; r < m.rows(); ++r) m(r, m.cols() - 1) = rng.uniform(-0.5, 0.5);
    }
  }
  return w;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t parameters = 0;
};

// Central differences on every parameter; relative error uses
// max(|analytic|, |numeric|, floor) as the scale.
inline GradCheck finite_difference_check(const ModelSpec& spec, const BlockedWeights& w,
                                         const Matrix& x, const std::vector<int>& y,
                                         double h = 1e-5, double floor = 1e-7) {
  const auto analytic = loss_and_grad(spec, w, x, y).grads;
  GradCheck out;
  BlockedWeights probe = w;
  for (std::size_t b = 0; b < w.block_count(); ++b) {
    for (std::size_t m = 0; m < w.blocks()[b].params.size(); ++m) {
      auto vals = probe.blocks()[b].params[m].data();
      const auto grads = analytic.blocks()[b].params[m].data();
      for (std::size_t i = 0; i < vals.size(); ++i) {
        const double saved = vals[i];
        vals[i] = saved + h;
        const double up = reference_loss(spec, probe, x, y);
        vals[i] = saved - h;
        const double down = reference_loss(spec, probe, x, y);
        vals[i] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double scale = std::max({std::abs(numeric), std::abs(grads[i]), floor});
        out.max_rel_error = std::max(out.max_rel_error, std::abs(numeric - grads[i]) / scale);
        ++out.parameters;
      }
    }
  }
  return out;
}

inline ModelSpec tiny_cnn(std::size_t features) { return cnn_backbone(features, {3, 4, 8, 3}); }

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("tabfids_" + tag + "_" + std::to_string(Rng(fnv1a64(tag) ^ reinterpret_cast<std::uintptr_t>(this))()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Separable two-class node data for quick training tests.
inline NodeData separable_node(std::size_t features, std::size_t n_train, std::size_t n_val,
                               std::uint64_t seed, double shift = 3.0) {
  Rng rng(seed);
  auto make = [&](std::size_t n) {
    Dataset d{Matrix(n, features), std::vector<int>(n)};
    for (std::size_t r = 0; r < n; ++r) {
      d.y[r] = static_cast<int>(r % 2);
      for (std::size_t c = 0; c < features; ++c) {
        const double centre = (d.y[r] == 1 && c < 2) ? shift : 0.0;
        d.x(r, c) = 0.5 + 0.1 * (centre + 0.5 * rng.normal());
      }
    }
    return d;
  };
  NodeData node;
  node.train = make(n_train);
  node.val = make(n_val);
  return node;
}

}  // namespace tabfids::testing
