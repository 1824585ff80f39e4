#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tabfids/error.hpp"
#include "tabfids/matrix.hpp"
#include "tabfids/model.hpp"
#include "tabfids/rng.hpp"

namespace tabfids {

struct WeightBlock {
  std::string name;
  // One matrix per parameterized layer, out x (fan_in + 1); the last
  // column holds the bias.
  std::vector<Matrix> params;

  friend bool operator==(const WeightBlock&, const WeightBlock&) = default;
};

/// Model parameters grouped into the named blocks of a ModelSpec.
class BlockedWeights {
 public:
  BlockedWeights() = default;
  explicit BlockedWeights(std::vector<WeightBlock> blocks)
      : blocks_(std::move(blocks)) {}

  const std::vector<WeightBlock>& blocks() const noexcept { return blocks_; }
  std::vector<WeightBlock>& blocks() noexcept { return blocks_; }
  std::size_t block_count() const noexcept { return blocks_.size(); }

  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      if (blocks_[i].name == name) return i;
    }
    throw ShapeError("unknown block '" + std::string(name) + "'");
  }

  const std::vector<Matrix>& block(std::string_view name) const {
    return blocks_[index_of(name)].params;
  }

  void assign_block(std::string_view name, std::vector<Matrix> params) {
    auto& dst = blocks_[index_of(name)].params;
    if (dst.size() != params.size()) {
      throw ShapeError("block '" + std::string(name) + "' expects " +
                       std::to_string(dst.size()) + " matrices");
    }
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (!dst[i].same_shape(params[i])) {
        throw ShapeError("block '" + std::string(name) + "' matrix " +
                         std::to_string(i) + " shape mismatch");
      }
    }
    dst = std::move(params);
  }

  bool compatible(const BlockedWeights& other) const noexcept {
    if (blocks_.size() != other.blocks_.size()) return false;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const auto& x = blocks_[b];
      const auto& y = other.blocks_[b];
      if (x.name != y.name || x.params.size() != y.params.size()) return false;
      for (std::size_t i = 0; i < x.params.size(); ++i) {
        if (!x.params[i].same_shape(y.params[i])) return false;
      }
    }
    return true;
  }

  std::size_t parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& b : blocks_) {
      for (const auto& m : b.params) n += m.size();
    }
    return n;
  }

  // Visits every scalar parameter in a fixed order.
  template <typename F>
  void for_each_value(F&& f) const {
    for (const auto& b : blocks_) {
      for (const auto& m : b.params) {
        for (double v : m.data()) f(v);
      }
    }
  }

  BlockedWeights zeros_like() const {
    BlockedWeights out = *this;
    for (auto& b : out.blocks_) {
      for (auto& m : b.params) std::ranges::fill(m.data(), 0.0);
    }
    return out;
  }

  // Content hash over names, shapes and raw bytes.
  std::uint64_t fingerprint() const noexcept {
    std::uint64_t h = fnv1a64("");
    for (const auto& b : blocks_) {
      h = fnv1a64(b.name, h);
      for (const auto& m : b.params) {
        const std::size_t dims[2] = {m.rows(), m.cols()};
        h = fnv1a64({reinterpret_cast<const char*>(dims), sizeof dims}, h);
        h = fnv1a64({reinterpret_cast<const char*>(m.data().data()),
                     m.size() * sizeof(double)},
                    h);
      }
    }
    return h;
  }

  friend bool operator==(const BlockedWeights&, const BlockedWeights&) = default;

 private:
  std::vector<WeightBlock> blocks_;
};

inline const std::vector<Matrix>& get_block(const BlockedWeights& w,
                                            std::string_view name) {
  return w.block(name);
}

inline BlockedWeights set_block(BlockedWeights w, std::string_view name,
                                std::vector<Matrix> params) {
  w.assign_block(name, std::move(params));
  return w;
}

inline std::size_t fan_in(const LayerSpec& layer) noexcept {
  return layer.kind == LayerKind::kConv1d ? layer.in_dim * layer.kernel_width
                                          : layer.in_dim;
}

/// Kaiming-uniform weights, zero biases; bit-identical for a given
/// (spec, seed).
inline BlockedWeights build_model(const ModelSpec& spec, std::uint64_t seed) {
  validate(spec);
  Rng rng(seed);
  std::vector<WeightBlock> blocks;
  for (const auto& bs : spec.blocks) {
    WeightBlock block{bs.name, {}};
    for (const auto& layer : bs.layers) {
      if (!layer.has_params()) continue;
      const std::size_t fin = fan_in(layer);
      const double bound = std::sqrt(6.0 / static_cast<double>(fin));
      Matrix m(layer.out_dim, fin + 1);
      for (std::size_t o = 0; o < layer.out_dim; ++o) {
        for (std::size_t i = 0; i < fin; ++i) m(o, i) = rng.uniform(-bound, bound);
      }
      block.params.push_back(std::move(m));
    }
    blocks.push_back(std::move(block));
  }
  return BlockedWeights(std::move(blocks));
}

inline void check_weights(const ModelSpec& spec, const BlockedWeights& w) {
  if (w.block_count() != spec.blocks.size()) {
    throw ShapeError("weights have " + std::to_string(w.block_count()) +
                     " blocks, spec has " + std::to_string(spec.blocks.size()));
  }
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    const auto& bs = spec.blocks[b];
    const auto& wb = w.blocks()[b];
    if (bs.name != wb.name) {
      throw ShapeError("block " + std::to_string(b) + " is '" + wb.name +
                       "', spec expects '" + bs.name + "'");
    }
    std::size_t p = 0;
    for (const auto& layer : bs.layers) {
      if (!layer.has_params()) continue;
      if (p >= wb.params.size() || wb.params[p].rows() != layer.out_dim ||
          wb.params[p].cols() != fan_in(layer) + 1) {
        throw ShapeError("block '" + bs.name + "' parameter " +
                         std::to_string(p) + " does not match spec");
      }
      ++p;
    }
    if (p != wb.params.size()) {
      throw ShapeError("block '" + bs.name + "' has extra parameters");
    }
  }
}

namespace detail {

inline void dense_forward(const Matrix& w, const Matrix& x, Matrix& y) {
  const std::size_t batch = x.rows(), in = x.cols(), out = w.rows();
  y = Matrix(batch, out);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = x.row(b).data();
    double* yr = y.row(b).data();
    for (std::size_t o = 0; o < out; ++o) {
      const double* wr = w.row(o).data();
      double acc = wr[in];
      for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
      yr[o] = acc;
    }
  }
}

inline void dense_backward(const Matrix& w, const Matrix& x, const Matrix& dy,
                           Matrix& dw, Matrix* dx) {
  const std::size_t batch = x.rows(), in = x.cols(), out = w.rows();
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = x.row(b).data();
    const double* dyr = dy.row(b).data();
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dyr[o];
      if (g == 0.0) continue;
      double* dwr = dw.row(o).data();
      for (std::size_t i = 0; i < in; ++i) dwr[i] += g * xr[i];
      dwr[in] += g;
    }
  }
  if (dx == nullptr) return;
  *dx = Matrix(batch, in);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* dyr = dy.row(b).data();
    double* dxr = dx->row(b).data();
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dyr[o];
      if (g == 0.0) continue;
      const double* wr = w.row(o).data();
      for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wr[i];
    }
  }
}

inline void conv_forward(const LayerSpec& layer, const LayerPlan& plan,
                         const Matrix& w, const Matrix& x, Matrix& y) {
  const std::size_t batch = x.rows();
  const std::size_t cin = plan.in.channels, lin = plan.in.length;
  const std::size_t cout = plan.out.channels, lout = plan.out.length;
  const std::size_t k = layer.kernel_width;
  const std::size_t bias_col = cin * k;
  y = Matrix(batch, cout * lout);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = x.row(b).data();
    double* yr = y.row(b).data();
    for (std::size_t o = 0; o < cout; ++o) {
      const double* wr = w.row(o).data();
      double* yo = yr + o * lout;
      std::fill(yo, yo + lout, wr[bias_col]);
      for (std::size_t c = 0; c < cin; ++c) {
        const double* xc = xr + c * lin;
        for (std::size_t j = 0; j < k; ++j) {
          const double wv = wr[c * k + j];
          const double* xs = xc + j;
          for (std::size_t p = 0; p < lout; ++p) yo[p] += wv * xs[p];
        }
      }
    }
  }
}

inline void conv_backward(const LayerSpec& layer, const LayerPlan& plan,
                          const Matrix& w, const Matrix& x, const Matrix& dy,
                          Matrix& dw, Matrix* dx) {
  const std::size_t batch = x.rows();
  const std::size_t cin = plan.in.channels, lin = plan.in.length;
  const std::size_t cout = plan.out.channels, lout = plan.out.length;
  const std::size_t k = layer.kernel_width;
  const std::size_t bias_col = cin * k;
  if (dx != nullptr) *dx = Matrix(batch, cin * lin);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = x.row(b).data();
    const double* dyr = dy.row(b).data();
    double* dxr = dx != nullptr ? dx->row(b).data() : nullptr;
    for (std::size_t o = 0; o < cout; ++o) {
      const double* dyo = dyr + o * lout;
      const double* wr = w.row(o).data();
      double* dwr = dw.row(o).data();
      double gsum = 0.0;
      for (std::size_t p = 0; p < lout; ++p) gsum += dyo[p];
      dwr[bias_col] += gsum;
      for (std::size_t c = 0; c < cin; ++c) {
        const double* xc = xr + c * lin;
        for (std::size_t j = 0; j < k; ++j) {
          const double* xs = xc + j;
          double acc = 0.0;
          for (std::size_t p = 0; p < lout; ++p) acc += dyo[p] * xs[p];
          dwr[c * k + j] += acc;
          if (dxr != nullptr) {
            const double wv = wr[c * k + j];
            double* dxs = dxr + c * lin + j;
            for (std::size_t p = 0; p < lout; ++p) dxs[p] += wv * dyo[p];
          }
        }
      }
    }
  }
}

// Saved activations for the backward pass.
struct Trace {
  std::vector<LayerPlan> plan;
  std::vector<Matrix> layer_inputs;  // one per layer, block-major
  std::vector<Matrix> block_inputs;
  Matrix output;
};

inline Trace run_forward(const ModelSpec& spec, const BlockedWeights& w,
                         const Matrix& batch) {
  Trace t;
  t.plan = plan_model(spec);
  check_weights(spec, w);
  if (batch.cols() != spec.input_dim) {
    throw ShapeError("batch has " + std::to_string(batch.cols()) +
                     " columns, model expects " +
                     std::to_string(spec.input_dim));
  }
  Matrix act = batch;
  std::size_t li = 0;
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    const auto& bs = spec.blocks[b];
    const auto& params = w.blocks()[b].params;
    t.block_inputs.push_back(act);
    std::size_t p = 0;
    for (const auto& layer : bs.layers) {
      const auto& plan = t.plan[li];
      t.layer_inputs.push_back(act);
      Matrix next;
      switch (layer.kind) {
        case LayerKind::kDense:
          dense_forward(params[p++], act, next);
          break;
        case LayerKind::kConv1d:
          conv_forward(layer, plan, params[p++], act, next);
          break;
        case LayerKind::kRelu:
          next = act;
          for (double& v : next.data()) v = v > 0.0 ? v : 0.0;
          break;
        case LayerKind::kFlatten:
          next = act;
          break;
      }
      act = std::move(next);
      ++li;
    }
    if (bs.residual) {
      const auto in = t.block_inputs.back().data();
      auto out = act.data();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += in[i];
    }
  }
  t.output = std::move(act);
  return t;
}

}  // namespace detail

/// Logits (batch x 2). Pure in (spec, w, batch).
inline Matrix forward(const ModelSpec& spec, const BlockedWeights& w,
                      const Matrix& batch) {
  return detail::run_forward(spec, w, batch).output;
}

struct LossGrad {
  double loss = 0.0;
  BlockedWeights grads;
};

inline double log_sum_exp2(double a, double b) noexcept {
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

/// Mean softmax cross-entropy over the batch and its gradient.
inline LossGrad loss_and_grad(const ModelSpec& spec, const BlockedWeights& w,
                              const Matrix& batch, std::span<const int> labels) {
  if (labels.size() != batch.rows()) {
    throw ShapeError("label count " + std::to_string(labels.size()) +
                     " != batch rows " + std::to_string(batch.rows()));
  }
  for (int y : labels) {
    if (y != 0 && y != 1) {
      throw ShapeError("label " + std::to_string(y) + " out of range {0,1}");
    }
  }
  if (batch.rows() == 0) throw ShapeError("empty batch");

  auto trace = detail::run_forward(spec, w, batch);
  const std::size_t n = batch.rows();
  const double inv_n = 1.0 / static_cast<double>(n);

  LossGrad out;
  Matrix delta(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double z0 = trace.output(i, 0), z1 = trace.output(i, 1);
    const double lse = log_sum_exp2(z0, z1);
    const double p0 = std::exp(z0 - lse), p1 = std::exp(z1 - lse);
    out.loss += lse - (labels[i] == 0 ? z0 : z1);
    delta(i, 0) = (p0 - (labels[i] == 0 ? 1.0 : 0.0)) * inv_n;
    delta(i, 1) = (p1 - (labels[i] == 1 ? 1.0 : 0.0)) * inv_n;
  }
  out.loss *= inv_n;
  out.grads = w.zeros_like();

  std::size_t li = trace.layer_inputs.size();
  for (std::size_t b = spec.blocks.size(); b-- > 0;) {
    const auto& bs = spec.blocks[b];
    const auto& params = w.blocks()[b].params;
    auto& gparams = out.grads.blocks()[b].params;
    const Matrix block_out_grad = bs.residual ? delta : Matrix{};
    std::size_t p = params.size();
    const bool need_input_grad_for_block = b > 0 || bs.residual;
    for (std::size_t l = bs.layers.size(); l-- > 0;) {
      --li;
      const auto& layer = bs.layers[l];
      const auto& x = trace.layer_inputs[li];
      const bool first_layer = (b == 0 && l == 0);
      Matrix dx;
      Matrix* dx_ptr = (first_layer && !need_input_grad_for_block) ? nullptr : &dx;
      switch (layer.kind) {
        case LayerKind::kDense:
          --p;
          detail::dense_backward(params[p], x, delta, gparams[p], dx_ptr);
          break;
        case LayerKind::kConv1d:
          --p;
          detail::conv_backward(layer, trace.plan[li], params[p], x, delta,
                                gparams[p], dx_ptr);
          break;
        case LayerKind::kRelu:
          dx = delta;
          {
            auto xd = x.data();
            auto gd = dx.data();
            for (std::size_t i = 0; i < gd.size(); ++i) {
              if (!(xd[i] > 0.0)) gd[i] = 0.0;
            }
          }
          break;
        case LayerKind::kFlatten:
          dx = delta;
          break;
      }
      if (dx_ptr == nullptr && layer.has_params()) {
        delta = Matrix{};
      } else {
        delta = std::move(dx);
      }
    }
    if (bs.residual) {
      auto d = delta.data();
      auto r = block_out_grad.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += r[i];
    }
  }
  return out;
}

// argmax over the two logits; ties go to benign (0).
inline std::vector<int> predict(const ModelSpec& spec, const BlockedWeights& w,
                                const Matrix& batch) {
  const Matrix logits = forward(spec, w, batch);
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    out[i] = logits(i, 1) > logits(i, 0) ? 1 : 0;
  }
  return out;
}

}  // namespace tabfids
