#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "tabfids/error.hpp"

namespace tabfids {

enum class LayerKind { kDense, kConv1d, kRelu, kFlatten };

inline const char* to_string(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv1d: return "conv1d";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kFlatten: return "flatten";
  }
  return "?";
}

// For dense layers in_dim/out_dim are feature widths. For conv1d they are
// input/output channel counts and kernel_width is the filter length
// (valid padding, stride 1). relu and flatten carry no dimensions.
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::size_t kernel_width = 0;

  bool has_params() const noexcept {
    return kind == LayerKind::kDense || kind == LayerKind::kConv1d;
  }

  static LayerSpec dense(std::size_t in, std::size_t out) {
    return {LayerKind::kDense, in, out, 0};
  }
  static LayerSpec conv1d(std::size_t in_channels, std::size_t out_channels,
                          std::size_t kernel) {
    return {LayerKind::kConv1d, in_channels, out_channels, kernel};
  }
  static LayerSpec relu() { return {LayerKind::kRelu, 0, 0, 0}; }
  static LayerSpec flatten() { return {LayerKind::kFlatten, 0, 0, 0}; }
};

// A residual block adds its input to its output; shapes must match.
struct BlockSpec {
  std::string name;
  std::vector<LayerSpec> layers;
  bool residual = false;
};

struct ModelSpec {
  std::size_t input_dim = 0;
  std::vector<BlockSpec> blocks;
};

// Activations are (channels x length); the raw input is (1 x input_dim).
struct ActShape {
  std::size_t channels = 1;
  std::size_t length = 0;
  std::size_t size() const noexcept { return channels * length; }
  friend bool operator==(const ActShape&, const ActShape&) = default;
};

struct LayerPlan {
  ActShape in;
  ActShape out;
};

/// Checks a spec and returns the activation shapes around every layer,
/// in block order. Throws ShapeError naming the offending block/layer.
inline std::vector<LayerPlan> plan_model(const ModelSpec& spec) {
  if (spec.input_dim == 0) throw ShapeError("model input_dim must be positive");
  if (spec.blocks.empty()) throw ShapeError("model has no blocks");

  std::vector<LayerPlan> plan;
  std::set<std::string> names;
  ActShape shape{1, spec.input_dim};
  for (const auto& block : spec.blocks) {
    if (block.name.empty()) throw ShapeError("block name must be non-empty");
    if (!names.insert(block.name).second) {
      throw ShapeError("duplicate block name '" + block.name + "'");
    }
    if (block.layers.empty()) {
      throw ShapeError("block '" + block.name + "' has no layers");
    }
    const ActShape block_in = shape;
    for (std::size_t li = 0; li < block.layers.size(); ++li) {
      const auto& layer = block.layers[li];
      const std::string where = "block '" + block.name + "' layer " +
                                std::to_string(li) + " (" +
                                to_string(layer.kind) + ")";
      ActShape out = shape;
      switch (layer.kind) {
        case LayerKind::kDense:
          if (layer.in_dim == 0 || layer.out_dim == 0) {
            throw ShapeError(where + ": dims must be positive");
          }
          if (shape.channels != 1) {
            throw ShapeError(where + ": input has " +
                             std::to_string(shape.channels) +
                             " channels; flatten first");
          }
          if (layer.in_dim != shape.length) {
            throw ShapeError(where + ": in_dim " +
                             std::to_string(layer.in_dim) +
                             " does not match incoming width " +
                             std::to_string(shape.length));
          }
          out = {1, layer.out_dim};
          break;
        case LayerKind::kConv1d:
          if (layer.in_dim == 0 || layer.out_dim == 0 ||
              layer.kernel_width == 0) {
            throw ShapeError(where + ": dims must be positive");
          }
          if (layer.in_dim != shape.channels) {
            throw ShapeError(where + ": in channels " +
                             std::to_string(layer.in_dim) +
                             " does not match incoming " +
                             std::to_string(shape.channels));
          }
          if (layer.kernel_width > shape.length) {
            throw ShapeError(where + ": kernel width " +
                             std::to_string(layer.kernel_width) +
                             " exceeds sequence length " +
                             std::to_string(shape.length));
          }
          out = {layer.out_dim, shape.length - layer.kernel_width + 1};
          break;
        case LayerKind::kRelu:
          break;
        case LayerKind::kFlatten:
          out = {1, shape.size()};
          break;
      }
      plan.push_back({shape, out});
      shape = out;
    }
    if (block.residual && !(shape == block_in)) {
      throw ShapeError("residual block '" + block.name +
                       "' changes activation shape");
    }
  }
  if (!(shape == ActShape{1, 2})) {
    throw ShapeError("model must end with 2 logits, got " +
                     std::to_string(shape.channels) + "x" +
                     std::to_string(shape.length));
  }
  return plan;
}

inline void validate(const ModelSpec& spec) { (void)plan_model(spec); }

struct CnnWidths {
  std::size_t conv1_channels = 16;
  std::size_t conv2_channels = 32;
  std::size_t hidden = 64;
  std::size_t kernel = 3;
};

// conv1 -> conv2 -> dense -> classifier over a 1 x F feature sequence.
inline ModelSpec cnn_backbone(std::size_t features, CnnWidths w = {}) {
  ModelSpec spec;
  spec.input_dim = features;
  const std::size_t shrink = 2 * (w.kernel - 1);
  if (features <= shrink) {
    throw ShapeError("cnn backbone needs more than " + std::to_string(shrink) +
                     " features, got " + std::to_string(features));
  }
  const std::size_t len = features - shrink;
  spec.blocks.push_back(
      {"conv1", {LayerSpec::conv1d(1, w.conv1_channels, w.kernel), LayerSpec::relu()}});
  spec.blocks.push_back(
      {"conv2",
       {LayerSpec::conv1d(w.conv1_channels, w.conv2_channels, w.kernel),
        LayerSpec::relu()}});
  spec.blocks.push_back({"dense",
                         {LayerSpec::flatten(),
                          LayerSpec::dense(w.conv2_channels * len, w.hidden),
                          LayerSpec::relu()}});
  spec.blocks.push_back({"classifier", {LayerSpec::dense(w.hidden, 2)}});
  return spec;
}

// Dense stem, two residual blocks, classifier.
inline ModelSpec resmlp_backbone(std::size_t features, std::size_t hidden = 32) {
  ModelSpec spec;
  spec.input_dim = features;
  spec.blocks.push_back(
      {"stem", {LayerSpec::dense(features, hidden), LayerSpec::relu()}});
  for (const char* name : {"res1", "res2"}) {
    spec.blocks.push_back({name,
                           {LayerSpec::dense(hidden, hidden), LayerSpec::relu(),
                            LayerSpec::dense(hidden, hidden)},
                           true});
  }
  spec.blocks.push_back(
      {"classifier", {LayerSpec::relu(), LayerSpec::dense(hidden, 2)}});
  return spec;
}

inline ModelSpec make_backbone(const std::string& name, std::size_t features) {
  if (name == "cnn") return cnn_backbone(features);
  if (name == "resmlp") return resmlp_backbone(features);
  throw ConfigError("unknown backbone '" + name + "' (expected cnn|resmlp)");
}

}  // namespace tabfids
