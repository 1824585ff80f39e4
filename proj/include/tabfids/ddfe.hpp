#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "tabfids/error.hpp"
#include "tabfids/fed.hpp"
#include "tabfids/metrics.hpp"
#include "tabfids/network.hpp"
#include "tabfids/preprocess.hpp"

namespace tabfids {

/// true = feature retained.
struct FeatureMask {
  std::vector<bool> keep;

  static FeatureMask all(std::size_t features) { return {std::vector<bool>(features, true)}; }

  std::size_t features() const noexcept { return keep.size(); }
  std::size_t eliminated() const noexcept {
    std::size_t n = 0;
    for (bool k : keep) n += k ? 0 : 1;
    return n;
  }
  double reduction() const noexcept {
    return keep.empty() ? 0.0 : static_cast<double>(eliminated()) / static_cast<double>(keep.size());
  }

  friend bool operator==(const FeatureMask&, const FeatureMask&) = default;
};

// Zeroes the model-input columns of eliminated features.
inline Matrix apply_mask(const FeatureMask& mask, Matrix x) {
  if (x.cols() != mask.features()) throw ShapeError("feature mask width does not match input");
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (!mask.keep[i]) row[i] = 0.0;
    }
  }
  return x;
}

inline Dataset apply_mask(const FeatureMask& mask, Dataset d) {
  d.x = apply_mask(mask, std::move(d.x));
  return d;
}

struct AblationRow {
  std::size_t feature = 0;
  std::string name;
  double ablated = 0.0;
  double delta = 0.0;  // baseline - ablated
};

struct AblationReport {
  double baseline = 0.0;
  std::vector<AblationRow> rows;
};

/// Attack accuracy with each feature column zeroed in turn. Read-only:
/// the model is never retrained here.
inline AblationReport ddfe_scan(const ModelSpec& spec, const BlockedWeights& w,
                                const Dataset& val, const std::vector<std::string>& names = {}) {
  if (val.size() == 0) throw DataError("ddfe_scan: empty validation set");
  if (val.x.cols() != spec.input_dim) {
    throw ShapeError("ddfe_scan: data has " + std::to_string(val.x.cols()) +
                     " features, model expects " + std::to_string(spec.input_dim));
  }
  AblationReport report;
  report.baseline = attack_accuracy(spec, w, val);
  Matrix x = val.x;
  for (std::size_t f = 0; f < spec.input_dim; ++f) {
    std::vector<double> saved(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
      saved[r] = x(r, f);
      x(r, f) = 0.0;
    }
    const double acc = attack_accuracy(confusion(val.y, predict(spec, w, x)));
    for (std::size_t r = 0; r < x.rows(); ++r) x(r, f) = saved[r];
    report.rows.push_back({f, f < names.size() ? names[f] : "f" + std::to_string(f), acc,
                           report.baseline - acc});
  }
  return report;
}

/// Eliminates features whose removal costs at most `epsilon` attack
/// accuracy; at least the largest-delta feature always survives.
inline FeatureMask ddfe_reduce(const AblationReport& report, double epsilon) {
  if (report.rows.empty()) throw DataError("ddfe_reduce: empty report");
  FeatureMask mask = FeatureMask::all(report.rows.size());
  std::size_t best = 0;
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    if (report.rows[i].delta <= epsilon) mask.keep[i] = false;
    if (report.rows[i].delta > report.rows[best].delta) best = i;
  }
  if (mask.eliminated() == mask.features()) mask.keep[best] = true;
  return mask;
}

/// Fine-tunes on masked inputs for cfg.local_epochs with a fresh optimizer.
/// Input width is unchanged; eliminated columns are fed as zeros.
inline BlockedWeights ddfe_finetune(const ModelSpec& spec, BlockedWeights w, const FeatureMask& mask,
                                    const Dataset& train, const TrainConfig& cfg) {
  if (mask.features() != spec.input_dim) throw ShapeError("ddfe_finetune: mask width mismatch");
  if (mask.eliminated() == mask.features()) throw ShapeError("ddfe_finetune: mask retains no feature");
  const Dataset masked = apply_mask(mask, train);
  AdamState adam = AdamState::for_weights(w, cfg.lr);
  train_epochs(spec, w, adam, masked, cfg.local_epochs, cfg.batch_size,
               derive_seed(cfg.seed, "ddfe"));
  return w;
}

inline void write_ablation_csv(const AblationReport& report, const FeatureMask& mask,
                               const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path);
  out << "feature_index,feature_name,baseline,ablated,delta,eliminated\n";
  char buf[128];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%.4f,%.4f,%.4f", report.baseline, r.ablated, r.delta);
    out << r.feature << ',' << r.name << ',' << buf << ',' << (mask.keep[r.feature] ? 0 : 1) << '\n';
  }
}

inline void write_mask_file(const FeatureMask& mask, const std::vector<std::string>& names,
                            const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path);
  for (std::size_t i = 0; i < mask.features(); ++i) {
    if (mask.keep[i]) out << (i < names.size() ? names[i] : "f" + std::to_string(i)) << '\n';
  }
}

inline FeatureMask read_mask_file(const std::string& path, const std::vector<std::string>& names) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open mask " + path);
  FeatureMask mask{std::vector<bool>(names.size(), false)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    bool found = false;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == line) {
        mask.keep[i] = true;
        found = true;
      }
    }
    if (!found) throw DataError("mask names unknown feature '" + line + "'");
  }
  return mask;
}

}  // namespace tabfids
