#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tabfids/ddfe.hpp"
#include "tabfids/error.hpp"
#include "tabfids/fed.hpp"
#include "tabfids/metrics.hpp"
#include "tabfids/network.hpp"
#include "tabfids/preprocess.hpp"

namespace tabfids {

/// A node's model as it runs at inference time: its own normalization
/// and, after feature elimination, its input mask.
struct DeployedModel {
  BlockedWeights weights;
  NormStats norm;
  std::optional<FeatureMask> mask;

  Dataset prepare(const LabeledStream& raw) const {
    Dataset d = to_dataset(raw, &norm);
    if (mask) d = apply_mask(*mask, std::move(d));
    return d;
  }
};

/// rows = training attack (node), cols = test attack class.
struct TransferMatrix {
  std::vector<std::string> classes;  // attack names, size A
  std::vector<std::vector<double>> accuracy;

  std::size_t size() const noexcept { return accuracy.size(); }
  double at(std::size_t train, std::size_t test) const { return accuracy.at(train).at(test); }
};

inline TransferMatrix transfer_matrix(const ModelSpec& spec, const std::vector<DeployedModel>& models,
                                      const std::vector<LabeledStream>& class_tests,
                                      const std::vector<std::string>& names, std::size_t threads = 1) {
  if (models.size() != class_tests.size()) {
    throw ShapeError("transfer_matrix: " + std::to_string(models.size()) + " models for " +
                     std::to_string(class_tests.size()) + " test sets");
  }
  const std::size_t a = models.size();
  TransferMatrix m{names, std::vector<std::vector<double>>(a, std::vector<double>(a, 0.0))};
  parallel_for(a, threads, [&](std::size_t i) {
    for (std::size_t j = 0; j < a; ++j) {
      m.accuracy[i][j] = attack_accuracy(spec, models[i].weights, models[i].prepare(class_tests[j]));
    }
  });
  return m;
}

struct TierThresholds {
  double transferable = 0.7;
  double high = 0.8;
  double very_high = 0.9;
};

struct PairSummary {
  std::size_t total = 0;
  std::size_t very_high = 0;  // >= 0.9
  std::size_t high = 0;       // [0.8, 0.9)
  std::size_t moderate = 0;   // [0.7, 0.8)
  double localized = 0.0;     // mean of the diagonal
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (train, test), 0-based
};

/// Off-diagonal entries at or above the transfer threshold, binned by
/// tier. Boundary values go to the higher tier.
inline PairSummary classify_pairs(const TransferMatrix& m, TierThresholds t = {}) {
  PairSummary s;
  const std::size_t a = m.size();
  if (a == 0) throw DataError("classify_pairs: empty matrix");
  double diag = 0.0;
  for (std::size_t i = 0; i < a; ++i) {
    if (m.accuracy[i].size() != a) throw DataError("classify_pairs: matrix is not square");
    diag += m.accuracy[i][i];
    for (std::size_t j = 0; j < a; ++j) {
      if (i == j) continue;
      const double v = m.accuracy[i][j];
      if (v < t.transferable) continue;
      ++s.total;
      s.pairs.emplace_back(i, j);
      if (v >= t.very_high) {
        ++s.very_high;
      } else if (v >= t.high) {
        ++s.high;
      } else {
        ++s.moderate;
      }
    }
  }
  s.localized = diag / static_cast<double>(a);
  return s;
}

struct Occurrence {
  std::vector<std::size_t> as_train;
  std::vector<std::size_t> as_test;
};

inline Occurrence train_test_occurrence(const PairSummary& s, std::size_t attacks) {
  Occurrence o{std::vector<std::size_t>(attacks, 0), std::vector<std::size_t>(attacks, 0)};
  for (auto [train, test] : s.pairs) {
    ++o.as_train.at(train);
    ++o.as_test.at(test);
  }
  return o;
}

inline std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline const char* kSummaryHeader = "Approach,Total,>90%,80-90%,70-80%,Localized Accr %";

inline std::string summary_row(const std::string& label, const PairSummary& s) {
  std::ostringstream out;
  out << label << ',' << s.total << ',' << s.very_high << ',' << s.high << ',' << s.moderate << ','
      << fixed4(100.0 * s.localized);
  return out.str();
}

struct ReportPaths {
  std::string matrix = "matrix.csv";
  std::string summary = "summary.csv";
  std::string occurrence = "occurrence.csv";
  std::string heatmap = "heatmap.csv";
};

/// Writes the matrix, the tier summary, per-class occurrence counts
/// and a long-format heatmap file into `dir`.
inline void export_reports(const TransferMatrix& m, const PairSummary& s, const std::string& label,
                           const std::string& dir, const ReportPaths& paths = {}) {
  auto open = [&](const std::string& name) {
    std::ofstream out(dir + "/" + name, std::ios::binary);
    if (!out) throw RuntimeError("cannot write " + dir + "/" + name);
    return out;
  };
  const std::size_t a = m.size();
  {
    auto out = open(paths.matrix);
    out << "train\\test";
    for (const auto& c : m.classes) out << ',' << c;
    out << '\n';
    for (std::size_t i = 0; i < a; ++i) {
      out << m.classes[i];
      for (std::size_t j = 0; j < a; ++j) out << ',' << fixed4(m.accuracy[i][j]);
      out << '\n';
    }
  }
  {
    auto out = open(paths.summary);
    out << kSummaryHeader << '\n' << summary_row(label, s) << '\n';
  }
  {
    const auto occ = train_test_occurrence(s, a);
    auto out = open(paths.occurrence);
    out << "Attack";
    for (const auto& c : m.classes) out << ',' << c;
    out << "\nPresent as Train Attack";
    for (auto n : occ.as_train) out << ',' << n;
    out << "\nPresent as Test Attack";
    for (auto n : occ.as_test) out << ',' << n;
    out << '\n';
  }
  {
    auto out = open(paths.heatmap);
    out << "train_class,test_class,accuracy\n";
    for (std::size_t i = 0; i < a; ++i) {
      for (std::size_t j = 0; j < a; ++j) {
        out << m.classes[i] << ',' << m.classes[j] << ',' << fixed4(m.accuracy[i][j]) << '\n';
      }
    }
  }
}

inline TransferMatrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  TransferMatrix m;
  if (!std::getline(in, line)) throw DataError(path + ": empty matrix file");
  auto header = detail::split_csv_line(line);
  for (std::size_t i = 1; i < header.size(); ++i) m.classes.emplace_back(header[i]);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": wrong field count");
    }
    std::vector<double> row;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      auto v = detail::parse_double(cells[i]);
      if (!v) throw DataError(path + ":" + std::to_string(line_no) + ": bad value");
      row.push_back(*v);
    }
    m.accuracy.push_back(std::move(row));
  }
  if (m.accuracy.size() != m.classes.size()) throw DataError(path + ": matrix is not square");
  return m;
}

}  // namespace tabfids
