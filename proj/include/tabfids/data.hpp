#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabfids/error.hpp"

namespace tabfids {

inline constexpr int kBenign = 0;

struct Sample {
  std::vector<double> features;
  int label = kBenign;
  std::uint64_t order = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

inline bool iequals(std::string_view a, std::string_view b) noexcept {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

/// Class names <-> ids. Id 0 is always the benign class.
class ClassRegistry {
 public:
  ClassRegistry() : names_{"BENIGN"} {}

  static bool is_benign_name(std::string_view name) noexcept {
    return iequals(name, "BENIGN");
  }

  std::optional<int> find(std::string_view name) const {
    if (is_benign_name(name)) return kBenign;
    for (std::size_t i = 1; i < names_.size(); ++i) {
      if (names_[i] == name) return static_cast<int>(i);
    }
    return std::nullopt;
  }

  int add(std::string_view name) {
    if (auto id = find(name)) return *id;
    names_.emplace_back(name);
    return static_cast<int>(names_.size() - 1);
  }

  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const noexcept { return names_.size(); }
  std::size_t attack_count() const noexcept { return names_.size() - 1; }
  const std::vector<std::string>& names() const noexcept { return names_; }

  friend bool operator==(const ClassRegistry&, const ClassRegistry&) = default;

 private:
  std::vector<std::string> names_;
};

struct LabeledStream {
  std::vector<std::string> feature_names;
  ClassRegistry classes;
  std::vector<Sample> samples;

  std::size_t feature_count() const noexcept { return feature_names.size(); }
  std::size_t size() const noexcept { return samples.size(); }

  std::size_t count(int label) const noexcept {
    return static_cast<std::size_t>(std::ranges::count_if(
        samples, [label](const Sample& s) { return s.label == label; }));
  }

  // Same metadata, no samples.
  LabeledStream empty_like() const { return {feature_names, classes, {}}; }
};

/// Feature columns to read plus an optional fixed class table. When the
/// class table is empty, classes are registered in order of appearance.
struct Schema {
  std::vector<std::string> features;
  std::string label_column = "Label";
  std::vector<std::string> classes;  // index = id; [0] must be benign

  static Schema from_json(const nlohmann::json& j) {
    Schema s;
    try {
      s.features = j.at("features").get<std::vector<std::string>>();
      if (j.contains("label_column")) s.label_column = j["label_column"].get<std::string>();
      if (j.contains("classes")) {
        // name -> id object
        std::map<int, std::string> by_id;
        for (const auto& [name, id] : j["classes"].items()) by_id[id.get<int>()] = name;
        int expect = 0;
        for (const auto& [id, name] : by_id) {
          if (id != expect++) throw ConfigError("schema class ids must be 0..N-1");
          s.classes.push_back(name);
        }
        if (s.classes.empty() || !ClassRegistry::is_benign_name(s.classes[0])) {
          throw ConfigError("schema class id 0 must be BENIGN");
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid schema: ") + e.what());
    }
    if (s.features.empty()) throw ConfigError("schema lists no feature columns");
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["features"] = features;
    j["label_column"] = label_column;
    if (!classes.empty()) {
      nlohmann::json c = nlohmann::json::object();
      for (std::size_t i = 0; i < classes.size(); ++i) c[classes[i]] = i;
      j["classes"] = c;
    }
    return j;
  }

  static Schema load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open schema " + path);
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("schema " + path + ": " + e.what());
    }
  }
};

struct SanitizationReport {
  std::size_t rows = 0;
  std::size_t replaced = 0;                 // NaN/Inf cells set to 0.0
  std::map<std::string, std::size_t> per_column;

  std::string to_text() const {
    std::ostringstream out;
    out << "rows " << rows << "\nreplaced_non_finite " << replaced << "\n";
    for (const auto& [col, n] : per_column) out << "column " << col << " " << n << "\n";
    return out.str();
  }
};

struct CsvLoad {
  LabeledStream stream;
  SanitizationReport report;
};

namespace detail {

inline std::string_view trim(std::string_view s) noexcept {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ptr != s.data() + s.size()) return std::nullopt;
  if (ec == std::errc::result_out_of_range) {
    return s.front() == '-' ? -HUGE_VAL : HUGE_VAL;
  }
  if (ec != std::errc{}) return std::nullopt;
  return v;
}

}  // namespace detail

/// Reads a header-first CSV. Non-finite feature cells become 0.0 and are
/// counted in the report.
inline CsvLoad load_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);

  auto column = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw DataError(path + ": missing column '" + name + "'");
  };
  const std::size_t label_col = column(schema.label_column);
  std::vector<std::size_t> feature_cols;
  for (const auto& f : schema.features) feature_cols.push_back(column(f));

  CsvLoad result;
  result.stream.feature_names = schema.features;
  ClassRegistry& classes = result.stream.classes;
  const bool fixed_classes = !schema.classes.empty();
  for (std::size_t i = 1; i < schema.classes.size(); ++i) classes.add(schema.classes[i]);

  std::size_t line_no = 1;
  std::uint64_t order = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(cells.size()));
    }
    Sample s;
    s.order = ++order;
    s.features.reserve(feature_cols.size());
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      const auto cell = cells[feature_cols[k]];
      auto v = detail::parse_double(cell);
      if (!v) {
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": cannot parse '" + std::string(cell) +
                        "' in column '" + schema.features[k] + "'");
      }
      if (!std::isfinite(*v)) {
        *v = 0.0;
        ++result.report.replaced;
        ++result.report.per_column[schema.features[k]];
      }
      s.features.push_back(*v);
    }
    const auto label = cells[label_col];
    if (auto id = classes.find(label)) {
      s.label = *id;
    } else if (fixed_classes) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": unknown label '" + std::string(label) + "'");
    } else {
      s.label = classes.add(label);
    }
    result.stream.samples.push_back(std::move(s));
  }
  result.report.rows = result.stream.samples.size();
  return result;
}

inline std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// Shortest round-trip formatting, label as the final column.
inline void write_csv(const LabeledStream& stream, const std::string& path,
                      const std::string& label_column = "Label") {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path);
  for (const auto& f : stream.feature_names) out << f << ',';
  out << label_column << '\n';
  for (const auto& s : stream.samples) {
    for (double v : s.features) out << format_double(v) << ',';
    out << stream.classes.name(s.label) << '\n';
  }
  if (!out) throw RuntimeError("failed writing " + path);
}

}  // namespace tabfids
