#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabfids/data.hpp"
#include "tabfids/error.hpp"
#include "tabfids/fed.hpp"
#include "tabfids/preprocess.hpp"
#include "tabfids/synthetic.hpp"

namespace tabfids {

enum class RunMode { kFederated, kCentralized };

/// Declarative description of one experiment. Mirrors the JSON config:
///
///   {
///     "label": "TabFIDSv2",
///     "dataset": {"csv": "data.csv", "schema": "schema.json"}
///             | {"synthetic": {...SyntheticSpec keys...}},
///     "split": {"train": 0.8, "val": 0.1, "test": 0.1},
///     "preprocess": {"bootstrap": true, "temporal_window": 3},
///     "mode": "federated" | "centralized",
///     "aggregation": "fedavg" | "fedavg_bbsa",
///     "backbone": "cnn" | "resmlp",
///     "train": {"rounds": 20, "local_epochs": 1, "batch_size": 64,
///               "lr": 0.001, "threads": 0},
///     "ddfe": {"enabled": false, "epsilon": 0.005},
///     "output_dir": "out",
///     "seed": 0
///   }
struct RunConfig {
  std::string label;
  std::optional<std::string> csv_path;
  std::optional<std::string> schema_path;
  std::optional<SyntheticSpec> synthetic;
  SplitConfig split;
  bool bootstrap = false;
  std::size_t temporal_window = 1;
  RunMode mode = RunMode::kFederated;
  std::string backbone = "cnn";
  TrainConfig train;
  bool ddfe = false;
  double ddfe_epsilon = 0.005;
  std::string output_dir = "out";
  std::uint64_t seed = 0;

  std::string display_label() const {
    if (!label.empty()) return label;
    std::string s = mode == RunMode::kCentralized ? "Central" : "Federated";
    if (bootstrap) s += "+BStrap";
    if (temporal_window > 1) s += "+TempAv(" + std::to_string(temporal_window) + ")";
    if (mode == RunMode::kFederated && train.aggregation == Aggregation::kFedAvgBbsa) s += "+BBSA";
    if (ddfe) s += "+DDFE";
    return s;
  }
};

namespace detail {

// Applies "a.b.c=value" onto a JSON object; value parsed as JSON when
// possible, else taken as a string.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  nlohmann::json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty key");
    if (!node->is_object()) *node = nlohmann::json::object();
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

inline void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& allowed,
                           const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

}  // namespace detail

inline void apply_overrides(nlohmann::json& j, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) detail::apply_override(j, o);
}

/// Parses and validates a run config. Relative dataset paths are resolved
/// against `base_dir`.
inline RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  RunConfig c;
  try {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    detail::reject_unknown(j, {"label", "dataset", "split", "preprocess", "mode", "aggregation", "backbone",
                               "train", "ddfe", "output_dir", "seed"},
                           "config");
    c.label = j.value("label", std::string{});
    c.seed = j.value("seed", std::uint64_t{0});
    c.output_dir = j.value("output_dir", c.output_dir);

    const auto& ds = j.at("dataset");
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return (path.is_relative() && !base_dir.empty() ? base_dir / path : path).string();
    };
    if (ds.contains("synthetic")) {
      if (ds.contains("csv")) throw ConfigError("dataset must be either csv or synthetic, not both");
      c.synthetic = SyntheticSpec::from_json(ds["synthetic"]);
      if (!ds["synthetic"].contains("seed")) c.synthetic->seed = derive_seed(c.seed, "synthetic");
      validate(*c.synthetic);
    } else if (ds.contains("csv")) {
      c.csv_path = resolve(ds.at("csv").get<std::string>());
      c.schema_path = resolve(ds.at("schema").get<std::string>());
      for (const auto* p : {&*c.csv_path, &*c.schema_path}) {
        if (!std::filesystem::exists(*p)) throw ConfigError("file not found: " + *p);
      }
    } else {
      throw ConfigError("dataset needs a 'csv' or 'synthetic' entry");
    }

    if (j.contains("split")) {
      const auto& s = j["split"];
      detail::reject_unknown(s, {"train", "val", "test"}, "split");
      c.split.train = s.value("train", c.split.train);
      c.split.val = s.value("val", c.split.val);
      c.split.test = s.value("test", c.split.test);
    }
    c.split.seed = derive_seed(c.seed, "split");
    c.split.validate();

    if (j.contains("preprocess")) {
      const auto& p = j["preprocess"];
      detail::reject_unknown(p, {"bootstrap", "temporal_window"}, "preprocess");
      c.bootstrap = p.value("bootstrap", false);
      const auto r = p.value("temporal_window", std::int64_t{1});
      if (r < 1) throw ConfigError("temporal_window must be >= 1");
      c.temporal_window = static_cast<std::size_t>(r);
    }

    const std::string mode = j.value("mode", std::string("federated"));
    if (mode == "federated") {
      c.mode = RunMode::kFederated;
    } else if (mode == "centralized") {
      c.mode = RunMode::kCentralized;
    } else {
      throw ConfigError("unknown mode '" + mode + "' (expected federated|centralized)");
    }
    c.train.aggregation = parse_aggregation(j.value("aggregation", std::string("fedavg")));
    c.backbone = j.value("backbone", c.backbone);
    if (c.backbone != "cnn" && c.backbone != "resmlp") {
      throw ConfigError("unknown backbone '" + c.backbone + "' (expected cnn|resmlp)");
    }

    if (j.contains("train")) {
      const auto& t = j["train"];
      detail::reject_unknown(t, {"rounds", "local_epochs", "batch_size", "lr", "threads"}, "train");
      const auto signed_field = [&](const char* key, std::size_t fallback) {
        const auto v = t.value(key, static_cast<std::int64_t>(fallback));
        if (v < 0) throw ConfigError(std::string("train.") + key + " must be non-negative");
        return static_cast<std::size_t>(v);
      };
      c.train.rounds = signed_field("rounds", c.train.rounds);
      c.train.local_epochs = signed_field("local_epochs", c.train.local_epochs);
      c.train.batch_size = signed_field("batch_size", c.train.batch_size);
      c.train.threads = signed_field("threads", c.train.threads);
      c.train.lr = t.value("lr", c.train.lr);
    }
    c.train.seed = derive_seed(c.seed, "train");
    c.train.validate();

    if (j.contains("ddfe")) {
      const auto& d = j["ddfe"];
      detail::reject_unknown(d, {"enabled", "epsilon"}, "ddfe");
      c.ddfe = d.value("enabled", false);
      c.ddfe_epsilon = d.value("epsilon", c.ddfe_epsilon);
      if (!(c.ddfe_epsilon >= 0.0)) throw ConfigError("ddfe.epsilon must be >= 0");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
}

}  // namespace tabfids
