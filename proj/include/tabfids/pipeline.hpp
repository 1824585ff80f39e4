#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabfids/checkpoint.hpp"
#include "tabfids/config.hpp"
#include "tabfids/data.hpp"
#include "tabfids/ddfe.hpp"
#include "tabfids/error.hpp"
#include "tabfids/fed.hpp"
#include "tabfids/model.hpp"
#include "tabfids/preprocess.hpp"
#include "tabfids/synthetic.hpp"
#include "tabfids/transfer.hpp"

namespace tabfids {

namespace fs = std::filesystem;

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + p.string());
  out << bytes;
  if (!out) throw RuntimeError("failed writing " + p.string());
}

inline std::string file_hash(const fs::path& p) { return hex64(fnv1a64(read_file(p))); }

/// Everything a run needs after load -> split -> partition -> preprocess.
struct PreparedData {
  LabeledStream full;
  SanitizationReport sanitization;
  std::vector<std::string> warnings;
  std::vector<NodePartition> nodes;        // preprocessed, norm fitted
  std::vector<LabeledStream> class_tests;  // temporally averaged, raw scale
  std::vector<std::string> attack_names;
};

inline LabeledStream load_dataset(const RunConfig& cfg, SanitizationReport* report) {
  if (cfg.synthetic) return gen_synthetic(*cfg.synthetic);
  auto loaded = load_csv(*cfg.csv_path, Schema::load(*cfg.schema_path));
  if (report != nullptr) *report = loaded.report;
  return std::move(loaded.stream);
}

// Temporal averaging runs on the time-ordered streams first; bootstrap
// resampling then balances the averaged training samples.
inline void preprocess_train_val(const RunConfig& cfg, LabeledStream& train, LabeledStream& val,
                                 std::uint64_t bootstrap_seed, std::vector<std::string>& warnings) {
  train = temporal_average(train, cfg.temporal_window, &warnings);
  val = temporal_average(val, cfg.temporal_window, &warnings);
  if (cfg.bootstrap) train = bootstrap_balance(std::move(train), bootstrap_seed);
}

inline PreparedData prepare_data(const RunConfig& cfg) {
  PreparedData out;
  out.full = load_dataset(cfg, &out.sanitization);
  const std::size_t attacks = out.full.classes.attack_count();
  auto parts = split(out.full, cfg.split);
  auto partitioning = partition_nodes(parts.train, parts.val, parts.test, attacks);
  const std::uint64_t boot = derive_seed(cfg.seed, "bootstrap");

  if (cfg.mode == RunMode::kCentralized) {
    // One pooled dataset per attack: all benign plus that attack.
    for (auto& node : partitioning.nodes) {
      LabeledStream train = parts.train.empty_like(), val = parts.val.empty_like();
      for (const auto& s : parts.train.samples) {
        if (s.label == kBenign || s.label == node.attack_class) train.samples.push_back(s);
      }
      for (const auto& s : parts.val.samples) {
        if (s.label == kBenign || s.label == node.attack_class) val.samples.push_back(s);
      }
      node.train = std::move(train);
      node.val = std::move(val);
    }
  }
  for (auto& node : partitioning.nodes) {
    preprocess_train_val(cfg, node.train, node.val, derive_seed(boot, node.node_id), out.warnings);
    if (node.train.count(kBenign) == 0 || node.train.size() == node.train.count(kBenign)) {
      throw DataError("node " + std::to_string(node.node_id) +
                      " lacks benign or attack training samples after preprocessing");
    }
    node.norm = fit_norm(node.train);
  }
  for (auto& t : partitioning.class_tests) t = temporal_average(t, cfg.temporal_window, &out.warnings);
  out.nodes = std::move(partitioning.nodes);
  out.class_tests = std::move(partitioning.class_tests);
  for (std::size_t a = 1; a <= attacks; ++a) out.attack_names.push_back(out.full.classes.name(static_cast<int>(a)));
  return out;
}

struct RunOutcome {
  TransferMatrix matrix;
  PairSummary summary;
  std::vector<RoundLog> logs;
  std::vector<DeployedModel> models;
  fs::path output_dir;
};

namespace detail {

struct StagingDir {
  fs::path final_dir;
  fs::path tmp;
  bool committed = false;

  explicit StagingDir(fs::path dir) : final_dir(std::move(dir)) {
    tmp = final_dir;
    tmp += ".partial";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
  }
  ~StagingDir() {
    if (!committed) {
      std::error_code ec;
      fs::remove_all(tmp, ec);
    }
  }
  void commit() {
    if (fs::exists(final_dir)) {
      if (!fs::exists(final_dir / "manifest.json")) {
        throw RuntimeError("refusing to replace " + final_dir.string() +
                           ": it exists and is not a run directory");
      }
      fs::remove_all(final_dir);
    }
    fs::rename(tmp, final_dir);
    committed = true;
  }
};

inline void write_manifest(const fs::path& dir, const std::string& config_dump) {
  nlohmann::json files = nlohmann::json::object();
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir).generic_string();
    if (rel == "manifest.json") continue;
    files[rel] = file_hash(entry.path());
  }
  nlohmann::json m{{"format", "tabfids-run-1"},
                   {"config_hash", hex64(fnv1a64(config_dump))},
                   {"files", files}};
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

}  // namespace detail

inline ModelSpec model_for(const RunConfig& cfg, std::size_t features) {
  return make_backbone(cfg.backbone, features);
}

/// load -> split -> partition -> preprocess -> train -> evaluate -> export.
/// Outputs are staged and only appear under output_dir on success.
inline RunOutcome cmd_run(const RunConfig& cfg, const nlohmann::json& raw_config) {
  auto data = prepare_data(cfg);
  const std::size_t attacks = data.nodes.size();
  const ModelSpec spec = model_for(cfg, data.full.feature_count());

  std::vector<NodeData> node_data;
  for (const auto& node : data.nodes) {
    node_data.push_back({to_dataset(node.train, &node.norm), to_dataset(node.val, &node.norm)});
  }

  RunOutcome outcome;
  std::vector<BlockedWeights> trained(attacks);
  BlockedWeights global;
  if (cfg.mode == RunMode::kFederated) {
    auto fed = run_federated(spec, cfg.train, node_data);
    trained = std::move(fed.deployed);
    global = std::move(fed.global);
    outcome.logs = std::move(fed.logs);
  } else {
    parallel_for(attacks, cfg.train.threads, [&](std::size_t k) {
      trained[k] = run_centralized(spec, cfg.train, node_data[k].train);
    });
  }

  outcome.models.resize(attacks);
  std::vector<AblationReport> ablations(attacks);
  parallel_for(attacks, cfg.train.threads, [&](std::size_t k) {
    auto& model = outcome.models[k];
    model.norm = data.nodes[k].norm;
    model.weights = trained[k];
    if (cfg.ddfe) {
      ablations[k] = ddfe_scan(spec, model.weights, node_data[k].val, data.full.feature_names);
      model.mask = ddfe_reduce(ablations[k], cfg.ddfe_epsilon);
      model.weights = ddfe_finetune(spec, model.weights, *model.mask, node_data[k].train, cfg.train);
    }
  });

  outcome.matrix = transfer_matrix(spec, outcome.models, data.class_tests, data.attack_names, cfg.train.threads);
  outcome.summary = classify_pairs(outcome.matrix);

  const std::string config_dump = raw_config.dump(2) + "\n";
  detail::StagingDir stage(cfg.output_dir);
  const fs::path& dir = stage.tmp;
  write_file(dir / "config.json", config_dump);
  export_reports(outcome.matrix, outcome.summary, cfg.display_label(), dir.string());
  if (cfg.mode == RunMode::kFederated) write_round_logs(outcome.logs, (dir / "round_log.csv").string());
  write_file(dir / "sanitization.txt", data.sanitization.to_text());
  {
    std::string w;
    for (const auto& line : data.warnings) w += line + "\n";
    write_file(dir / "warnings.txt", w);
  }
  fs::create_directories(dir / "checkpoints");
  if (cfg.mode == RunMode::kFederated) save_checkpoint(global, (dir / "checkpoints" / "global.ftw").string());
  for (std::size_t k = 0; k < attacks; ++k) {
    save_checkpoint(outcome.models[k].weights,
                    (dir / "checkpoints" / ("node" + std::to_string(k) + ".ftw")).string());
    if (cfg.ddfe) {
      write_ablation_csv(ablations[k], *outcome.models[k].mask,
                         (dir / ("ablation_node" + std::to_string(k) + ".csv")).string());
      write_mask_file(*outcome.models[k].mask, data.full.feature_names,
                      (dir / ("mask_node" + std::to_string(k) + ".txt")).string());
    }
  }
  detail::write_manifest(dir, config_dump);
  stage.commit();
  outcome.output_dir = cfg.output_dir;
  return outcome;
}

struct DdfeOutcome {
  AblationReport report;
  FeatureMask mask;
  BlockedWeights finetuned;
  double baseline = 0.0;
  double finetuned_accuracy = 0.0;
};

/// Feature elimination for one node of a trained run: scan on the node's
/// validation split, reduce, fine-tune, write report, mask and checkpoint.
inline DdfeOutcome cmd_ddfe(const RunConfig& cfg, const std::string& checkpoint, std::size_t node,
                            double epsilon, const fs::path& out_dir) {
  auto data = prepare_data(cfg);
  if (node >= data.nodes.size()) {
    throw ConfigError("node " + std::to_string(node) + " out of range (have " +
                      std::to_string(data.nodes.size()) + ")");
  }
  const ModelSpec spec = model_for(cfg, data.full.feature_count());
  const BlockedWeights w = load_checkpoint(checkpoint);
  try {
    check_weights(spec, w);
  } catch (const ShapeError& e) {
    throw DataError("checkpoint does not match the configured backbone: " + std::string(e.what()));
  }
  const auto& part = data.nodes[node];
  const Dataset train = to_dataset(part.train, &part.norm);
  const Dataset val = to_dataset(part.val, &part.norm);

  DdfeOutcome out;
  out.report = ddfe_scan(spec, w, val, data.full.feature_names);
  out.baseline = out.report.baseline;
  out.mask = ddfe_reduce(out.report, epsilon);
  out.finetuned = ddfe_finetune(spec, w, out.mask, train, cfg.train);
  out.finetuned_accuracy = attack_accuracy(spec, out.finetuned, apply_mask(out.mask, val));

  fs::create_directories(out_dir);
  write_ablation_csv(out.report, out.mask, (out_dir / "ablation.csv").string());
  write_mask_file(out.mask, data.full.feature_names, (out_dir / "mask.txt").string());
  save_checkpoint(out.finetuned, (out_dir / "finetuned.ftw").string());
  return out;
}

struct GenDataOutcome {
  fs::path csv;
  fs::path schema;
  fs::path ground_truth;
  std::size_t rows = 0;
};

/// Writes data.csv, schema.json and ground_truth.json for a synthetic spec.
inline GenDataOutcome cmd_gen_data(const SyntheticSpec& spec, const fs::path& out_dir) {
  const auto stream = gen_synthetic(spec);
  fs::create_directories(out_dir);
  GenDataOutcome out{out_dir / "data.csv", out_dir / "schema.json", out_dir / "ground_truth.json",
                     stream.size()};
  write_csv(stream, out.csv.string());
  Schema schema;
  schema.features = stream.feature_names;
  schema.classes = stream.classes.names();
  write_file(out.schema, schema.to_json().dump(2) + "\n");

  nlohmann::json pairs = nlohmann::json::array();
  for (auto [a, b] : engineered_pairs(spec)) pairs.push_back({stream.classes.name(a), stream.classes.name(b)});
  nlohmann::json gt{{"spec", spec.to_json()}, {"transferable_pairs", pairs}};
  write_file(out.ground_truth, gt.dump(2) + "\n");
  return out;
}

/// Checks the manifest hashes and renders the run summary.
inline std::string cmd_report(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest unreadable: " + std::string(e.what()));
  }
  if (manifest.value("format", std::string{}) != "tabfids-run-1" || !manifest.contains("files")) {
    throw DataError("manifest has an unexpected format");
  }
  const std::string config_dump = read_file(dir / "config.json");
  if (manifest.value("config_hash", std::string{}) != hex64(fnv1a64(config_dump))) {
    throw DataError("integrity error: config hash mismatch");
  }
  for (const auto& [name, hash] : manifest["files"].items()) {
    const fs::path p = dir / name;
    if (!fs::exists(p)) throw DataError("integrity error: missing " + name);
    if (file_hash(p) != hash.get<std::string>()) throw DataError("integrity error: " + name + " was modified");
  }

  std::istringstream summary(read_file(dir / "summary.csv"));
  std::string header, row;
  std::getline(summary, header);
  std::vector<std::string> cols, vals;
  for (auto c : detail::split_csv_line(header)) cols.emplace_back(c);
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-28s %6s %6s %8s %8s %18s\n", cols.at(0).c_str(), cols.at(1).c_str(),
                cols.at(2).c_str(), cols.at(3).c_str(), cols.at(4).c_str(), cols.at(5).c_str());
  out << buf;
  while (std::getline(summary, row)) {
    if (row.empty()) continue;
    vals.clear();
    for (auto c : detail::split_csv_line(row)) vals.emplace_back(c);
    if (vals.size() != cols.size()) throw DataError("summary.csv row has wrong field count");
    std::snprintf(buf, sizeof buf, "%-28s %6s %6s %8s %8s %18s\n", vals[0].c_str(), vals[1].c_str(),
                  vals[2].c_str(), vals[3].c_str(), vals[4].c_str(), vals[5].c_str());
    out << buf;
  }
  return out.str();
}

}  // namespace tabfids
