#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "tabfids/adam.hpp"
#include "tabfids/error.hpp"
#include "tabfids/metrics.hpp"
#include "tabfids/network.hpp"
#include "tabfids/preprocess.hpp"
#include "tabfids/rng.hpp"

namespace tabfids {

enum class Aggregation { kFedAvg, kFedAvgBbsa };

inline Aggregation parse_aggregation(const std::string& s) {
  if (s == "fedavg") return Aggregation::kFedAvg;
  if (s == "fedavg_bbsa") return Aggregation::kFedAvgBbsa;
  throw ConfigError("unknown aggregation '" + s + "' (expected fedavg|fedavg_bbsa)");
}

inline const char* to_string(Aggregation a) noexcept {
  return a == Aggregation::kFedAvg ? "fedavg" : "fedavg_bbsa";
}

struct TrainConfig {
  std::size_t rounds = 20;
  std::size_t local_epochs = 1;
  std::size_t batch_size = 64;
  double lr = 0.001;
  Aggregation aggregation = Aggregation::kFedAvg;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 -> TABFIDS_THREADS or hardware concurrency

  void validate() const {
    if (rounds < 1) throw ConfigError("rounds must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  }
};

/// Worker count: explicit setting, else $TABFIDS_THREADS, else hardware.
inline std::size_t worker_count(std::size_t requested, std::size_t tasks) {
  std::size_t n = requested;
  if (n == 0) {
    if (const char* env = std::getenv("TABFIDS_THREADS")) n = std::strtoul(env, nullptr, 10);
  }
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(n, tasks));
}

// Runs fn(i) for i in [0, count). Results must not depend on scheduling.
inline void parallel_for(std::size_t count, std::size_t threads,
                         const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = worker_count(threads, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Minibatch Adam over `data` for `epochs` passes; batch order is
/// reshuffled each epoch from `seed`.
inline void train_epochs(const ModelSpec& spec, BlockedWeights& w, AdamState& adam,
                         const Dataset& data, std::size_t epochs, std::size_t batch_size,
                         std::uint64_t seed) {
  if (epochs == 0) return;
  if (data.size() == 0) throw DataError("cannot train on an empty dataset");
  std::vector<std::size_t> idx(data.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(derive_seed(seed, e));
    rng.shuffle(idx.begin(), idx.end());
    for (std::size_t start = 0; start < idx.size(); start += batch_size) {
      const std::size_t end = std::min(idx.size(), start + batch_size);
      const Dataset batch = select_rows(data, std::span(idx).subspan(start, end - start));
      auto lg = loss_and_grad(spec, w, batch.x, batch.y);
      adam_step(w, lg.grads, adam);
    }
  }
}

struct NodeData {
  Dataset train;
  Dataset val;
};

struct NodeState {
  BlockedWeights weights;
  BlockedWeights snapshot;  // pre-aggregation copy, taken right before upload
  AdamState adam;
  std::size_t samples = 0;
};

inline std::uint64_t shuffle_seed(std::uint64_t seed, std::size_t node, std::size_t round,
                                  std::size_t phase) {
  return derive_seed(derive_seed(seed, "shuffle"), node, round, phase);
}

/// One local training pass for a node. Deterministic per
/// (seed, node, round, phase).
inline BlockedWeights local_train(const ModelSpec& spec, NodeState& node, const Dataset& train,
                                  const TrainConfig& cfg, std::size_t node_id,
                                  std::size_t round, std::size_t phase) {
  train_epochs(spec, node.weights, node.adam, train, cfg.local_epochs, cfg.batch_size,
               shuffle_seed(cfg.seed, node_id, round, phase));
  return node.weights;
}

struct Upload {
  const BlockedWeights& weights;
  std::size_t samples;
};

/// Sample-count weighted mean of every parameter.
inline BlockedWeights fedavg_aggregate(std::span<const Upload> uploads) {
  if (uploads.empty()) throw ShapeError("fedavg_aggregate: no uploads");
  std::uint64_t total = 0;
  for (const auto& u : uploads) {
    if (!u.weights.compatible(uploads.front().weights)) {
      throw ShapeError("fedavg_aggregate: incompatible uploads");
    }
    total += u.samples;
  }
  if (total == 0) throw ShapeError("fedavg_aggregate: total sample count is zero");
  BlockedWeights out = uploads.front().weights;
  for (std::size_t k = 0; k < uploads.size(); ++k) {
    const double coef = static_cast<double>(uploads[k].samples) / static_cast<double>(total);
    const auto& src = uploads[k].weights;
    for (std::size_t b = 0; b < out.block_count(); ++b) {
      for (std::size_t m = 0; m < out.blocks()[b].params.size(); ++m) {
        auto dst = out.blocks()[b].params[m].data();
        auto s = src.blocks()[b].params[m].data();
        if (k == 0) {
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = coef * s[i];
        } else {
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += coef * s[i];
        }
      }
    }
  }
  return out;
}

// Bit b set -> block b comes from the pre-aggregation (local) weights.
using BlockMask = std::uint32_t;

inline std::string mask_string(BlockMask mask, std::size_t blocks) {
  std::string s(blocks, 'G');
  for (std::size_t b = 0; b < blocks; ++b) {
    if (mask & (BlockMask{1} << b)) s[b] = 'L';
  }
  return s;
}

inline BlockedWeights combine_blocks(const BlockedWeights& pre, const BlockedWeights& post,
                                     BlockMask mask) {
  BlockedWeights out = post;
  for (std::size_t b = 0; b < out.block_count(); ++b) {
    if (mask & (BlockMask{1} << b)) out.blocks()[b].params = pre.blocks()[b].params;
  }
  return out;
}

struct BbsaResult {
  BlockedWeights combined;
  BlockMask mask = 0;
  std::size_t evaluations = 0;
  double accuracy = 0.0;
  double pre_accuracy = 0.0;   // all-local candidate
  double post_accuracy = 0.0;  // all-global candidate
};

inline constexpr std::size_t kBbsaExhaustiveLimit = 8;

/// Picks, per block, local (pre-aggregation) or retrained (post-aggregation)
/// weights by attack accuracy on the node's validation set.
///
/// Up to 8 blocks every combination is scored and the best kept; ties go
/// to the candidate with fewer local blocks, then the lower mask. Larger
/// models use one greedy pass from all-post, flipping a block to local
/// only on strict improvement.
inline BbsaResult bbsa_select(const ModelSpec& spec, const BlockedWeights& pre,
                              const BlockedWeights& post, const Dataset& val) {
  if (!pre.compatible(post)) throw ShapeError("bbsa_select: pre/post shapes differ");
  check_weights(spec, post);
  if (val.size() == 0) throw DataError("bbsa_select: empty validation set");
  const std::size_t blocks = post.block_count();

  BbsaResult r;
  auto score = [&](BlockMask mask) {
    ++r.evaluations;
    return attack_accuracy(spec, combine_blocks(pre, post, mask), val);
  };
  const BlockMask all_pre = blocks >= 32 ? ~BlockMask{0} : (BlockMask{1} << blocks) - 1;

  if (blocks <= kBbsaExhaustiveLimit) {
    double best = -1.0;
    BlockMask best_mask = 0;
    for (BlockMask mask = 0; mask <= all_pre; ++mask) {
      const double acc = score(mask);
      if (mask == 0) r.post_accuracy = acc;
      if (mask == all_pre) r.pre_accuracy = acc;
      const bool better =
          acc > best || (acc == best && std::popcount(mask) < std::popcount(best_mask));
      if (better) {
        best = acc;
        best_mask = mask;
      }
    }
    r.mask = best_mask;
    r.accuracy = best;
  } else {
    r.post_accuracy = score(0);
    double best = r.post_accuracy;
    BlockMask mask = 0;
    for (std::size_t b = 0; b < blocks; ++b) {
      const BlockMask trial = mask | (BlockMask{1} << b);
      const double acc = score(trial);
      if (acc > best) {
        best = acc;
        mask = trial;
      }
    }
    r.mask = mask;
    r.accuracy = best;
    r.pre_accuracy = attack_accuracy(spec, pre, val);
  }
  r.combined = combine_blocks(pre, post, r.mask);
  return r;
}

struct RoundLog {
  std::size_t round = 0;
  std::size_t node = 0;
  double pre_accuracy = 0.0;       // local snapshot, before aggregation
  double post_accuracy = 0.0;      // retrained from the global model
  double deployed_accuracy = 0.0;  // what the node keeps (BBSA-combined or post)
  std::string bbsa_mask;           // empty in plain fedavg mode
  std::size_t bbsa_evaluations = 0;
  std::uint64_t snapshot_fingerprint = 0;
  std::uint64_t upload_fingerprint = 0;
  double wall_ms = 0.0;
};

struct FederatedResult {
  BlockedWeights global;
  std::vector<BlockedWeights> deployed;
  std::vector<RoundLog> logs;
};

/// Full federated schedule. Each round:
///   local train -> snapshot -> upload -> FedAvg -> distribute ->
///   retrain from global -> [BBSA] -> upload -> FedAvg.
/// Nodes keep their post-round weights as the start of the next round.
inline FederatedResult run_federated(const ModelSpec& spec, const TrainConfig& cfg,
                                     std::span<const NodeData> nodes) {
  cfg.validate();
  if (nodes.empty()) throw ConfigError("run_federated: no nodes");
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (nodes[k].train.size() == 0) {
      throw DataError("node " + std::to_string(k) + " has no training data");
    }
  }
  const std::size_t count = nodes.size();
  const BlockedWeights init = build_model(spec, derive_seed(cfg.seed, "init"));

  std::vector<NodeState> state(count);
  for (std::size_t k = 0; k < count; ++k) {
    state[k].weights = init;
    state[k].adam = AdamState::for_weights(init, cfg.lr);
    state[k].samples = nodes[k].train.size();
  }

  auto aggregate = [&](auto&& pick) {
    std::vector<Upload> uploads;
    uploads.reserve(count);
    for (std::size_t k = 0; k < count; ++k) uploads.push_back({pick(k), state[k].samples});
    return fedavg_aggregate(uploads);
  };

  FederatedResult result;
  result.global = init;
  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    std::vector<RoundLog> logs(count);
    std::vector<std::chrono::steady_clock::duration> elapsed(count);

    parallel_for(count, cfg.threads, [&](std::size_t k) {
      const auto t0 = std::chrono::steady_clock::now();
      local_train(spec, state[k], nodes[k].train, cfg, k, round, 0);
      state[k].snapshot = state[k].weights;
      elapsed[k] = std::chrono::steady_clock::now() - t0;
    });
    const BlockedWeights global = aggregate([&](std::size_t k) -> const BlockedWeights& {
      logs[k].upload_fingerprint = state[k].snapshot.fingerprint();
      return state[k].snapshot;
    });

    parallel_for(count, cfg.threads, [&](std::size_t k) {
      const auto t0 = std::chrono::steady_clock::now();
      auto& log = logs[k];
      log.round = round;
      log.node = k;
      log.snapshot_fingerprint = state[k].snapshot.fingerprint();
      state[k].weights = global;
      local_train(spec, state[k], nodes[k].train, cfg, k, round, 1);
      const bool have_val = nodes[k].val.size() != 0;
      if (cfg.aggregation == Aggregation::kFedAvgBbsa) {
        if (!have_val) throw DataError("node " + std::to_string(k) + " has no validation data for BBSA");
        auto pick = bbsa_select(spec, state[k].snapshot, state[k].weights, nodes[k].val);
        log.pre_accuracy = pick.pre_accuracy;
        log.post_accuracy = pick.post_accuracy;
        log.deployed_accuracy = pick.accuracy;
        log.bbsa_mask = mask_string(pick.mask, spec.blocks.size());
        log.bbsa_evaluations = pick.evaluations;
        state[k].weights = std::move(pick.combined);
      } else if (have_val) {
        log.pre_accuracy = attack_accuracy(spec, state[k].snapshot, nodes[k].val);
        log.post_accuracy = attack_accuracy(spec, state[k].weights, nodes[k].val);
        log.deployed_accuracy = log.post_accuracy;
      }
      elapsed[k] += std::chrono::steady_clock::now() - t0;
    });
    result.global = aggregate([&](std::size_t k) -> const BlockedWeights& { return state[k].weights; });

    for (std::size_t k = 0; k < count; ++k) {
      logs[k].wall_ms = std::chrono::duration<double, std::milli>(elapsed[k]).count();
      result.logs.push_back(std::move(logs[k]));
    }
  }
  for (auto& s : state) result.deployed.push_back(std::move(s.weights));
  return result;
}

/// Single model on pooled data, no aggregation. Uses the same schedule
/// (two passes per round) and RNG streams as a one-node federated run.
inline BlockedWeights run_centralized(const ModelSpec& spec, const TrainConfig& cfg,
                                      const Dataset& train) {
  cfg.validate();
  if (train.size() == 0) throw DataError("run_centralized: empty training data");
  NodeState node;
  node.weights = build_model(spec, derive_seed(cfg.seed, "init"));
  node.adam = AdamState::for_weights(node.weights, cfg.lr);
  node.samples = train.size();
  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    for (std::size_t phase = 0; phase < 2; ++phase) {
      local_train(spec, node, train, cfg, 0, round, phase);
    }
  }
  return node.weights;
}

// One row per node, round and phase; wall time is left out so the file
// is reproducible.
inline void write_round_logs(const std::vector<RoundLog>& logs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path);
  out << "round,node,phase,attack_accuracy,bbsa_mask\n";
  char buf[64];
  for (const auto& l : logs) {
    const std::pair<const char*, double> rows[] = {
        {"pre", l.pre_accuracy}, {"post", l.post_accuracy}, {"deployed", l.deployed_accuracy}};
    for (const auto& [phase, acc] : rows) {
      std::snprintf(buf, sizeof buf, "%.6f", acc);
      out << l.round << ',' << l.node << ',' << phase << ',' << buf << ',' << l.bbsa_mask << '\n';
    }
  }
}

}  // namespace tabfids
