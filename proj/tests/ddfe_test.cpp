#include <gtest/gtest.h>

#include "test_util.hpp"

namespace tabfids {
namespace {

struct Fixture {
  ModelSpec spec;
  BlockedWeights w;
  NodeData data;
};

Fixture trained_resmlp(std::size_t features, std::uint64_t seed) {
  Fixture f{resmlp_backbone(features, 16), {}, testing::separable_node(features, 256, 128, seed)};
  f.w = build_model(f.spec, seed);
  auto adam = AdamState::for_weights(f.w);
  train_epochs(f.spec, f.w, adam, f.data.train, 5, 32, seed);
  return f;
}

AblationReport report_with(std::vector<double> deltas) {
  AblationReport r{0.9, {}};
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    r.rows.push_back({i, "f" + std::to_string(i), 0.9 - deltas[i], deltas[i]});
  }
  return r;
}

TEST(DdfeScanTest, AlreadyZeroColumnHasNoEffect) {
  auto f = trained_resmlp(6, 1);
  for (std::size_t r = 0; r < f.data.val.size(); ++r) f.data.val.x(r, 4) = 0.0;
  const auto rep = ddfe_scan(f.spec, f.w, f.data.val);
  EXPECT_EQ(rep.rows[4].delta, 0.0);
  EXPECT_EQ(rep.rows[4].ablated, rep.baseline);
}

TEST(DdfeScanTest, DeadInputHasNoEffect) {
  auto f = trained_resmlp(6, 2);
  // cut feature 5 out of the first layer
  auto& first = f.w.blocks()[0].params[0];
  for (std::size_t r = 0; r < first.rows(); ++r) first(r, 5) = 0.0;
  const auto rep = ddfe_scan(f.spec, f.w, f.data.val);
  EXPECT_EQ(rep.rows[5].delta, 0.0);
}

TEST(DdfeScanTest, IsReadOnlyAndMatchesManualAblation) {
  const auto f = trained_resmlp(6, 3);
  const auto before_w = f.w;
  const auto before_x = f.data.val.x;
  const auto rep = ddfe_scan(f.spec, f.w, f.data.val, {"a", "b", "c", "d", "e", "g"});
  EXPECT_EQ(f.w, before_w);
  EXPECT_EQ(f.data.val.x, before_x);
  EXPECT_EQ(rep.rows[2].name, "c");
  for (std::size_t k = 0; k < 6; ++k) {
    FeatureMask m = FeatureMask::all(6);
    m.keep[k] = false;
    EXPECT_EQ(rep.rows[k].ablated, attack_accuracy(f.spec, f.w, apply_mask(m, f.data.val)));
    EXPECT_EQ(rep.rows[k].delta, rep.baseline - rep.rows[k].ablated);
  }
}

TEST(DdfeReduceTest, Rules) {
  EXPECT_EQ(ddfe_reduce(report_with({0.1, 0.2, 0.3}), 0.005).eliminated(), 0u);
  const auto all_gone = ddfe_reduce(report_with({0.1, 0.3, 0.2}), INFINITY);
  EXPECT_EQ(all_gone.keep, (std::vector<bool>{false, true, false}));
  const auto mixed = ddfe_reduce(report_with({0.0, 0.005, 0.0051, -0.02, 0.2}), 0.005);
  EXPECT_EQ(mixed.keep, (std::vector<bool>{false, false, true, false, true}));
  EXPECT_DOUBLE_EQ(mixed.reduction(), 0.6);
  EXPECT_THROW(ddfe_reduce(AblationReport{}, 0.1), DataError);
}

TEST(DdfeReduceTest, EliminationIsMonotoneInEpsilon) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> deltas(12);
    for (double& d : deltas) d = rng.uniform(-0.05, 0.2);
    const auto rep = report_with(deltas);
    std::size_t prev = 0;
    for (double eps : {-0.1, 0.0, 0.005, 0.02, 0.1, 0.19}) {
      const auto m = ddfe_reduce(rep, eps);
      EXPECT_GE(m.eliminated(), prev);
      prev = m.eliminated();
      ASSERT_LT(m.eliminated(), m.features());
    }
  }
}

TEST(DdfeFinetuneTest, IdentityMaskEqualsPlainTraining) {
  const auto f = trained_resmlp(6, 5);
  TrainConfig cfg;
  cfg.local_epochs = 2;
  cfg.batch_size = 16;
  cfg.seed = 9;
  const auto tuned = ddfe_finetune(f.spec, f.w, FeatureMask::all(6), f.data.train, cfg);
  auto manual = f.w;
  auto adam = AdamState::for_weights(manual, cfg.lr);
  train_epochs(f.spec, manual, adam, f.data.train, 2, 16, derive_seed(cfg.seed, "ddfe"));
  EXPECT_EQ(tuned, manual);
}

TEST(DdfeFinetuneTest, MaskedInferenceEqualsZeroedInput) {
  const auto f = trained_resmlp(6, 6);
  FeatureMask m = FeatureMask::all(6);
  m.keep[2] = m.keep[3] = false;
  TrainConfig cfg;
  cfg.local_epochs = 1;
  const auto tuned = ddfe_finetune(f.spec, f.w, m, f.data.train, cfg);
  Matrix zeroed = f.data.val.x;
  for (std::size_t r = 0; r < zeroed.rows(); ++r) zeroed(r, 2) = zeroed(r, 3) = 0.0;
  EXPECT_EQ(forward(f.spec, tuned, apply_mask(m, f.data.val.x)), forward(f.spec, tuned, zeroed));
  FeatureMask none{std::vector<bool>(6, false)};
  EXPECT_THROW(ddfe_finetune(f.spec, f.w, none, f.data.train, cfg), ShapeError);
  EXPECT_THROW(apply_mask(FeatureMask::all(5), f.data.val.x), ShapeError);
}

// One benign-vs-attack model on generator data where features 0..3 carry
// all the signal.
struct SyntheticModel {
  ModelSpec spec;
  BlockedWeights w;
  Dataset train;
  Dataset val;
};

SyntheticModel synthetic_model(std::uint64_t seed) {
  SyntheticSpec gen;
  gen.attacks = 2;
  gen.per_class = 3000;
  gen.features = 20;
  gen.signal_features = 4;
  gen.separation = 6.0;
  gen.seed = seed;
  auto stream = gen_synthetic(gen);
  std::erase_if(stream.samples, [](const Sample& s) { return s.label == 2; });
  const auto parts = split(stream, {0.4, 0.5, 0.1, seed});
  const auto norm = fit_norm(parts.train);
  SyntheticModel m{cnn_backbone(20), {}, to_dataset(parts.train, &norm), to_dataset(parts.val, &norm)};
  m.w = build_model(m.spec, seed);
  auto adam = AdamState::for_weights(m.w);
  train_epochs(m.spec, m.w, adam, m.train, 20, 64, seed);
  return m;
}

TEST(DdfeSyntheticTest, SignalOnlyMaskKeepsAccuracy) {
  const auto m = synthetic_model(31);
  const double baseline = attack_accuracy(m.spec, m.w, m.val);
  FeatureMask signal_only{std::vector<bool>(20, false)};
  for (std::size_t f = 0; f < 4; ++f) signal_only.keep[f] = true;
  TrainConfig cfg;
  cfg.local_epochs = 1;
  const auto tuned = ddfe_finetune(m.spec, m.w, signal_only, m.train, cfg);
  const double reduced = attack_accuracy(m.spec, tuned, apply_mask(signal_only, m.val));
  EXPECT_GT(baseline, 0.98);
  EXPECT_NEAR(reduced, baseline, 0.01);
}

TEST(DdfeSyntheticTest, NoiseFeaturesFallBelowEpsilon) {
  const auto m = synthetic_model(32);
  const auto report = ddfe_scan(m.spec, m.w, m.val);
  for (std::size_t f = 0; f < 4; ++f) EXPECT_GT(report.rows[f].delta, 0.005) << "signal " << f;
  for (std::size_t f = 4; f < 20; ++f) EXPECT_LT(std::abs(report.rows[f].delta), 0.005) << "noise " << f;
}

TEST(DdfeFilesTest, MaskAndAblationRoundTrip) {
  testing::TempDir dir("ddfe");
  const std::vector<std::string> names{"x", "y", "z"};
  FeatureMask m{{true, false, true}};
  const auto mask_path = (dir.path() / "mask.txt").string();
  write_mask_file(m, names, mask_path);
  EXPECT_EQ(read_mask_file(mask_path, names), m);
  EXPECT_THROW(read_mask_file(mask_path, {"x", "q", "r"}), DataError);

  const auto csv = (dir.path() / "ablation.csv").string();
  auto rep = report_with({0.25, 0.0, 0.125});
  rep.rows[1].name = "y";
  write_ablation_csv(rep, m, csv);
  std::ifstream in(csv);
  std::string header, first, second;
  std::getline(in, header);
  std::getline(in, first);
  std::getline(in, second);
  EXPECT_EQ(header, "feature_index,feature_name,baseline,ablated,delta,eliminated");
  EXPECT_EQ(first, "0,f0,0.9000,0.6500,0.2500,0");
  EXPECT_EQ(second, "1,y,0.9000,0.9000,0.0000,1");
}

}  // namespace
}  // namespace tabfids
