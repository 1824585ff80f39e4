#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace tabfids {
namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TransferMatrix matrix_of(std::vector<std::vector<double>> acc) {
  TransferMatrix m;
  for (std::size_t i = 0; i < acc.size(); ++i) m.classes.push_back("A" + std::to_string(i + 1));
  m.accuracy = std::move(acc);
  return m;
}

TEST(ConfusionTest, Basics) {
  const std::vector<int> truth{0, 0, 1, 1, 1};
  EXPECT_EQ(confusion(truth, truth), (ConfusionCounts{3, 2, 0, 0}));
  const std::vector<int> benign(5, 0);
  EXPECT_EQ(confusion(truth, benign), (ConfusionCounts{0, 2, 0, 3}));
  const std::vector<int> mixed{1, 0, 0, 1, 1};
  const auto c = confusion(truth, mixed);
  EXPECT_EQ(c, (ConfusionCounts{2, 1, 1, 1}));
  EXPECT_EQ(c.total(), truth.size());
  EXPECT_THROW(confusion(truth, std::vector<int>{0}), ShapeError);
}

TEST(AttackAccuracyTest, WorkedValues) {
  EXPECT_DOUBLE_EQ(attack_accuracy(ConfusionCounts{25, 50, 0, 25}), 0.75);
  EXPECT_EQ(attack_accuracy(ConfusionCounts{10, 90, 0, 0}), 1.0);
  // 90 benign / 10 attack, always benign: plain accuracy 0.9, attack accuracy 0.5
  EXPECT_EQ(attack_accuracy(ConfusionCounts{0, 90, 0, 10}), 0.5);
  EXPECT_EQ(attack_accuracy(ConfusionCounts{10, 0, 90, 0}), 0.5);
  EXPECT_EQ(attack_accuracy(ConfusionCounts{0, 0, 90, 10}), 0.0);
}

TEST(AttackAccuracyTest, UndefinedWithoutBothClasses) {
  EXPECT_THROW(attack_accuracy(ConfusionCounts{5, 0, 0, 5}), DataError);
  EXPECT_THROW(attack_accuracy(ConfusionCounts{0, 5, 5, 0}), DataError);
}

TEST(AttackAccuracyTest, ScaleInvarianceAndRange) {
  Rng rng(12);
  for (int i = 0; i < 500; ++i) {
    const ConfusionCounts c{rng.below(1000), 1 + rng.below(1000), rng.below(1000), 1 + rng.below(1000)};
    const double a = attack_accuracy(c);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
    const std::uint64_t k = 1 + rng.below(50);
    EXPECT_EQ(attack_accuracy(ConfusionCounts{c.tp * k, c.tn * k, c.fp * k, c.fn * k}), a);
    // swapping the benign and attack roles keeps the value
    EXPECT_EQ(attack_accuracy(ConfusionCounts{c.tn, c.tp, c.fn, c.fp}), a);
  }
}

TEST(AttackAccuracyTest, ModelOverloadMatchesCounts) {
  const auto spec = testing::tiny_cnn(10);
  const auto w = build_model(spec, 2);
  const auto data = testing::separable_node(10, 4, 40, 1).val;
  const auto pred = predict(spec, w, data.x);
  EXPECT_EQ(attack_accuracy(spec, w, data), attack_accuracy(confusion(data.y, pred)));
}

TEST(ClassifyPairsTest, TierBoundaries) {
  const auto m = matrix_of({{0.99, 0.69, 0.7, 0.8},
                            {0.9, 0.95, 0.7999999, 0.8999999},
                            {0.0, 0.5, 1.0, 0.6999999},
                            {1.0, 0.75, 0.85, 0.97}});
  const auto s = classify_pairs(m);
  EXPECT_EQ(s.total, 8u);
  EXPECT_EQ(s.very_high, 2u);  // 0.9, 1.0
  EXPECT_EQ(s.high, 3u);       // 0.8, 0.8999999, 0.85
  EXPECT_EQ(s.moderate, 3u);   // 0.7, 0.7999999, 0.75
  EXPECT_DOUBLE_EQ(s.localized, (0.99 + 0.95 + 1.0 + 0.97) / 4);
}

TEST(ClassifyPairsTest, CapacityAndIdempotence) {
  for (std::size_t a : {8u, 11u}) {
    const auto m = matrix_of(std::vector<std::vector<double>>(a, std::vector<double>(a, 0.95)));
    const auto s = classify_pairs(m);
    EXPECT_EQ(s.total, a * (a - 1));  // 56 and 110
    EXPECT_EQ(s.very_high, s.total);
    const auto again = classify_pairs(m);
    EXPECT_EQ(again.pairs, s.pairs);
  }
  EXPECT_THROW(classify_pairs(TransferMatrix{}), DataError);
  EXPECT_THROW(classify_pairs(matrix_of({{1.0, 0.5}, {0.5}})), DataError);
}

TEST(ClassifyPairsTest, TiersPartitionTotalProperty) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t a = 2 + rng.below(10);
    std::vector<std::vector<double>> acc(a, std::vector<double>(a));
    for (auto& row : acc) {
      for (double& v : row) v = std::round(rng.uniform() * 20) / 20;  // hits boundaries often
    }
    const auto s = classify_pairs(matrix_of(acc));
    EXPECT_EQ(s.very_high + s.high + s.moderate, s.total);
    EXPECT_EQ(s.pairs.size(), s.total);
    EXPECT_LE(s.total, a * (a - 1));
    const auto occ = train_test_occurrence(s, a);
    std::size_t train_sum = 0, test_sum = 0;
    for (std::size_t i = 0; i < a; ++i) {
      train_sum += occ.as_train[i];
      test_sum += occ.as_test[i];
      EXPECT_LE(occ.as_train[i], a - 1);
    }
    EXPECT_EQ(train_sum, s.total);
    EXPECT_EQ(test_sum, s.total);
  }
}

TEST(OccurrenceTest, CountsRowsAndColumns) {
  const auto m = matrix_of({{1.0, 0.9, 0.9}, {0.1, 1.0, 0.75}, {0.2, 0.3, 1.0}});
  const auto occ = train_test_occurrence(classify_pairs(m), 3);
  EXPECT_EQ(occ.as_train, (std::vector<std::size_t>{2, 1, 0}));
  EXPECT_EQ(occ.as_test, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(TransferMatrixTest, UsesEachModelsPreparation) {
  // identical weights, but node 1 masks the only informative feature
  LabeledStream stream;
  stream.feature_names = {"a", "b"};
  stream.classes.add("X");
  stream.classes.add("Y");
  for (std::uint64_t i = 0; i < 40; ++i) {
    const int label = static_cast<int>(i % 3);
    stream.samples.push_back({{label == 0 ? 0.0 : 1.0, 0.5}, label, i + 1});
  }
  const ModelSpec spec{2, {{"out", {LayerSpec::dense(2, 2)}, false}}};
  BlockedWeights w({{"out", {Matrix(2, 3, std::vector<double>{0, 0, 0, 10, 0, -5})}}});
  const auto norm = fit_norm(stream);
  DeployedModel plain{w, norm, std::nullopt};
  DeployedModel masked{w, norm, FeatureMask{{false, true}}};
  std::vector<LabeledStream> tests(2, stream.empty_like());
  for (const auto& s : stream.samples) {
    if (s.label != 2) tests[0].samples.push_back(s);
    if (s.label != 1) tests[1].samples.push_back(s);
  }
  const auto m = transfer_matrix(spec, {plain, masked}, tests, {"X", "Y"}, 2);
  EXPECT_EQ(m.at(0, 0), 1.0);
  EXPECT_EQ(m.at(0, 1), 1.0);
  EXPECT_EQ(m.at(1, 0), 0.5);
  EXPECT_EQ(m.at(1, 1), 0.5);
  EXPECT_THROW(transfer_matrix(spec, {plain}, tests, {"X"}), ShapeError);
}

TEST(ExportTest, FilesAndRoundTrip) {
  testing::TempDir dir("export");
  Rng rng(3);
  std::vector<std::vector<double>> acc(4, std::vector<double>(4));
  for (auto& row : acc) {
    for (double& v : row) v = rng.uniform();
  }
  const auto m = matrix_of(acc);
  const auto s = classify_pairs(m);
  export_reports(m, s, "TabFIDSv2", dir.path().string());
  const auto back = read_matrix_csv((dir.path() / "matrix.csv").string());
  EXPECT_EQ(back.classes, m.classes);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(back.at(i, j), m.at(i, j), 5e-5);
  }
  const auto matrix_text = slurp(dir.path() / "matrix.csv");
  EXPECT_EQ(matrix_text.substr(0, matrix_text.find('\n')), "train\\test,A1,A2,A3,A4");
  EXPECT_NE(matrix_text.find("A1," + fixed4(acc[0][0]) + "," + fixed4(acc[0][1])), std::string::npos);

  std::istringstream summary(slurp(dir.path() / "summary.csv"));
  std::string header, row;
  std::getline(summary, header);
  std::getline(summary, row);
  EXPECT_EQ(header, "Approach,Total,>90%,80-90%,70-80%,Localized Accr %");
  EXPECT_EQ(row, summary_row("TabFIDSv2", s));
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 5);
  EXPECT_EQ(row.substr(row.rfind('.') + 1).size(), 4u);

  const auto occ = slurp(dir.path() / "occurrence.csv");
  EXPECT_NE(occ.find("\nPresent as Train Attack,"), std::string::npos);
  EXPECT_NE(occ.find("\nPresent as Test Attack,"), std::string::npos);
  const auto heat = slurp(dir.path() / "heatmap.csv");
  EXPECT_EQ(std::count(heat.begin(), heat.end(), '\n'), 17);
}

TEST(ExportTest, SummaryRowFormat) {
  PairSummary s;
  s.total = 9;
  s.very_high = 4;
  s.high = 3;
  s.moderate = 2;
  s.localized = 0.987654;
  EXPECT_EQ(summary_row("Federated", s), "Federated,9,4,3,2,98.7654");
}

}  // namespace
}  // namespace tabfids
