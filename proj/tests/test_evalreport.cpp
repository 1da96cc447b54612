#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "dsos/evalreport.hpp"
#include "oracles.hpp"

using namespace dsos;

TEST(Auc, WorkedExample) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<bool> pos{false, false, true, true};
  EXPECT_NEAR(auc(s, pos), 0.75, 1e-15);
  EXPECT_NEAR(oracle::pairwise_auc(s, pos), 0.75, 1e-15);
}

TEST(Auc, PerfectSeparationAndTies) {
  EXPECT_EQ(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, {false, false, true, true}), 1.0);
  EXPECT_EQ(auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, {false, false, true, true}), 0.0);
  EXPECT_EQ(auc(std::vector<double>(6, 0.3), {true, false, true, false, false, true}), 0.5);
}

TEST(Auc, SingleClassIsUndefined) {
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, {true, true}), InputError);
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, {false, false}), InputError);
  EXPECT_FALSE(auc_if_defined(std::vector<double>{0.1, 0.2}, {false, false}).has_value());
  EXPECT_THROW(auc(std::vector<double>{0.1}, {true, false}), InputError);
}

TEST(Auc, MatchesPairwiseBruteForce) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> size(2, 50);
  std::uniform_int_distribution<int> level(0, 6);  // coarse scores force ties
  std::bernoulli_distribution coin(0.4);
  int checked = 0;
  while (checked < 200) {
    const int n = size(rng);
    std::vector<double> s(n);
    std::vector<bool> pos(n);
    for (int i = 0; i < n; ++i) {
      s[i] = checked % 2 == 0 ? level(rng) * 0.1 : std::generate_canonical<double, 53>(rng);
      pos[i] = coin(rng);
    }
    if (std::count(pos.begin(), pos.end(), true) == 0 || std::count(pos.begin(), pos.end(), false) == 0) continue;
    EXPECT_NEAR(auc(s, pos), oracle::pairwise_auc(s, pos), 1e-12);
    ++checked;
  }
}

TEST(Auc, InvariantUnderMonotoneTransformAndNegation) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> d;
  std::vector<double> s(300);
  std::vector<bool> pos(300);
  for (std::size_t i = 0; i < s.size(); ++i) {
    pos[i] = i % 3 == 0;
    s[i] = d(rng) + (pos[i] ? 0.7 : 0.0);
  }
  std::vector<double> t(s.size()), neg(s.size());
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  for (std::size_t i = 0; i < s.size(); ++i) {
    t[i] = std::exp(3.0 * (s[i] - *lo) / (*hi - *lo));
    neg[i] = -s[i];
  }
  const double a = auc(s, pos);
  EXPECT_NEAR(auc(t, pos), a, 1e-15);
  EXPECT_NEAR(auc(neg, pos), 1.0 - a, 1e-12);
}

namespace {

std::vector<Truth> balanced_truth(std::size_t n) {
  std::vector<Truth> t;
  for (std::size_t i = 0; i < n; ++i) {
    t.push_back(i % 3 == 0 ? Truth::clean() : (i % 3 == 1 ? Truth::id_noise(0) : Truth::ood()));
  }
  return t;
}

}  // namespace

TEST(Retrieval, OracleAssessmentsAreDiagonal) {
  const auto truth = balanced_truth(90);
  std::vector<NoiseAssessment> a(90);
  std::vector<double> metric(90);
  for (std::size_t i = 0; i < 90; ++i) {
    switch (truth[i].kind) {
      case NoiseKind::Clean:
        a[i] = {0.0, 0.0, 0.0, 1.0, Category::Clean};
        metric[i] = 0.0;
        break;
      case NoiseKind::IdNoise:
        a[i] = {kPivot, 0.5, 1.0, 1.0, Category::Id};
        metric[i] = 0.6931471805599453;
        break;
      case NoiseKind::Ood:
        a[i] = {1.357, 1.0, 0.0, 0.0, Category::Ood};
        metric[i] = 1.357;
        break;
    }
  }
  const RetrievalReport r = retrieval_report(a, truth, metric);
  EXPECT_EQ(*r.auc_clean, 1.0);
  EXPECT_EQ(*r.auc_id, 1.0);
  EXPECT_EQ(*r.auc_ood, 1.0);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(r.noise_counts[t], 30u);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(r.confusion[t][c], t == c ? 30u : 0u);
  }
}

TEST(Retrieval, ShuffledAssessmentsAreChance) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto truth = balanced_truth(2000);
  std::vector<NoiseAssessment> a(2000);
  std::vector<double> metric(2000);
  for (std::size_t i = 0; i < 2000; ++i) {
    a[i].u = u(rng);
    a[i].v = u(rng);
    a[i].category = static_cast<Category>(i % 3);
    metric[i] = u(rng);
  }
  std::shuffle(a.begin(), a.end(), rng);
  const RetrievalReport r = retrieval_report(a, truth, metric);
  EXPECT_NEAR(*r.auc_clean, 0.5, 0.05);
  EXPECT_NEAR(*r.auc_id, 0.5, 0.05);
  EXPECT_NEAR(*r.auc_ood, 0.5, 0.05);
  std::size_t total = 0;
  for (std::size_t t = 0; t < 3; ++t) {
    std::size_t row = 0;
    for (std::size_t c = 0; c < 3; ++c) row += r.confusion[t][c];
    EXPECT_EQ(row, r.noise_counts[t]);
    total += row;
  }
  EXPECT_EQ(total, 2000u);
}

TEST(Retrieval, MetricRetrievalOnIdealClusters) {
  const auto truth = balanced_truth(30);
  std::vector<double> metric;
  for (const auto& t : truth) {
    metric.push_back(t.kind == NoiseKind::Clean ? 0.0 : (t.kind == NoiseKind::IdNoise ? kPivot : 1.357));
  }
  const TriAuc r = metric_retrieval(metric, truth);
  EXPECT_EQ(*r.clean, 1.0);
  EXPECT_EQ(*r.ood, 1.0);
  // metric alone ranks ID between clean and OOD: 10 of 20 negatives lie below
  EXPECT_NEAR(*r.id, 0.5, 1e-15);
}

TEST(Retrieval, MissingClassGivesNoAuc) {
  std::vector<Truth> truth(4, Truth::clean());
  truth[3] = Truth::ood();
  const std::vector<NoiseAssessment> a(4);
  const RetrievalReport r = retrieval_report(a, truth, std::vector<double>{0, 0, 0, 1});
  EXPECT_TRUE(r.auc_clean.has_value());
  EXPECT_FALSE(r.auc_id.has_value());
  EXPECT_TRUE(r.auc_ood.has_value());
}

TEST(Retrieval, RequiresTruth) {
  Dataset d;
  d.records.push_back({0, {1.0}, 0, std::nullopt});
  EXPECT_THROW(require_truth(d), ReportError);
  EXPECT_THROW(retrieval_report(std::vector<NoiseAssessment>(2), balanced_truth(3), std::vector<double>(3)),
               ReportError);
}

TEST(Accuracy, Examples) {
  Matrix p(3, 3);
  p(0, 0) = 1.0;
  p(1, 1) = 1.0;
  p(2, 2) = 1.0;
  EXPECT_EQ(accuracy(p, std::vector<std::size_t>{0, 1, 2}), 1.0);
  EXPECT_NEAR(accuracy(p, std::vector<std::size_t>{0, 1, 0}), 2.0 / 3.0, 1e-15);
  Matrix one(1, 3, 1.0 / 3.0);
  EXPECT_EQ(accuracy(one, std::vector<std::size_t>{0}), 1.0);
  EXPECT_EQ(accuracy(one, std::vector<std::size_t>{2}), 0.0);
  EXPECT_THROW(accuracy(Matrix(0, 3), std::vector<std::size_t>{}), InputError);
}

TEST(Accuracy, UniformNetworkIsChanceOnBalancedData) {
  // Ties go to class 0, so a constant-output net scores exactly the class-0 share.
  const std::size_t c = 5, n = 1000;
  Dataset test;
  test.num_classes = c;
  for (std::size_t i = 0; i < n; ++i) test.records.push_back({i, {0.5, -0.5}, i % c, Truth::clean()});
  Network net = Network::initialize({2, c}, 1);
  for (double& w : net.layers()[0].weights.values()) w = 0.0;
  const double acc = test_accuracy(net, test);
  const double sigma = std::sqrt(0.2 * 0.8 / static_cast<double>(n));
  EXPECT_NEAR(acc, 0.2, 3.0 * sigma);
  Dataset empty;
  EXPECT_THROW(test_accuracy(net, empty), InputError);
}
