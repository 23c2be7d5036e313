// Copyright 2026 The Tabaudit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tabaudit/attacks.hpp"

#include <cmath>
#include <sstream>

#include "gtest/gtest.h"

namespace tabaudit {
namespace {

std::vector<FeatureBundle> LossBundles(const std::vector<double>& losses) {
  std::vector<FeatureBundle> f;
  for (std::size_t i = 0; i < losses.size(); ++i) f.push_back({i, losses[i], {}});
  return f;
}

std::vector<int> Alternating(std::size_t n) {
  std::vector<int> b(n);
  for (std::size_t i = 0; i < n; ++i) b[i] = int(i % 2);
  return b;
}

ScoredRuns Scores(const std::vector<double>& s, const std::string& name = "test") {
  return {name, AllRuns(s.size()), s};
}

TEST(LossThreshold, EqualLossesGiveHalfAuc) {
  const auto bits = Alternating(20);
  const auto s = AttackLossThreshold(LossBundles(std::vector<double>(20, 0.7)));
  EXPECT_DOUBLE_EQ(Evaluate(s, bits, 0.0, 0.95).auc, 0.5);
}

TEST(LossThreshold, SeparatedLossesGiveUnitAuc) {
  const auto bits = Alternating(20);
  std::vector<double> l(20);
  for (std::size_t i = 0; i < 20; ++i) l[i] = bits[i] ? 0.1 + 0.01 * i : 2.0 + i;
  EXPECT_DOUBLE_EQ(Evaluate(AttackLossThreshold(LossBundles(l)), bits, 0, 0.95).auc, 1.0);
}

TEST(LossThreshold, RankingInvariantUnderIncreasingTransforms) {
  Rng rng(3);
  std::vector<double> l(50), t(50);
  for (std::size_t i = 0; i < 50; ++i) {
    l[i] = rng.Uniform(0, 5);
    t[i] = std::exp(2 * l[i]) + 3;
  }
  const auto a = AttackLossThreshold(LossBundles(l));
  const auto b = AttackLossThreshold(LossBundles(t));
  for (std::size_t i = 0; i < 50; ++i) {
    for (std::size_t j = 0; j < 50; ++j) {
      EXPECT_EQ(a.scores[i] < a.scores[j], b.scores[i] < b.scores[j]);
    }
  }
  const auto bits = Alternating(50);
  EXPECT_DOUBLE_EQ(Evaluate(a, bits, 0, 0.95).auc, Evaluate(b, bits, 0, 0.95).auc);
}

TEST(SplitRuns, StratifiedAndDisjoint) {
  const auto bits = Alternating(40);
  const auto split = SplitRuns(bits, 0.5, 9);
  EXPECT_EQ(split.evaluation.size(), 20u);
  EXPECT_EQ(split.calibration.runs.size(), 20u);
  int eval_ones = 0;
  for (std::size_t r : split.evaluation) {
    eval_ones += bits[r];
    EXPECT_EQ(std::count(split.calibration.runs.begin(), split.calibration.runs.end(), r), 0);
  }
  EXPECT_EQ(eval_ones, 10);
  for (std::size_t k = 0; k < split.calibration.runs.size(); ++k) {
    EXPECT_EQ(split.calibration.bits[k], bits[split.calibration.runs[k]]);
  }
}

TEST(SplitRuns, TooFewRunsIsAnError) {
  EXPECT_THROW(SplitRuns(Alternating(7), 0.5, 1), Error);
  EXPECT_NO_THROW(SplitRuns(Alternating(8), 0.5, 1));
  const auto s = SplitRuns(Alternating(8), 0.1, 1);  // clamped to 2 per class
  EXPECT_EQ(s.evaluation.size(), 4u);
}

TEST(Lira, IdenticalCalibrationGivesZeroScores) {
  std::vector<double> l(20);
  for (std::size_t i = 0; i < 20; ++i) l[i] = 1.0 + double(i / 2) * 0.1;  // pairs
  const auto bits = Alternating(20);
  const auto split = SplitRuns(bits, 0.5, 2);
  // make calibration losses identical across classes
  auto f = LossBundles(l);
  std::vector<double> in, out;
  for (std::size_t k = 0; k < split.calibration.runs.size(); ++k) {
    (split.calibration.bits[k] ? in : out).push_back(f[split.calibration.runs[k]].loss);
  }
  std::sort(in.begin(), in.end());
  std::size_t a = 0, b = 0;
  for (std::size_t k = 0; k < split.calibration.runs.size(); ++k) {
    auto& loss = f[split.calibration.runs[k]].loss;
    loss = split.calibration.bits[k] ? in[a++] : in[b++];
  }
  const auto s = AttackLira(f, split.calibration);
  EXPECT_EQ(s.size(), split.evaluation.size());
  for (double v : s.scores) EXPECT_EQ(v, 0.0);
  EXPECT_DOUBLE_EQ(Evaluate(s, bits, 0, 0.95).auc, 0.5);
}

TEST(Lira, SeparatedGaussiansGiveHighAuc) {
  Rng rng(11);
  const std::size_t n = 200;
  const auto bits = Alternating(n);
  std::vector<double> l(n);
  for (std::size_t i = 0; i < n; ++i) l[i] = bits[i] ? rng.Normal(0, 1) : rng.Normal(10, 1);
  const auto split = SplitRuns(bits, 0.5, 4);
  const auto s = AttackLira(LossBundles(l), split.calibration);
  EXPECT_GT(Evaluate(s, bits, 0, 0.95).auc, 0.99);
}

TEST(Lira, VarianceFloorKeepsScoresFinite) {
  const auto bits = Alternating(12);
  std::vector<double> l(12);
  for (std::size_t i = 0; i < 12; ++i) l[i] = bits[i] ? 0.5 : 2.0;
  const auto s = AttackLira(LossBundles(l), SplitRuns(bits, 0.5, 3).calibration);
  for (double v : s.scores) EXPECT_TRUE(std::isfinite(v));
  EXPECT_DOUBLE_EQ(Evaluate(s, bits, 0, 0.95).auc, 1.0);
}

Schema FourCats() {
  return Schema({{"a", CategoricalColumn{{"x", "y"}}},
                 {"b", CategoricalColumn{{"x", "y"}}},
                 {"c", CategoricalColumn{{"x", "y"}}},
                 {"d", CategoricalColumn{{"x", "y"}}}});
}

TEST(Gower, HandEvaluated) {
  const Schema s = FourCats();
  EXPECT_DOUBLE_EQ(GowerDistance(s, Record{{0, 0, 0, 0}}, Record{{0, 1, 0, 0}}), 0.25);
  const Schema mixed({{"n", NumericColumn{0, 10}}, {"c", CategoricalColumn{{"p", "q"}}}});
  EXPECT_DOUBLE_EQ(GowerDistance(mixed, Record{{2, 0}}, Record{{7, 0}}), 0.25);
  EXPECT_DOUBLE_EQ(GowerDistance(mixed, Record{{0, 0}}, Record{{10, 1}}), 1.0);
}

TEST(Gower, SymmetricAndBounded) {
  const Schema mixed({{"n", NumericColumn{-3, 5}},
                      {"c", CategoricalColumn{{"p", "q", "r"}}},
                      {"m", NumericColumn{0, 1}}});
  Rng rng(8);
  for (int i = 0; i < 2000; ++i) {
    Record a{{rng.Uniform(-3, 5), double(rng.Index(3)), rng.Uniform()}};
    Record b{{rng.Uniform(-3, 5), double(rng.Index(3)), rng.Uniform()}};
    const double d = GowerDistance(mixed, a, b);
    EXPECT_EQ(d, GowerDistance(mixed, b, a));
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
  }
}

TEST(Dcr, TargetPresentGivesMaximalScore) {
  const Schema s = FourCats();
  const Record target{{1, 1, 1, 1}};
  std::vector<FeatureBundle> f(2);
  f[0] = {0, 0, Dataset{s, {Record{{0, 0, 0, 0}}, target}, ""}};
  f[1] = {1, 0, Dataset{s, {Record{{1, 0, 1, 1}}}, ""}};
  const auto sc = AttackDcr(f, target);
  EXPECT_EQ(sc.scores[0], 0.0);
  EXPECT_DOUBLE_EQ(sc.scores[1], -0.25);
  f[1].synthetic->rows.clear();
  EXPECT_THROW(AttackDcr(f, target), Error);
}

TEST(Groundhog, FeatureLengthAndRowOrderInvariance) {
  const Schema s({{"n", NumericColumn{0, 10}},
                  {"c", CategoricalColumn{{"p", "q", "r"}}},
                  {"m", NumericColumn{0, 1}}});
  EXPECT_EQ(GroundhogFeatureDim(s), 3u + 3u + 3u);
  Dataset ds{s, {}, ""};
  Rng rng(4);
  for (int i = 0; i < 101; ++i) {
    ds.rows.push_back(Record{{rng.Uniform(0, 10), double(rng.Index(3)), rng.Uniform()}});
  }
  const auto f = GroundhogFeatures(ds);
  EXPECT_EQ(f.size(), GroundhogFeatureDim(s));
  Dataset shuffled = ds;
  rng.Shuffle(shuffled.rows);
  EXPECT_EQ(GroundhogFeatures(shuffled), f);
  EXPECT_NEAR(f[3] + f[4] + f[5], 1.0, 1e-12);
}

TEST(Groundhog, PlantedMeanShift) {
  const Schema s({{"n", NumericColumn{-100, 100}}, {"c", CategoricalColumn{{"p", "q"}}}});
  const std::size_t runs = 60;
  const auto bits = Alternating(runs);
  Rng rng(21);
  std::vector<FeatureBundle> f;
  for (std::size_t t = 0; t < runs; ++t) {
    Dataset ds{s, {}, ""};
    for (int i = 0; i < 100; ++i) {
      const double v = rng.Normal(0, 1) + (bits[t] ? 10.0 : 0.0);
      ds.rows.push_back(Record{{std::clamp(v, -100.0, 100.0), double(rng.Index(2))}});
    }
    f.push_back({t, 0, ds});
  }
  const auto split = SplitRuns(bits, 0.5, 5);
  const auto sc = AttackGroundhog(f, split.calibration);
  EXPECT_GT(Evaluate(sc, bits, 0, 0.95).auc, 0.99);
}

TEST(DiscLoss, Examples) {
  const auto bits = Alternating(10);
  EXPECT_DOUBLE_EQ(
      Evaluate(AttackDiscLoss(LossBundles(std::vector<double>(10, 0.69))), bits, 0, 0.95).auc,
      0.5);
  std::vector<double> l(10);
  for (int i = 0; i < 10; ++i) l[i] = bits[i] ? 0.1 : 0.9;
  const auto a = AttackDiscLoss(LossBundles(l));
  EXPECT_DOUBLE_EQ(Evaluate(a, bits, 0, 0.95).auc, 1.0);
  EXPECT_EQ(a.scores, AttackDiscLoss(LossBundles(l)).scores);
}

TEST(Evaluate, RandomScoresAreHarmless) {
  Rng rng(1234);
  const std::size_t n = 2000;
  const auto bits = Alternating(n);
  std::vector<double> s(n);
  for (auto& v : s) v = rng.Uniform();
  const auto rep = Evaluate(Scores(s), bits, 0.0, 0.95);
  EXPECT_NEAR(rep.auc, 0.5, 0.05);
  EXPECT_EQ(MaxLowerBound(rep), ExtendedReal(0.0));
}

// T = 200 perfectly separated: every operating point is (tp, fp) = (100, 0).
// The bound chain with the closed form CP upper limit for 0 successes:
// 1 - (tail)^(1/n).
TEST(Evaluate, PerfectSeparationChain) {
  const auto bits = Alternating(200);
  std::vector<double> s(200);
  for (std::size_t i = 0; i < 200; ++i) s[i] = bits[i] ? 1.0 + i : -1.0 - i;
  const auto rep = Evaluate(Scores(s), bits, 0.0, 0.95);
  EXPECT_DOUBLE_EQ(rep.auc, 1.0);
  const double upper = 1.0 - std::pow(0.025, 1.0 / 100.0);
  const double expected = std::log((1.0 - upper) / upper);
  for (const auto& op : rep.operating_points) {
    EXPECT_EQ(op.counts.tp, 100u) << op.label;
    EXPECT_EQ(op.counts.fp, 0u) << op.label;
    EXPECT_FALSE(op.epsilon_point.bounded());
    ASSERT_TRUE(op.epsilon_lower.bounded());
    EXPECT_NEAR(op.epsilon_lower.value(), expected, 1e-9);
  }
}

TEST(Evaluate, ReversedScoresMirrorAuc) {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 10 + rng.Index(50);
    std::vector<int> bits(n);
    for (auto& b : bits) b = rng.Bernoulli(0.5);
    bits[0] = 0;
    bits[1] = 1;
    std::vector<double> s(n), r(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = double(rng.Index(8));  // ties on purpose
      r[i] = -s[i];
    }
    EXPECT_NEAR(Evaluate(Scores(r), bits, 0, 0.95).auc,
                1.0 - Evaluate(Scores(s), bits, 0, 0.95).auc, 1e-12);
  }
}

TEST(Evaluate, RocMonotoneAndBoundBelowPoint) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 10 + rng.Index(200);
    std::vector<int> bits(n);
    for (auto& b : bits) b = rng.Bernoulli(0.5);
    bits[0] = 0;
    bits[1] = 1;
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = rng.Normal(bits[i] * 1.5, 1);
    const double delta = rng.Uniform(0, 0.2);
    const auto rep = Evaluate(Scores(s), bits, delta, 0.95);
    for (std::size_t k = 1; k < rep.roc.size(); ++k) {
      EXPECT_GE(rep.roc[k].fpr, rep.roc[k - 1].fpr);
      EXPECT_GE(rep.roc[k].tpr, rep.roc[k - 1].tpr);
      EXPECT_LE(rep.roc[k].tpr, 1.0);
    }
    EXPECT_EQ(rep.roc.back().fpr, 1.0);
    EXPECT_EQ(rep.roc.back().tpr, 1.0);
    for (const auto& op : rep.operating_points) {
      EXPECT_TRUE(op.epsilon_lower <= op.epsilon_point);
      if (op.label != "median") {
        EXPECT_LE(double(op.counts.fp) / rep.negatives, op.target_fpr + 1e-12);
      }
    }
  }
}

TEST(Evaluate, LowFprAutoFallsBackToSmallestNonzero) {
  const auto bits = Alternating(40);  // 20 negatives: 0.01 * 20 < 1
  std::vector<double> s(40);
  for (std::size_t i = 0; i < 40; ++i) s[i] = double(i);
  const auto rep = Evaluate(Scores(s), bits, 0, 0.95);
  EXPECT_DOUBLE_EQ(rep.Find("low_fpr").target_fpr, 1.0 / 20);
  EXPECT_DOUBLE_EQ(rep.Find("fpr<=0.1").target_fpr, 0.1);
}

TEST(Evaluate, OneClassIsAnError) {
  EXPECT_THROW(Evaluate(Scores({1, 2, 3}), std::vector<int>{1, 1, 1}, 0, 0.95), Error);
}

TEST(Evaluate, JsonAndCsv) {
  const auto bits = Alternating(6);
  const auto rep = Evaluate(Scores({1, 2, 3, 4, 5, 6}), bits, 0, 0.95);
  const auto j = ToJson(rep);
  EXPECT_EQ(j["schema_version"], 1);
  EXPECT_EQ(j["operating_points"].size(), 3u);
  std::ostringstream csv;
  WriteRocCsv(csv, rep);
  EXPECT_EQ(csv.str().substr(0, 22), "threshold,fpr,tpr\ninf,");
}

// Pure-signal marginal synthesizer: the target's cells are empty in every
// out run, so its nearest synthetic record is far away.
struct OutlierFixture {
  Dataset pool;
  Record target;
};

OutlierFixture MakeOutlierFixture() {
  const Schema s({{"u", NumericColumn{0, 1}},
                  {"v", NumericColumn{0, 1}},
                  {"c", CategoricalColumn{{"a", "b", "rare"}}},
                  {"d", CategoricalColumn{{"a", "b", "rare"}}}});
  OutlierFixture f{{s, {}, "pool"}, Record{{1.0, 1.0, 2.0, 2.0}}};
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    f.pool.rows.push_back(Record{{rng.Uniform(0, 0.4), rng.Uniform(0, 0.4),
                                  double(rng.Index(2)), double(rng.Index(2))}});
  }
  return f;
}

double DcrAuc(const OutlierFixture& fx, double noise, std::uint64_t seed) {
  TrainerSpec t;
  t.kind = TrainerKind::kMarginal;
  t.marginal.noise_std = noise;
  const auto c = RunShadowExperiment(fx.target, fx.pool, t, {}, 20, seed);
  const auto feats = QueryFeatures(c, QueryMode::kSynthDataset, {500, seed, 1});
  return Evaluate(AttackDcr(feats, fx.target), c.bits(), 0, 0.95).auc;
}

TEST(Dcr, PureSignalMarginalHasUnitAuc) {
  const auto fx = MakeOutlierFixture();
  EXPECT_DOUBLE_EQ(DcrAuc(fx, 0.0, 1), 1.0);
}

TEST(Dcr, MoreNoiseLowersAucOnAverage) {
  const auto fx = MakeOutlierFixture();
  double quiet = 0, loud = 0;
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    quiet += DcrAuc(fx, 0.0, 100 + rep) / 20;
    loud += DcrAuc(fx, 8.0, 100 + rep) / 20;
  }
  RecordProperty("mean_auc_noise0", std::to_string(quiet));
  RecordProperty("mean_auc_noise8", std::to_string(loud));
  EXPECT_DOUBLE_EQ(quiet, 1.0);
  EXPECT_LT(loud, quiet);
}

}  // namespace
}  // namespace tabaudit
