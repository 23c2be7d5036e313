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

#include "tabaudit/audit.hpp"

#include <cmath>

#include "gtest/gtest.h"
#include "tabaudit/fixture.hpp"

namespace tabaudit {
namespace {

DpSgdConfig StepConfig(BugMode bug, std::uint64_t seed) {
  DpSgdConfig c;
  c.noise_multiplier = 1.0;
  c.sample_rate = 0.1;
  c.bug_mode = bug;
  c.seed = seed;
  return c;
}

AuditVerdict Step(BugMode bug, std::uint64_t seed, std::size_t trials = 2000,
                  double delta = 0.1, std::size_t workers = 1) {
  const DpSgdConfig c = StepConfig(bug, seed);
  StepAuditOptions o;
  o.workers = workers;
  return AuditStepMechanism(c, DefaultGradientCanary(8, c.clip_norm), trials, delta,
                            0.95, o);
}

TrainerSpec Predictive(BugMode bug, double sigma = 1.0) {
  TrainerSpec t;
  t.kind = TrainerKind::kDpSgd;
  t.label_column = "income";
  t.model.kind = ModelKind::kLogisticRegression;
  t.dpsgd.noise_multiplier = sigma;
  t.dpsgd.sample_rate = 0.02;
  t.dpsgd.steps = 256;
  t.dpsgd.learning_rate = 4.0;
  t.dpsgd.bug_mode = bug;
  return t;
}

TEST(GradientCanary, NormIsClipNormForAnyDirection) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> d(1 + rng.Index(20));
    for (auto& v : d) v = rng.Normal();
    const double C = rng.Uniform(0.01, 10.0);
    const auto c = MakeGradientCanary(d, C);
    EXPECT_NEAR(L2Norm(c.values), C, 1e-12 * C);
    EXPECT_NEAR(L2Norm(c.Direction()), 1.0, 1e-12);
  }
  const auto e = DefaultGradientCanary(4, 2.5);
  EXPECT_EQ(e.values, (std::vector<double>{2.5, 0, 0, 0}));
  EXPECT_THROW(MakeGradientCanary(std::vector<double>{0, 0}, 1.0), Error);
}

TEST(RecordCanary, ExtremesAndRareLevels) {
  const Dataset pool = MakeFixture(300, 2);
  const Record c = DefaultRecordCanary(pool);
  EXPECT_EQ(c.values[0], 90.0);
  EXPECT_EQ(c.values[1], 100.0);
  EXPECT_EQ(c.values[2], 1000.0);
  EXPECT_EQ(c.values[3], 3.0);  // "other" never drawn
  EXPECT_EQ(c.values[4], 3.0);
  EXPECT_FALSE(ContainsRecord(pool, c));
  ValidateRecord(pool.schema, c);
}

TEST(StepAudit, CorrectMechanismPasses) {
  int passes = 0;
  for (std::uint64_t r = 0; r < 20; ++r) passes += Step(BugMode::kNone, 100 + r).pass;
  EXPECT_GE(passes, 19);
}

TEST(StepAudit, EveryBugModeFails) {
  for (BugMode b : {BugMode::kNoPerSampleClipping, BugMode::kStaticNoise,
                    BugMode::kNoiseNotScaledToBatch, BugMode::kNoNoise}) {
    int fails = 0;
    for (std::uint64_t r = 0; r < 20; ++r) {
      const auto v = Step(b, 200 + r);
      fails += !v.pass;
      if (!v.pass) {
        EXPECT_EQ(v.ExitCode(), 1);
      }
    }
    EXPECT_GE(fails, 19) << ToString(b);
  }
}

TEST(StepAudit, ClaimIsSingleUnsubsampledStep) {
  const auto v = Step(BugMode::kNoNoise, 1);
  EXPECT_NEAR(v.claimed.epsilon, 1.8630814188926428, 1e-9);
  EXPECT_EQ(v.claimed.delta, 0.1);
  EXPECT_EQ(v.trials, 2000u);
  EXPECT_EQ(v.operating_point.label, "low_fpr");
  EXPECT_EQ(v.operating_point.counts.positives(), 1000u);
  EXPECT_EQ(v.operating_point.counts.negatives(), 1000u);
}

TEST(StepAudit, BoundStaysBelowTheTrueSingleStepEpsilon) {
  // unit sensitivity, noise sigma*C: the mechanism is exactly 1/sigma-GDP
  const double delta = 1e-3;
  const double truth = GdpEpsilonForDelta({1.0}, delta);
  double small = 0.0, large = 0.0;
  int exceed = 0;
  for (std::uint64_t r = 0; r < 20; ++r) {
    const auto a = Step(BugMode::kNone, 300 + r, 1000, delta);
    const auto b = Step(BugMode::kNone, 300 + r, 20000, delta);
    small += a.measured_lower_bound.value();
    large += b.measured_lower_bound.value();
    exceed += truth < b.measured_lower_bound.value();
    exceed += truth < a.measured_lower_bound.value();
  }
  EXPECT_LE(exceed, 2);
  EXPECT_GT(large, small);
}

TEST(StepAudit, Errors) {
  const DpSgdConfig c = StepConfig(BugMode::kNone, 0);
  const auto canary = DefaultGradientCanary(8, 1.0);
  EXPECT_THROW(AuditStepMechanism(c, canary, 99, 0.1), Error);
  DpSgdConfig zero = c;
  zero.noise_multiplier = 0.0;
  try {
    AuditStepMechanism(zero, canary, 200, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoGuarantee);
  }
  GradientCanary wrong{{2.0, 0.0}};
  EXPECT_THROW(AuditStepMechanism(c, wrong, 200, 0.1), Error);
}

TEST(StepAudit, DeterministicAcrossWorkers) {
  const auto a = ToJson(Step(BugMode::kNone, 9, 500, 0.1, 1)).dump();
  const auto b = ToJson(Step(BugMode::kNone, 9, 500, 0.1, 4)).dump();
  EXPECT_EQ(a, b);
  EXPECT_NE(a, ToJson(Step(BugMode::kNone, 10, 500, 0.1, 1)).dump());
}

TEST(Verdict, PassMatchesComparisonAndExitCodes) {
  for (std::uint64_t r = 0; r < 10; ++r) {
    for (BugMode b : {BugMode::kNone, BugMode::kNoNoise}) {
      const auto v = Step(b, 400 + r, 200);
      EXPECT_EQ(v.pass, v.measured_lower_bound <= ExtendedReal(v.claimed.epsilon));
      const auto j = ToJson(v);
      EXPECT_EQ(j["pass"], v.pass);
      EXPECT_EQ(j["exit_code"], v.ExitCode());
      EXPECT_EQ(j["confidence"], 0.95);
      EXPECT_EQ(j["schema_version"], 1);
    }
  }
  AuditVerdict v;
  v.claimed = {1.0, 1e-5};
  v.pass = true;
  v.measured_lower_bound = ExtendedReal(0.5);
  v.measured_point = ExtendedReal(0.9);
  EXPECT_EQ(v.ExitCode(), 0);
  v.measured_point = ExtendedReal(1.5);
  EXPECT_TRUE(v.inconclusive());
  EXPECT_EQ(v.ExitCode(), 2);
  v.pass = false;
  EXPECT_EQ(v.ExitCode(), 1);
}

TEST(EndToEnd, CorrectTrainerPasses) {
  const Dataset pool = MakeFixture(500, 7);
  const Record canary = DefaultRecordCanary(pool);
  int passes = 0;
  for (std::uint64_t r = 0; r < 5; ++r) {
    const auto v = AuditEndToEnd(Predictive(BugMode::kNone), pool, canary, 100, {},
                                 0.95, 10 + r);
    EXPECT_EQ(v.attack, "lira");
    EXPECT_NEAR(v.claimed.delta, 1.0 / 500, 1e-15);
    EXPECT_NEAR(v.claimed.epsilon, 1.0, 0.05);
    passes += v.pass;
  }
  EXPECT_EQ(passes, 5);
}

TEST(EndToEnd, NoNoiseTrainerIsUsuallyFlagged) {
  // 50 evaluation runs cap the attainable bound near 1.65, so this is
  // a majority check rather than a near-certain one.
  const Dataset pool = MakeFixture(500, 7);
  const Record canary = DefaultRecordCanary(pool);
  int fails = 0;
  for (std::uint64_t r = 0; r < 10; ++r) {
    fails += !AuditEndToEnd(Predictive(BugMode::kNoNoise), pool, canary, 100, {}, 0.95,
                            50 + r)
                  .pass;
  }
  EXPECT_GE(fails, 5);
}

TEST(EndToEnd, BoundMonotoneInSigma) {
  const Dataset pool = MakeFixture(500, 7);
  const Record canary = DefaultRecordCanary(pool);
  std::vector<double> means;
  for (double sigma : {0.5, 1.0, 2.0}) {
    double s = 0.0;
    for (std::uint64_t r = 0; r < 10; ++r) {
      s += AuditEndToEnd(Predictive(BugMode::kNone, sigma), pool, canary, 100, {}, 0.95,
                         70 + r)
               .measured_lower_bound.value();
    }
    means.push_back(s / 10);
  }
  EXPECT_GE(means[0], means[1]);
  EXPECT_GE(means[1], means[2]);
}

TEST(EndToEnd, GenerativeUsesDcrOrGroundhog) {
  const Dataset pool = MakeFixture(200, 3);
  TrainerSpec t;
  t.kind = TrainerKind::kMarginal;
  t.marginal.noise_std = CalibratedMarginalNoise(1.0, 1.0 / 200, pool.schema.size());
  EndToEndOptions o;
  o.n_samples = 200;
  const auto v = AuditEndToEnd(t, pool, DefaultRecordCanary(pool), 20, {}, 0.95, 4, o);
  EXPECT_TRUE(v.attack == "dcr" || v.attack == "groundhog") << v.attack;
  EXPECT_NEAR(v.claimed.epsilon, 1.0, 1e-6);
  EXPECT_EQ(v.confidence, 0.95);
  EXPECT_TRUE(v.pass);
}

TEST(EndToEnd, DeterministicAcrossWorkers) {
  const Dataset pool = MakeFixture(100, 1);
  const Record canary = DefaultRecordCanary(pool);
  TrainerSpec t = Predictive(BugMode::kNone);
  t.dpsgd.steps = 20;
  t.dpsgd.sample_rate = 0.1;
  EndToEndOptions one, four;
  four.workers = 4;
  const auto a = ToJson(AuditEndToEnd(t, pool, canary, 20, {}, 0.95, 5, one)).dump();
  const auto b = ToJson(AuditEndToEnd(t, pool, canary, 20, {}, 0.95, 5, four)).dump();
  EXPECT_EQ(a, b);
}

TEST(EndToEnd, Errors) {
  const Dataset pool = MakeFixture(50, 1);
  const Record canary = DefaultRecordCanary(pool);
  EXPECT_THROW(AuditEndToEnd(Predictive(BugMode::kNone), pool, canary, 19, {}, 0.95, 0),
               Error);
  try {
    AuditEndToEnd(Predictive(BugMode::kNone), pool, pool.rows[0], 20, {}, 0.95, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDuplicateRecord);
  }
  TrainerSpec m;
  m.kind = TrainerKind::kMarginal;
  try {
    AuditEndToEnd(m, pool, canary, 20, {}, 0.95, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoGuarantee);
  }
  Record bad = canary;
  bad.values[0] = 1e9;
  EXPECT_THROW(AuditEndToEnd(Predictive(BugMode::kNone), pool, bad, 20, {}, 0.95, 0),
               Error);
}

TEST(Cost, WorkedExample) {
  const auto c = EstimateMiaCost(1000, 100, {0, 1}, {0, 1});
  EXPECT_EQ(c.total_units, 100100000.0);
  EXPECT_EQ(c.ToJson()["total_units"], 100100000.0);
}

TEST(Cost, ZeroShadowModels) {
  const auto c = EstimateMiaCost(1000, 0, {3, 1}, {7, 2});
  EXPECT_EQ(c.total_units, 1000.0 * 7);
}

TEST(Cost, QuadraticInN) {
  const double a = EstimateMiaCost(1 << 20, 100, {0, 1}, {0, 1}).total_units;
  const double b = EstimateMiaCost(1 << 21, 100, {0, 1}, {0, 1}).total_units;
  EXPECT_NEAR(b / a, 4.0, 1e-4);
}

TEST(Cost, MatchesFormulaOnRandomIntegers) {
  Rng rng(8);
  for (int i = 0; i < 500; ++i) {
    const std::uint64_t N = rng.Index(5000), T = rng.Index(500);
    const std::uint64_t m0 = rng.Index(50), m1 = rng.Index(50), b0 = rng.Index(50),
                        b1 = rng.Index(50);
    const std::uint64_t want = N * (T * (m0 + m1 * N) + (b0 + b1 * T));
    const auto c = EstimateMiaCost(N, T, {double(m0), double(m1)}, {double(b0), double(b1)});
    EXPECT_EQ(c.total_units, static_cast<double>(want));
  }
  EXPECT_THROW(EstimateMiaCost(1, 1, {-1, 0}, {0, 0}), Error);
}

}  // namespace
}  // namespace tabaudit
