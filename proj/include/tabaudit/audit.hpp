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

// Canary audits. The step audit replays many single noisy aggregations with
// and without an injected canary gradient; the end-to-end audit runs the
// shadow harness with an adversary-chosen record as target.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabaudit/attacks.hpp"
#include "tabaudit/core_stats.hpp"
#include "tabaudit/data.hpp"
#include "tabaudit/dpsgd.hpp"
#include "tabaudit/error.hpp"
#include "tabaudit/io.hpp"
#include "tabaudit/random.hpp"
#include "tabaudit/shadow.hpp"

namespace tabaudit {

// ---------------------------------------------------------------------------
// Canaries

// Unit direction scaled to the clip norm.
struct GradientCanary {
  std::vector<double> values;

  std::vector<double> Direction() const {
    const double n = L2Norm(values);
    std::vector<double> d = values;
    for (auto& v : d) v /= n;
    return d;
  }
};

inline GradientCanary MakeGradientCanary(std::span<const double> direction,
                                         double clip_norm) {
  Require(clip_norm > 0.0, "clip norm must be positive");
  const double n = L2Norm(direction);
  Require(n > 0.0 && std::isfinite(n), "canary direction must be non-zero");
  GradientCanary c;
  c.values.assign(direction.begin(), direction.end());
  for (auto& v : c.values) v *= clip_norm / n;
  return c;
}

// First standard basis direction.
inline GradientCanary DefaultGradientCanary(std::size_t dim, double clip_norm) {
  Require(dim >= 1, "canary dimension must be positive");
  std::vector<double> e(dim, 0.0);
  e[0] = 1.0;
  return MakeGradientCanary(e, clip_norm);
}

// Numeric columns at their maximum, categorical columns at the level that is
// rarest in `pool` (first such level on ties).
inline Record DefaultRecordCanary(const Dataset& pool) {
  Record r;
  for (std::size_t j = 0; j < pool.schema.size(); ++j) {
    const Column& c = pool.schema[j];
    if (c.numeric()) {
      r.values.push_back(c.num().max);
      continue;
    }
    std::vector<std::size_t> counts(c.width(), 0);
    for (const auto& row : pool.rows) ++counts[static_cast<std::size_t>(row.values[j])];
    const auto it = std::min_element(counts.begin(), counts.end());
    r.values.push_back(static_cast<double>(it - counts.begin()));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Verdicts

struct AuditVerdict {
  std::string audit;   // "step_mechanism" or "end_to_end"
  std::string attack;  // statistic or attack behind the bound
  PrivacyParams claimed;
  ExtendedReal measured_lower_bound;
  ExtendedReal measured_point;
  double confidence = 0.95;
  OperatingPoint operating_point;
  std::size_t trials = 0;
  bool pass = false;
  nlohmann::json provenance;

  // Passing, but the point estimate already exceeds the claim: the margin
  // is within the confidence slack.
  bool inconclusive() const {
    return pass && !(measured_point <= ExtendedReal(claimed.epsilon));
  }

  int ExitCode() const { return !pass ? 1 : (inconclusive() ? 2 : 0); }
};

namespace internal {

inline AuditVerdict MakeVerdict(const std::string& audit, const AttackReport& rep,
                                const std::string& op_label,
                                const PrivacyParams& claimed, std::size_t trials) {
  AuditVerdict v;
  v.audit = audit;
  v.attack = rep.attack;
  v.claimed = claimed;
  v.operating_point = rep.Find(op_label);
  v.measured_lower_bound = v.operating_point.epsilon_lower;
  v.measured_point = v.operating_point.epsilon_point;
  v.confidence = rep.confidence;
  v.trials = trials;
  v.pass = v.measured_lower_bound <= ExtendedReal(claimed.epsilon);
  return v;
}

}  // namespace internal

inline nlohmann::json ToJson(const AuditVerdict& v) {
  const auto& op = v.operating_point;
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["audit"] = v.audit;
  j["attack"] = v.attack;
  j["claimed"] = {{"epsilon", v.claimed.epsilon}, {"delta", v.claimed.delta}};
  j["measured_lower_bound"] = internal::ExtendedJson(v.measured_lower_bound);
  j["measured_point"] = internal::ExtendedJson(v.measured_point);
  j["confidence"] = v.confidence;
  j["operating_point"] = {{"label", op.label},
                          {"target_fpr", op.target_fpr},
                          {"threshold", internal::ThresholdJson(op.threshold)},
                          {"tp", op.counts.tp},
                          {"fp", op.counts.fp},
                          {"tn", op.counts.tn},
                          {"fn", op.counts.fn}};
  j["trials"] = v.trials;
  j["pass"] = v.pass;
  j["inconclusive"] = v.inconclusive();
  j["exit_code"] = v.ExitCode();
  if (!v.provenance.is_null()) j["provenance"] = v.provenance;
  return j;
}

// ---------------------------------------------------------------------------
// Step audit

struct StepAuditOptions {
  // Fixed batch: `background_size` gradients summing to -0.99 C along the
  // canary direction, plus the canary slot.
  std::size_t background_size = 7;
  // The injected raw gradient is canary * canary_scale; per-sample clipping
  // brings it back to norm C.
  double canary_scale = 1000.0;
  double target_fpr = 0.01;
  std::size_t workers = 1;
};

inline constexpr std::size_t kMinStepTrials = 100;

// Claim for one unsubsampled step at the configured sigma, whatever the bug.
inline PrivacyParams SingleStepClaim(const DpSgdConfig& config, double delta) {
  if (!(config.noise_multiplier > 0.0)) {
    Fail(ErrorCode::kNoGuarantee, "no valid guarantee exists: noise_multiplier is 0");
  }
  DpSgdConfig c = config;
  c.sample_rate = 1.0;
  c.steps = 1;
  c.bug_mode = BugMode::kNone;
  return AccountantFor(c, delta);
}

inline AuditVerdict AuditStepMechanism(const DpSgdConfig& config,
                                       const GradientCanary& canary,
                                       std::size_t trials, double delta,
                                       double confidence = 0.95,
                                       const StepAuditOptions& opt = {}) {
  config.Validate();
  if (trials < kMinStepTrials) {
    Fail(ErrorCode::kInvalidArgument,
         "trials too small: step audits need at least " +
             std::to_string(kMinStepTrials) + ", got " + std::to_string(trials));
  }
  Require(opt.background_size >= 1, "background_size must be positive");
  Require(opt.canary_scale >= 1.0, "canary_scale must be >= 1");
  Require(std::abs(L2Norm(canary.values) - config.clip_norm) <=
              1e-9 * config.clip_norm,
          "gradient canary norm must equal the clip norm");
  const PrivacyParams claimed = SingleStepClaim(config, delta);

  const std::size_t dim = canary.values.size();
  const std::vector<double> dir = canary.Direction();
  const NoisyAggregator agg(config, dim, opt.background_size + 1);
  std::vector<double> bg(dim);
  const double share = 0.99 * config.clip_norm / static_cast<double>(opt.background_size);
  for (std::size_t k = 0; k < dim; ++k) bg[k] = -share * dir[k];
  std::vector<double> injected = canary.values;
  for (auto& v : injected) v *= opt.canary_scale;

  const std::vector<int> bits =
      StratifiedBits(trials, Hash64(config.seed, stream_tag::kTrials));
  ScoredRuns scored{"step_inner_product", AllRuns(trials),
                    std::vector<double>(trials)};
  ParallelFor(trials, opt.workers, [&](std::size_t t) {
    std::vector<std::vector<double>> grads(opt.background_size, bg);
    if (bits[t]) grads.push_back(injected);
    const AggregateResult r = agg.Aggregate(t, grads);
    double s = 0.0;
    for (std::size_t k = 0; k < dim; ++k) s += r.gradient[k] * dir[k];
    scored.scores[t] = s;
  });

  const std::vector<OperatingPointSpec> ops = {
      {OperatingKind::kLowFprAuto, opt.target_fpr}};
  const AttackReport rep = Evaluate(scored, bits, delta, confidence, ops);
  AuditVerdict v =
      internal::MakeVerdict("step_mechanism", rep, ops[0].Label(), claimed, trials);
  v.provenance = {{"dpsgd", config.ToJson()},
                  {"delta", delta},
                  {"background_size", opt.background_size},
                  {"canary_scale", opt.canary_scale},
                  {"target_fpr", opt.target_fpr}};
  return v;
}

// ---------------------------------------------------------------------------
// End-to-end audit

struct EndToEndOptions {
  std::size_t n_samples = 1000;  // synthetic records per generative run
  double target_fpr = 0.01;
  double holdout_fraction = 0.5;
  ClassifierConfig groundhog;
  std::size_t workers = 1;
};

inline constexpr std::size_t kMinEndToEndRuns = 20;

// The claim a correct implementation of `trainer` would make on `n` records.
// Bug modes are ignored on purpose: the audit checks that claim.
inline PrivacyParams EndToEndClaim(const TrainerSpec& trainer, const Schema& schema,
                                   std::size_t n, std::optional<double> delta) {
  const double d = delta.value_or(1.0 / static_cast<double>(n));
  switch (trainer.kind) {
    case TrainerKind::kDpSgd: {
      DpSgdConfig c = trainer.dpsgd;
      c.bug_mode = BugMode::kNone;
      return ClaimedPrivacy(c, n, d);
    }
    case TrainerKind::kGan: {
      DpSgdConfig c = trainer.gan.discriminator;
      c.bug_mode = BugMode::kNone;
      if (c.steps == 0) return {0.0, d};
      return ClaimedPrivacy(c, n, d);
    }
    case TrainerKind::kMarginal:
      if (!(trainer.marginal.noise_std > 0.0)) {
        Fail(ErrorCode::kNoGuarantee,
             "no valid guarantee exists for a noiseless marginal synthesizer");
      }
      Require(d > 0.0 && d < 1.0, "delta must lie in (0, 1)");
      return {GdpEpsilonForDelta(
                  {std::sqrt(static_cast<double>(schema.size())) /
                   trainer.marginal.noise_std},
                  d),
              d};
  }
  Fail(ErrorCode::kConfig, "unknown trainer kind");
}

inline AuditVerdict AuditEndToEnd(const TrainerSpec& trainer, const Dataset& pool,
                                  const Record& canary, std::size_t T_runs,
                                  std::optional<double> delta, double confidence,
                                  std::uint64_t master_seed,
                                  const EndToEndOptions& opt = {}) {
  if (T_runs < kMinEndToEndRuns) {
    Fail(ErrorCode::kInvalidArgument,
         "end-to-end audits need at least " + std::to_string(kMinEndToEndRuns) +
             " shadow runs, got " + std::to_string(T_runs));
  }
  Require(confidence > 0.0 && confidence < 1.0, "confidence must lie in (0, 1)");
  Require(!pool.empty(), "audit pool is empty", ErrorCode::kDegenerateInput);
  ValidateRecord(pool.schema, canary, "canary");
  const PrivacyParams claimed = EndToEndClaim(trainer, pool.schema, pool.size(), delta);

  const ThreatModel tm;  // black-box queries, fixed dataset
  const ShadowCollection c =
      RunShadowExperiment(canary, pool, trainer, tm, T_runs, master_seed, opt.workers);
  const std::vector<int> bits = c.bits();
  const RunSplit split = SplitRuns(bits, opt.holdout_fraction, master_seed);
  const std::vector<OperatingPointSpec> ops = {
      {OperatingKind::kLowFprAuto, opt.target_fpr}};
  const std::string label = ops[0].Label();

  AuditVerdict v;
  if (!trainer.generative()) {
    const auto f = QueryFeatures(c, QueryMode::kPredLoss, {0, master_seed, opt.workers});
    const AttackReport rep =
        Evaluate(AttackLira(f, split.calibration), bits, claimed.delta, confidence, ops);
    v = internal::MakeVerdict("end_to_end", rep, label, claimed, T_runs);
  } else {
    // Two attacks; each gets half of the error budget.
    const double conf2 = 1.0 - (1.0 - confidence) / 2.0;
    const auto f = QueryFeatures(c, QueryMode::kSynthDataset,
                                 {opt.n_samples, master_seed, opt.workers});
    ClassifierConfig gh = opt.groundhog;
    gh.seed = Hash64(master_seed, gh.seed);
    const AttackReport dcr =
        Evaluate(AttackDcr(f, canary, opt.workers), bits, claimed.delta, conf2, ops);
    const AttackReport ghr = Evaluate(AttackGroundhog(f, split.calibration, gh), bits,
                                      claimed.delta, conf2, ops);
    const AuditVerdict a = internal::MakeVerdict("end_to_end", dcr, label, claimed, T_runs);
    const AuditVerdict b = internal::MakeVerdict("end_to_end", ghr, label, claimed, T_runs);
    v = b.measured_lower_bound <= a.measured_lower_bound ? a : b;
    if (v.measured_point < b.measured_point) v.measured_point = b.measured_point;
    if (v.measured_point < a.measured_point) v.measured_point = a.measured_point;
    v.confidence = confidence;
  }
  v.provenance = {{"trainer", trainer.ToJson()},
                  {"threat_model", tm.ToJson()},
                  {"master_seed", master_seed},
                  {"shadow_runs", T_runs},
                  {"pool_size", pool.size()},
                  {"pool_fingerprint", Fingerprint(pool)},
                  {"collection_fingerprint", CollectionFingerprint(c)},
                  {"target_fpr", opt.target_fpr}};
  return v;
}

// ---------------------------------------------------------------------------
// Cost of a full membership-inference evaluation: N targets, T shadow
// models each, cost_M(N) per model and cost_B(T) per attack.

struct AffineCost {
  double intercept = 0.0;
  double slope = 0.0;

  double At(double x) const { return intercept + slope * x; }
};

struct CostEstimate {
  std::uint64_t N = 0;
  std::uint64_t T = 0;
  AffineCost cost_model;
  AffineCost cost_attack;
  double total_units = 0.0;

  nlohmann::json ToJson() const {
    return {{"schema_version", kSchemaVersion},
            {"N", N},
            {"T", T},
            {"cost_model", {{"intercept", cost_model.intercept},
                            {"slope", cost_model.slope}}},
            {"cost_attack", {{"intercept", cost_attack.intercept},
                             {"slope", cost_attack.slope}}},
            {"total_units", total_units}};
  }
};

inline CostEstimate EstimateMiaCost(std::uint64_t N, std::uint64_t T,
                                    const AffineCost& cost_model,
                                    const AffineCost& cost_attack) {
  for (double c : {cost_model.intercept, cost_model.slope, cost_attack.intercept,
                   cost_attack.slope}) {
    Require(c >= 0.0 && std::isfinite(c), "cost coefficients must be non-negative");
  }
  const double n = static_cast<double>(N);
  const double t = static_cast<double>(T);
  return {N, T, cost_model, cost_attack,
          n * (t * cost_model.At(n) + cost_attack.At(t))};
}

}  // namespace tabaudit
