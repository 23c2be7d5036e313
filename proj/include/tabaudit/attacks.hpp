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

// Membership decision rules over shadow features, and ROC evaluation.
//
// Scoring functions never see the bits of the runs they score: calibrated
// attacks receive a CalibrationSet (run indices plus their bits) and return
// scores for the remaining runs. Bits are joined only in Evaluate.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabaudit/core_stats.hpp"
#include "tabaudit/data.hpp"
#include "tabaudit/error.hpp"
#include "tabaudit/io.hpp"
#include "tabaudit/models.hpp"
#include "tabaudit/random.hpp"
#include "tabaudit/shadow.hpp"

namespace tabaudit {

// Higher score = "predict member".
struct ScoredRuns {
  std::string attack;
  std::vector<std::size_t> runs;
  std::vector<double> scores;

  std::size_t size() const { return runs.size(); }
};

struct CalibrationSet {
  std::vector<std::size_t> runs;
  std::vector<int> bits;
};

struct RunSplit {
  CalibrationSet calibration;
  std::vector<std::size_t> evaluation;
};

inline constexpr std::size_t kMinRunsPerClass = 4;
inline constexpr std::size_t kMinRunsPerClassPerSplit = 2;

// Stratified by bit: each class sends round(holdout * n_class) runs to the
// evaluation split, clamped so both splits keep >= 2 runs of each class.
inline RunSplit SplitRuns(std::span<const int> bits, double holdout_fraction,
                          std::uint64_t seed) {
  Require(holdout_fraction > 0.0 && holdout_fraction < 1.0,
          "holdout_fraction must lie in (0, 1)", ErrorCode::kConfig);
  RunSplit split;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (bits[i] == cls) idx.push_back(i);
    }
    if (idx.size() < kMinRunsPerClass) {
      Fail(ErrorCode::kDegenerateInput,
           "too few runs: calibrated attacks need at least " +
               std::to_string(kMinRunsPerClass) + " runs per class, got " +
               std::to_string(idx.size()) + " with bit " + std::to_string(cls));
    }
    Rng rng(Hash64(seed, static_cast<std::uint64_t>(cls)), stream_tag::kSubsample);
    rng.Shuffle(idx);
    auto n_eval = static_cast<std::size_t>(
        std::llround(holdout_fraction * static_cast<double>(idx.size())));
    n_eval = std::clamp(n_eval, kMinRunsPerClassPerSplit,
                        idx.size() - kMinRunsPerClassPerSplit);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (k < n_eval) {
        split.evaluation.push_back(idx[k]);
      } else {
        split.calibration.runs.push_back(idx[k]);
        split.calibration.bits.push_back(cls);
      }
    }
  }
  std::sort(split.evaluation.begin(), split.evaluation.end());
  return split;
}

inline std::vector<std::size_t> AllRuns(std::size_t n) {
  std::vector<std::size_t> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = i;
  return r;
}

// ---------------------------------------------------------------------------
// Attacks

inline ScoredRuns AttackLossThreshold(std::span<const FeatureBundle> features) {
  ScoredRuns s{"loss_threshold", {}, {}};
  for (const auto& f : features) {
    s.runs.push_back(f.run);
    s.scores.push_back(-f.loss);
  }
  return s;
}

inline ScoredRuns AttackDiscLoss(std::span<const FeatureBundle> features) {
  ScoredRuns s{"disc_loss", {}, {}};
  for (const auto& f : features) {
    Require(!f.synthetic.has_value(), "disc_loss attack needs loss features",
            ErrorCode::kIncompatibleMode);
    s.runs.push_back(f.run);
    s.scores.push_back(-f.loss);
  }
  return s;
}

inline constexpr double kLiraVarianceFloor = 1e-12;

struct GaussianFit {
  double mean = 0.0;
  double var = kLiraVarianceFloor;

  double LogPdf(double x) const {
    return -0.5 * std::log(2.0 * std::numbers::pi * var) -
           (x - mean) * (x - mean) / (2.0 * var);
  }
};

inline GaussianFit FitGaussian(std::span<const double> xs) {
  GaussianFit g;
  double s = 0.0;
  for (double x : xs) s += x;
  g.mean = s / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - g.mean) * (x - g.mean);
  g.var = ss / static_cast<double>(xs.size()) + kLiraVarianceFloor;
  return g;
}

namespace internal {

inline std::vector<const FeatureBundle*> IndexByRun(
    std::span<const FeatureBundle> features) {
  std::size_t n = 0;
  for (const auto& f : features) n = std::max(n, f.run + 1);
  std::vector<const FeatureBundle*> by_run(n, nullptr);
  for (const auto& f : features) by_run[f.run] = &f;
  return by_run;
}

inline std::vector<std::size_t> EvaluationRuns(std::span<const FeatureBundle> features,
                                               const CalibrationSet& calib) {
  std::vector<std::size_t> out;
  for (const auto& f : features) {
    if (std::find(calib.runs.begin(), calib.runs.end(), f.run) == calib.runs.end()) {
      out.push_back(f.run);
    }
  }
  return out;
}

}  // namespace internal

inline ScoredRuns AttackLira(std::span<const FeatureBundle> features,
                             const CalibrationSet& calib) {
  const auto by_run = internal::IndexByRun(features);
  std::vector<double> in, out;
  for (std::size_t k = 0; k < calib.runs.size(); ++k) {
    (calib.bits[k] ? in : out).push_back(by_run.at(calib.runs[k])->loss);
  }
  Require(in.size() >= kMinRunsPerClassPerSplit && out.size() >= kMinRunsPerClassPerSplit,
          "too few runs: lira needs at least 2 calibration runs per class",
          ErrorCode::kDegenerateInput);
  const GaussianFit g_in = FitGaussian(in), g_out = FitGaussian(out);
  ScoredRuns s{"lira", {}, {}};
  for (std::size_t r : internal::EvaluationRuns(features, calib)) {
    const double l = by_run[r]->loss;
    s.runs.push_back(r);
    s.scores.push_back(g_in.LogPdf(l) - g_out.LogPdf(l));
  }
  return s;
}

// Mean over columns of |diff| / range (numeric) or 0/1 mismatch (categorical).
inline double GowerDistance(const Schema& schema, const Record& a, const Record& b) {
  double d = 0.0;
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const Column& c = schema[j];
    if (c.numeric()) {
      d += std::abs(a.values[j] - b.values[j]) / (c.num().max - c.num().min);
    } else {
      d += a.values[j] == b.values[j] ? 0.0 : 1.0;
    }
  }
  return d / static_cast<double>(schema.size());
}

inline double DistanceToClosestRecord(const Dataset& synthetic, const Record& target) {
  Require(!synthetic.empty(), "dcr needs non-empty synthetic datasets",
          ErrorCode::kDegenerateInput);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : synthetic.rows) {
    best = std::min(best, GowerDistance(synthetic.schema, target, r));
  }
  return best;
}

inline ScoredRuns AttackDcr(std::span<const FeatureBundle> features,
                            const Record& target, std::size_t workers = 1) {
  ScoredRuns s{"dcr", std::vector<std::size_t>(features.size()),
               std::vector<double>(features.size())};
  ParallelFor(features.size(), workers, [&](std::size_t i) {
    const auto& f = features[i];
    Require(f.synthetic.has_value(), "dcr attack needs synthetic datasets",
            ErrorCode::kIncompatibleMode);
    s.runs[i] = f.run;
    s.scores[i] = -DistanceToClosestRecord(*f.synthetic, target);
  });
  return s;
}

// Per numeric column: mean, median, variance; per categorical column: level
// frequencies. Schema order.
inline std::vector<double> GroundhogFeatures(const Dataset& ds) {
  std::vector<double> out;
  const double n = static_cast<double>(ds.size());
  for (std::size_t j = 0; j < ds.schema.size(); ++j) {
    const Column& c = ds.schema[j];
    if (c.numeric()) {
      std::vector<double> v;
      v.reserve(ds.size());
      for (const auto& r : ds.rows) v.push_back(r.values[j]);
      if (v.empty()) {
        out.insert(out.end(), {0.0, 0.0, 0.0});
        continue;
      }
      std::sort(v.begin(), v.end());  // sorted: sums become row-order invariant
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= n;
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      var /= n;
      const std::size_t m = v.size();
      const double median = m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
      out.insert(out.end(), {mean, median, var});
    } else {
      std::vector<double> freq(c.width(), 0.0);
      for (const auto& r : ds.rows) freq[static_cast<std::size_t>(r.values[j])] += 1.0;
      for (auto& f : freq) f = n > 0 ? f / n : 0.0;
      out.insert(out.end(), freq.begin(), freq.end());
    }
  }
  return out;
}

inline std::size_t GroundhogFeatureDim(const Schema& schema) {
  std::size_t d = 0;
  for (const auto& c : schema.columns()) d += c.numeric() ? 3 : c.width();
  return d;
}

struct ClassifierConfig {
  std::size_t steps = 500;
  double learning_rate = 0.5;
  std::uint64_t seed = 0;

  nlohmann::json ToJson() const {
    return {{"steps", steps}, {"learning_rate", learning_rate}, {"seed", seed}};
  }
  static ClassifierConfig FromJson(const nlohmann::json& j) {
    ClassifierConfig c;
    c.steps = j.value("steps", c.steps);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    return c;
  }
};

// Logistic regression on standardized features (calibration statistics),
// full-batch plain SGD; the score is the member-vs-non-member logit.
inline ScoredRuns AttackGroundhog(std::span<const FeatureBundle> features,
                                  const CalibrationSet& calib,
                                  const ClassifierConfig& cfg = {}) {
  const auto by_run = internal::IndexByRun(features);
  auto featurize = [&](std::size_t run) {
    const FeatureBundle* f = by_run.at(run);
    Require(f && f->synthetic.has_value(), "groundhog needs synthetic datasets",
            ErrorCode::kIncompatibleMode);
    return GroundhogFeatures(*f->synthetic);
  };
  std::size_t n_in = 0;
  for (int b : calib.bits) n_in += b == 1;
  Require(n_in >= kMinRunsPerClassPerSplit &&
              calib.bits.size() - n_in >= kMinRunsPerClassPerSplit,
          "too few runs: groundhog needs at least 2 calibration runs per class",
          ErrorCode::kDegenerateInput);
  std::vector<std::vector<double>> train;
  for (std::size_t r : calib.runs) train.push_back(featurize(r));
  const std::size_t d = train.at(0).size();
  std::vector<double> mean(d, 0.0), sd(d, 0.0);
  for (const auto& x : train) {
    for (std::size_t k = 0; k < d; ++k) mean[k] += x[k] / static_cast<double>(train.size());
  }
  for (const auto& x : train) {
    for (std::size_t k = 0; k < d; ++k) {
      sd[k] += (x[k] - mean[k]) * (x[k] - mean[k]) / static_cast<double>(train.size());
    }
  }
  for (auto& v : sd) v = std::sqrt(v);
  auto standardize = [&](std::vector<double> x) {
    for (std::size_t k = 0; k < d; ++k) {
      x[k] = sd[k] > 1e-12 ? (x[k] - mean[k]) / sd[k] : 0.0;
    }
    return x;
  };
  std::vector<double> flat;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto z = standardize(train[i]);
    flat.insert(flat.end(), z.begin(), z.end());
    labels.push_back(static_cast<std::size_t>(calib.bits[i]));
  }
  const ModelSpec spec{ModelKind::kLogisticRegression, d, 0, 2, 0.0, cfg.seed};
  const ParamVector params = TrainPlainSgd(spec, flat, labels, cfg.steps,
                                           cfg.learning_rate, labels.size(), cfg.seed);
  ScoredRuns s{"groundhog", {}, {}};
  for (std::size_t r : internal::EvaluationRuns(features, calib)) {
    const auto out = Forward(spec, params, standardize(featurize(r))).outputs;
    s.runs.push_back(r);
    s.scores.push_back(out[1] - out[0]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Evaluation

struct RocPoint {
  double threshold = 0.0;  // predict member iff score >= threshold
  double fpr = 0.0;
  double tpr = 0.0;
};

enum class OperatingKind { kMedian, kFprAtMost, kLowFprAuto };

struct OperatingPointSpec {
  OperatingKind kind = OperatingKind::kLowFprAuto;
  double target_fpr = 0.01;

  std::string Label() const {
    if (kind == OperatingKind::kMedian) return "median";
    if (kind == OperatingKind::kLowFprAuto) return "low_fpr";
    return "fpr<=" + internal::FormatDouble(target_fpr);
  }
};

inline std::vector<OperatingPointSpec> DefaultOperatingPoints() {
  return {{OperatingKind::kMedian, 0.5},
          {OperatingKind::kFprAtMost, 0.1},
          {OperatingKind::kLowFprAuto, 0.01}};
}

struct OperatingPoint {
  std::string label;
  double target_fpr = 0.0;  // effective target after auto adjustment
  double threshold = 0.0;
  ConfusionCounts counts;
  ExtendedReal epsilon_point;
  ExtendedReal epsilon_lower;
};

struct AttackReport {
  std::string attack;
  nlohmann::json threat_model;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double delta = 0.0;
  double confidence = 0.95;
  double auc = 0.5;
  std::vector<RocPoint> roc;
  std::vector<OperatingPoint> operating_points;

  const OperatingPoint& Find(const std::string& label) const {
    for (const auto& op : operating_points) {
      if (op.label == label) return op;
    }
    Fail(ErrorCode::kInvalidArgument, "no operating point '" + label + "'");
  }
};

inline ExtendedReal MaxLowerBound(const AttackReport& r) {
  ExtendedReal best(0.0);
  for (const auto& op : r.operating_points) {
    if (best < op.epsilon_lower) best = op.epsilon_lower;
  }
  return best;
}

inline ConfusionCounts CountsAt(std::span<const double> scores,
                                std::span<const int> labels, double threshold) {
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i]) {
      (pred ? c.tp : c.fn)++;
    } else {
      (pred ? c.fp : c.tn)++;
    }
  }
  return c;
}

inline AttackReport Evaluate(const ScoredRuns& scored, std::span<const int> bits_by_run,
                             double delta, double confidence,
                             const std::vector<OperatingPointSpec>& ops =
                                 DefaultOperatingPoints()) {
  Require(delta >= 0.0 && delta < 1.0, "delta must lie in [0, 1)");
  Require(confidence > 0.0 && confidence < 1.0, "confidence must lie in (0, 1)");
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    Require(std::isfinite(scored.scores[i]), "attack scores must be finite",
            ErrorCode::kDegenerateInput);
    scores.push_back(scored.scores[i]);
    labels.push_back(bits_by_run[scored.runs[i]]);
  }
  AttackReport rep;
  rep.attack = scored.attack;
  rep.delta = delta;
  rep.confidence = confidence;
  for (int b : labels) (b ? rep.positives : rep.negatives)++;
  if (rep.positives == 0 || rep.negatives == 0) {
    Fail(ErrorCode::kDegenerateInput, "evaluation needs both member and non-member runs");
  }
  const double np = static_cast<double>(rep.positives);
  const double nn = static_cast<double>(rep.negatives);

  // ROC: thresholds at every distinct score, descending.
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  rep.roc.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    while (k < order.size() && scores[order[k]] == s) {
      (labels[order[k]] ? tp : fp)++;
      ++k;
    }
    rep.roc.push_back({s, fp / nn, tp / np});
  }
  rep.auc = 0.0;
  for (std::size_t k = 1; k < rep.roc.size(); ++k) {
    rep.auc += (rep.roc[k].fpr - rep.roc[k - 1].fpr) *
               (rep.roc[k].tpr + rep.roc[k - 1].tpr) / 2.0;
  }

  for (const auto& spec : ops) {
    OperatingPoint op;
    op.label = spec.Label();
    if (spec.kind == OperatingKind::kMedian) {
      std::vector<double> sorted = scores;
      std::sort(sorted.begin(), sorted.end());
      const std::size_t m = sorted.size();
      op.threshold = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
      op.target_fpr = 0.5;
    } else {
      op.target_fpr = spec.target_fpr;
      if (spec.kind == OperatingKind::kLowFprAuto && nn * spec.target_fpr < 1.0) {
        op.target_fpr = 1.0 / nn;  // smallest achievable nonzero fpr
      }
      // highest tpr with realized fpr <= target; among equal tpr the
      // largest threshold
      op.threshold = rep.roc[0].threshold;
      double best_tpr = rep.roc[0].tpr;
      for (const auto& p : rep.roc) {
        if (p.fpr <= op.target_fpr + 1e-15 && p.tpr > best_tpr) {
          op.threshold = p.threshold;
          best_tpr = p.tpr;
        }
      }
    }
    op.counts = CountsAt(scores, labels, op.threshold);
    op.epsilon_point = EffectiveEpsilonPoint(ComputeErrorRates(op.counts), delta);
    op.epsilon_lower = EffectiveEpsilonLowerBound(op.counts, delta, confidence);
    rep.operating_points.push_back(op);
  }
  return rep;
}

namespace internal {

inline nlohmann::json ThresholdJson(double t) {
  if (std::isinf(t)) return t > 0 ? "inf" : "-inf";
  return t;
}

inline nlohmann::json ExtendedJson(const ExtendedReal& e) {
  if (!e.bounded()) return "unbounded";
  return e.value();
}

}  // namespace internal

inline nlohmann::json ToJson(const AttackReport& r) {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["attack"] = r.attack;
  if (!r.threat_model.is_null()) j["threat_model"] = r.threat_model;
  j["positives"] = r.positives;
  j["negatives"] = r.negatives;
  j["delta"] = r.delta;
  j["confidence"] = r.confidence;
  j["auc"] = r.auc;
  nlohmann::json ops = nlohmann::json::array();
  for (const auto& op : r.operating_points) {
    ops.push_back({{"label", op.label},
                   {"target_fpr", op.target_fpr},
                   {"threshold", internal::ThresholdJson(op.threshold)},
                   {"tp", op.counts.tp},
                   {"fp", op.counts.fp},
                   {"tn", op.counts.tn},
                   {"fn", op.counts.fn},
                   {"epsilon_point", internal::ExtendedJson(op.epsilon_point)},
                   {"epsilon_lower_bound", internal::ExtendedJson(op.epsilon_lower)}});
  }
  j["operating_points"] = ops;
  nlohmann::json roc = nlohmann::json::array();
  for (const auto& p : r.roc) {
    roc.push_back({internal::ThresholdJson(p.threshold), p.fpr, p.tpr});
  }
  j["roc"] = roc;
  return j;
}

inline void WriteRocCsv(std::ostream& out, const AttackReport& r) {
  out << "threshold,fpr,tpr\n";
  for (const auto& p : r.roc) {
    out << (std::isinf(p.threshold) ? (p.threshold > 0 ? "inf" : "-inf")
                                    : internal::FormatDouble(p.threshold))
        << ',' << internal::FormatDouble(p.fpr) << ',' << internal::FormatDouble(p.tpr) << '\n';
  }
}

}  // namespace tabaudit
