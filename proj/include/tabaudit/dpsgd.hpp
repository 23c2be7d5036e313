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

// DP-SGD: Poisson subsampling, per-sample clipping, Gaussian noise and a
// GDP accountant. Broken variants are selected by BugMode and serve as
// positive controls for the audits.

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
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

namespace tabaudit {

enum class BugMode {
  kNone,
  kNoPerSampleClipping,
  kStaticNoise,
  kNoiseNotScaledToBatch,
  kNoNoise,
};

inline std::string ToString(BugMode m) {
  switch (m) {
    case BugMode::kNone: return "none";
    case BugMode::kNoPerSampleClipping: return "no_per_sample_clipping";
    case BugMode::kStaticNoise: return "static_noise";
    case BugMode::kNoiseNotScaledToBatch: return "noise_not_scaled_to_batch";
    case BugMode::kNoNoise: return "no_noise";
  }
  return "none";
}

inline BugMode ParseBugMode(const std::string& s) {
  for (BugMode m : {BugMode::kNone, BugMode::kNoPerSampleClipping,
                    BugMode::kStaticNoise, BugMode::kNoiseNotScaledToBatch,
                    BugMode::kNoNoise}) {
    if (ToString(m) == s) return m;
  }
  Fail(ErrorCode::kConfig, "unknown bug_mode '" + s + "'");
}

struct DpSgdConfig {
  double clip_norm = 1.0;
  double noise_multiplier = 1.0;
  double sample_rate = 0.01;
  std::uint64_t steps = 100;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
  BugMode bug_mode = BugMode::kNone;

  void Validate() const {
    Require(std::isfinite(clip_norm) && clip_norm > 0.0,
            "clip_norm must be positive", ErrorCode::kConfig);
    Require(std::isfinite(noise_multiplier) && noise_multiplier >= 0.0,
            "noise_multiplier must be non-negative", ErrorCode::kConfig);
    Require(sample_rate > 0.0 && sample_rate <= 1.0,
            "sample_rate must lie in (0, 1]", ErrorCode::kConfig);
    Require(steps >= 1, "steps must be positive", ErrorCode::kConfig);
    Require(std::isfinite(learning_rate) && learning_rate > 0.0,
            "learning_rate must be positive", ErrorCode::kConfig);
  }

  nlohmann::json ToJson() const {
    return {{"clip_norm", clip_norm},
            {"noise_multiplier", noise_multiplier},
            {"sample_rate", sample_rate},
            {"steps", steps},
            {"learning_rate", learning_rate},
            {"seed", seed},
            {"bug_mode", ToString(bug_mode)}};
  }

  static DpSgdConfig FromJson(const nlohmann::json& j) {
    DpSgdConfig c;
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.noise_multiplier = j.value("noise_multiplier", c.noise_multiplier);
    c.sample_rate = j.value("sample_rate", c.sample_rate);
    c.steps = j.value("steps", c.steps);
    if (j.contains("epochs")) {
      const std::uint64_t epochs = j.at("epochs");
      c.steps = epochs * static_cast<std::uint64_t>(
                             std::ceil(1.0 / c.sample_rate));
    }
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    c.bug_mode = ParseBugMode(j.value("bug_mode", std::string("none")));
    return c;
  }
};

inline double L2Norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline std::vector<double> ClipPerSample(std::span<const double> grad,
                                         double clip_norm) {
  Require(clip_norm > 0.0, "clip norm must be positive");
  const double n = L2Norm(grad);
  std::vector<double> out(grad.begin(), grad.end());
  if (n > clip_norm) {
    const double scale = clip_norm / n;
    for (auto& v : out) v *= scale;
  }
  return out;
}

// Elementwise sum of rows[lo, hi) by recursive halving. The tree shape
// depends only on the row count, so the result is bit-identical however the
// rows were produced.
inline void PairwiseSumInto(std::span<const std::vector<double>> rows,
                            std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  if (rows.empty()) return;
  if (rows.size() == 1) {
    std::copy(rows[0].begin(), rows[0].end(), out.begin());
    return;
  }
  const std::size_t half = rows.size() / 2;
  std::vector<double> right(out.size());
  PairwiseSumInto(rows.subspan(0, half), out);
  PairwiseSumInto(rows.subspan(half), right);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += right[k];
}

struct StepRecord {
  std::uint64_t step = 0;
  std::vector<std::size_t> batch;
  std::vector<double> clipped_sum;  // aggregate before noise
  std::vector<double> noise;        // raw N(0, (sigma C)^2) draw
  std::vector<double> params;       // after the update
  std::vector<double> clipped_norms;
};

struct TrainingTrace {
  std::vector<StepRecord> steps;
};

struct AggregateResult {
  std::vector<double> clipped_sum;
  std::vector<double> noise;
  std::vector<double> gradient;  // noisy, normalized; the update is -lr * this
  std::vector<double> clipped_norms;
};

// One noisy aggregation per call. The noise for step t comes from a stream
// keyed by (seed, t), so traces can be replayed.
class NoisyAggregator {
 public:
  NoisyAggregator(const DpSgdConfig& config, std::size_t dim,
                  std::size_t dataset_size)
      : config_(config), dim_(dim), dataset_size_(dataset_size) {
    config_.Validate();
    Require(dim >= 1, "gradient dimension must be positive");
    Require(dataset_size >= 1, "dataset must be non-empty");
  }

  const DpSgdConfig& config() const { return config_; }
  double ExpectedBatchSize() const {
    return config_.sample_rate * static_cast<double>(dataset_size_);
  }

  std::vector<double> NoiseDraw(std::uint64_t step) const {
    std::vector<double> noise(dim_, 0.0);
    if (config_.bug_mode == BugMode::kNoNoise ||
        config_.noise_multiplier == 0.0) {
      return noise;
    }
    const std::uint64_t key =
        config_.bug_mode == BugMode::kStaticNoise ? 0 : step;
    Rng rng(Hash64(config_.seed, stream_tag::kNoise), key);
    const double sd = config_.noise_multiplier * config_.clip_norm;
    for (auto& v : noise) v = rng.Normal(0.0, sd);
    return noise;
  }

  AggregateResult Aggregate(std::uint64_t step,
                            std::span<const std::vector<double>> grads) const {
    AggregateResult r;
    r.clipped_sum.assign(dim_, 0.0);
    const bool per_sample = config_.bug_mode != BugMode::kNoPerSampleClipping;
    std::vector<std::vector<double>> clipped;
    clipped.reserve(grads.size());
    for (const auto& g : grads) {
      Require(g.size() == dim_, "gradient dimension mismatch");
      clipped.push_back(per_sample ? ClipPerSample(g, config_.clip_norm) : g);
      r.clipped_norms.push_back(L2Norm(clipped.back()));
      if (per_sample && r.clipped_norms.back() > config_.clip_norm + 1e-9) {
        Fail(ErrorCode::kDegenerateInput, "clipped norm exceeds clip bound");
      }
    }
    PairwiseSumInto(clipped, r.clipped_sum);
    if (!per_sample) r.clipped_sum = ClipPerSample(r.clipped_sum, config_.clip_norm);
    r.noise = NoiseDraw(step);

    const double expected = ExpectedBatchSize();
    const double noise_div =
        config_.bug_mode == BugMode::kNoiseNotScaledToBatch
            ? std::max<double>(1.0, static_cast<double>(grads.size()))
            : expected;
    r.gradient.resize(dim_);
    for (std::size_t k = 0; k < dim_; ++k) {
      r.gradient[k] = r.clipped_sum[k] / expected + r.noise[k] / noise_div;
    }
    return r;
  }

 private:
  DpSgdConfig config_;
  std::size_t dim_;
  std::size_t dataset_size_;
};

// Poisson subsample of [0, n) for the given step.
inline std::vector<std::size_t> PoissonBatch(const DpSgdConfig& config,
                                             std::size_t n,
                                             std::uint64_t step) {
  Rng rng(Hash64(config.seed, stream_tag::kBatch), step);
  std::vector<std::size_t> batch;
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.Bernoulli(config.sample_rate)) batch.push_back(i);
  }
  return batch;
}

// One step: per-sample gradients (optionally concurrent), noisy aggregate,
// parameter update. An empty batch yields a noise-only update.
inline StepRecord NoisyBatchUpdate(const ModelSpec& spec, ParamVector& params,
                                   const SupervisedData& data,
                                   std::span<const std::size_t> batch,
                                   std::uint64_t step,
                                   const NoisyAggregator& aggregator,
                                   std::size_t workers = 1) {
  std::vector<std::vector<double>> grads(batch.size());
  ParallelFor(batch.size(), workers, [&](std::size_t i) {
    grads[i] = PerSampleGradient(spec, params, data.Row(batch[i]),
                                 data.labels[batch[i]]);
  });
  AggregateResult agg = aggregator.Aggregate(step, grads);
  const double lr = aggregator.config().learning_rate;
  for (std::size_t k = 0; k < params.size(); ++k) {
    params.values[k] -= lr * agg.gradient[k];
  }
  StepRecord rec;
  rec.step = step;
  rec.batch.assign(batch.begin(), batch.end());
  rec.clipped_sum = std::move(agg.clipped_sum);
  rec.noise = std::move(agg.noise);
  rec.params = params.values;
  rec.clipped_norms = std::move(agg.clipped_norms);
  return rec;
}

enum class Observability { kBlackBox, kWhiteBox };
enum class ArtifactKind { kPredictive, kGenerative };

inline std::string ToString(ArtifactKind k) {
  return k == ArtifactKind::kGenerative ? "generative" : "predictive";
}

struct TrainedArtifact {
  ArtifactKind kind = ArtifactKind::kPredictive;
  ModelSpec spec;
  ParamVector params;
  DpSgdConfig config;
  std::optional<TrainingTrace> trace;
  std::optional<PrivacyParams> accountant;
};

inline PrivacyParams AccountantFor(const DpSgdConfig& config, double delta) {
  const GdpParam mu =
      SubsampledGdpMu(config.noise_multiplier, config.sample_rate, config.steps);
  return {GdpEpsilonForDelta(mu, delta), delta};
}

// The privacy claim of a correctly implemented run. Delta defaults to 1/N.
inline PrivacyParams ClaimedPrivacy(const DpSgdConfig& config,
                                    std::size_t dataset_size,
                                    std::optional<double> delta = {}) {
  config.Validate();
  if (config.bug_mode != BugMode::kNone) {
    Fail(ErrorCode::kNoGuarantee, "no valid guarantee exists for bug_mode " +
                                      ToString(config.bug_mode));
  }
  if (config.noise_multiplier <= 0.0) {
    Fail(ErrorCode::kNoGuarantee,
         "no valid guarantee exists without noise (noise_multiplier = 0)");
  }
  Require(dataset_size >= 1, "dataset size must be positive");
  return AccountantFor(config,
                       delta.value_or(1.0 / static_cast<double>(dataset_size)));
}

inline TrainedArtifact Train(const ModelSpec& spec, const SupervisedData& data,
                             const DpSgdConfig& config,
                             Observability obs = Observability::kBlackBox,
                             std::optional<double> delta = {},
                             std::size_t workers = 1) {
  spec.Validate();
  config.Validate();
  Require(data.size() >= 1, "training data is empty", ErrorCode::kDegenerateInput);
  if (data.input_dim != spec.input_dim || data.num_classes != spec.num_classes) {
    Fail(ErrorCode::kInvalidArgument,
         "encoded dataset shape (" + std::to_string(data.input_dim) + " features, " +
             std::to_string(data.num_classes) + " classes) does not match model spec");
  }
  TrainedArtifact art;
  art.kind = ArtifactKind::kPredictive;
  art.spec = spec;
  art.config = config;
  art.params = InitParams(spec);
  const NoisyAggregator agg(config, spec.ParamCount(), data.size());
  if (obs == Observability::kWhiteBox) art.trace.emplace();
  for (std::uint64_t t = 0; t < config.steps; ++t) {
    const auto batch = PoissonBatch(config, data.size(), t);
    StepRecord rec = NoisyBatchUpdate(spec, art.params, data, batch, t, agg, workers);
    if (art.trace) art.trace->steps.push_back(std::move(rec));
  }
  if (config.bug_mode == BugMode::kNone && config.noise_multiplier > 0.0) {
    art.accountant = ClaimedPrivacy(config, data.size(), delta);
  }
  return art;
}

// Trace file: a JSON index line, then one binary record per step holding
// batch indices, clipped_sum, noise, params and clipped norms as float64.
inline void WriteTrace(std::ostream& out, const TrainingTrace& trace) {
  nlohmann::json index;
  index["schema_version"] = kSchemaVersion;
  index["format"] = "tabaudit.trace";
  index["steps"] = trace.steps.size();
  index["dim"] = trace.steps.empty() ? 0 : trace.steps[0].params.size();
  std::uint64_t offset = 0;
  nlohmann::json records = nlohmann::json::array();
  for (const auto& s : trace.steps) {
    records.push_back({{"step", s.step}, {"batch_size", s.batch.size()},
                       {"offset", offset}});
    offset += 8 * (2 * s.batch.size() + 3 * s.params.size());
  }
  index["records"] = records;
  WriteHeaderLine(out, index);
  for (const auto& s : trace.steps) {
    std::vector<double> b(s.batch.begin(), s.batch.end());
    WriteF64(out, b);
    WriteF64(out, s.clipped_sum);
    WriteF64(out, s.noise);
    WriteF64(out, s.params);
    WriteF64(out, s.clipped_norms);
  }
}

inline TrainingTrace ReadTrace(std::istream& in) {
  const nlohmann::json index = ReadHeaderLine(in);
  Require(index.value("format", std::string()) == "tabaudit.trace",
          "not a trace file", ErrorCode::kIo);
  const std::size_t dim = index.at("dim");
  TrainingTrace trace;
  for (const auto& r : index.at("records")) {
    StepRecord s;
    s.step = r.at("step");
    const std::size_t b = r.at("batch_size");
    for (double v : ReadF64(in, b)) s.batch.push_back(static_cast<std::size_t>(v));
    s.clipped_sum = ReadF64(in, dim);
    s.noise = ReadF64(in, dim);
    s.params = ReadF64(in, dim);
    s.clipped_norms = ReadF64(in, b);
    trace.steps.push_back(std::move(s));
  }
  return trace;
}

// Artifact file: JSON header (kind, spec, config, accountant) + params.
// The trace, when present, is written separately with WriteTrace.
inline void WriteTrainedArtifact(std::ostream& out, const TrainedArtifact& art) {
  nlohmann::json h;
  h["schema_version"] = kSchemaVersion;
  h["format"] = "tabaudit.model";
  h["kind"] = ToString(art.kind);
  h["spec"] = art.spec.ToJson();
  h["config"] = art.config.ToJson();
  h["count"] = art.params.size();
  if (art.accountant) {
    h["accountant"] = {{"epsilon", art.accountant->epsilon},
                       {"delta", art.accountant->delta}};
  }
  WriteHeaderLine(out, h);
  WriteF64(out, art.params.values);
}

inline TrainedArtifact ReadTrainedArtifact(std::istream& in) {
  const nlohmann::json h = ReadHeaderLine(in);
  Require(h.value("format", std::string()) == "tabaudit.model",
          "not a model artifact", ErrorCode::kIo);
  TrainedArtifact art;
  art.kind = h.value("kind", std::string()) == "generative"
                 ? ArtifactKind::kGenerative
                 : ArtifactKind::kPredictive;
  art.spec = ModelSpec::FromJson(h.at("spec"));
  art.config = DpSgdConfig::FromJson(h.at("config"));
  const std::size_t count = h.at("count");
  Require(count == art.spec.ParamCount(), "parameter count does not match spec",
          ErrorCode::kIo);
  art.params.values = ReadF64(in, count);
  if (h.contains("accountant")) {
    art.accountant = PrivacyParams{h["accountant"].at("epsilon"),
                                   h["accountant"].at("delta")};
  }
  return art;
}

}  // namespace tabaudit
