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

// Tabular generators with "sample n records" access: an independent-columns
// noisy-marginal sampler, and a small GAN whose discriminator sees real data
// only through DP-SGD.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabaudit/core_stats.hpp"
#include "tabaudit/data.hpp"
#include "tabaudit/dpsgd.hpp"
#include "tabaudit/error.hpp"
#include "tabaudit/io.hpp"
#include "tabaudit/models.hpp"
#include "tabaudit/random.hpp"

namespace tabaudit {

struct MarginalSynthSpec {
  double noise_std = 0.0;  // per histogram cell
  std::size_t bins = 10;   // per numeric column
  std::uint64_t seed = 0;

  void Validate() const {
    Require(std::isfinite(noise_std) && noise_std >= 0.0,
            "noise_std must be non-negative", ErrorCode::kConfig);
    Require(bins >= 1, "bins must be positive", ErrorCode::kConfig);
  }

  nlohmann::json ToJson() const {
    return {{"noise_std", noise_std}, {"bins", bins}, {"seed", seed}};
  }
  static MarginalSynthSpec FromJson(const nlohmann::json& j) {
    MarginalSynthSpec s;
    s.noise_std = j.value("noise_std", 0.0);
    s.bins = j.value("bins", std::size_t{10});
    s.seed = j.value("seed", std::uint64_t{0});
    return s;
  }
};

// All GAN randomness (inits, batches, noise, latents) derives from `seed`;
// the seed field of `discriminator` is ignored.
struct GanSpec {
  std::size_t latent_dim = 4;
  std::size_t generator_hidden = 16;
  std::size_t discriminator_hidden = 16;
  double init_scale = 0.5;
  DpSgdConfig discriminator;
  double generator_learning_rate = 0.05;
  std::uint64_t seed = 0;

  void Validate() const {
    Require(latent_dim >= 1, "latent_dim must be positive", ErrorCode::kConfig);
    Require(generator_hidden >= 1 && discriminator_hidden >= 1,
            "hidden sizes must be positive", ErrorCode::kConfig);
    Require(std::isfinite(init_scale) && init_scale >= 0.0,
            "init_scale must be non-negative", ErrorCode::kConfig);
    Require(std::isfinite(generator_learning_rate) &&
                generator_learning_rate > 0.0,
            "generator_learning_rate must be positive", ErrorCode::kConfig);
    DpSgdConfig d = discriminator;  // zero steps is allowed here
    d.steps = std::max<std::uint64_t>(1, d.steps);
    d.Validate();
  }

  nlohmann::json ToJson() const {
    return {{"latent_dim", latent_dim},
            {"generator_hidden", generator_hidden},
            {"discriminator_hidden", discriminator_hidden},
            {"init_scale", init_scale},
            {"discriminator", discriminator.ToJson()},
            {"generator_learning_rate", generator_learning_rate},
            {"seed", seed}};
  }
  static GanSpec FromJson(const nlohmann::json& j) {
    GanSpec s;
    s.latent_dim = j.value("latent_dim", s.latent_dim);
    s.generator_hidden = j.value("generator_hidden", s.generator_hidden);
    s.discriminator_hidden = j.value("discriminator_hidden", s.discriminator_hidden);
    s.init_scale = j.value("init_scale", s.init_scale);
    if (j.contains("discriminator")) {
      s.discriminator = DpSgdConfig::FromJson(j.at("discriminator"));
    }
    s.generator_learning_rate =
        j.value("generator_learning_rate", s.generator_learning_rate);
    s.seed = j.value("seed", s.seed);
    return s;
  }
};

enum class SynthKind { kMarginal, kGan };

inline std::string ToString(SynthKind k) {
  return k == SynthKind::kGan ? "gan" : "marginal";
}

struct MarginalState {
  std::size_t bins = 10;
  std::vector<std::vector<double>> probs;  // one distribution per column
};

struct GanState {
  std::size_t latent_dim = 0;
  ModelSpec generator;
  ModelSpec discriminator;
  ParamVector generator_params;
  ParamVector discriminator_params;
};

// Fitted state holds only histograms or network parameters, never rows.
struct GenerativeArtifact {
  SynthKind kind = SynthKind::kMarginal;
  Schema schema;
  MarginalState marginal;
  GanState gan;
  bool white_box = false;  // discriminator loss access
  std::optional<PrivacyParams> accountant;
};

// Per-cell noise for (epsilon, delta): adding or removing one record moves
// one count in every column, so the L2 sensitivity is sqrt(#columns).
inline double CalibratedMarginalNoise(double epsilon, double delta,
                                      std::size_t num_columns) {
  return GaussianNoiseStdFor(epsilon, delta,
                             std::sqrt(static_cast<double>(num_columns)));
}

inline GenerativeArtifact FitMarginal(const Dataset& ds,
                                      const MarginalSynthSpec& spec,
                                      std::optional<double> delta = {}) {
  spec.Validate();
  Require(!ds.empty(), "cannot fit a synthesizer on an empty dataset",
          ErrorCode::kDegenerateInput);
  GenerativeArtifact art;
  art.kind = SynthKind::kMarginal;
  art.schema = ds.schema;
  art.marginal.bins = spec.bins;
  Rng rng(spec.seed, stream_tag::kNoise);
  for (std::size_t j = 0; j < ds.schema.size(); ++j) {
    const Column& c = ds.schema[j];
    const std::size_t cells = c.numeric() ? spec.bins : c.width();
    std::vector<double> h(cells, 0.0);
    for (const auto& r : ds.rows) {
      const double v = r.values[j];
      ++h[c.numeric() ? NumericBin(v, c.num(), spec.bins)
                      : static_cast<std::size_t>(v)];
    }
    double total = 0.0;
    for (auto& v : h) {
      if (spec.noise_std > 0.0) v += rng.Normal(0.0, spec.noise_std);
      v = std::max(0.0, v);
      total += v;
    }
    if (!(total > 0.0)) {
      Fail(ErrorCode::kDegenerateMarginal,
           "degenerate marginal in column '" + c.name +
               "': all cells are zero after noising");
    }
    for (auto& v : h) v /= total;
    art.marginal.probs.push_back(std::move(h));
  }
  if (spec.noise_std > 0.0) {
    const double d = delta.value_or(1.0 / static_cast<double>(ds.size()));
    const GdpParam mu{std::sqrt(static_cast<double>(ds.schema.size())) /
                      spec.noise_std};
    art.accountant = PrivacyParams{GdpEpsilonForDelta(mu, d), d};
  }
  return art;
}

namespace internal {

inline std::size_t SampleCell(const std::vector<double>& probs, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc && probs[i] > 0.0) return i;
  }
  // rounding: last cell with positive mass
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return 0;
}

inline double Sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                : std::exp(x) / (1.0 + std::exp(x));
}

struct Generated {
  ForwardPass pass;
  std::vector<double> encoded;  // sigmoid outputs in [0, 1]
};

inline Generated Generate(const GanState& g, std::span<const double> z) {
  Generated out;
  out.pass = Forward(g.generator, g.generator_params, z);
  out.encoded.resize(out.pass.outputs.size());
  for (std::size_t k = 0; k < out.encoded.size(); ++k) {
    out.encoded[k] = std::clamp(Sigmoid(out.pass.outputs[k]), 0.0, 1.0);
  }
  return out;
}

inline std::vector<double> Latent(Rng& rng, std::size_t dim) {
  std::vector<double> z(dim);
  for (auto& v : z) v = rng.Normal();
  return z;
}

}  // namespace internal

inline constexpr std::size_t kRealLabel = 1;
inline constexpr std::size_t kFakeLabel = 0;

inline GenerativeArtifact FitGan(const Dataset& ds, const GanSpec& spec,
                                 bool white_box = false,
                                 std::optional<double> delta = {}) {
  spec.Validate();
  Require(!ds.empty(), "cannot fit a synthesizer on an empty dataset",
          ErrorCode::kDegenerateInput);
  const std::size_t width = ds.schema.EncodedWidth();
  GenerativeArtifact art;
  art.kind = SynthKind::kGan;
  art.schema = ds.schema;
  art.white_box = white_box;
  GanState& g = art.gan;
  g.latent_dim = spec.latent_dim;
  g.generator = {ModelKind::kMlp, spec.latent_dim, spec.generator_hidden, width,
                 spec.init_scale, Hash64(spec.seed, 1)};
  g.discriminator = {ModelKind::kMlp, width, spec.discriminator_hidden, 2,
                     spec.init_scale, Hash64(spec.seed, 2)};
  g.generator.Validate(false);
  g.discriminator.Validate();
  g.generator_params = InitParams(g.generator);
  g.discriminator_params = InitParams(g.discriminator);

  DpSgdConfig dcfg = spec.discriminator;
  dcfg.seed = Hash64(spec.seed, 3);
  const EncodedMatrix real = Encode(ds);
  const std::size_t n = ds.size();
  DpSgdConfig agg_cfg = dcfg;
  agg_cfg.steps = std::max<std::uint64_t>(1, agg_cfg.steps);
  const NoisyAggregator agg(agg_cfg, g.discriminator.ParamCount(), n);
  const auto fake_count = static_cast<std::size_t>(
      std::max(1.0, std::round(dcfg.sample_rate * static_cast<double>(n))));

  for (std::uint64_t t = 0; t < dcfg.steps; ++t) {
    Rng latent(Hash64(spec.seed, stream_tag::kLatent), t);

    // discriminator: DP on real samples, plain gradient on generated ones
    const auto batch = PoissonBatch(dcfg, n, t);
    std::vector<std::vector<double>> grads;
    grads.reserve(batch.size());
    for (std::size_t i : batch) {
      grads.push_back(PerSampleGradient(g.discriminator, g.discriminator_params,
                                        real.Row(i), kRealLabel));
    }
    const AggregateResult real_part = agg.Aggregate(t, grads);
    std::vector<double> fake_grad(g.discriminator.ParamCount(), 0.0);
    for (std::size_t m = 0; m < fake_count; ++m) {
      const auto z = internal::Latent(latent, spec.latent_dim);
      const auto x = internal::Generate(g, z).encoded;
      const auto gr = PerSampleGradient(g.discriminator, g.discriminator_params,
                                        x, kFakeLabel);
      for (std::size_t k = 0; k < gr.size(); ++k) fake_grad[k] += gr[k];
    }
    for (std::size_t k = 0; k < fake_grad.size(); ++k) {
      g.discriminator_params.values[k] -=
          dcfg.learning_rate *
          (real_part.gradient[k] + fake_grad[k] / static_cast<double>(fake_count));
    }

    // generator: non-saturating loss -log D(G(z)) through the sigmoid
    std::vector<double> gen_grad(g.generator.ParamCount(), 0.0);
    for (std::size_t m = 0; m < fake_count; ++m) {
      const auto z = internal::Latent(latent, spec.latent_dim);
      const auto gen = internal::Generate(g, z);
      const auto dx = InputGradient(g.discriminator, g.discriminator_params,
                                    gen.encoded, kRealLabel);
      std::vector<double> dout(width);
      for (std::size_t k = 0; k < width; ++k) {
        dout[k] = dx[k] * gen.encoded[k] * (1.0 - gen.encoded[k]);
      }
      Backward(g.generator, g.generator_params, z, gen.pass, dout, gen_grad);
    }
    for (std::size_t k = 0; k < gen_grad.size(); ++k) {
      g.generator_params.values[k] -= spec.generator_learning_rate * gen_grad[k] /
                                      static_cast<double>(fake_count);
    }
  }
  if (dcfg.bug_mode == BugMode::kNone && dcfg.noise_multiplier > 0.0) {
    if (dcfg.steps == 0) {
      // the data was never touched
      art.accountant = PrivacyParams{0.0, delta.value_or(1.0 / static_cast<double>(n))};
    } else {
      art.accountant = ClaimedPrivacy(dcfg, n, delta);
    }
  }
  return art;
}

// n schema-valid records, deterministic in (artifact, seed). Touches only the
// fitted state.
inline Dataset Sample(const GenerativeArtifact& art, std::size_t n,
                      std::uint64_t seed) {
  Dataset out{art.schema, {}, "synthetic:" + ToString(art.kind)};
  out.rows.reserve(n);
  Rng rng(seed, stream_tag::kSample);
  if (art.kind == SynthKind::kMarginal) {
    const std::size_t bins = art.marginal.bins;
    for (std::size_t i = 0; i < n; ++i) {
      Record r;
      r.values.reserve(art.schema.size());
      for (std::size_t j = 0; j < art.schema.size(); ++j) {
        const Column& c = art.schema[j];
        const std::size_t cell = internal::SampleCell(art.marginal.probs[j], rng.Uniform());
        if (c.numeric()) {
          const double w = (c.num().max - c.num().min) / static_cast<double>(bins);
          const double v = c.num().min + (static_cast<double>(cell) + rng.Uniform()) * w;
          r.values.push_back(std::clamp(v, c.num().min, c.num().max));
        } else {
          r.values.push_back(static_cast<double>(cell));
        }
      }
      out.rows.push_back(std::move(r));
    }
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto z = internal::Latent(rng, art.gan.latent_dim);
    out.rows.push_back(DecodeRecord(art.schema, internal::Generate(art.gan, z).encoded));
  }
  return out;
}

// Discriminator loss at x with the "real" label. White-box GANs only.
inline double DiscriminatorLoss(const GenerativeArtifact& art, const Record& x) {
  if (art.kind != SynthKind::kGan || !art.white_box) {
    Fail(ErrorCode::kIncompatibleMode,
         "discriminator loss requires white-box access to a GAN artifact");
  }
  ValidateRecord(art.schema, x, "query record");
  return PerExampleLoss(art.gan.discriminator, art.gan.discriminator_params,
                        EncodeRecord(art.schema, x), kRealLabel);
}

// JSON header (kind, schema, shapes) + float64 payload.
inline void WriteGenerative(std::ostream& out, const GenerativeArtifact& art) {
  nlohmann::json h;
  h["schema_version"] = kSchemaVersion;
  h["format"] = "tabaudit.synth";
  h["kind"] = ToString(art.kind);
  h["schema"] = art.schema.ToJson();
  h["white_box"] = art.white_box;
  if (art.accountant) {
    h["accountant"] = {{"epsilon", art.accountant->epsilon},
                       {"delta", art.accountant->delta}};
  }
  if (art.kind == SynthKind::kMarginal) {
    h["bins"] = art.marginal.bins;
    std::vector<std::size_t> sizes;
    for (const auto& p : art.marginal.probs) sizes.push_back(p.size());
    h["histogram_sizes"] = sizes;
  } else {
    h["latent_dim"] = art.gan.latent_dim;
    h["generator"] = art.gan.generator.ToJson();
    h["discriminator"] = art.gan.discriminator.ToJson();
  }
  WriteHeaderLine(out, h);
  if (art.kind == SynthKind::kMarginal) {
    for (const auto& p : art.marginal.probs) WriteF64(out, p);
  } else {
    WriteF64(out, art.gan.generator_params.values);
    WriteF64(out, art.gan.discriminator_params.values);
  }
}

inline GenerativeArtifact ReadGenerative(std::istream& in) {
  const nlohmann::json h = ReadHeaderLine(in);
  Require(h.value("format", std::string()) == "tabaudit.synth",
          "not a synthesizer artifact", ErrorCode::kIo);
  GenerativeArtifact art;
  art.kind = h.at("kind") == "gan" ? SynthKind::kGan : SynthKind::kMarginal;
  art.schema = Schema::FromJson(h.at("schema"));
  art.white_box = h.value("white_box", false);
  if (h.contains("accountant")) {
    art.accountant = PrivacyParams{h["accountant"].at("epsilon"),
                                   h["accountant"].at("delta")};
  }
  if (art.kind == SynthKind::kMarginal) {
    art.marginal.bins = h.at("bins");
    for (std::size_t s : h.at("histogram_sizes").get<std::vector<std::size_t>>()) {
      art.marginal.probs.push_back(ReadF64(in, s));
    }
  } else {
    art.gan.latent_dim = h.at("latent_dim");
    art.gan.generator = ModelSpec::FromJson(h.at("generator"));
    art.gan.discriminator = ModelSpec::FromJson(h.at("discriminator"));
    art.gan.generator_params = {ReadF64(in, art.gan.generator.ParamCount())};
    art.gan.discriminator_params = {ReadF64(in, art.gan.discriminator.ParamCount())};
  }
  return art;
}

}  // namespace tabaudit
