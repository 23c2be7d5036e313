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

// Shadow-model harness: T independent trainings, the target appended in
// exactly floor(T/2) of them.

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "tabaudit/data.hpp"
#include "tabaudit/dpsgd.hpp"
#include "tabaudit/error.hpp"
#include "tabaudit/io.hpp"
#include "tabaudit/models.hpp"
#include "tabaudit/random.hpp"
#include "tabaudit/synthesizers.hpp"

namespace tabaudit {

enum class ModelAccess { kBlackBoxQuery, kWhiteBox };
enum class DataKnowledge { kFixedDataset, kResampledDataset };

struct ThreatModel {
  ModelAccess access = ModelAccess::kBlackBoxQuery;
  DataKnowledge knowledge = DataKnowledge::kFixedDataset;
  bool architecture_known = true;
  double subsample_fraction = 0.5;  // resampled_dataset only

  void Validate() const {
    Require(architecture_known,
            "architecture_known = false is not supported", ErrorCode::kConfig);
    Require(subsample_fraction > 0.0 && subsample_fraction <= 1.0,
            "subsample_fraction must lie in (0, 1]", ErrorCode::kConfig);
  }

  nlohmann::json ToJson() const {
    return {{"model_access",
             access == ModelAccess::kWhiteBox ? "white_box" : "black_box_query"},
            {"data_knowledge", knowledge == DataKnowledge::kResampledDataset
                                   ? "resampled_dataset"
                                   : "fixed_dataset"},
            {"architecture_known", architecture_known},
            {"subsample_fraction", subsample_fraction}};
  }

  static ThreatModel FromJson(const nlohmann::json& j) {
    ThreatModel tm;
    const std::string a = j.value("model_access", std::string("black_box_query"));
    Require(a == "white_box" || a == "black_box_query",
            "model_access must be black_box_query or white_box", ErrorCode::kConfig);
    tm.access = a == "white_box" ? ModelAccess::kWhiteBox : ModelAccess::kBlackBoxQuery;
    const std::string k = j.value("data_knowledge", std::string("fixed_dataset"));
    Require(k == "fixed_dataset" || k == "resampled_dataset",
            "data_knowledge must be fixed_dataset or resampled_dataset",
            ErrorCode::kConfig);
    tm.knowledge = k == "resampled_dataset" ? DataKnowledge::kResampledDataset
                                            : DataKnowledge::kFixedDataset;
    tm.architecture_known = j.value("architecture_known", true);
    tm.subsample_fraction = j.value("subsample_fraction", 0.5);
    tm.Validate();
    return tm;
  }
};

enum class TrainerKind { kDpSgd, kMarginal, kGan };

inline std::string ToString(TrainerKind k) {
  switch (k) {
    case TrainerKind::kDpSgd: return "dpsgd";
    case TrainerKind::kMarginal: return "marginal";
    case TrainerKind::kGan: return "gan";
  }
  return "dpsgd";
}

inline TrainerKind ParseTrainerKind(const std::string& s) {
  if (s == "dpsgd") return TrainerKind::kDpSgd;
  if (s == "marginal") return TrainerKind::kMarginal;
  if (s == "gan") return TrainerKind::kGan;
  Fail(ErrorCode::kConfig, "trainer kind must be dpsgd, marginal or gan, got '" + s + "'");
}

// What to train in each run. Seeds inside the nested specs are overwritten
// per run; `fixed_seed` forces one training seed for every run.
struct TrainerSpec {
  TrainerKind kind = TrainerKind::kDpSgd;
  ModelSpec model;  // input_dim / num_classes are filled from the schema
  DpSgdConfig dpsgd;
  std::string label_column;
  MarginalSynthSpec marginal;
  GanSpec gan;
  std::optional<std::uint64_t> fixed_seed;
  std::optional<double> delta;

  bool generative() const { return kind != TrainerKind::kDpSgd; }

  ModelSpec ResolvedModel(const Schema& schema) const {
    ModelSpec m = model;
    m.input_dim = FeatureDim(schema, label_column);
    m.num_classes = schema[LabelColumnIndex(schema, label_column)].width();
    return m;
  }

  nlohmann::json ToJson() const {
    nlohmann::json j = {{"kind", ToString(kind)}};
    if (kind == TrainerKind::kDpSgd) {
      j["model"] = model.ToJson();
      j["dpsgd"] = dpsgd.ToJson();
      j["label_column"] = label_column;
    } else if (kind == TrainerKind::kMarginal) {
      j["marginal"] = marginal.ToJson();
    } else {
      j["gan"] = gan.ToJson();
    }
    if (fixed_seed) j["fixed_seed"] = *fixed_seed;
    if (delta) j["delta"] = *delta;
    return j;
  }

  static TrainerSpec FromJson(const nlohmann::json& j) {
    TrainerSpec t;
    t.kind = ParseTrainerKind(j.value("kind", std::string("dpsgd")));
    if (j.contains("model")) t.model = ModelSpec::FromJson(j.at("model"));
    if (j.contains("dpsgd")) t.dpsgd = DpSgdConfig::FromJson(j.at("dpsgd"));
    t.label_column = j.value("label_column", std::string());
    if (j.contains("marginal")) t.marginal = MarginalSynthSpec::FromJson(j.at("marginal"));
    if (j.contains("gan")) t.gan = GanSpec::FromJson(j.at("gan"));
    if (j.contains("fixed_seed")) t.fixed_seed = j.at("fixed_seed").get<std::uint64_t>();
    if (j.contains("delta")) t.delta = j.at("delta").get<double>();
    if (t.kind == TrainerKind::kDpSgd) {
      Require(!t.label_column.empty(), "dpsgd trainer needs label_column",
              ErrorCode::kConfig);
    }
    return t;
  }
};

using AnyArtifact = std::variant<TrainedArtifact, GenerativeArtifact>;

struct ShadowRun {
  std::size_t index = 0;
  int bit = 0;
  std::uint64_t run_seed = 0;
  std::uint64_t train_seed = 0;
  std::uint64_t fingerprint = 0;  // training-set row multiset
  std::size_t dataset_size = 0;
  AnyArtifact artifact;

  const TrainedArtifact& trained() const { return std::get<TrainedArtifact>(artifact); }
  const GenerativeArtifact& generative() const {
    return std::get<GenerativeArtifact>(artifact);
  }
};

struct ShadowCollection {
  Record target;
  Schema schema;
  ThreatModel threat_model;
  TrainerSpec trainer;
  std::uint64_t master_seed = 0;
  std::vector<ShadowRun> runs;

  std::size_t size() const { return runs.size(); }
  std::vector<int> bits() const {
    std::vector<int> b;
    for (const auto& r : runs) b.push_back(r.bit);
    return b;
  }
};

inline std::uint64_t RunSeed(std::uint64_t master_seed, std::size_t t) {
  return Hash64(master_seed, t);
}

// Exactly floor(T/2) ones, shuffled by the master seed.
inline std::vector<int> StratifiedBits(std::size_t T, std::uint64_t master_seed) {
  std::vector<int> bits(T, 0);
  std::fill(bits.begin(), bits.begin() + static_cast<std::ptrdiff_t>(T / 2), 1);
  Rng rng(master_seed, stream_tag::kBits);
  rng.Shuffle(bits);
  return bits;
}

namespace internal {

inline std::uint64_t HashDoubles(std::uint64_t h, std::span<const double> v) {
  for (double x : v) h = Hash64(h, std::bit_cast<std::uint64_t>(x));
  return h;
}

inline std::uint64_t ArtifactHash(const AnyArtifact& a) {
  if (const auto* t = std::get_if<TrainedArtifact>(&a)) {
    return HashDoubles(0x6d6f64, t->params.values);
  }
  const auto& g = std::get<GenerativeArtifact>(a);
  std::uint64_t h = 0x73796e;
  for (const auto& p : g.marginal.probs) h = HashDoubles(h, p);
  h = HashDoubles(h, g.gan.generator_params.values);
  return HashDoubles(h, g.gan.discriminator_params.values);
}

}  // namespace internal

inline std::uint64_t CollectionFingerprint(const ShadowCollection& c) {
  std::uint64_t h = Hash64(c.master_seed, c.runs.size());
  for (const auto& r : c.runs) {
    h = Hash64(h, static_cast<std::uint64_t>(r.bit));
    h = Hash64(h, r.fingerprint);
    h = Hash64(h, internal::ArtifactHash(r.artifact));
  }
  return h;
}

inline AnyArtifact TrainOnce(const Dataset& train, const TrainerSpec& trainer,
                             const ThreatModel& tm, std::uint64_t seed) {
  const bool white = tm.access == ModelAccess::kWhiteBox;
  switch (trainer.kind) {
    case TrainerKind::kDpSgd: {
      ModelSpec m = trainer.ResolvedModel(train.schema);
      m.seed = Hash64(seed, stream_tag::kInit);
      DpSgdConfig cfg = trainer.dpsgd;
      cfg.seed = seed;
      return Train(m, MakeSupervised(train, trainer.label_column), cfg,
                   white ? Observability::kWhiteBox : Observability::kBlackBox,
                   trainer.delta);
    }
    case TrainerKind::kMarginal: {
      MarginalSynthSpec s = trainer.marginal;
      s.seed = seed;
      return FitMarginal(train, s, trainer.delta);
    }
    case TrainerKind::kGan: {
      GanSpec s = trainer.gan;
      s.seed = seed;
      return FitGan(train, s, white, trainer.delta);
    }
  }
  Fail(ErrorCode::kConfig, "unknown trainer");
}

// Builds and trains run t. Exposed so a single run can be regenerated.
inline ShadowRun MakeShadowRun(const Record& target, const Dataset& pool,
                               const TrainerSpec& trainer, const ThreatModel& tm,
                               std::size_t t, int bit, std::uint64_t run_seed) {
  Dataset train{pool.schema, {}, "shadow"};
  if (tm.knowledge == DataKnowledge::kFixedDataset) {
    train.rows = pool.rows;
  } else {
    const auto k = static_cast<std::size_t>(
        std::floor(tm.subsample_fraction * static_cast<double>(pool.size())));
    Rng rng(run_seed, stream_tag::kSubsample);
    auto idx = SampleWithoutReplacement(pool.size(), std::max<std::size_t>(1, k), rng);
    std::sort(idx.begin(), idx.end());
    for (std::size_t i : idx) train.rows.push_back(pool.rows[i]);
  }
  if (bit == 1) train.rows.push_back(target);
  ShadowRun run;
  run.index = t;
  run.bit = bit;
  run.run_seed = run_seed;
  run.train_seed = trainer.fixed_seed.value_or(run_seed);
  run.fingerprint = Fingerprint(train);
  run.dataset_size = train.size();
  run.artifact = TrainOnce(train, trainer, tm, run.train_seed);
  return run;
}

inline ShadowCollection RunShadowExperiment(const Record& target,
                                            const Dataset& pool,
                                            const TrainerSpec& trainer,
                                            const ThreatModel& tm, std::size_t T,
                                            std::uint64_t master_seed,
                                            std::size_t workers = 1) {
  tm.Validate();
  Require(T >= 2, "shadow experiments need T >= 2 runs");
  Require(!pool.empty(), "shadow pool is empty", ErrorCode::kDegenerateInput);
  ValidateRecord(pool.schema, target, "target");
  if (ContainsRecord(pool, target)) {
    Fail(ErrorCode::kDuplicateRecord, "target record is already in the pool");
  }
  ShadowCollection c;
  c.target = target;
  c.schema = pool.schema;
  c.threat_model = tm;
  c.trainer = trainer;
  c.master_seed = master_seed;
  const std::vector<int> bits = StratifiedBits(T, master_seed);
  std::vector<std::optional<ShadowRun>> slots(T);
  ParallelFor(T, workers, [&](std::size_t t) {
    slots[t] = MakeShadowRun(target, pool, trainer, tm, t, bits[t],
                             RunSeed(master_seed, t));
  });
  for (auto& s : slots) c.runs.push_back(std::move(*s));
  return c;
}

// ---------------------------------------------------------------------------
// Queries against the trained artifacts.

enum class QueryMode { kPredLoss, kSynthDataset, kDiscLoss };

inline std::string ToString(QueryMode m) {
  switch (m) {
    case QueryMode::kPredLoss: return "pred_loss";
    case QueryMode::kSynthDataset: return "synth_dataset";
    case QueryMode::kDiscLoss: return "disc_loss";
  }
  return "pred_loss";
}

struct QueryConfig {
  std::size_t n_samples = 1000;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct FeatureBundle {
  std::size_t run = 0;
  double loss = 0.0;                 // pred_loss, disc_loss
  std::optional<Dataset> synthetic;  // synth_dataset
};

inline double TargetLoss(const TrainedArtifact& art, const Schema& schema,
                         const std::string& label_column, const Record& x) {
  const LabeledExample ex = EncodeLabeled(schema, label_column, x);
  return PerExampleLoss(art.spec, art.params, ex.features, ex.label);
}

inline std::vector<FeatureBundle> QueryFeatures(const ShadowCollection& c,
                                                QueryMode mode,
                                                const QueryConfig& q = {}) {
  const bool gen = c.trainer.generative();
  if (mode == QueryMode::kPredLoss && gen) {
    Fail(ErrorCode::kIncompatibleMode, "pred_loss needs predictive artifacts");
  }
  if (mode == QueryMode::kSynthDataset && !gen) {
    Fail(ErrorCode::kIncompatibleMode, "synth_dataset needs generative artifacts");
  }
  if (mode == QueryMode::kDiscLoss &&
      (c.trainer.kind != TrainerKind::kGan ||
       c.threat_model.access != ModelAccess::kWhiteBox)) {
    Fail(ErrorCode::kIncompatibleMode,
         "disc_loss needs a GAN trainer under white_box access");
  }
  std::vector<FeatureBundle> out(c.size());
  ParallelFor(c.size(), q.workers, [&](std::size_t t) {
    const ShadowRun& r = c.runs[t];
    out[t].run = r.index;
    switch (mode) {
      case QueryMode::kPredLoss:
        out[t].loss = TargetLoss(r.trained(), c.schema, c.trainer.label_column, c.target);
        break;
      case QueryMode::kSynthDataset:
        out[t].synthetic = Sample(r.generative(), q.n_samples, Hash64(q.seed, r.index));
        break;
      case QueryMode::kDiscLoss:
        out[t].loss = DiscriminatorLoss(r.generative(), c.target);
        break;
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: manifest.json plus one artifact file per run.

inline void SaveCollection(const ShadowCollection& c, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json m;
  m["schema_version"] = kSchemaVersion;
  m["format"] = "tabaudit.shadow";
  m["target"] = c.target.values;
  m["schema"] = c.schema.ToJson();
  m["threat_model"] = c.threat_model.ToJson();
  m["trainer"] = c.trainer.ToJson();
  m["master_seed"] = c.master_seed;
  m["fingerprint"] = CollectionFingerprint(c);
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : c.runs) {
    char name[32];
    std::snprintf(name, sizeof name, "run_%05zu.bin", r.index);
    nlohmann::json e = {{"index", r.index},           {"bit", r.bit},
                        {"run_seed", r.run_seed},     {"train_seed", r.train_seed},
                        {"fingerprint", r.fingerprint}, {"dataset_size", r.dataset_size},
                        {"file", name}};
    std::ofstream out(fs::path(dir) / name, std::ios::binary);
    Require(static_cast<bool>(out), "cannot write " + std::string(name), ErrorCode::kIo);
    if (const auto* t = std::get_if<TrainedArtifact>(&r.artifact)) {
      WriteTrainedArtifact(out, *t);
      if (t->trace) {
        std::snprintf(name, sizeof name, "run_%05zu.trace", r.index);
        std::ofstream tr(fs::path(dir) / name, std::ios::binary);
        WriteTrace(tr, *t->trace);
        e["trace"] = name;
      }
    } else {
      WriteGenerative(out, r.generative());
    }
    runs.push_back(e);
  }
  m["runs"] = runs;
  WriteJsonFile((fs::path(dir) / "manifest.json").string(), m);
}

inline ShadowCollection LoadCollection(const std::string& dir) {
  namespace fs = std::filesystem;
  const nlohmann::json m = ReadJsonFile((fs::path(dir) / "manifest.json").string());
  Require(m.value("format", std::string()) == "tabaudit.shadow",
          dir + " is not a shadow collection", ErrorCode::kIo);
  ShadowCollection c;
  c.target.values = m.at("target").get<std::vector<double>>();
  c.schema = Schema::FromJson(m.at("schema"));
  c.threat_model = ThreatModel::FromJson(m.at("threat_model"));
  c.trainer = TrainerSpec::FromJson(m.at("trainer"));
  c.master_seed = m.at("master_seed");
  for (const auto& e : m.at("runs")) {
    ShadowRun r;
    r.index = e.at("index");
    r.bit = e.at("bit");
    r.run_seed = e.at("run_seed");
    r.train_seed = e.at("train_seed");
    r.fingerprint = e.at("fingerprint");
    r.dataset_size = e.at("dataset_size");
    const fs::path file = fs::path(dir) / e.at("file").get<std::string>();
    std::ifstream in(file, std::ios::binary);
    if (!in) Fail(ErrorCode::kMissingFile, "cannot open " + file.string());
    if (c.trainer.generative()) {
      r.artifact = ReadGenerative(in);
    } else {
      TrainedArtifact t = ReadTrainedArtifact(in);
      if (e.contains("trace")) {
        std::ifstream tr(fs::path(dir) / e.at("trace").get<std::string>(),
                         std::ios::binary);
        t.trace = ReadTrace(tr);
      }
      r.artifact = std::move(t);
    }
    c.runs.push_back(std::move(r));
  }
  if (m.contains("fingerprint")) {
    Require(m.at("fingerprint").get<std::uint64_t>() == CollectionFingerprint(c),
            "shadow collection fingerprint mismatch in " + dir, ErrorCode::kIo);
  }
  return c;
}

}  // namespace tabaudit
