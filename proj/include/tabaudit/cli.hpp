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

// Experiment configs and the subcommands behind tools/tabaudit. Every
// command returns a process exit code:
//   0 success / audit pass, 1 audit fail, 2 audit inconclusive,
//   3 usage, 4 config or validation error, 5 runtime or data error.

#pragma once

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabaudit/attacks.hpp"
#include "tabaudit/audit.hpp"
#include "tabaudit/data.hpp"
#include "tabaudit/dpsgd.hpp"
#include "tabaudit/error.hpp"
#include "tabaudit/io.hpp"
#include "tabaudit/shadow.hpp"
#include "tabaudit/synthesizers.hpp"

namespace tabaudit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitAuditFail = 1;
inline constexpr int kExitInconclusive = 2;
inline constexpr int kExitUsage = 3;
inline constexpr int kExitConfig = 4;
inline constexpr int kExitRuntime = 5;

inline constexpr const char* kToolVersion = "0.1.0";

inline int ExitCodeFor(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kConfig:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kIncompatibleMode:
    case ErrorCode::kMissingFile:
    case ErrorCode::kHeaderMismatch:
    case ErrorCode::kNoGuarantee:
      return kExitConfig;
    default:
      return kExitRuntime;
  }
}

// ---------------------------------------------------------------------------
// Config

struct TargetConfig {
  std::string strategy = "outlier";  // outlier | random | canary | record
  std::size_t rank = 0;              // outlier/random: which selected row
  nlohmann::json record;             // record: {"column": value, ...}
};

struct AuditSettings {
  std::string kind = "step";  // step | end_to_end
  std::size_t trials = 2000;
  std::optional<double> delta;
  std::size_t dim = 8;
  std::size_t background_size = 7;
  double canary_scale = 1000.0;
  double target_fpr = 0.01;
  nlohmann::json canary;  // end_to_end: record object, absent = default
};

struct ExperimentConfig {
  std::string dataset;  // resolved paths
  std::string schema;
  TrainerSpec trainer;
  ThreatModel threat_model;
  std::vector<std::string> attacks;
  TargetConfig target;
  std::size_t shadow_runs = 64;
  std::uint64_t master_seed = 0;
  std::optional<double> delta;
  double confidence = 0.95;
  std::size_t n_samples = 1000;
  double holdout_fraction = 0.5;
  double target_fpr = 0.01;
  ClassifierConfig groundhog;
  AuditSettings audit;
  AffineCost cost_model{0.0, 1.0};
  AffineCost cost_attack{0.0, 1.0};
  std::string out = "out";
  nlohmann::json raw;

  bool has_dataset() const { return !dataset.empty(); }
};

namespace internal {

template <class F>
auto AtPath(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    Fail(e.code() == ErrorCode::kMissingFile ? ErrorCode::kMissingFile
                                             : ErrorCode::kConfig,
         path + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kConfig, path + ": " + e.what());
  }
}

inline std::string Resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path q(p);
  return (q.is_absolute() ? q : base / q).lexically_normal().string();
}

inline AffineCost CostFromJson(const nlohmann::json& j) {
  return {j.value("intercept", 0.0), j.value("slope", 1.0)};
}

inline const std::vector<std::string>& KnownAttacks() {
  static const std::vector<std::string> k = {"loss_threshold", "lira", "dcr",
                                             "groundhog", "disc_loss"};
  return k;
}

}  // namespace internal

// Parses and validates; every failure names the offending field.
inline ExperimentConfig ParseConfig(const nlohmann::json& j,
                                    const std::filesystem::path& base_dir) {
  using internal::AtPath;
  ExperimentConfig c;
  c.raw = j;
  Require(j.is_object(), "config: expected a JSON object", ErrorCode::kConfig);
  if (j.contains("dataset")) {
    c.dataset = AtPath("dataset", [&] { return internal::Resolve(base_dir, j.at("dataset").get<std::string>()); });
    Require(j.contains("schema"), "schema: required when dataset is given",
            ErrorCode::kConfig);
  }
  if (j.contains("schema")) {
    c.schema = AtPath("schema", [&] { return internal::Resolve(base_dir, j.at("schema").get<std::string>()); });
  }
  for (const auto& [key, path] : {std::pair{"dataset", c.dataset}, std::pair{"schema", c.schema}}) {
    if (!path.empty() && !std::filesystem::exists(path)) {
      Fail(ErrorCode::kMissingFile, std::string(key) + ": file not found: " + path);
    }
  }
  if (j.contains("trainer")) {
    const auto& t = j.at("trainer");
    Require(t.is_object(), "trainer: expected an object", ErrorCode::kConfig);
    // parse nested sections first so errors carry the full path
    if (t.contains("model")) AtPath("trainer.model", [&] { ModelSpec::FromJson(t.at("model")); });
    if (t.contains("dpsgd")) AtPath("trainer.dpsgd", [&] { DpSgdConfig::FromJson(t.at("dpsgd")).Validate(); });
    if (t.contains("marginal")) AtPath("trainer.marginal", [&] { MarginalSynthSpec::FromJson(t.at("marginal")).Validate(); });
    if (t.contains("gan")) AtPath("trainer.gan", [&] { GanSpec::FromJson(t.at("gan")).Validate(); });
    c.trainer = AtPath("trainer", [&] { return TrainerSpec::FromJson(t); });
  }
  AtPath("trainer.dpsgd", [&] { c.trainer.dpsgd.Validate(); });
  AtPath("trainer.marginal", [&] { c.trainer.marginal.Validate(); });
  AtPath("trainer.gan", [&] { c.trainer.gan.Validate(); });
  if (c.trainer.delta) {
    Require(*c.trainer.delta > 0.0 && *c.trainer.delta < 1.0,
            "trainer.delta: must lie in (0, 1)", ErrorCode::kConfig);
  }
  if (j.contains("threat_model")) {
    c.threat_model = AtPath("threat_model", [&] { return ThreatModel::FromJson(j.at("threat_model")); });
  }
  if (j.contains("attacks")) {
    c.attacks = AtPath("attacks", [&] { return j.at("attacks").get<std::vector<std::string>>(); });
    for (std::size_t i = 0; i < c.attacks.size(); ++i) {
      const auto& k = internal::KnownAttacks();
      if (std::find(k.begin(), k.end(), c.attacks[i]) == k.end()) {
        Fail(ErrorCode::kConfig, "attacks[" + std::to_string(i) + "]: unknown attack '" +
                                     c.attacks[i] + "'");
      }
    }
  }
  if (j.contains("target")) {
    const auto& t = j.at("target");
    c.target.strategy = AtPath("target.strategy", [&] { return t.value("strategy", std::string("outlier")); });
    c.target.rank = AtPath("target.rank", [&] { return t.value("rank", std::size_t{0}); });
    if (t.contains("record")) c.target.record = t.at("record");
    const auto& s = c.target.strategy;
    Require(s == "outlier" || s == "random" || s == "canary" || s == "record",
            "target.strategy: expected outlier|random|canary|record", ErrorCode::kConfig);
    Require(s != "record" || c.target.record.is_object(),
            "target.record: required object for strategy 'record'", ErrorCode::kConfig);
  }
  c.shadow_runs = AtPath("shadow_runs", [&] { return j.value("shadow_runs", c.shadow_runs); });
  Require(c.shadow_runs >= 2, "shadow_runs: must be >= 2", ErrorCode::kConfig);
  c.master_seed = AtPath("master_seed", [&] { return j.value("master_seed", c.master_seed); });
  if (j.contains("delta")) {
    c.delta = AtPath("delta", [&] { return j.at("delta").get<double>(); });
    Require(*c.delta > 0.0 && *c.delta < 1.0, "delta: must lie in (0, 1)",
            ErrorCode::kConfig);
  }
  c.confidence = AtPath("confidence", [&] { return j.value("confidence", c.confidence); });
  Require(c.confidence > 0.0 && c.confidence < 1.0, "confidence: must lie in (0, 1)",
          ErrorCode::kConfig);
  c.n_samples = AtPath("n_samples", [&] { return j.value("n_samples", c.n_samples); });
  c.holdout_fraction = AtPath("holdout_fraction", [&] { return j.value("holdout_fraction", c.holdout_fraction); });
  Require(c.holdout_fraction > 0.0 && c.holdout_fraction < 1.0,
          "holdout_fraction: must lie in (0, 1)", ErrorCode::kConfig);
  c.target_fpr = AtPath("target_fpr", [&] { return j.value("target_fpr", c.target_fpr); });
  Require(c.target_fpr > 0.0 && c.target_fpr < 1.0, "target_fpr: must lie in (0, 1)",
          ErrorCode::kConfig);
  if (j.contains("groundhog")) {
    c.groundhog = AtPath("groundhog", [&] { return ClassifierConfig::FromJson(j.at("groundhog")); });
  }
  if (j.contains("audit")) {
    const auto& a = j.at("audit");
    AuditSettings& s = c.audit;
    s.kind = AtPath("audit.kind", [&] { return a.value("kind", s.kind); });
    Require(s.kind == "step" || s.kind == "end_to_end",
            "audit.kind: expected step|end_to_end", ErrorCode::kConfig);
    s.trials = AtPath("audit.trials", [&] { return a.value("trials", s.trials); });
    if (a.contains("delta")) {
      s.delta = AtPath("audit.delta", [&] { return a.at("delta").get<double>(); });
      Require(*s.delta > 0.0 && *s.delta < 1.0, "audit.delta: must lie in (0, 1)",
              ErrorCode::kConfig);
    }
    s.dim = AtPath("audit.dim", [&] { return a.value("dim", s.dim); });
    Require(s.dim >= 1, "audit.dim: must be positive", ErrorCode::kConfig);
    s.background_size = AtPath("audit.background_size", [&] { return a.value("background_size", s.background_size); });
    s.canary_scale = AtPath("audit.canary_scale", [&] { return a.value("canary_scale", s.canary_scale); });
    s.target_fpr = AtPath("audit.target_fpr", [&] { return a.value("target_fpr", c.target_fpr); });
    if (a.contains("canary")) s.canary = a.at("canary");
  }
  if (j.contains("cost")) {
    const auto& k = j.at("cost");
    if (k.contains("model")) c.cost_model = AtPath("cost.model", [&] { return internal::CostFromJson(k.at("model")); });
    if (k.contains("attack")) c.cost_attack = AtPath("cost.attack", [&] { return internal::CostFromJson(k.at("attack")); });
  }
  c.out = AtPath("out", [&] { return internal::Resolve(base_dir, j.value("out", c.out)); });
  return c;
}

inline ExperimentConfig LoadConfig(const std::string& path) {
  const nlohmann::json j = ReadJsonFile(path);
  return ParseConfig(j, std::filesystem::path(path).parent_path());
}

// ---------------------------------------------------------------------------
// Shared helpers

struct CommandOptions {
  std::size_t workers = 1;
  bool dry_run = false;
  std::optional<std::string> out;  // overrides the config
  std::string command_line;
  std::ostream* log = &std::cout;
};

namespace internal {

inline Dataset LoadDataset(const ExperimentConfig& c) {
  Require(c.has_dataset(), "dataset: required for this command", ErrorCode::kConfig);
  return LoadCsv(c.dataset, LoadSchema(c.schema));
}

inline std::string OutDir(const ExperimentConfig& c, const CommandOptions& o) {
  const std::string dir = o.out.value_or(c.out);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Record RecordFromJson(const Schema& schema, const nlohmann::json& j,
                             const std::string& where) {
  Require(j.is_object(), where + ": expected an object of column values",
          ErrorCode::kConfig);
  Record r;
  for (std::size_t k = 0; k < schema.size(); ++k) {
    const Column& col = schema[k];
    Require(j.contains(col.name), where + "." + col.name + ": missing",
            ErrorCode::kConfig);
    const auto& v = j.at(col.name);
    if (col.numeric()) {
      Require(v.is_number(), where + "." + col.name + ": expected a number",
              ErrorCode::kConfig);
      r.values.push_back(v.get<double>());
    } else {
      Require(v.is_string(), where + "." + col.name + ": expected a level name",
              ErrorCode::kConfig);
      const auto& levels = col.cat().levels;
      const auto it = std::find(levels.begin(), levels.end(), v.get<std::string>());
      Require(it != levels.end(),
              where + "." + col.name + ": unknown level '" + v.get<std::string>() + "'",
              ErrorCode::kConfig);
      r.values.push_back(static_cast<double>(it - levels.begin()));
    }
  }
  AtPath(where, [&] { ValidateRecord(schema, r, where); });
  return r;
}

inline nlohmann::json RecordToJson(const Schema& schema, const Record& r) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t k = 0; k < schema.size(); ++k) {
    const Column& col = schema[k];
    if (col.numeric()) {
      j[col.name] = r.values[k];
    } else {
      j[col.name] = col.cat().levels[static_cast<std::size_t>(r.values[k])];
    }
  }
  return j;
}

struct ChosenTarget {
  Record record;
  std::string id;
  Dataset pool;  // dataset without the target
};

inline ChosenTarget ChooseTarget(const ExperimentConfig& c, const Dataset& ds) {
  ChosenTarget t;
  t.pool = Dataset{ds.schema, {}, ds.provenance};
  const std::string& s = c.target.strategy;
  if (s == "outlier" || s == "random") {
    const auto strategy =
        s == "random" ? TargetStrategy::kRandom : TargetStrategy::kMarginalOutlier;
    const auto idx = AtPath("target.rank", [&] {
      return SelectTargetIndices(ds, strategy, c.target.rank + 1, c.master_seed);
    });
    const std::size_t row = idx.back();
    t.record = ds.rows[row];
    t.id = "row:" + std::to_string(row + 1);
  } else if (s == "canary") {
    t.record = DefaultRecordCanary(ds);
    t.id = "canary";
  } else {
    t.record = RecordFromJson(ds.schema, c.target.record, "target.record");
    t.id = "record";
  }
  for (const auto& r : ds.rows) {
    if (!SameRecord(ds.schema, r, t.record)) t.pool.rows.push_back(r);
  }
  return t;
}

inline nlohmann::json ClaimJson(const ExperimentConfig& c, const Schema& schema,
                                std::size_t n) {
  try {
    const PrivacyParams p =
        c.trainer.kind == TrainerKind::kDpSgd
            ? ClaimedPrivacy(c.trainer.dpsgd, n, c.delta ? c.delta : c.trainer.delta)
            : EndToEndClaim(c.trainer, schema, n, c.delta ? c.delta : c.trainer.delta);
    if (c.trainer.kind == TrainerKind::kGan && c.trainer.gan.discriminator.bug_mode != BugMode::kNone) {
      Fail(ErrorCode::kNoGuarantee, "no valid guarantee exists for bug_mode " +
                                        ToString(c.trainer.gan.discriminator.bug_mode));
    }
    return {{"epsilon", p.epsilon}, {"delta", p.delta}};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNoGuarantee) throw;
    return {{"status", "no_valid_guarantee"}, {"reason", e.what()}};
  }
}

inline std::string UtcNow() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

// Timestamps and host details live here so reports stay byte-identical.
inline void WriteProvenance(const std::string& dir, const std::string& command,
                            const CommandOptions& o) {
  WriteJsonFile((std::filesystem::path(dir) / "provenance.json").string(),
                {{"schema_version", kSchemaVersion},
                 {"tool", "tabaudit"},
                 {"version", kToolVersion},
                 {"command", command},
                 {"command_line", o.command_line},
                 {"workers", o.workers},
                 {"created_utc", UtcNow()}});
}

inline void WriteText(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + path);
  out << text;
}

inline std::string Slug(std::string s) {
  for (auto& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch))) ch = '_';
  }
  return s;
}

}  // namespace internal

// ---------------------------------------------------------------------------
// train / synthesize

inline int CmdTrainLike(const ExperimentConfig& c, const CommandOptions& o,
                        bool generative) {
  const std::string name = generative ? "synthesize" : "train";
  if (c.trainer.generative() != generative) {
    Fail(ErrorCode::kConfig,
         "trainer.kind: '" + ToString(c.trainer.kind) + "' needs the '" +
             (generative ? "train" : "synthesize") + "' command");
  }
  const Dataset ds = internal::LoadDataset(c);
  if (!generative) {
    internal::AtPath("trainer.model", [&] { c.trainer.ResolvedModel(ds.schema).Validate(); });
  }
  if (o.dry_run) {
    *o.log << nlohmann::json({{"command", name}, {"valid", true}, {"rows", ds.size()}}).dump()
           << '\n';
    return kExitOk;
  }
  const std::string dir = internal::OutDir(c, o);
  namespace fs = std::filesystem;
  const AnyArtifact art = TrainOnce(ds, c.trainer, c.threat_model, c.master_seed);
  const std::string file = generative ? "synthesizer.bin" : "model.bin";
  {
    std::ofstream out(fs::path(dir) / file, std::ios::binary);
    if (!out) Fail(ErrorCode::kIo, "cannot write " + (fs::path(dir) / file).string());
    if (generative) {
      WriteGenerative(out, std::get<GenerativeArtifact>(art));
    } else {
      WriteTrainedArtifact(out, std::get<TrainedArtifact>(art));
    }
  }
  nlohmann::json acc = {{"schema_version", kSchemaVersion},
                        {"command", name},
                        {"trainer", c.trainer.ToJson()},
                        {"master_seed", c.master_seed},
                        {"rows", ds.size()},
                        {"dataset_fingerprint", Fingerprint(ds)},
                        {"artifact", file},
                        {"claimed", internal::ClaimJson(c, ds.schema, ds.size())}};
  if (generative) {
    const Dataset synth = Sample(std::get<GenerativeArtifact>(art), c.n_samples, c.master_seed);
    WriteCsvFile((fs::path(dir) / "synthetic.csv").string(), synth);
    acc["synthetic"] = "synthetic.csv";
  }
  WriteJsonFile((fs::path(dir) / "accountant.json").string(), acc);
  internal::WriteProvenance(dir, name, o);
  *o.log << name << ": wrote " << (fs::path(dir) / file).string() << '\n';
  return kExitOk;
}

inline int CmdTrain(const ExperimentConfig& c, const CommandOptions& o) {
  return CmdTrainLike(c, o, false);
}

inline int CmdSynthesize(const ExperimentConfig& c, const CommandOptions& o) {
  return CmdTrainLike(c, o, true);
}

// ---------------------------------------------------------------------------
// attack

inline void CheckAttackCompatibility(const ExperimentConfig& c) {
  Require(!c.attacks.empty(), "attacks: at least one attack is required",
          ErrorCode::kConfig);
  for (std::size_t i = 0; i < c.attacks.size(); ++i) {
    const std::string& a = c.attacks[i];
    const std::string where = "attacks[" + std::to_string(i) + "]: '" + a + "' ";
    if ((a == "loss_threshold" || a == "lira") && c.trainer.generative()) {
      Fail(ErrorCode::kIncompatibleMode, where + "needs a predictive (dpsgd) trainer");
    }
    if ((a == "dcr" || a == "groundhog") && !c.trainer.generative()) {
      Fail(ErrorCode::kIncompatibleMode, where + "needs a generative trainer");
    }
    if (a == "disc_loss" && (c.trainer.kind != TrainerKind::kGan ||
                             c.threat_model.access != ModelAccess::kWhiteBox)) {
      Fail(ErrorCode::kIncompatibleMode,
           where + "needs a gan trainer and threat_model.model_access = white_box");
    }
  }
}

inline int CmdAttack(const ExperimentConfig& c, const CommandOptions& o) {
  CheckAttackCompatibility(c);
  const Dataset ds = internal::LoadDataset(c);
  if (o.dry_run) {
    const CostEstimate e = EstimateMiaCost(ds.size(), c.shadow_runs, c.cost_model, c.cost_attack);
    nlohmann::json j = e.ToJson();
    j["command"] = "attack";
    *o.log << j.dump() << '\n';
    *o.log << "estimated cost: " << tabaudit::internal::FormatDouble(e.total_units) << " units\n";
    return kExitOk;
  }
  const auto target = internal::ChooseTarget(c, ds);
  const std::string dir = internal::OutDir(c, o);
  namespace fs = std::filesystem;

  const ShadowCollection col = RunShadowExperiment(
      target.record, target.pool, c.trainer, c.threat_model, c.shadow_runs, c.master_seed,
      o.workers);
  const std::vector<int> bits = col.bits();
  const nlohmann::json claimed = internal::ClaimJson(c, ds.schema, target.pool.size());
  const double delta = claimed.contains("delta")
                           ? claimed["delta"].get<double>()
                           : c.delta.value_or(1.0 / static_cast<double>(target.pool.size()));
  const std::vector<OperatingPointSpec> ops = {{OperatingKind::kMedian, 0.5},
                                               {OperatingKind::kFprAtMost, 0.1},
                                               {OperatingKind::kLowFprAuto, c.target_fpr}};
  std::optional<RunSplit> split;
  auto calibration = [&]() -> const CalibrationSet& {
    if (!split) split = SplitRuns(bits, c.holdout_fraction, c.master_seed);
    return split->calibration;
  };
  const QueryConfig q{c.n_samples, c.master_seed, o.workers};
  std::optional<std::vector<FeatureBundle>> pred, synth, disc;

  nlohmann::json index = {{"schema_version", kSchemaVersion},
                          {"command", "attack"},
                          {"files", nlohmann::json::array()}};
  for (const std::string& a : c.attacks) {
    ScoredRuns s;
    if (a == "loss_threshold" || a == "lira") {
      if (!pred) pred = QueryFeatures(col, QueryMode::kPredLoss, q);
      s = a == "lira" ? AttackLira(*pred, calibration()) : AttackLossThreshold(*pred);
    } else if (a == "dcr" || a == "groundhog") {
      if (!synth) synth = QueryFeatures(col, QueryMode::kSynthDataset, q);
      if (a == "dcr") {
        s = AttackDcr(*synth, target.record, o.workers);
      } else {
        ClassifierConfig g = c.groundhog;
        g.seed = Hash64(c.master_seed, g.seed);
        s = AttackGroundhog(*synth, calibration(), g);
      }
    } else {
      if (!disc) disc = QueryFeatures(col, QueryMode::kDiscLoss, q);
      s = AttackDiscLoss(*disc);
    }
    AttackReport rep = Evaluate(s, bits, delta, c.confidence, ops);
    rep.threat_model = c.threat_model.ToJson();
    nlohmann::json j = ToJson(rep);
    j["target"] = {{"id", target.id}, {"record", internal::RecordToJson(ds.schema, target.record)}};
    j["claimed"] = claimed;
    j["trainer"] = c.trainer.ToJson();
    j["master_seed"] = c.master_seed;
    j["shadow_runs"] = c.shadow_runs;
    j["pool_size"] = target.pool.size();
    j["collection_fingerprint"] = CollectionFingerprint(col);
    const std::string base = internal::Slug(a);
    WriteJsonFile((fs::path(dir) / (base + ".json")).string(), j);
    std::ofstream roc(fs::path(dir) / (base + "_roc.csv"), std::ios::binary);
    WriteRocCsv(roc, rep);
    index["files"].push_back(base + ".json");
    index["files"].push_back(base + "_roc.csv");
    *o.log << a << ": auc " << tabaudit::internal::FormatDouble(rep.auc) << ", max eps lower bound "
           << MaxLowerBound(rep).ToString() << '\n';
  }
  WriteJsonFile((fs::path(dir) / "attack_index.json").string(), index);
  internal::WriteProvenance(dir, "attack", o);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// audit

inline int CmdAudit(const ExperimentConfig& c, const CommandOptions& o) {
  const AuditSettings& s = c.audit;
  namespace fs = std::filesystem;
  AuditVerdict v;
  nlohmann::json extra;
  if (s.kind == "step") {
    Require(c.trainer.kind == TrainerKind::kDpSgd,
            "trainer.kind: step audits need a dpsgd trainer", ErrorCode::kConfig);
    Require(s.delta.has_value() || c.delta.has_value(),
            "audit.delta: required for step audits", ErrorCode::kConfig);
    Require(s.trials >= kMinStepTrials,
            "audit.trials: step audits need at least " + std::to_string(kMinStepTrials),
            ErrorCode::kConfig);
    if (o.dry_run) {
      *o.log << nlohmann::json({{"command", "audit"}, {"kind", "step"}, {"trials", s.trials}}).dump()
             << '\n';
      return kExitOk;
    }
    DpSgdConfig cfg = c.trainer.dpsgd;
    cfg.seed = c.master_seed;
    StepAuditOptions opt;
    opt.background_size = s.background_size;
    opt.canary_scale = s.canary_scale;
    opt.target_fpr = s.target_fpr;
    opt.workers = o.workers;
    v = AuditStepMechanism(cfg, DefaultGradientCanary(s.dim, cfg.clip_norm), s.trials,
                           s.delta ? *s.delta : *c.delta, c.confidence, opt);
    extra["canary"] = {{"kind", "gradient_canary"}, {"dim", s.dim}, {"axis", 0}};
  } else {
    const Dataset ds = internal::LoadDataset(c);
    Require(c.shadow_runs >= kMinEndToEndRuns,
            "shadow_runs: end-to-end audits need at least " +
                std::to_string(kMinEndToEndRuns),
            ErrorCode::kConfig);
    const Record canary = s.canary.is_null()
                              ? DefaultRecordCanary(ds)
                              : internal::RecordFromJson(ds.schema, s.canary, "audit.canary");
    if (o.dry_run) {
      const CostEstimate e = EstimateMiaCost(1, c.shadow_runs, c.cost_model, c.cost_attack);
      nlohmann::json j = e.ToJson();
      j["command"] = "audit";
      *o.log << j.dump() << '\n';
      return kExitOk;
    }
    EndToEndOptions opt;
    opt.n_samples = c.n_samples;
    opt.target_fpr = s.target_fpr;
    opt.holdout_fraction = c.holdout_fraction;
    opt.groundhog = c.groundhog;
    opt.workers = o.workers;
    const auto delta = s.delta ? s.delta : (c.delta ? c.delta : c.trainer.delta);
    v = AuditEndToEnd(c.trainer, ds, canary, c.shadow_runs, delta, c.confidence,
                      c.master_seed, opt);
    extra["canary"] = {{"kind", "record_canary"},
                       {"record", internal::RecordToJson(ds.schema, canary)}};
  }
  const std::string dir = internal::OutDir(c, o);
  nlohmann::json j = ToJson(v);
  j["canary"] = extra["canary"];
  j["master_seed"] = c.master_seed;
  WriteJsonFile((fs::path(dir) / "audit.json").string(), j);
  internal::WriteProvenance(dir, "audit", o);
  *o.log << "audit " << v.audit << ": measured " << v.measured_lower_bound.ToString()
         << " vs claimed " << tabaudit::internal::FormatDouble(v.claimed.epsilon) << " -> "
         << (v.pass ? (v.inconclusive() ? "inconclusive" : "pass") : "fail") << '\n';
  return v.ExitCode();
}

// ---------------------------------------------------------------------------
// report

struct ReportResult {
  nlohmann::json summary;
  std::string table;
  int exit_code = kExitOk;
};

namespace internal {

inline std::string Cell(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number()) return tabaudit::internal::FormatDouble(v.get<double>());
  if (v.is_null()) return "-";
  return v.dump();
}

inline std::string Table(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w(header.size());
  for (std::size_t k = 0; k < header.size(); ++k) w[k] = header[k].size();
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < r.size(); ++k) w[k] = std::max(w[k], r[k].size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t k = 0; k < r.size(); ++k) {
      out << std::left << std::setw(static_cast<int>(w[k])) << r[k]
          << (k + 1 < r.size() ? "  " : "");
    }
    out << '\n';
  };
  line(header);
  std::vector<std::string> rule;
  for (std::size_t k : w) rule.emplace_back(k, '-');
  line(rule);
  for (const auto& r : rows) line(r);
  return out.str();
}

inline nlohmann::json Claimed(const nlohmann::json& j) {
  if (!j.contains("claimed")) return nullptr;
  const auto& c = j["claimed"];
  if (c.contains("epsilon")) return c["epsilon"];
  return "none";
}

}  // namespace internal

inline ReportResult BuildReport(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    Fail(ErrorCode::kMissingFile, "report: input directory not found: " + dir);
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  ReportResult r;
  nlohmann::json attacks = nlohmann::json::array(), audits = nlohmann::json::array(),
                 missing = nlohmann::json::array();
  for (const auto& p : files) {
    const std::string name = p.filename().string();
    if (name == "summary.json" || name == "provenance.json") continue;
    nlohmann::json j;
    try {
      j = ReadJsonFile(p.string());
    } catch (const Error& e) {
      missing.push_back({{"file", name}, {"reason", e.what()}});
      continue;
    }
    if (!j.is_object() || !j.contains("schema_version")) continue;
    if (j.contains("files")) {
      for (const auto& f : j["files"]) {
        if (!fs::exists(fs::path(dir) / f.get<std::string>())) {
          missing.push_back({{"file", f}, {"reason", "listed in " + name + " but absent"}});
        }
      }
      continue;
    }
    if (j.contains("operating_points") && j.contains("attack")) {
      // strongest operating point; "unbounded" beats any number
      nlohmann::json best_lb = 0.0, best_pt = 0.0;
      std::string best_label = "-";
      bool first = true;
      for (const auto& op : j["operating_points"]) {
        const auto& lb = op["epsilon_lower_bound"];
        const bool better =
            !best_lb.is_string() && (lb.is_string() || lb.get<double>() > best_lb.get<double>());
        if (first || better) {
          best_lb = lb;
          best_pt = op["epsilon_point"];
          best_label = op["label"];
          first = false;
        }
      }
      attacks.push_back({{"file", name},
                         {"target", j.contains("target") ? j["target"].value("id", "-") : "-"},
                         {"attack", j["attack"]},
                         {"auc", j["auc"]},
                         {"operating_point", best_label},
                         {"epsilon_point", best_pt},
                         {"epsilon_lower_bound", best_lb},
                         {"claimed_epsilon", internal::Claimed(j)}});
    } else if (j.contains("audit")) {
      audits.push_back({{"file", name},
                        {"audit", j["audit"]},
                        {"attack", j["attack"]},
                        {"epsilon_point", j["measured_point"]},
                        {"epsilon_lower_bound", j["measured_lower_bound"]},
                        {"claimed_epsilon", j["claimed"]["epsilon"]},
                        {"pass", j["pass"]},
                        {"exit_code", j["exit_code"]}});
    }
  }
  r.summary = {{"schema_version", kSchemaVersion},
               {"attacks", attacks},
               {"audits", audits},
               {"missing", missing}};

  std::vector<std::vector<std::string>> arows, drows;
  for (const auto& a : attacks) {
    arows.push_back({internal::Cell(a["target"]), internal::Cell(a["attack"]),
                     internal::Cell(a["auc"]), internal::Cell(a["epsilon_point"]),
                     internal::Cell(a["epsilon_lower_bound"]),
                     internal::Cell(a["claimed_epsilon"])});
  }
  for (const auto& a : audits) {
    drows.push_back({internal::Cell(a["audit"]), internal::Cell(a["attack"]),
                     internal::Cell(a["epsilon_point"]), internal::Cell(a["epsilon_lower_bound"]),
                     internal::Cell(a["claimed_epsilon"]),
                     a["pass"].get<bool>() ? "pass" : "fail"});
  }
  std::ostringstream t;
  t << "attacks\n"
    << internal::Table({"target", "attack", "auc", "eps_point", "eps_cp_bound", "claimed_eps"},
                       arows);
  if (!drows.empty()) {
    t << "\naudits\n"
      << internal::Table({"audit", "statistic", "eps_point", "eps_cp_bound", "claimed_eps",
                          "verdict"},
                         drows);
  }
  for (const auto& m : missing) {
    t << "missing: " << m["file"].get<std::string>() << " (" << m["reason"].get<std::string>()
      << ")\n";
  }
  r.table = t.str();
  r.exit_code = missing.empty() ? kExitOk : kExitRuntime;
  return r;
}

inline int CmdReport(const std::string& in_dir, const CommandOptions& o) {
  const ReportResult r = BuildReport(in_dir);
  const std::string dir = o.out.value_or(in_dir);
  std::filesystem::create_directories(dir);
  WriteJsonFile((std::filesystem::path(dir) / "summary.json").string(), r.summary);
  internal::WriteText((std::filesystem::path(dir) / "summary.txt").string(), r.table);
  *o.log << r.table;
  return r.exit_code;
}

}  // namespace tabaudit::cli
