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

// Tabular data: schema, CSV ingestion, canonical [0,1]/one-hot encoding,
// neighboring datasets and target selection.

#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "tabaudit/error.hpp"
#include "tabaudit/random.hpp"

namespace tabaudit {

struct NumericColumn {
  double min = 0.0;
  double max = 1.0;
};

struct CategoricalColumn {
  std::vector<std::string> levels;
};

struct Column {
  std::string name;
  std::variant<NumericColumn, CategoricalColumn> kind;

  bool numeric() const { return std::holds_alternative<NumericColumn>(kind); }
  const NumericColumn& num() const { return std::get<NumericColumn>(kind); }
  const CategoricalColumn& cat() const {
    return std::get<CategoricalColumn>(kind);
  }
  // Encoded dimensions: 1 for numeric, #levels for categorical.
  std::size_t width() const { return numeric() ? 1 : cat().levels.size(); }
};

class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<Column> columns) : columns_(std::move(columns)) {
    Validate();
  }

  const std::vector<Column>& columns() const { return columns_; }
  std::size_t size() const { return columns_.size(); }
  const Column& operator[](std::size_t i) const { return columns_[i]; }

  std::size_t IndexOf(const std::string& name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      if (columns_[i].name == name) return i;
    }
    Fail(ErrorCode::kInvalidArgument, "unknown column '" + name + "'");
  }

  std::size_t EncodedWidth() const {
    std::size_t w = 0;
    for (const auto& c : columns_) w += c.width();
    return w;
  }

  void Validate() const {
    std::unordered_set<std::string> names;
    for (const auto& c : columns_) {
      Require(!c.name.empty(), "column names must be non-empty");
      Require(names.insert(c.name).second,
              "duplicate column name '" + c.name + "'");
      if (c.numeric()) {
        Require(std::isfinite(c.num().min) && std::isfinite(c.num().max) &&
                    c.num().min < c.num().max,
                "numeric column '" + c.name + "' needs finite min < max");
      } else {
        const auto& levels = c.cat().levels;
        Require(!levels.empty(),
                "categorical column '" + c.name + "' needs levels");
        std::unordered_set<std::string> seen;
        for (const auto& l : levels) {
          Require(seen.insert(l).second, "categorical column '" + c.name +
                                             "' has duplicate level '" + l +
                                             "'");
        }
      }
    }
  }

  friend bool operator==(const Schema& a, const Schema& b) {
    return a.ToJson() == b.ToJson();
  }

  nlohmann::json ToJson() const {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : columns_) {
      nlohmann::json j{{"name", c.name}};
      if (c.numeric()) {
        j["kind"] = "numeric";
        j["min"] = c.num().min;
        j["max"] = c.num().max;
      } else {
        j["kind"] = "categorical";
        j["levels"] = c.cat().levels;
      }
      cols.push_back(std::move(j));
    }
    return {{"columns", cols}};
  }

  static Schema FromJson(const nlohmann::json& j) {
    Require(j.is_object() && j.contains("columns") && j["columns"].is_array(),
            "schema: expected an object with a \"columns\" array",
            ErrorCode::kConfig);
    std::vector<Column> cols;
    std::size_t i = 0;
    for (const auto& c : j["columns"]) {
      const std::string where = "schema.columns[" + std::to_string(i++) + "]";
      Require(c.is_object() && c.contains("name") && c["name"].is_string(),
              where + ".name: missing", ErrorCode::kConfig);
      Require(c.contains("kind") && c["kind"].is_string(),
              where + ".kind: missing", ErrorCode::kConfig);
      const std::string kind = c["kind"];
      if (kind == "numeric") {
        Require(c.contains("min") && c["min"].is_number() && c.contains("max") &&
                    c["max"].is_number(),
                where + ": numeric column needs min and max", ErrorCode::kConfig);
        cols.push_back({c["name"], NumericColumn{c["min"], c["max"]}});
      } else if (kind == "categorical") {
        Require(c.contains("levels") && c["levels"].is_array(),
                where + ".levels: missing", ErrorCode::kConfig);
        CategoricalColumn cat;
        for (const auto& l : c["levels"]) {
          Require(l.is_string(), where + ".levels: must be strings",
                  ErrorCode::kConfig);
          cat.levels.push_back(l);
        }
        cols.push_back({c["name"], std::move(cat)});
      } else {
        Fail(ErrorCode::kConfig, where + ".kind: expected numeric|categorical");
      }
    }
    try {
      return Schema(std::move(cols));
    } catch (const Error& e) {
      Fail(ErrorCode::kConfig, std::string("schema: ") + e.what());
    }
  }

 private:
  std::vector<Column> columns_;
};

inline Schema LoadSchema(const std::string& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kMissingFile, "cannot open schema file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kConfig, "schema " + path + ": " + e.what());
  }
  return Schema::FromJson(j);
}

// One row. Numeric columns hold the value; categorical columns hold the level
// index as an integral double.
struct Record {
  std::vector<double> values;

  friend bool operator==(const Record&, const Record&) = default;
};

inline void ValidateRecord(const Schema& schema, const Record& r,
                           const std::string& where = "record") {
  Require(r.values.size() == schema.size(),
          where + ": expected " + std::to_string(schema.size()) + " values",
          ErrorCode::kInvalidArgument);
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const Column& c = schema[j];
    const double v = r.values[j];
    if (c.numeric()) {
      Require(std::isfinite(v) && v >= c.num().min && v <= c.num().max,
              where + ", column '" + c.name + "': value outside [min, max]",
              ErrorCode::kOutOfRange);
    } else {
      Require(std::isfinite(v) && v >= 0 && std::floor(v) == v &&
                  v < static_cast<double>(c.cat().levels.size()),
              where + ", column '" + c.name + "': level index out of range",
              ErrorCode::kUnknownLevel);
    }
  }
}

struct Dataset {
  Schema schema;
  std::vector<Record> rows;
  std::string provenance;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }

  void Validate() const {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      ValidateRecord(schema, rows[i], "row " + std::to_string(i + 1));
    }
  }
};

// Location of one schema column inside an encoded row.
struct ColumnSlot {
  std::size_t offset = 0;
  std::size_t width = 0;
};

inline std::vector<ColumnSlot> EncodingLayout(const Schema& schema) {
  std::vector<ColumnSlot> layout;
  std::size_t offset = 0;
  for (const auto& c : schema.columns()) {
    layout.push_back({offset, c.width()});
    offset += c.width();
  }
  return layout;
}

// Row-major matrix of encoded records.
struct EncodedMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
  std::vector<ColumnSlot> layout;

  std::span<const double> Row(std::size_t i) const {
    return {data.data() + i * cols, cols};
  }
  std::span<double> Row(std::size_t i) { return {data.data() + i * cols, cols}; }
};

namespace internal {

inline double EncodeNumeric(double v, const NumericColumn& c) {
  return (v - c.min) / (c.max - c.min);
}

// Total order on doubles as signed integers, for bisection over the
// representable values.
inline std::int64_t OrderedBits(double x) {
  const auto u = std::bit_cast<std::int64_t>(x);
  return u < 0 ? std::numeric_limits<std::int64_t>::min() - u : u;
}
inline double FromOrderedBits(std::int64_t o) {
  const std::int64_t u = o < 0 ? std::numeric_limits<std::int64_t>::min() - o : o;
  return std::bit_cast<double>(u);
}

// Inverts EncodeNumeric. When x is the encoding of some in-range value, the
// result re-encodes to exactly x.
inline double DecodeNumeric(double x, const NumericColumn& c) {
  x = std::clamp(x, 0.0, 1.0);
  const double guess = std::clamp(c.min + x * (c.max - c.min), c.min, c.max);
  if (EncodeNumeric(guess, c) == x) return guess;
  double up = guess, down = guess;
  for (int i = 0; i < 4; ++i) {
    up = std::nextafter(up, c.max);
    down = std::nextafter(down, c.min);
    if (EncodeNumeric(up, c) == x) return up;
    if (EncodeNumeric(down, c) == x) return down;
  }
  // Encoding is monotone in the value, so bisect over representable doubles.
  std::int64_t lo = OrderedBits(c.min), hi = OrderedBits(c.max);
  while (lo <= hi) {
    const std::int64_t mid =
        lo + static_cast<std::int64_t>(
                 (static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo)) / 2);
    const double e = EncodeNumeric(FromOrderedBits(mid), c);
    if (e == x) return FromOrderedBits(mid);
    if (e < x) {
      lo = mid + 1;
    } else {
      hi = mid - 1;
    }
  }
  return guess;
}

}  // namespace internal

inline void EncodeRecordInto(const Schema& schema, const Record& r,
                             std::span<double> out) {
  std::size_t o = 0;
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const Column& c = schema[j];
    if (c.numeric()) {
      out[o++] = internal::EncodeNumeric(r.values[j], c.num());
    } else {
      const std::size_t level = static_cast<std::size_t>(r.values[j]);
      for (std::size_t l = 0; l < c.width(); ++l) {
        out[o++] = l == level ? 1.0 : 0.0;
      }
    }
  }
}

inline std::vector<double> EncodeRecord(const Schema& schema, const Record& r) {
  std::vector<double> out(schema.EncodedWidth());
  EncodeRecordInto(schema, r, out);
  return out;
}

// Categorical slots decode by argmax (first maximum wins), so arbitrary
// generator outputs decode to valid records.
inline Record DecodeRecord(const Schema& schema, std::span<const double> row) {
  Require(row.size() == schema.EncodedWidth(), "decode: width mismatch");
  Record r;
  r.values.reserve(schema.size());
  std::size_t o = 0;
  for (const auto& c : schema.columns()) {
    if (c.numeric()) {
      r.values.push_back(internal::DecodeNumeric(row[o], c.num()));
      ++o;
    } else {
      std::size_t best = 0;
      for (std::size_t l = 1; l < c.width(); ++l) {
        if (row[o + l] > row[o + best]) best = l;
      }
      r.values.push_back(static_cast<double>(best));
      o += c.width();
    }
  }
  return r;
}

inline EncodedMatrix Encode(const Dataset& ds) {
  EncodedMatrix m;
  m.rows = ds.size();
  m.cols = ds.schema.EncodedWidth();
  m.layout = EncodingLayout(ds.schema);
  m.data.resize(m.rows * m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    EncodeRecordInto(ds.schema, ds.rows[i], m.Row(i));
  }
  return m;
}

inline Dataset Decode(const Schema& schema, const EncodedMatrix& m,
                      std::string provenance = "decoded") {
  Dataset ds{schema, {}, std::move(provenance)};
  ds.rows.reserve(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    ds.rows.push_back(DecodeRecord(schema, m.Row(i)));
  }
  return ds;
}

// Records are "the same" iff their canonical encodings are bit-identical.
inline bool SameRecord(const Schema& schema, const Record& a, const Record& b) {
  return EncodeRecord(schema, a) == EncodeRecord(schema, b);
}

inline bool ContainsRecord(const Dataset& ds, const Record& r) {
  const std::vector<double> key = EncodeRecord(ds.schema, r);
  std::vector<double> row(key.size());
  for (const auto& x : ds.rows) {
    EncodeRecordInto(ds.schema, x, row);
    if (row == key) return true;
  }
  return false;
}

// Order-independent hash of the row multiset.
inline std::uint64_t Fingerprint(const Dataset& ds) {
  std::vector<std::uint64_t> hashes;
  hashes.reserve(ds.size());
  std::vector<double> row(ds.schema.EncodedWidth());
  for (const auto& r : ds.rows) {
    EncodeRecordInto(ds.schema, r, row);
    std::uint64_t h = 0x243F6A8885A308D3ULL;
    for (double v : row) h = Hash64(h, std::bit_cast<std::uint64_t>(v));
    hashes.push_back(h);
  }
  std::sort(hashes.begin(), hashes.end());
  std::uint64_t h = Hash64(0x13198A2E03707344ULL, hashes.size());
  for (auto x : hashes) h = Hash64(h, x);
  return h;
}

// ---------------------------------------------------------------------------
// CSV

namespace internal {

inline std::string_view Trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::vector<std::string_view> SplitCommas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(Trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

inline std::string FormatDouble(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace internal

inline Dataset ParseCsv(std::istream& in, const Schema& schema,
                        std::string provenance = "csv") {
  std::string line;
  if (!std::getline(in, line)) {
    Fail(ErrorCode::kHeaderMismatch, "csv: missing header row");
  }
  const auto header = internal::SplitCommas(line);
  bool header_ok = header.size() == schema.size();
  for (std::size_t j = 0; header_ok && j < header.size(); ++j) {
    header_ok = header[j] == schema[j].name;
  }
  if (!header_ok) {
    std::string expected;
    for (const auto& c : schema.columns()) {
      expected += (expected.empty() ? "" : ",") + c.name;
    }
    Fail(ErrorCode::kHeaderMismatch,
         "csv header does not match schema; expected: " + expected);
  }

  std::vector<std::map<std::string, std::size_t, std::less<>>> level_index(
      schema.size());
  for (std::size_t j = 0; j < schema.size(); ++j) {
    if (!schema[j].numeric()) {
      const auto& levels = schema[j].cat().levels;
      for (std::size_t l = 0; l < levels.size(); ++l) {
        level_index[j][levels[l]] = l;
      }
    }
  }

  Dataset ds{schema, {}, std::move(provenance)};
  std::size_t row_number = 0;
  while (std::getline(in, line)) {
    if (internal::Trim(line).empty()) continue;
    ++row_number;
    const std::string where = "row " + std::to_string(row_number);
    const auto fields = internal::SplitCommas(line);
    if (fields.size() != schema.size()) {
      Fail(ErrorCode::kMalformedValue,
           where + ": expected " + std::to_string(schema.size()) +
               " fields, found " + std::to_string(fields.size()));
    }
    Record r;
    r.values.resize(schema.size());
    for (std::size_t j = 0; j < schema.size(); ++j) {
      const Column& c = schema[j];
      const std::string at = where + ", column '" + c.name + "'";
      const std::string_view f = fields[j];
      if (f.empty()) Fail(ErrorCode::kMissingValue, at + ": missing value");
      if (c.numeric()) {
        double v = 0.0;
        const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
        if (res.ec != std::errc() || res.ptr != f.data() + f.size() ||
            !std::isfinite(v)) {
          Fail(ErrorCode::kMalformedValue,
               at + ": cannot parse '" + std::string(f) + "' as a number");
        }
        if (v < c.num().min || v > c.num().max) {
          Fail(ErrorCode::kOutOfRange,
               at + ": value " + std::string(f) + " outside [" +
                   internal::FormatDouble(c.num().min) + ", " +
                   internal::FormatDouble(c.num().max) + "]");
        }
        r.values[j] = v;
      } else {
        const auto it = level_index[j].find(f);
        if (it == level_index[j].end()) {
          Fail(ErrorCode::kUnknownLevel,
               at + ": unknown level '" + std::string(f) + "'");
        }
        r.values[j] = static_cast<double>(it->second);
      }
    }
    ds.rows.push_back(std::move(r));
  }
  return ds;
}

inline Dataset LoadCsv(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kMissingFile, "cannot open csv file " + path);
  return ParseCsv(in, schema, path);
}

inline void WriteCsv(std::ostream& out, const Dataset& ds) {
  for (std::size_t j = 0; j < ds.schema.size(); ++j) {
    out << (j ? "," : "") << ds.schema[j].name;
  }
  out << '\n';
  for (const auto& r : ds.rows) {
    for (std::size_t j = 0; j < ds.schema.size(); ++j) {
      if (j) out << ',';
      const Column& c = ds.schema[j];
      if (c.numeric()) {
        out << internal::FormatDouble(r.values[j]);
      } else {
        out << c.cat().levels[static_cast<std::size_t>(r.values[j])];
      }
    }
    out << '\n';
  }
}

inline void WriteCsvFile(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + path);
  WriteCsv(out, ds);
}

// ---------------------------------------------------------------------------
// Neighbors and targets

// (D, D') with D = base and D' = base + target.
inline std::pair<Dataset, Dataset> MakeNeighbors(const Dataset& base,
                                                 const Record& target) {
  ValidateRecord(base.schema, target, "target");
  if (ContainsRecord(base, target)) {
    Fail(ErrorCode::kDuplicateRecord,
         "target record already present in the base dataset");
  }
  Dataset with = base;
  with.rows.push_back(target);
  with.provenance = base.provenance + "+target";
  return {base, std::move(with)};
}

enum class TargetStrategy { kRandom, kMarginalOutlier };

inline constexpr std::size_t kOutlierHistogramBins = 10;

// Histogram bin of a numeric value on schema bounds; max falls in the last bin.
inline std::size_t NumericBin(double v, const NumericColumn& c,
                              std::size_t bins) {
  const double x = (v - c.min) / (c.max - c.min);
  const auto b = static_cast<std::size_t>(std::floor(x * static_cast<double>(bins)));
  return std::min(b, bins - 1);
}

// Sum over columns of -log empirical marginal frequency (10 equal-width bins
// for numeric columns).
inline std::vector<double> MarginalOutlierScores(const Dataset& ds) {
  const std::size_t n = ds.size();
  std::vector<double> scores(n, 0.0);
  if (n == 0) return scores;
  for (std::size_t j = 0; j < ds.schema.size(); ++j) {
    const Column& c = ds.schema[j];
    const std::size_t cells = c.numeric() ? kOutlierHistogramBins : c.width();
    std::vector<std::size_t> cell_of(n);
    std::vector<std::size_t> counts(cells, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = ds.rows[i].values[j];
      cell_of[i] = c.numeric() ? NumericBin(v, c.num(), kOutlierHistogramBins)
                               : static_cast<std::size_t>(v);
      ++counts[cell_of[i]];
    }
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] -= std::log(static_cast<double>(counts[cell_of[i]]) /
                            static_cast<double>(n));
    }
  }
  return scores;
}

inline std::vector<std::size_t> SelectTargetIndices(const Dataset& ds,
                                                    TargetStrategy strategy,
                                                    std::size_t k,
                                                    std::uint64_t seed) {
  if (k > ds.size()) {
    Fail(ErrorCode::kInvalidArgument,
         "cannot select " + std::to_string(k) + " targets from " +
             std::to_string(ds.size()) + " rows");
  }
  if (strategy == TargetStrategy::kRandom) {
    Rng rng(seed, stream_tag::kTargets);
    return SampleWithoutReplacement(ds.size(), k, rng);
  }
  const std::vector<double> scores = MarginalOutlierScores(ds);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  order.resize(k);
  return order;
}

inline std::vector<Record> SelectTargets(const Dataset& ds,
                                         TargetStrategy strategy, std::size_t k,
                                         std::uint64_t seed) {
  std::vector<Record> out;
  for (std::size_t i : SelectTargetIndices(ds, strategy, k, seed)) {
    out.push_back(ds.rows[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Supervised view: one categorical column is the label, the rest features.

struct SupervisedData {
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;  // row-major, size() * input_dim
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> Row(std::size_t i) const {
    return {features.data() + i * input_dim, input_dim};
  }
};

struct LabeledExample {
  std::vector<double> features;
  std::size_t label = 0;
};

inline std::size_t LabelColumnIndex(const Schema& schema,
                                    const std::string& label_column) {
  const std::size_t idx = schema.IndexOf(label_column);
  Require(!schema[idx].numeric() && schema[idx].width() >= 2,
          "label column '" + label_column +
              "' must be categorical with at least 2 levels");
  return idx;
}

inline std::size_t FeatureDim(const Schema& schema,
                              const std::string& label_column) {
  return schema.EncodedWidth() -
         schema[LabelColumnIndex(schema, label_column)].width();
}

inline LabeledExample EncodeLabeled(const Schema& schema,
                                    const std::string& label_column,
                                    const Record& r) {
  const std::size_t label_idx = LabelColumnIndex(schema, label_column);
  const std::vector<double> full = EncodeRecord(schema, r);
  const ColumnSlot slot = EncodingLayout(schema)[label_idx];
  LabeledExample ex;
  ex.features.reserve(full.size() - slot.width);
  for (std::size_t d = 0; d < full.size(); ++d) {
    if (d < slot.offset || d >= slot.offset + slot.width) {
      ex.features.push_back(full[d]);
    }
  }
  ex.label = static_cast<std::size_t>(r.values[label_idx]);
  return ex;
}

inline SupervisedData MakeSupervised(const Dataset& ds,
                                     const std::string& label_column) {
  SupervisedData out;
  out.input_dim = FeatureDim(ds.schema, label_column);
  out.num_classes = ds.schema[LabelColumnIndex(ds.schema, label_column)].width();
  out.features.reserve(ds.size() * out.input_dim);
  for (const auto& r : ds.rows) {
    LabeledExample ex = EncodeLabeled(ds.schema, label_column, r);
    out.features.insert(out.features.end(), ex.features.begin(),
                        ex.features.end());
    out.labels.push_back(ex.label);
  }
  return out;
}

}  // namespace tabaudit
