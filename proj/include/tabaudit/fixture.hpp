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

// Synthetic census-like table for demos and tests. Numeric values stay in
// the lower part of their declared ranges and every categorical column has
// a level that is never drawn, so the per-column extreme record is an
// outlier by construction.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "tabaudit/data.hpp"
#include "tabaudit/random.hpp"

namespace tabaudit {

inline Schema FixtureSchema() {
  return Schema({{"age", NumericColumn{18, 90}},
                 {"hours", NumericColumn{0, 100}},
                 {"capital", NumericColumn{0, 1000}},
                 {"sector", CategoricalColumn{{"private", "public", "self", "other"}}},
                 {"education", CategoricalColumn{{"basic", "school", "degree", "doctorate"}}},
                 {"income", CategoricalColumn{{"low", "high"}}}});
}

inline Dataset MakeFixture(std::size_t n, std::uint64_t seed) {
  Dataset ds{FixtureSchema(), {}, "fixture(n=" + std::to_string(n) + ", seed=" +
                                      std::to_string(seed) + ")"};
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double age = std::clamp(rng.Normal(38, 8), 18.0, 65.0);
    const double hours = std::clamp(rng.Normal(40, 6), 10.0, 60.0);
    const double capital = std::min(400.0, 100.0 * -std::log1p(-rng.Uniform() * 0.98));
    const double sector = static_cast<double>(rng.Index(3));     // never "other"
    const double education = static_cast<double>(rng.Index(3));  // never "doctorate"
    const double z = 0.08 * (age - 38) + 0.1 * (hours - 40) + 0.8 * (education - 1) +
                     rng.Normal(0, 1);
    ds.rows.push_back(Record{{age, hours, capital, sector, education, z > 0 ? 1.0 : 0.0}});
  }
  return ds;
}

}  // namespace tabaudit
