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

// Writes the synthetic fixture table (data.csv + schema.json).

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "tabaudit/fixture.hpp"
#include "tabaudit/io.hpp"

int main(int argc, char** argv) {
  CLI::App app{"make_fixture: synthetic tabular fixture"};
  std::size_t rows = 1000;
  std::uint64_t seed = 1;
  std::string out = "fixture";
  app.add_option("--rows", rows, "number of rows");
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--out", out, "output directory");
  CLI11_PARSE(app, argc, argv);
  try {
    namespace fs = std::filesystem;
    fs::create_directories(out);
    const tabaudit::Dataset ds = tabaudit::MakeFixture(rows, seed);
    tabaudit::WriteCsvFile((fs::path(out) / "data.csv").string(), ds);
    tabaudit::WriteJsonFile((fs::path(out) / "schema.json").string(), ds.schema.ToJson());
    std::cout << "wrote " << rows << " rows to " << (fs::path(out) / "data.csv").string() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 5;
  }
  return 0;
}
