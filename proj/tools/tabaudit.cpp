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

// tabaudit: train, synthesize, attack, audit, report.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "tabaudit/cli.hpp"

namespace {

using namespace tabaudit;

std::string JoinArgs(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tabaudit: privacy attacks and audits for tabular learners"};
  app.require_subcommand(1);

  std::string config_path, report_dir, out;
  std::size_t workers = 1;
  bool dry_run = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--workers", workers, "worker threads (output is identical for any value)")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--dry-run", dry_run, "validate and print the cost estimate, do not train");
    sub->add_option("--out", out, "output directory (overrides the config)");
  };
  std::vector<std::pair<std::string, CLI::App*>> commands;
  for (const char* name : {"train", "synthesize", "attack", "audit"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    add_common(sub);
    commands.emplace_back(name, sub);
  }
  CLI::App* report = app.add_subcommand("report", "merge attack/audit JSONs into a summary");
  report->add_option("input", report_dir, "directory holding report files")->required();
  add_common(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cli::kExitUsage;
  }

  cli::CommandOptions opts;
  opts.workers = workers;
  opts.dry_run = dry_run;
  if (!out.empty()) opts.out = out;
  opts.command_line = JoinArgs(argc, argv);

  try {
    if (report->parsed()) return cli::CmdReport(report_dir, opts);
    const cli::ExperimentConfig cfg = cli::LoadConfig(config_path);
    for (const auto& [name, sub] : commands) {
      if (!sub->parsed()) continue;
      if (name == "train") return cli::CmdTrain(cfg, opts);
      if (name == "synthesize") return cli::CmdSynthesize(cfg, opts);
      if (name == "attack") return cli::CmdAttack(cfg, opts);
      return cli::CmdAudit(cfg, opts);
    }
  } catch (const Error& e) {
    std::cerr << "error [" << ToString(e.code()) << "]: " << e.what() << '\n';
    return cli::ExitCodeFor(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kExitRuntime;
  }
  return cli::kExitUsage;
}
