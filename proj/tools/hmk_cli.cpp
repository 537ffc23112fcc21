// Copyright 2026 The HMK Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// hmk: command-line runner for the recovery, classification, regression,
// spectral-dump and gradient-check experiments.

#include "hmk/experiments.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* sub, Args& a) {
  sub->add_option("--config", a.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", a.seed, "Override the config seed");
  sub->add_option("--out", a.out, "Override the output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Harmonizable mixture kernel experiments"};
  app.require_subcommand(1);
  Args args;
  for (const char* name : {"recover", "classify", "regress", "dump-spectral", "gradcheck"}) {
    add_common(app.add_subcommand(name), args);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : hmk::experiments::kConfigError;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    const auto cfg = hmk::experiments::load_config(args.config, name, args.seed, args.out);
    const auto results = hmk::experiments::run_experiment(cfg);
    std::cout << results.dump(2) << '\n';
    if (name == "gradcheck" && !results.value("pass", false)) return hmk::experiments::kNumericalError;
    return hmk::experiments::kOk;
  } catch (const std::exception& e) {
    std::cerr << "hmk " << name << ": " << e.what() << '\n';
    return hmk::experiments::exit_code_for_current_exception();
  }
}
