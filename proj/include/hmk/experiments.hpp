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

#pragma once

// Experiment configuration, the runs behind each CLI subcommand, and the
// manifest written next to every run's outputs.
//
// A config is one JSON document. The file is merged over the built-in
// defaults for its experiment, relative paths resolve against the config
// file's directory, and --seed / --out override "seed" / "output_dir".

#include "hmk/data.hpp"
#include "hmk/optim.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmk::experiments {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& w) : std::runtime_error(w) {}
};

/// A run produced NaN/Inf or otherwise unusable numbers.
class NumericalFailure : public std::runtime_error {
 public:
  explicit NumericalFailure(const std::string& w) : std::runtime_error(w) {}
};

enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kNumericalError = 4 };

struct DataSpec {
  std::string path;
  data::Schema schema;
  data::SplitSpec split;
};

struct RecoverSpec {
  std::string target = "ifbm";  // ifbm | gsm | sm | self
  int grid_points = 60;
  double grid_lo = 0.0, grid_hi = 0.0;  // equal means the target's default range
  double hurst = 0.5;
  int components = 2, freqs = 2;
  SMParams sm_target;
  optim::RecoveryConfig optimizer;
};

struct ClassifySpec {
  DataSpec data;
  optim::HMKInitConfig kernel;
  std::vector<int> inducing_per_component;
  double inducing_spread = 0.3;
  double amplitude_scale = 2.0;  // latent standard deviation relative to the label spread
  int restarts = 1;
  int quadrature_nodes = 20;
  optim::TrainConfig train;
  int grid_resolution = 60;
  double grid_pad = 0.1;  // fraction of the input range added on each side
};

struct RegressSpec {
  DataSpec data;
  optim::HMKInitConfig hmk;
  int hmk_inducing_per_component = 8;
  double hmk_inducing_spread = 0.3;
  int sm_components = 4;
  int sm_inducing = 50;
  int se_inducing = 50;
  double max_freq = 20.0;  // periodogram range for SM initialisation
  int restarts = 1;
  double init_noise = 0.1;
  optim::CollapsedConfig optimizer;
  int grid_points = 500;
};

struct DumpSpec {
  std::string kernel = "hmk";  // se | lsg | hmk | checkpoint
  std::string checkpoint;      // HMK parameters or a sparse GP state
  int resolution = 41;
  double x_lo = -2.0, x_hi = 2.0;
  double freq_lo = -3.0, freq_hi = 3.0;
  int components = 2, freqs = 2;
  double lengthscale = 0.5, variance = 1.0;  // se
  LSGParams lsg;
};

struct GradcheckSpec {
  int points = 5;
  double h_fd = 1e-5;
  int n = 12;
  int components = 2, freqs = 2, inducing_per_component = 3;
};

struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 0;
  std::string output_dir;
  nlohmann::json doc;  // merged document, paths as written

  RecoverSpec recover;
  ClassifySpec classify;
  RegressSpec regress;
  DumpSpec dump;
  GradcheckSpec gradcheck;
};

/// Built-in defaults for one experiment; throws ConfigError on unknown names.
nlohmann::json default_config(const std::string& experiment);

/// Merges `doc` over the defaults of `experiment` and parses it. Relative
/// paths are resolved against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::string& experiment, const std::string& base_dir);

ExperimentConfig load_config(const std::string& path, const std::string& experiment,
                             std::optional<std::uint64_t> seed = std::nullopt,
                             std::optional<std::string> output_dir = std::nullopt);

std::uint64_t fnv1a(const std::string& bytes);

/// FNV-1a of the merged document with the effective seed, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

/// Runs the experiment, writes its files plus results.json and
/// manifest.json into cfg.output_dir and returns the results document.
nlohmann::json run_experiment(const ExperimentConfig& cfg);

nlohmann::json run_recover(const ExperimentConfig& cfg);
nlohmann::json run_classify(const ExperimentConfig& cfg);
nlohmann::json run_regress(const ExperimentConfig& cfg);
nlohmann::json run_dump_spectral(const ExperimentConfig& cfg);
nlohmann::json run_gradcheck(const ExperimentConfig& cfg);

/// Maps the in-flight exception to an exit code; call inside a catch block.
int exit_code_for_current_exception();

/// Writes trace rows as iter, objective, wallclock_ms.
void write_trace(const std::string& path, const optim::Trace& trace);

}  // namespace hmk::experiments
