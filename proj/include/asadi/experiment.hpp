#pragma once

#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "asadi/engine.hpp"
#include "asadi/inclusion.hpp"
#include "asadi/mdp.hpp"
#include "asadi/two_timescale.hpp"

namespace asadi {

// --- config pieces ------------------------------------------------------------

struct ScheduleSpec {
  std::string family = "power";  // "power" | "power-log"
  double p = 1.0;
  double q = 0.0;

  Schedule build() const;
  static ScheduleSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct NoiseSpec {
  std::string kind = "zero";  // "zero" | "gaussian" | "bounded-uniform"
  double sigma = 0.0;
  double bound = 0.0;
  double truncate_sigmas = 0.0;

  NoiseModel build() const;
  static NoiseSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct BiasSpec {
  std::string kind = "zero";  // "zero" | "decay"
  double c = 0.0;
  double rate = 1.0;

  BiasModel build() const;
  static BiasSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct FieldSpec {
  std::string type = "neg-identity";  // | "linear" | "neg-sign" | "projection"
  int dimension = 1;
  std::vector<std::vector<double>> matrix;  // linear: f = matrix x + offset
  std::vector<double> offset;
  std::vector<double> lo, hi;  // projection box

  SetValuedField build() const;
  static FieldSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Constant-kernel scheduler declared inline: subsets over {0..K-1} plus a
// row-stochastic matrix over them.
struct SchedulerSpec {
  std::vector<std::vector<int>> subsets;
  std::vector<std::vector<double>> kernel;

  UpdateFamily build_family(int num_components) const;
  TransitionKernel build_kernel(int family_size) const;
  static SchedulerSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct ModelSpec {
  std::string path;  // file-backed when non-empty
  bool random = false;
  int states = 3;
  int actions = 2;
  double beta = 0.8;
  double reward_lo = 0.0;
  double reward_hi = 1.0;
  std::uint64_t seed = 0;
  NoiseSpec reward_noise{.kind = "gaussian", .sigma = 0.5, .truncate_sigmas = 4.0};

  MdpModel build() const;
  static ModelSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// --- the experiment config ----------------------------------------------------

// One fully seeded experiment: (config, seed) determines every output byte.
struct ExperimentConfig {
  std::string kind;  // "single-sa" | "two-timescale" | "mdp-learn" | "di-flow" | "audit"
  std::vector<std::uint64_t> seeds{1};
  long long horizon = 10000;
  long long checkpoint_every = 1000;
  std::string output_dir = "out";
  int threads = 1;

  // single-sa
  FieldSpec field;
  ScheduleSpec schedule;
  std::optional<SchedulerSpec> scheduler;
  NoiseSpec noise;
  BiasSpec bias;
  std::vector<double> x0;
  double box_half_width = 100.0;
  std::vector<long long> kc_start_iterations;
  double kc_window = 1.0;
  std::vector<double> apt_probes;  // probe times on the tau_bar clock
  double apt_window = 1.0;
  double apt_epsilon = 0.5;
  int apt_selections = 8;

  // two-timescale
  FieldSpec slow_field, fast_field;  // linear over z = (x; y)
  ScheduleSpec slow_schedule{.family = "power", .p = 1.0};
  ScheduleSpec fast_schedule{.family = "power", .p = 0.6};
  std::vector<double> y0;
  std::optional<SchedulerSpec> joint_scheduler;  // subsets index z components
  std::vector<std::vector<int>> joint_slow_parts, joint_fast_parts;

  // mdp-learn / audit
  std::optional<ModelSpec> model;
  double epsilon_floor = 0.05;
  bool freeze_policy = false;
  int eta_grid_points = 10;

  // di-flow
  double omega_epsilon = 0.5;
  double flow_dt = 0.01;
  double flow_horizon = 10.0;
  std::string flow_policy = "corner-sweep";  // | "fixed" | "per-step-random"
  int n_selections = 8;
  std::vector<std::vector<double>> probes;
  std::string lyapunov = "";  // "" | "quadratic"

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
  nlohmann::json to_json() const;
  void validate() const;

  std::string config_hash() const;  // fnv1a-64 of the canonical serialization
};

struct RunOutcome {
  int exit_code = 0;
  nlohmann::json summary;
};

// Runs every seed (fanning out over config.threads workers), writes per-seed
// artifacts under output_dir/seed_<seed>/ and a merged summary.json.
RunOutcome run_experiment(const ExperimentConfig& config);

// Assumption audit: per-assumption status in {verified, empirically-supported,
// unverifiable, violated} with evidence. Nonzero exit when something is violated.
RunOutcome audit_experiment(const ExperimentConfig& config);

// Exact oracles for a model + policy, as a JSON document.
nlohmann::json oracle_report(const MdpModel& model, const Policy& policy);

std::string fnv1a_hex(const std::string& bytes);

}  // namespace asadi
