#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

#include "asadi/experiment.hpp"

using asadi::ExperimentConfig;
using nlohmann::json;

namespace {

ExperimentConfig load_config(const std::string& path, std::uint64_t seed_override,
                             bool has_seed, const std::string& out_override,
                             int threads_override) {
  ExperimentConfig cfg = ExperimentConfig::load(path);
  if (has_seed) cfg.seeds = {seed_override};
  if (!out_override.empty()) cfg.output_dir = out_override;
  if (threads_override > 0) cfg.threads = threads_override;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asynchronous stochastic approximation experiment runner"};
  app.require_subcommand(1);

  std::string config_path, out_dir, model_path, policy_path;
  std::uint64_t seed = 0;
  int threads = 0;

  auto* run = app.add_subcommand("run", "run the experiment described by a config");
  run->add_option("--config", config_path, "config JSON path")->required();
  auto* seed_opt = run->add_option("--seed", seed, "override the seed list");
  run->add_option("--out", out_dir, "override the output directory");
  run->add_option("--threads", threads, "override the worker count");

  auto* audit = app.add_subcommand("audit", "check the standing assumptions");
  audit->add_option("--config", config_path, "config JSON path")->required();
  audit->add_option("--out", out_dir, "override the output directory");

  auto* oracle =
      app.add_subcommand("oracle", "print exact V*, V^pi and Q^pi for a model");
  oracle->add_option("--model", model_path, "mdp model JSON path")->required();
  oracle->add_option("--policy", policy_path,
                     "policy JSON ({\"pi\": [[...]]}); uniform if omitted");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const ExperimentConfig cfg =
          load_config(config_path, seed, !seed_opt->empty(), out_dir, threads);
      const asadi::RunOutcome outcome = asadi::run_experiment(cfg);
      std::cout << outcome.summary.dump(2) << "\n";
      return outcome.exit_code;
    }
    if (audit->parsed()) {
      ExperimentConfig cfg = ExperimentConfig::load(config_path);
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      const asadi::RunOutcome outcome = asadi::audit_experiment(cfg);
      std::cout << outcome.summary.dump(2) << "\n";
      return outcome.exit_code;
    }
    if (oracle->parsed()) {
      const asadi::MdpModel model = asadi::MdpModel::load(model_path);
      asadi::Policy policy = asadi::Policy::uniform(model, 0.0);
      if (!policy_path.empty()) {
        std::ifstream in(policy_path);
        if (!in) throw std::runtime_error("cannot open policy file: " + policy_path);
        json j;
        in >> j;
        const auto rows = j.at("pi").get<std::vector<std::vector<double>>>();
        if (static_cast<int>(rows.size()) != model.num_states)
          throw std::invalid_argument("policy file: wrong number of states");
        for (int s = 0; s < model.num_states; ++s)
          for (int a = 0; a < model.num_actions; ++a)
            policy.pi(s, a) = rows[static_cast<std::size_t>(s)].at(
                static_cast<std::size_t>(a));
        policy.validate(model);
      }
      std::cout << asadi::oracle_report(model, policy).dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
