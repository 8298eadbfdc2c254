#pragma once

// Command line front end:
//
//   qoracle run <config> [--seed N] [--out DIR] [--jobs N]
//   qoracle plot <experiment dir>
//   qoracle oracle <mdp file> <policy file> [--horizon H]
//   qoracle list-scenarios
//
// Exit codes: 0 success, 1 a run diverged or failed, 2 usage or input error.

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qoracle/config.hpp"
#include "qoracle/errors.hpp"
#include "qoracle/experiment.hpp"
#include "qoracle/io.hpp"
#include "qoracle/oracle.hpp"

#ifndef QORACLE_SCENARIO_DIR
#define QORACLE_SCENARIO_DIR "configs"
#endif

namespace qoracle {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRunFailure = 1;
inline constexpr int kExitUsage = 2;

struct ScenarioInfo {
  const char* name;
  const char* file;
  const char* summary;
};

inline const std::vector<ScenarioInfo>& bundled_scenarios() {
  static const std::vector<ScenarioInfo> list{
      {"A", "scenario_a.cfg", "DQL on MountainCar: epsilon 0 vs 0.1, double Q, Munchausen DQL"},
      {"B", "scenario_b.cfg", "VI, KL-VI, entropy-VI and CVI on the maze under Gaussian backup noise"},
      {"C", "scenario_c.cfg", "discrete SAC entropy sweep on Pendulum with adversarial rewards"},
  };
  return list;
}

namespace detail {

inline void print_oracle(std::ostream& out, const TabularMdp& mdp, const Policy& pi, std::size_t horizon) {
  out << "# Q_pi\n";
  write_table_csv(out, calc_q(mdp, pi));
  out << "# visitation, horizon " << horizon << '\n';
  const VisitTable d = calc_visit(mdp, pi, horizon);
  out << "state,freq";
  for (std::size_t a = 0; a < mdp.n_actions(); ++a) out << ",a" << a;
  out << '\n';
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    out << s << ',' << format_double(d.state_freq[s]);
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) out << ',' << format_double((*d.state_action_freq)(s, a));
    out << '\n';
  }
  out << "# return, horizon " << horizon << '\n' << format_double(calc_return(mdp, pi, horizon)) << '\n';
}

}  // namespace detail

inline int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tabular RL solvers with exact oracle diagnostics", "qoracle"};
  app.require_subcommand(1);

  std::string config_path, out_dir, plot_dir, mdp_path, policy_path;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::optional<std::size_t> horizon;

  auto* run_cmd = app.add_subcommand("run", "execute an experiment config");
  run_cmd->add_option("config", config_path, "experiment config file")->required();
  run_cmd->add_option("--seed", seed, "run only this seed");
  run_cmd->add_option("--out", out_dir, "output root (overrides the config)");
  run_cmd->add_option("--jobs", jobs, "parallel runs")->check(CLI::PositiveNumber);

  auto* plot_cmd = app.add_subcommand("plot", "re-render the SVGs of an experiment directory");
  plot_cmd->add_option("dir", plot_dir, "experiment directory (<out>/<id>)")->required();

  auto* oracle_cmd = app.add_subcommand("oracle", "print Q_pi, visitation and return of a policy");
  oracle_cmd->add_option("mdp", mdp_path, "MDP file")->required();
  oracle_cmd->add_option("policy", policy_path, "policy file")->required();
  oracle_cmd->add_option("--horizon", horizon, "visitation/return horizon")->check(CLI::PositiveNumber);

  auto* list_cmd = app.add_subcommand("list-scenarios", "list the bundled scenario configs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*run_cmd) {
      std::ifstream in(config_path);
      if (!in) {
        err << "error: cannot open config file '" << config_path << "'\n";
        return kExitUsage;
      }
      ExperimentConfig cfg = read_config(in);
      if (seed) cfg.seeds = {*seed};
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      RunOptions opts;
      opts.jobs = jobs;
      opts.log = &err;
      const ExperimentResult res = run_experiment(cfg, opts);
      out << "wrote " << res.dir.string() << " (" << res.runs.size() << " runs)\n";
      if (res.any_failed) {
        err << "one or more runs failed\n";
        return kExitRunFailure;
      }
      return kExitOk;
    }
    if (*plot_cmd) {
      if (!std::filesystem::exists(std::filesystem::path(plot_dir) / "experiment.cfg")) {
        err << "error: '" << plot_dir << "' is not an experiment directory\n";
        return kExitUsage;
      }
      render_experiment(plot_dir);
      out << "rendered " << plot_dir << '\n';
      return kExitOk;
    }
    if (*oracle_cmd) {
      std::ifstream min(mdp_path), pin(policy_path);
      if (!min) {
        err << "error: cannot open MDP file '" << mdp_path << "'\n";
        return kExitUsage;
      }
      if (!pin) {
        err << "error: cannot open policy file '" << policy_path << "'\n";
        return kExitUsage;
      }
      const TabularMdp mdp = read_mdp(min);
      const Policy pi = read_policy(pin);
      mdp.check_shape(pi, "oracle");
      detail::print_oracle(out, mdp, pi, horizon.value_or(default_visit_horizon(mdp.discount())));
      return kExitOk;
    }
    if (*list_cmd) {
      for (const auto& s : bundled_scenarios())
        out << s.name << "  " << (std::filesystem::path(QORACLE_SCENARIO_DIR) / s.file).string() << "  " << s.summary
            << '\n';
      return kExitOk;
    }
  } catch (const ParseError& e) {
    err << "error: line " << e.line << (e.field.empty() ? "" : " (" + e.field + ")") << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kExitRunFailure;
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kExitRunFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace qoracle
