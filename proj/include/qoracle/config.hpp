#pragma once

// Experiment configuration files.
//
// Line oriented. Blank lines and lines whose first nonblank character is '#'
// are ignored ('#' elsewhere is data, e.g. maze walls).
//
//   [experiment]            id, iterations, eval_every, seeds, out, adversarial_reward
//   [env]                   kind, state_bins, action_bins, episode_len, discount,
//                           action_repeat, torque_cost, layout (one row per line)
//   [solver]                defaults shared by every sweep entry
//   [sweep <label>]         overrides for one labelled run group, in file order
//
// Every key is `name = value`; list values are whitespace separated.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "qoracle/approx.hpp"
#include "qoracle/envs.hpp"
#include "qoracle/errors.hpp"
#include "qoracle/io.hpp"
#include "qoracle/solvers.hpp"

namespace qoracle {

struct SweepEntry {
  std::string label;
  SolverConfig solver;
};

struct ExperimentConfig {
  std::string id;
  EnvSpec env = EnvSpec::defaults(EnvKind::maze);
  std::vector<SweepEntry> sweep;
  std::size_t n_iterations = 100;
  std::size_t eval_every = 1;
  std::vector<std::uint64_t> seeds{0};
  std::string out_dir = "runs";
  bool adversarial_reward = false;

  /// Solver config of one run: the sweep entry with experiment-wide settings and the seed applied.
  SolverConfig run_config(std::size_t entry, std::uint64_t seed) const {
    SolverConfig cfg = sweep.at(entry).solver;
    cfg.eval_every = eval_every;
    cfg.adversarial_reward = adversarial_reward;
    cfg.seed = seed;
    return cfg;
  }
};

inline const char* to_string(Family f) { return f == Family::vi ? "vi" : "pi"; }
inline const char* to_string(ApproxMode m) { return m == ApproxMode::tabular ? "tabular" : "nn"; }
inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

inline const char* to_string(ExploreMode m) {
  switch (m) {
    case ExploreMode::none: return "none";
    case ExploreMode::eps_greedy: return "eps_greedy";
    case ExploreMode::softmax: return "softmax";
  }
  return "?";
}

namespace detail {

struct ConfigLine {
  std::size_t line = 0;
  std::string key;
  std::string value;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool valid_label(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
           c == '.';
  }) && s != "." && s != "..";
}

inline bool parse_bool(const ConfigLine& l) {
  if (l.value == "true" || l.value == "1" || l.value == "yes") return true;
  if (l.value == "false" || l.value == "0" || l.value == "no") return false;
  throw ParseError("expected true or false for " + l.key + ", got '" + l.value + "'", l.line, l.key);
}

inline double parse_real(const ConfigLine& l) { return parse_double(l.value, l.line, l.key.c_str()); }
inline std::size_t parse_count(const ConfigLine& l) { return parse_index(l.value, l.line, l.key.c_str()); }

inline std::vector<std::size_t> parse_counts(const ConfigLine& l) {
  std::vector<std::size_t> out;
  for (const auto& tok : tokenize(l.value)) out.push_back(parse_index(tok, l.line, l.key.c_str()));
  return out;
}

inline void apply_solver_key(SolverConfig& c, const ConfigLine& l) {
  const std::string& k = l.key;
  auto bad = [&](const char* allowed) {
    return ParseError("unknown value '" + l.value + "' for " + k + " (expected " + allowed + ")", l.line, k);
  };
  if (k == "family") {
    if (l.value == "vi") c.family = Family::vi;
    else if (l.value == "pi") c.family = Family::pi;
    else throw bad("vi|pi");
  } else if (k == "approx") {
    if (l.value == "tabular") c.approx = ApproxMode::tabular;
    else if (l.value == "nn") c.approx = ApproxMode::nn;
    else throw bad("tabular|nn");
  } else if (k == "explore") {
    if (l.value == "none") c.explore = ExploreMode::none;
    else if (l.value == "eps_greedy") c.explore = ExploreMode::eps_greedy;
    else if (l.value == "softmax") c.explore = ExploreMode::softmax;
    else throw bad("none|eps_greedy|softmax");
  } else if (k == "optimizer") {
    if (l.value == "adam") c.optimizer = OptimizerKind::adam;
    else if (l.value == "sgd") c.optimizer = OptimizerKind::sgd;
    else throw bad("adam|sgd");
  } else if (k == "activation") {
    const auto a = activation_from_string(l.value);
    if (!a) throw bad("relu|tanh|softplus");
    c.activation = *a;
  } else if (k == "epsilon") c.epsilon = parse_real(l);
  else if (k == "temperature") c.temperature = parse_real(l);
  else if (k == "kl_coef") c.kl_coef = parse_real(l);
  else if (k == "er_coef") c.er_coef = parse_real(l);
  else if (k == "noise_sigma") c.noise_sigma = parse_real(l);
  else if (k == "double_q") c.double_q = parse_bool(l);
  else if (k == "munchausen_alpha") c.munchausen_alpha = parse_real(l);
  else if (k == "munchausen_clip") c.munchausen_clip = parse_real(l);
  else if (k == "buffer_capacity") c.buffer_capacity = parse_count(l);
  else if (k == "batch_size") c.batch_size = parse_count(l);
  else if (k == "target_sync_period") c.target_sync_period = parse_count(l);
  else if (k == "steps_per_iter") c.steps_per_iter = parse_count(l);
  else if (k == "train_every") c.train_every = parse_count(l);
  else if (k == "learning_starts") c.learning_starts = parse_count(l);
  else if (k == "learning_rate") c.learning_rate = parse_real(l);
  else if (k == "actor_learning_rate") c.actor_learning_rate = parse_real(l);
  else if (k == "hidden") c.hidden = parse_counts(l);
  else throw ParseError("unknown solver key '" + k + "'", l.line, k);
}

inline void apply_env_key(EnvSpec& e, const ConfigLine& l, bool& layout_started) {
  const std::string& k = l.key;
  if (k == "state_bins") e.state_bins = parse_counts(l);
  else if (k == "action_bins") e.action_bins = parse_count(l);
  else if (k == "episode_len") e.episode_len = parse_count(l);
  else if (k == "discount") e.discount = parse_real(l);
  else if (k == "action_repeat") e.action_repeat = parse_count(l);
  else if (k == "torque_cost") e.torque_cost = parse_real(l);
  else if (k == "layout") {
    if (!layout_started) e.maze_layout.clear();
    layout_started = true;
    e.maze_layout.push_back(l.value);
  } else throw ParseError("unknown env key '" + k + "'", l.line, k);
}

}  // namespace detail

/// Parses and validates a configuration. Errors carry the offending line and key.
inline ExperimentConfig read_config(std::istream& in) {
  using detail::ConfigLine;
  enum class Section { none, experiment, env, solver, sweep };
  Section section = Section::none;
  std::vector<ConfigLine> experiment_lines, env_lines, solver_lines;
  struct RawSweep {
    std::string label;
    std::size_t line;
    std::vector<ConfigLine> lines;
  };
  std::vector<RawSweep> sweeps;

  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header", line_no, "section");
      const std::string name = detail::trim(line.substr(1, line.size() - 2));
      if (name == "experiment") section = Section::experiment;
      else if (name == "env") section = Section::env;
      else if (name == "solver") section = Section::solver;
      else if (name.rfind("sweep", 0) == 0) {
        const std::string label = detail::trim(name.substr(5));
        if (!detail::valid_label(label))
          throw ParseError("sweep label '" + label + "' must be nonempty and use only [A-Za-z0-9_.-]", line_no, "label");
        for (const auto& s : sweeps)
          if (s.label == label) throw ParseError("duplicate sweep label '" + label + "'", line_no, "label");
        sweeps.push_back({label, line_no, {}});
        section = Section::sweep;
      } else {
        throw ParseError("unknown section [" + name + "]", line_no, "section");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line_no, "");
    ConfigLine cl{line_no, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1))};
    if (cl.key.empty()) throw ParseError("empty key", line_no, "");
    switch (section) {
      case Section::none: throw ParseError("key '" + cl.key + "' outside of any section", line_no, cl.key);
      case Section::experiment: experiment_lines.push_back(cl); break;
      case Section::env: env_lines.push_back(cl); break;
      case Section::solver: solver_lines.push_back(cl); break;
      case Section::sweep: sweeps.back().lines.push_back(cl); break;
    }
  }

  ExperimentConfig cfg;
  for (const auto& l : experiment_lines) {
    if (l.key == "id") {
      if (!detail::valid_label(l.value)) throw ParseError("id must use only [A-Za-z0-9_.-]", l.line, l.key);
      cfg.id = l.value;
    } else if (l.key == "iterations") cfg.n_iterations = detail::parse_count(l);
    else if (l.key == "eval_every") cfg.eval_every = detail::parse_count(l);
    else if (l.key == "out") cfg.out_dir = l.value;
    else if (l.key == "adversarial_reward") cfg.adversarial_reward = detail::parse_bool(l);
    else if (l.key == "seeds") {
      cfg.seeds.clear();
      for (const auto& tok : detail::tokenize(l.value)) cfg.seeds.push_back(detail::parse_index(tok, l.line, "seeds"));
      if (cfg.seeds.empty()) throw ParseError("seeds needs at least one value", l.line, l.key);
    } else throw ParseError("unknown experiment key '" + l.key + "'", l.line, l.key);
  }
  if (cfg.id.empty()) throw ParseError("[experiment] needs an id", line_no, "id");
  if (cfg.n_iterations == 0) throw ParseError("iterations must be >= 1", line_no, "iterations");
  if (cfg.eval_every == 0) throw ParseError("eval_every must be >= 1", line_no, "eval_every");
  if (cfg.out_dir.empty()) throw ParseError("out must not be empty", line_no, "out");

  // `kind` first so explicit keys override its defaults regardless of order.
  {
    std::optional<ConfigLine> kind;
    for (const auto& l : env_lines)
      if (l.key == "kind") kind = l;
    if (!kind) throw ParseError("[env] needs a kind", env_lines.empty() ? line_no : env_lines.front().line, "kind");
    const auto parsed = env_kind_from_string(kind->value);
    if (!parsed) throw ParseError("unknown env kind '" + kind->value + "'", kind->line, "kind");
    EnvSpec e = EnvSpec::defaults(*parsed);
    bool layout_started = false;
    for (const auto& l : env_lines)
      if (l.key != "kind") detail::apply_env_key(e, l, layout_started);
    try {
      e.validate();
    } catch (const ValidationError& err) {
      throw ParseError(std::string("invalid [env]: ") + err.what(), kind->line, "env");
    }
    cfg.env = e;
  }

  if (sweeps.empty()) throw ParseError("at least one [sweep <label>] section is required", line_no, "sweep");
  SolverConfig base;
  for (const auto& l : solver_lines) detail::apply_solver_key(base, l);
  for (const auto& s : sweeps) {
    SolverConfig c = base;
    for (const auto& l : s.lines) detail::apply_solver_key(c, l);
    c.eval_every = cfg.eval_every;
    c.adversarial_reward = cfg.adversarial_reward;
    try {
      c.validate();
    } catch (const ValidationError& err) {
      throw ParseError("invalid solver settings for sweep '" + s.label + "': " + err.what(), s.line, s.label);
    }
    cfg.sweep.push_back({s.label, c});
  }
  return cfg;
}

inline ExperimentConfig read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  return read_config(in);
}

namespace detail {

inline std::string join_counts(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
  return s;
}

inline void write_solver_keys(std::ostream& out, const SolverConfig& c) {
  out << "family = " << to_string(c.family) << '\n'
      << "approx = " << to_string(c.approx) << '\n'
      << "explore = " << to_string(c.explore) << '\n'
      << "epsilon = " << format_double(c.epsilon) << '\n'
      << "temperature = " << format_double(c.temperature) << '\n'
      << "kl_coef = " << format_double(c.kl_coef) << '\n'
      << "er_coef = " << format_double(c.er_coef) << '\n'
      << "noise_sigma = " << format_double(c.noise_sigma) << '\n'
      << "double_q = " << (c.double_q ? "true" : "false") << '\n'
      << "munchausen_alpha = " << format_double(c.munchausen_alpha) << '\n'
      << "munchausen_clip = " << format_double(c.munchausen_clip) << '\n'
      << "buffer_capacity = " << c.buffer_capacity << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "target_sync_period = " << c.target_sync_period << '\n'
      << "steps_per_iter = " << c.steps_per_iter << '\n'
      << "train_every = " << c.train_every << '\n'
      << "learning_starts = " << c.learning_starts << '\n'
      << "learning_rate = " << format_double(c.learning_rate) << '\n'
      << "optimizer = " << to_string(c.optimizer) << '\n'
      << "actor_learning_rate = " << format_double(c.actor_learning_rate) << '\n'
      << "hidden = " << join_counts(c.hidden) << '\n'
      << "activation = " << to_string(c.activation) << '\n';
}

}  // namespace detail

/// Fully expanded form of a config: every key explicit, one [sweep] per entry.
/// Reading it back yields an equal configuration.
inline void write_config(std::ostream& out, const ExperimentConfig& cfg) {
  out << "[experiment]\n"
      << "id = " << cfg.id << '\n'
      << "iterations = " << cfg.n_iterations << '\n'
      << "eval_every = " << cfg.eval_every << '\n'
      << "seeds =";
  for (auto s : cfg.seeds) out << ' ' << s;
  out << '\n'
      << "out = " << cfg.out_dir << '\n'
      << "adversarial_reward = " << (cfg.adversarial_reward ? "true" : "false") << '\n'
      << "\n[env]\n"
      << "kind = " << to_string(cfg.env.kind) << '\n'
      << "episode_len = " << cfg.env.episode_len << '\n'
      << "discount = " << format_double(cfg.env.discount) << '\n';
  if (cfg.env.kind == EnvKind::maze) {
    for (const auto& row : cfg.env.maze_layout) out << "layout = " << row << '\n';
  } else {
    out << "state_bins = " << detail::join_counts(cfg.env.state_bins) << '\n'
        << "action_bins = " << cfg.env.action_bins << '\n'
        << "action_repeat = " << cfg.env.action_repeat << '\n';
    if (cfg.env.kind == EnvKind::pendulum) out << "torque_cost = " << format_double(cfg.env.torque_cost) << '\n';
  }
  for (const auto& entry : cfg.sweep) {
    out << "\n[sweep " << entry.label << "]\n";
    detail::write_solver_keys(out, entry.solver);
  }
}

}  // namespace qoracle
