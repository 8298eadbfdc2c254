#pragma once

// Runs every (sweep label x seed) of an experiment and writes the artifact tree
//
//   <out>/<id>/experiment.cfg            expanded config snapshot
//   <out>/<id>/summary.csv               one row per run
//   <out>/<id>/curves_<metric>.svg       seed-aggregated curves, one line per label
//   <out>/<id>/<label>/aggregate.csv     mean/min/max of every metric per eval row
//   <out>/<id>/<label>/<seed>/           metrics.csv q.csv gap.csv visit.csv
//                                        [buffer.csv] meta.txt *_heatmap.svg

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "qoracle/config.hpp"
#include "qoracle/envs.hpp"
#include "qoracle/io.hpp"
#include "qoracle/solvers.hpp"
#include "qoracle/svg.hpp"

namespace qoracle {

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"return", "loss", "gap", "policy_gap", "buffer_support"};
  return names;
}

struct RunRecord {
  std::string label;
  std::uint64_t seed = 0;
  RunArtifact artifact;
};

struct ExperimentResult {
  std::filesystem::path dir;
  std::vector<RunRecord> runs;  // label-major, seeds in config order
  bool any_failed = false;
};

struct RunOptions {
  std::size_t jobs = 1;
  std::ostream* log = nullptr;  // progress lines, completion order
};

namespace detail {

inline double metric_value(const MetricRow& r, std::size_t i) {
  switch (i) {
    case 0: return r.ret;
    case 1: return r.loss;
    case 2: return r.gap;
    case 3: return r.policy_gap;
    default: return static_cast<double>(r.buffer_support);
  }
}

inline std::string csv_number(double v) { return std::isnan(v) ? "nan" : format_double(v); }

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + p.string() + "'");
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline CsvTable read_csv_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read '" + p.string() + "'");
  return read_csv(in);
}

inline std::string seed_dir_name(std::uint64_t seed) { return std::to_string(seed); }

/// The experiment's curves use env steps on the x axis when every entry learns from samples.
inline std::string curve_x_column(const ExperimentConfig& cfg) {
  for (const auto& e : cfg.sweep)
    if (e.solver.dp_mode()) return "iteration";
  return "env_steps";
}

}  // namespace detail

inline void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "iteration,env_steps,return,loss,gap,policy_gap,buffer_support\n";
  for (const auto& r : rows)
    out << r.iteration << ',' << r.env_steps << ',' << detail::csv_number(r.ret) << ',' << detail::csv_number(r.loss)
        << ',' << detail::csv_number(r.gap) << ',' << detail::csv_number(r.policy_gap) << ',' << r.buffer_support
        << '\n';
}

/// State marginal in the second column, state-action split after it.
inline void write_visit_csv(std::ostream& out, const VisitTable& v, const char* column) {
  const std::size_t n_actions = v.state_action_freq ? v.state_action_freq->cols() : 0;
  out << "state," << column;
  for (std::size_t a = 0; a < n_actions; ++a) out << ",a" << a;
  out << '\n';
  for (std::size_t s = 0; s < v.state_freq.size(); ++s) {
    out << s << ',' << detail::csv_number(v.state_freq[s]);
    for (std::size_t a = 0; a < n_actions; ++a) out << ',' << detail::csv_number((*v.state_action_freq)(s, a));
    out << '\n';
  }
}

/// Per eval row: mean, min and max of each metric over the seeds that reached that row.
inline void write_aggregate_csv(std::ostream& out, const std::vector<const RunArtifact*>& runs) {
  std::size_t n_rows = 0;
  for (const auto* r : runs) n_rows = std::max(n_rows, r->metrics.size());
  out << "iteration,env_steps,n_seeds";
  for (const auto& m : metric_names()) out << ',' << m << "_mean," << m << "_min," << m << "_max";
  out << '\n';
  const auto& names = metric_names();
  for (std::size_t i = 0; i < n_rows; ++i) {
    const MetricRow* first = nullptr;
    std::size_t n = 0;
    for (const auto* r : runs)
      if (i < r->metrics.size()) {
        if (!first) first = &r->metrics[i];
        ++n;
      }
    out << first->iteration << ',' << first->env_steps << ',' << n;
    for (std::size_t m = 0; m < names.size(); ++m) {
      double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
      std::size_t finite = 0;
      for (const auto* r : runs) {
        if (i >= r->metrics.size()) continue;
        const double v = detail::metric_value(r->metrics[i], m);
        if (!std::isfinite(v)) continue;
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        ++finite;
      }
      if (finite == 0)
        out << ",nan,nan,nan";
      else
        out << ',' << format_double(sum / static_cast<double>(finite)) << ',' << format_double(lo) << ','
            << format_double(hi);
    }
    out << '\n';
  }
}

/// Mean of (Q - Q_*) over the state-action cells present in the replay buffer; NaN without a buffer.
inline double visited_signed_gap(const RunArtifact& art) {
  if (!art.buffer_counts || !art.buffer_counts->state_action_freq) return std::numeric_limits<double>::quiet_NaN();
  const Table& counts = *art.buffer_counts->state_action_freq;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t s = 0; s < counts.rows(); ++s)
    for (std::size_t a = 0; a < counts.cols(); ++a)
      if (counts(s, a) > 0.0) {
        sum += art.gap(s, a);
        ++n;
      }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

inline void write_summary_csv(std::ostream& out, const std::vector<RunRecord>& runs) {
  out << "label,seed,failed,iterations,final_return,final_gap,final_policy_gap,final_buffer_support,"
         "visited_signed_gap\n";
  for (const auto& r : runs) {
    const auto& m = r.artifact.metrics;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out << r.label << ',' << r.seed << ',' << (r.artifact.failed ? 1 : 0) << ',' << (m.empty() ? 0 : m.back().iteration)
        << ',' << detail::csv_number(m.empty() ? nan : m.back().ret) << ','
        << detail::csv_number(m.empty() ? nan : m.back().gap) << ','
        << detail::csv_number(m.empty() ? nan : m.back().policy_gap) << ','
        << (m.empty() ? 0 : m.back().buffer_support) << ',' << detail::csv_number(visited_signed_gap(r.artifact))
        << '\n';
  }
}

/// Per-state reductions drawn by the heatmaps.
inline std::vector<double> state_mean(const Table& t) {
  std::vector<double> out(t.rows(), 0.0);
  for (std::size_t s = 0; s < t.rows(); ++s) {
    double acc = 0.0;
    for (double v : t.row(s)) acc += v;
    out[s] = acc / static_cast<double>(t.cols());
  }
  return out;
}

/// Re-renders every SVG of an experiment directory from its CSV files and config snapshot.
/// Used both right after a run and by `plot`, so both produce the same bytes.
inline void render_experiment(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const ExperimentConfig cfg = read_config_file((dir / "experiment.cfg").string());
  const Environment env = make_environment(cfg.env);

  std::vector<CurveSeries> series;
  for (const auto& entry : cfg.sweep) {
    const fs::path label_dir = dir / entry.label;
    series.push_back({entry.label, detail::read_csv_file(label_dir / "aggregate.csv")});
    if (!env.grid) continue;
    for (auto seed : cfg.seeds) {
      const fs::path run_dir = label_dir / detail::seed_dir_name(seed);
      {
        std::ifstream in(run_dir / "gap.csv");
        if (!in) throw std::runtime_error("cannot read '" + (run_dir / "gap.csv").string() + "'");
        const Table gap = read_table_csv(in);
        detail::write_text(run_dir / "gap_heatmap.svg",
                           render_heatmap(state_mean(gap), env.grid, HeatmapStyle::diverging,
                                          entry.label + " seed " + std::to_string(seed) + ": mean over actions of Q - Q*"));
      }
      const CsvTable visit = detail::read_csv_file(run_dir / "visit.csv");
      if (!visit.rows.empty())
        detail::write_text(run_dir / "visit_heatmap.svg",
                         render_heatmap(visit.values("freq"), env.grid, HeatmapStyle::sequential,
                                        entry.label + " seed " + std::to_string(seed) + ": discounted visitation"));
      if (fs::exists(run_dir / "buffer.csv")) {
        const CsvTable buffer = detail::read_csv_file(run_dir / "buffer.csv");
        detail::write_text(run_dir / "buffer_heatmap.svg",
                           render_heatmap(buffer.values("count"), env.grid, HeatmapStyle::sequential,
                                          entry.label + " seed " + std::to_string(seed) + ": replay buffer counts"));
      }
    }
  }
  const std::string x = detail::curve_x_column(cfg);
  for (const auto& m : metric_names())
    detail::write_text(dir / ("curves_" + m + ".svg"), render_curves(series, m, x));
}

/// Executes all runs (on up to `jobs` threads), writes the artifact tree and renders plots.
/// Results are ordered by label then seed regardless of completion order.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  namespace fs = std::filesystem;
  ExperimentResult result;
  result.dir = fs::path(cfg.out_dir) / cfg.id;
  fs::create_directories(result.dir);
  {
    std::ostringstream snapshot;
    write_config(snapshot, cfg);
    detail::write_text(result.dir / "experiment.cfg", snapshot.str());
  }

  const Environment env = make_environment(cfg.env);
  const EvalContext ctx = EvalContext::for_env(env);

  struct Task {
    std::size_t entry;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (std::size_t e = 0; e < cfg.sweep.size(); ++e)
    for (auto seed : cfg.seeds) tasks.push_back({e, seed});
  result.runs.resize(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());

  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const Task& t = tasks[i];
      try {
        RunRecord rec{cfg.sweep[t.entry].label, t.seed,
                      run(cfg.run_config(t.entry, t.seed), env, cfg.n_iterations, ctx)};
        if (opts.log) {
          std::lock_guard lock(log_mutex);
          const auto& m = rec.artifact.metrics;
          *opts.log << rec.label << " seed " << rec.seed << (rec.artifact.failed ? " FAILED: " + rec.artifact.error : "")
                    << (m.empty() ? "" : " return " + format_double(m.back().ret) + " gap " + format_double(m.back().gap))
                    << " (" << detail::fixed(rec.artifact.wall_seconds, 1) << " s)\n";
          opts.log->flush();
        }
        result.runs[i] = std::move(rec);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(opts.jobs, tasks.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < n_threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (std::size_t e = 0; e < cfg.sweep.size(); ++e) {
    const fs::path label_dir = result.dir / cfg.sweep[e].label;
    std::vector<const RunArtifact*> group;
    for (const auto& rec : result.runs) {
      if (rec.label != cfg.sweep[e].label) continue;
      group.push_back(&rec.artifact);
      result.any_failed |= rec.artifact.failed;
      const RunArtifact& art = rec.artifact;
      const fs::path run_dir = label_dir / detail::seed_dir_name(rec.seed);
      fs::create_directories(run_dir);
      std::ostringstream metrics, q, gap, visit, meta;
      write_metrics_csv(metrics, art.metrics);
      write_table_csv(q, art.q);
      write_table_csv(gap, art.gap);
      write_visit_csv(visit, art.visit, "freq");
      detail::write_text(run_dir / "metrics.csv", metrics.str());
      detail::write_text(run_dir / "q.csv", q.str());
      detail::write_text(run_dir / "gap.csv", gap.str());
      detail::write_text(run_dir / "visit.csv", visit.str());
      if (art.buffer_counts) {
        std::ostringstream buffer;
        write_visit_csv(buffer, *art.buffer_counts, "count");
        detail::write_text(run_dir / "buffer.csv", buffer.str());
      } else {
        fs::remove(run_dir / "buffer.csv");
      }
      meta << "label " << rec.label << "\nseed " << rec.seed << "\nfailed " << (art.failed ? 1 : 0) << "\nerror "
           << art.error << "\nevaluations " << art.metrics.size() << "\nwall_seconds " << detail::fixed(art.wall_seconds, 3)
           << '\n';
      detail::write_text(run_dir / "meta.txt", meta.str());
    }
    std::ostringstream agg;
    write_aggregate_csv(agg, group);
    detail::write_text(label_dir / "aggregate.csv", agg.str());
  }
  std::ostringstream summary;
  write_summary_csv(summary, result.runs);
  detail::write_text(result.dir / "summary.csv", summary.str());
  render_experiment(result.dir);
  return result;
}

}  // namespace qoracle
