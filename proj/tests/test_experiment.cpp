#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <string>

#include "qoracle/experiment.hpp"

using namespace qoracle;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qoracle_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig parse(const std::string& text, const fs::path& out) {
  std::istringstream in(text);
  ExperimentConfig cfg = read_config(in);
  cfg.out_dir = out.string();
  return cfg;
}

/// Two tabular Q-learning labels on the maze, three seeds, a few thousand steps each.
const char* kSmallMaze =
    "[experiment]\nid = small\niterations = 6\neval_every = 2\nseeds = 0 1 2\n"
    "[env]\nkind = maze\n"
    "[solver]\nexplore = eps_greedy\nepsilon = 0.1\nsteps_per_iter = 500\nbatch_size = 16\nlearning_rate = 0.5\n"
    "target_sync_period = 1\n"
    "[sweep greedy]\nepsilon = 0\n"
    "[sweep eps]\n";

/// Every CSV and SVG under dir, keyed by relative path.
std::map<std::string, std::string> artifact_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension();
    if (ext != ".csv" && ext != ".svg") continue;
    out[fs::relative(e.path(), dir).generic_string()] = detail::read_text(e.path());
  }
  return out;
}

std::size_t count_files(const fs::path& dir, const std::string& name) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) n += e.path().filename() == name;
  return n;
}

std::size_t nonwhite_cells(const std::string& svg) {
  const std::regex cell("class=\"cell\"[^>]*fill=\"(#[0-9a-f]{6})\"");
  std::size_t n = 0;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), cell); it != std::sregex_iterator(); ++it)
    n += (*it)[1].str() != "#ffffff";
  return n;
}

}  // namespace

TEST(RunExperiment, OneRunDirectoryPerLabelAndSeed) {
  const fs::path out = scratch_dir("layout");
  const ExperimentResult res = run_experiment(parse(kSmallMaze, out));
  EXPECT_FALSE(res.any_failed);
  ASSERT_EQ(res.runs.size(), 6u);
  EXPECT_EQ(res.runs[0].label, "greedy");
  EXPECT_EQ(res.runs[2].seed, 2u);
  EXPECT_EQ(res.runs[3].label, "eps");
  EXPECT_EQ(count_files(res.dir, "metrics.csv"), 6u);
  EXPECT_EQ(count_files(res.dir, "aggregate.csv"), 2u);
  EXPECT_EQ(count_files(res.dir, "gap_heatmap.svg"), 6u);
  EXPECT_EQ(count_files(res.dir, "visit_heatmap.svg"), 6u);
  EXPECT_EQ(count_files(res.dir, "buffer_heatmap.svg"), 6u);
  for (const auto& m : metric_names()) EXPECT_TRUE(fs::exists(res.dir / ("curves_" + m + ".svg"))) << m;
  EXPECT_TRUE(fs::exists(res.dir / "summary.csv"));

  const CsvTable agg = detail::read_csv_file(res.dir / "eps" / "aggregate.csv");
  ASSERT_EQ(agg.rows.size(), 3u);
  EXPECT_EQ(agg.values("n_seeds"), (std::vector<double>{3, 3, 3}));
  EXPECT_EQ(agg.values("env_steps").back(), 3000.0);
  const auto lo = agg.values("gap_min"), mean = agg.values("gap_mean"), hi = agg.values("gap_max");
  for (std::size_t i = 0; i < lo.size(); ++i) {
    EXPECT_LE(lo[i], mean[i]);
    EXPECT_LE(mean[i], hi[i]);
  }
}

TEST(RunExperiment, RerunIsByteIdenticalAcrossJobCounts) {
  const fs::path a = scratch_dir("rerun_a"), b = scratch_dir("rerun_b"), c = scratch_dir("rerun_c");
  run_experiment(parse(kSmallMaze, a));
  run_experiment(parse(kSmallMaze, b));
  run_experiment(parse(kSmallMaze, c), RunOptions{4, nullptr});
  const auto first = artifact_bytes(a);
  ASSERT_GT(first.size(), 30u);
  EXPECT_TRUE(first == artifact_bytes(b));
  EXPECT_TRUE(first == artifact_bytes(c));
}

TEST(RunExperiment, PersistedGapMatchesRecomputation) {
  const fs::path out = scratch_dir("gap");
  const ExperimentConfig cfg = parse(kSmallMaze, out);
  const ExperimentResult res = run_experiment(cfg);
  const Environment env = make_environment(cfg.env);
  const Table q_star = calc_optimal_q(env.mdp);
  for (const auto& rec : res.runs) {
    const fs::path dir = res.dir / rec.label / std::to_string(rec.seed);
    std::ifstream q_in(dir / "q.csv"), gap_in(dir / "gap.csv");
    const Table q = read_table_csv(q_in), gap = read_table_csv(gap_in);
    const double final_gap = detail::read_csv_file(dir / "metrics.csv").values("gap").back();
    EXPECT_NEAR(optimality_gap(q_star, q), final_gap, 1e-12 * std::max(1.0, final_gap));
    double sup = 0.0;
    for (std::size_t s = 0; s < q.rows(); ++s)
      for (std::size_t a = 0; a < q.cols(); ++a) {
        EXPECT_NEAR(gap(s, a), q(s, a) - q_star(s, a), 1e-12);
        sup = std::max(sup, std::abs(gap(s, a)));
      }
    EXPECT_NEAR(sup, final_gap, 1e-12 * std::max(1.0, final_gap));
  }
}

TEST(RunExperiment, PlotRerenderGivesSameBytes) {
  const fs::path out = scratch_dir("plot");
  const ExperimentResult res = run_experiment(parse(kSmallMaze, out));
  std::map<std::string, std::string> before;
  for (const auto& [path, bytes] : artifact_bytes(res.dir))
    if (path.ends_with(".svg")) before[path] = bytes;
  for (const auto& [path, bytes] : before) fs::remove(res.dir / path);
  render_experiment(res.dir);
  for (const auto& [path, bytes] : before) EXPECT_EQ(detail::read_text(res.dir / path), bytes) << path;
}

TEST(RunExperiment, DivergedRunIsRecordedAndOthersContinue) {
  const fs::path out = scratch_dir("diverge");
  const ExperimentResult res = run_experiment(parse(
      "[experiment]\nid = blowup\niterations = 20\nseeds = 0\n"
      "[env]\nkind = maze\n"
      "[solver]\napprox = nn\nhidden = 8\noptimizer = sgd\nexplore = eps_greedy\nsteps_per_iter = 100\n"
      "batch_size = 8\n"
      "[sweep fine]\nlearning_rate = 0.001\n"
      "[sweep huge]\nlearning_rate = 1e6\n",
      out));
  EXPECT_TRUE(res.any_failed);
  EXPECT_FALSE(res.runs[0].artifact.failed);
  EXPECT_TRUE(res.runs[1].artifact.failed);
  const std::string summary = detail::read_text(res.dir / "summary.csv");
  EXPECT_NE(summary.find("\nfine,0,0,"), std::string::npos);
  EXPECT_NE(summary.find("\nhuge,0,1,"), std::string::npos);
}

TEST(ScenarioA, ManifestHasGapTablesPerLabel) {
  // the bundled scenario at a fraction of its length
  ExperimentConfig cfg = read_config_file(std::string(QORACLE_CONFIG_DIR) + "/scenario_a.cfg");
  cfg.out_dir = scratch_dir("scenario_a").string();
  cfg.n_iterations = 2;
  cfg.eval_every = 1;
  cfg.seeds = {0};
  for (auto& e : cfg.sweep) {
    e.solver.steps_per_iter = 300;
    e.solver.learning_starts = 100;
    e.solver.hidden = {16};
  }
  const ExperimentResult res = run_experiment(cfg, RunOptions{4, nullptr});
  for (const auto& e : cfg.sweep) {
    const fs::path dir = res.dir / e.label / "0";
    EXPECT_TRUE(fs::exists(dir / "gap.csv")) << e.label;
    EXPECT_TRUE(fs::exists(dir / "gap_heatmap.svg")) << e.label;
    std::ifstream in(dir / "gap.csv");
    const Table gap = read_table_csv(in);
    EXPECT_EQ(gap.rows(), 1025u);
    EXPECT_TRUE(gap.all_finite()) << e.label;
  }
  EXPECT_TRUE(fs::exists(res.dir / "curves_return.svg"));
}

TEST(ScenarioA, GreedyBufferVisitsFewerCells) {
  ExperimentConfig cfg = read_config_file(std::string(QORACLE_CONFIG_DIR) + "/scenario_a.cfg");
  cfg.out_dir = scratch_dir("scenario_a_visit").string();
  cfg.n_iterations = 10;
  cfg.eval_every = 10;
  cfg.seeds = {0};
  cfg.sweep.resize(2);  // dql_eps0 and dql
  const ExperimentResult res = run_experiment(cfg, RunOptions{2, nullptr});
  const std::size_t greedy = nonwhite_cells(detail::read_text(res.dir / "dql_eps0" / "0" / "buffer_heatmap.svg"));
  const std::size_t eps = nonwhite_cells(detail::read_text(res.dir / "dql" / "0" / "buffer_heatmap.svg"));
  EXPECT_GT(greedy, 0u);
  EXPECT_LT(greedy, eps);
}
