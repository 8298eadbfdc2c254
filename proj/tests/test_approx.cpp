#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "qoracle/approx.hpp"
#include "qoracle/envs.hpp"
#include "qoracle/oracle.hpp"
#include "gradient_check.hpp"

using namespace qoracle;
using qoracle::testing::gradient_check;

namespace {

Environment small_maze() {
  EnvSpec spec = EnvSpec::defaults(EnvKind::maze);
  spec.maze_layout = {"S..", ".#.", "..G"};
  return make_environment(spec);
}

}  // namespace

TEST(MlpGradient, MatchesCentralDifferencesForEachActivation) {
  for (Activation act : {Activation::relu, Activation::tanh, Activation::softplus}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      EXPECT_LT(gradient_check(Mlp({2, 8, 2}, act, seed), 100 + seed), 1e-4) << to_string(act);
      EXPECT_LT(gradient_check(Mlp({3, 6, 5, 4}, act, seed), 200 + seed), 1e-4) << to_string(act);
    }
  }
}

TEST(MlpInit, UniformFanInBound) {
  const Mlp net({4, 16, 3}, Activation::relu, 1);
  for (Eigen::Index i = 0; i < net.weight(0).size(); ++i) EXPECT_LE(std::abs(net.weight(0).data()[i]), 0.5);
  for (Eigen::Index i = 0; i < net.weight(1).size(); ++i) EXPECT_LE(std::abs(net.weight(1).data()[i]), 0.25);
  EXPECT_EQ(Mlp({4, 16, 3}, Activation::relu, 1), net);
  EXPECT_FALSE(Mlp({4, 16, 3}, Activation::relu, 2) == net);
}

TEST(QEval, TabularSetIsExact) {
  QFunction qf = QFunction::tabular(4, 3);
  qf.set(2, 1, 0.125);
  const auto row = q_eval(qf, 2);
  EXPECT_EQ(row, (std::vector<double>{0.0, 0.125, 0.0}));
  EXPECT_THROW(q_eval(qf, 4), IndexError);
}

TEST(QEval, ZeroWeightMlpGivesZeros) {
  const Environment env = small_maze();
  const QFunction qf = QFunction::mlp(FeatureMap::from(env), 4, Mlp::zeros({2, 8, 4}, Activation::softplus));
  for (std::size_t s = 0; s < env.mdp.n_states(); ++s)
    for (double v : q_eval(qf, s)) EXPECT_EQ(v, 0.0);
}

TEST(QEval, FreshMlpOnAllStatesIsFiniteAndShaped) {
  const Environment env = make_environment(EnvSpec::defaults(EnvKind::mountaincar));
  const QFunction qf = QFunction::mlp(FeatureMap::from(env), 3, Mlp({2, 64, 64, 3}, Activation::softplus, 3));
  const QTable t = extract_table(qf, env.mdp);
  EXPECT_EQ(t.rows(), env.mdp.n_states());
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_TRUE(t.all_finite());
}

TEST(ExtractTable, TabularCopyAndMlpMatchesQEval) {
  const Environment env = small_maze();
  QFunction tab = QFunction::tabular(env.mdp.n_states(), 4, env.mdp.terminal_mask());
  tab.set(0, 3, -2.0);
  EXPECT_EQ(extract_table(tab, env.mdp), tab.table());

  const QFunction net = QFunction::mlp(FeatureMap::from(env), 4, Mlp({2, 8, 4}, Activation::tanh, 4));
  const QTable t = extract_table(net, env.mdp);
  for (std::size_t s = 0; s < env.mdp.n_states(); ++s) {
    const auto row = q_eval(net, s);
    for (std::size_t a = 0; a < 4; ++a) EXPECT_EQ(t(s, a), row[a]);
  }
  // terminal states evaluate to zero in both backends
  const std::size_t goal = env.mdp.n_states() - 1;
  ASSERT_TRUE(env.mdp.is_terminal(goal));
  for (std::size_t a = 0; a < 4; ++a) EXPECT_EQ(t(goal, a), 0.0);
  EXPECT_TRUE(std::isfinite(optimality_gap(calc_optimal_q(env.mdp), t)));
}

TEST(FitStep, TabularFullStepAssignsTarget) {
  QFunction qf = QFunction::tabular(3, 2);
  qf.set(1, 0, 0.1);
  OptimizerState opt(OptimizerKind::sgd, 1.0);
  const FitItem item{1, 0, 0.3};
  const double loss = fit_step(qf, opt, std::span(&item, 1));
  EXPECT_EQ(qf.table()(1, 0), 0.3);
  EXPECT_DOUBLE_EQ(loss, 0.2 * 0.2);
}

TEST(FitStep, TabularPartialStepIsQLearningIncrement) {
  QFunction qf = QFunction::tabular(2, 2);
  qf.set(0, 1, 1.0);
  OptimizerState opt(OptimizerKind::sgd, 0.25);
  const FitItem item{0, 1, 3.0};
  fit_step(qf, opt, std::span(&item, 1));
  EXPECT_DOUBLE_EQ(qf.table()(0, 1), 1.5);
}

TEST(FitStep, TabularSweepsReproduceValueIterationBitwise) {
  for (EnvKind kind : {EnvKind::maze, EnvKind::mountaincar}) {
    const Environment env = make_environment(EnvSpec::defaults(kind));
    const TabularMdp& mdp = env.mdp;
    QFunction qf = QFunction::tabular(mdp.n_states(), mdp.n_actions(), mdp.terminal_mask());
    OptimizerState opt(OptimizerKind::sgd, 1.0);
    std::vector<FitItem> batch;
    for (std::size_t k = 1; k <= 30; ++k) {
      const QTable target = bellman_optimal_backup(mdp, qf.table());
      batch.clear();
      for (std::size_t s = 0; s < mdp.n_states(); ++s)
        for (std::size_t a = 0; a < mdp.n_actions(); ++a) batch.push_back({s, a, target(s, a)});
      fit_step(qf, opt, batch);
      ASSERT_EQ(qf.table(), calc_optimal_q(mdp, k)) << to_string(kind) << " sweep " << k;
    }
  }
}

TEST(FitStep, MlpMemorizesSmallBatch) {
  const Environment env = small_maze();
  QFunction qf = QFunction::mlp(FeatureMap::from(env), 4, Mlp({2, 64, 64, 4}, Activation::softplus, 5));
  OptimizerState opt(OptimizerKind::adam, 1e-3);
  Rng rng(6);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<FitItem> batch;
  for (std::size_t i = 0; i < 10; ++i) batch.push_back({i % 7, (i * 3) % 4, u(rng)});
  // states 0..6 with distinct actions give 10 distinct cells
  double loss = 0.0;
  for (int step = 0; step < 5000; ++step) loss = fit_step(qf, opt, batch);
  EXPECT_LT(loss, 1e-3);
}

TEST(FitStep, NonFiniteTargetIsDivergence) {
  QFunction qf = QFunction::tabular(2, 2);
  OptimizerState opt(OptimizerKind::sgd, 0.5);
  const FitItem item{0, 0, std::numeric_limits<double>::infinity()};
  try {
    fit_step(qf, opt, std::span(&item, 1), 41);
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.step, 41u);
  }
}

TEST(FitStep, ExplodingMlpIsDivergence) {
  const Environment env = small_maze();
  QFunction qf = QFunction::mlp(FeatureMap::from(env), 4, Mlp({2, 8, 4}, Activation::relu, 7));
  OptimizerState opt(OptimizerKind::sgd, 1e200);
  const FitItem item{0, 0, 1e200};
  EXPECT_THROW(
      for (std::size_t i = 0; i < 10; ++i) fit_step(qf, opt, std::span(&item, 1), i), DivergenceError);
}

TEST(FitStep, EmptyBatchThrows) {
  QFunction qf = QFunction::tabular(2, 2);
  OptimizerState opt(OptimizerKind::sgd, 0.5);
  EXPECT_THROW(fit_step(qf, opt, std::span<const FitItem>()), EmptyInputError);
}

TEST(SyncTarget, CopyIsIndependentOfLaterTraining) {
  const Environment env = small_maze();
  QFunction src = QFunction::mlp(FeatureMap::from(env), 4, Mlp({2, 8, 4}, Activation::softplus, 8));
  const QFunction copy = sync_target(src);
  const QTable at_copy = extract_table(src, env.mdp);
  EXPECT_EQ(extract_table(copy, env.mdp), at_copy);

  const QFunction untouched = sync_target(src);
  EXPECT_EQ(untouched.net(), copy.net());

  OptimizerState opt(OptimizerKind::adam, 1e-2);
  const FitItem item{0, 0, 5.0};
  for (int i = 0; i < 10; ++i) fit_step(src, opt, std::span(&item, 1));
  EXPECT_EQ(extract_table(copy, env.mdp), at_copy);
  EXPECT_NE(extract_table(src, env.mdp), at_copy);
  EXPECT_FALSE(sync_target(src).net() == copy.net());
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const Mlp net({4, 16, 16, 2}, Activation::tanh, 9);
  std::stringstream buf;
  save_checkpoint(buf, net);
  EXPECT_EQ(load_checkpoint(buf), net);
}

TEST(Checkpoint, MalformedInputIsParseError) {
  std::istringstream bad_header("not-a-checkpoint 1\n");
  EXPECT_THROW(load_checkpoint(bad_header), ParseError);
  std::istringstream bad_count("qoracle-mlp 1\nactivation relu\nlayers 2 2 2\nparams 5\n");
  EXPECT_THROW(load_checkpoint(bad_count), ParseError);
  std::istringstream truncated("qoracle-mlp 1\nactivation relu\nlayers 2 1 1\nparams 2\n0.5\n");
  EXPECT_THROW(load_checkpoint(truncated), ParseError);
}

TEST(Determinism, SameSeedSameBatchesSameWeights) {
  const Environment env = small_maze();
  auto train = [&] {
    QFunction qf = QFunction::mlp(FeatureMap::from(env), 4, Mlp({2, 16, 4}, Activation::softplus, 10));
    OptimizerState opt(OptimizerKind::adam, 1e-3);
    Rng rng(11);
    std::uniform_int_distribution<std::size_t> s(0, env.mdp.n_states() - 1), a(0, 3);
    std::normal_distribution<double> t(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
      std::vector<FitItem> batch;
      for (int j = 0; j < 8; ++j) batch.push_back({s(rng), a(rng), t(rng)});
      fit_step(qf, opt, batch);
    }
    return qf.net();
  };
  EXPECT_EQ(train(), train());
}

TEST(PolicyNet, CrossEntropyStepMovesTowardTarget) {
  const Environment env = small_maze();
  PolicyNet actor(FeatureMap::from(env), Mlp({2, 16, 4}, Activation::softplus, 12));
  OptimizerState opt(OptimizerKind::adam, 1e-2);
  const std::vector<std::size_t> states{0, 1, 2};
  Eigen::MatrixXd target = Eigen::MatrixXd::Zero(4, 3);
  target.row(2).setOnes();
  const double first = actor.fit_step(opt, states, target);
  double last = first;
  for (int i = 0; i < 300; ++i) last = actor.fit_step(opt, states, target);
  EXPECT_LT(last, first);
  const Eigen::MatrixXd p = actor.probs(states);
  for (Eigen::Index j = 0; j < 3; ++j) {
    EXPECT_NEAR(p.col(j).sum(), 1.0, 1e-12);
    EXPECT_GT(p(2, j), 0.9);
  }
}
