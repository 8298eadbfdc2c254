#pragma once

// Function approximation behind one interface: an exact table or a small
// fully connected network with hand-written backpropagation. Solvers switch
// between the two through configuration only.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <memory>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qoracle/envs.hpp"
#include "qoracle/errors.hpp"
#include "qoracle/io.hpp"
#include "qoracle/mdp.hpp"
#include "qoracle/table.hpp"

namespace qoracle {

enum class Activation { relu, tanh, softplus };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
  }
  return "?";
}

inline std::optional<Activation> activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "softplus") return Activation::softplus;
  return std::nullopt;
}

/// Fully connected network, hidden layers use `activation`, output is linear.
///
/// All parameters live in one flat vector; layer i stores its weight matrix
/// (out x in, column-major) followed by its bias. Inputs are one column per
/// sample.
class Mlp {
 public:
  Mlp() = default;

  /// Weights and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Mlp(std::vector<std::size_t> sizes, Activation activation, std::uint64_t seed)
      : sizes_(std::move(sizes)), activation_(activation) {
    layout();
    Rng rng(seed);
    for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[i]));
      std::uniform_real_distribution<double> u(-bound, bound);
      const std::size_t count = sizes_[i] * sizes_[i + 1] + sizes_[i + 1];
      for (std::size_t k = 0; k < count; ++k) params_[static_cast<Eigen::Index>(offsets_[i] + k)] = u(rng);
    }
  }

  static Mlp zeros(std::vector<std::size_t> sizes, Activation activation) {
    Mlp m;
    m.sizes_ = std::move(sizes);
    m.activation_ = activation;
    m.layout();
    return m;
  }

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  Activation activation() const { return activation_; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t num_layers() const { return sizes_.size() - 1; }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  /// Pre-activations and activations per layer, filled by forward().
  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;  // input to layer i
    std::vector<Eigen::MatrixXd> pre;     // W_i x + b_i
  };

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd h = x;
    for (std::size_t i = 0; i < num_layers(); ++i) {
      Eigen::MatrixXd z = (weight(i) * h).colwise() + bias(i);
      h = (i + 1 < num_layers()) ? activate(z) : std::move(z);
    }
    return h;
  }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache& cache) const {
    cache.inputs.resize(num_layers());
    cache.pre.resize(num_layers());
    Eigen::MatrixXd h = x;
    for (std::size_t i = 0; i < num_layers(); ++i) {
      cache.inputs[i] = h;
      cache.pre[i] = (weight(i) * h).colwise() + bias(i);
      h = (i + 1 < num_layers()) ? activate(cache.pre[i]) : cache.pre[i];
    }
    return h;
  }

  /// Gradient of sum(d_out .* output) with respect to the flat parameters.
  void backward(const Cache& cache, const Eigen::MatrixXd& d_out, Eigen::VectorXd& grad) const {
    grad.setZero(params_.size());
    Eigen::MatrixXd delta = d_out;
    for (std::size_t i = num_layers(); i-- > 0;) {
      const auto rows = static_cast<Eigen::Index>(sizes_[i + 1]);
      const auto cols = static_cast<Eigen::Index>(sizes_[i]);
      Eigen::Map<Eigen::MatrixXd> gw(grad.data() + offsets_[i], rows, cols);
      Eigen::Map<Eigen::VectorXd> gb(grad.data() + offsets_[i] + sizes_[i] * sizes_[i + 1], rows);
      gw.noalias() = delta * cache.inputs[i].transpose();
      gb = delta.rowwise().sum();
      if (i > 0) delta = (weight(i).transpose() * delta).cwiseProduct(derivative(cache.pre[i - 1]));
    }
  }

  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t i) const {
    return {params_.data() + offsets_[i], static_cast<Eigen::Index>(sizes_[i + 1]),
            static_cast<Eigen::Index>(sizes_[i])};
  }
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t i) const {
    return {params_.data() + offsets_[i] + sizes_[i] * sizes_[i + 1], static_cast<Eigen::Index>(sizes_[i + 1])};
  }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    return a.sizes_ == b.sizes_ && a.activation_ == b.activation_ && a.params_ == b.params_;
  }

 private:
  void layout() {
    if (sizes_.size() < 2) throw ValidationError("mlp needs at least an input and an output layer");
    for (std::size_t s : sizes_)
      if (s == 0) throw ValidationError("mlp layer sizes must be positive");
    offsets_.clear();
    std::size_t total = 0;
    for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
      offsets_.push_back(total);
      total += sizes_[i] * sizes_[i + 1] + sizes_[i + 1];
    }
    params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(total));
  }

  Eigen::MatrixXd activate(const Eigen::MatrixXd& z) const {
    switch (activation_) {
      case Activation::relu: return z.cwiseMax(0.0);
      case Activation::tanh: return z.array().tanh().matrix();
      case Activation::softplus:
        return (z.array().cwiseMax(0.0) + (-z.array().abs()).exp().log1p()).matrix();
    }
    return z;
  }

  Eigen::MatrixXd derivative(const Eigen::MatrixXd& z) const {
    switch (activation_) {
      case Activation::relu: return (z.array() > 0.0).cast<double>().matrix();
      case Activation::tanh: return (1.0 - z.array().tanh().square()).matrix();
      case Activation::softplus: return (1.0 / (1.0 + (-z.array()).exp())).matrix();
    }
    return z;
  }

  std::vector<std::size_t> sizes_;
  Activation activation_ = Activation::softplus;
  std::vector<std::size_t> offsets_;
  Eigen::VectorXd params_;
};

enum class OptimizerKind { sgd, adam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::size_t t = 0;

  OptimizerState() = default;
  OptimizerState(OptimizerKind k, double lr) : kind(k), learning_rate(lr) {
    if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
  }

  void apply(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    ++t;
    if (kind == OptimizerKind::sgd) {
      params.noalias() -= learning_rate * grad;
      return;
    }
    if (m.size() != params.size()) {
      m = Eigen::VectorXd::Zero(params.size());
      v = Eigen::VectorXd::Zero(params.size());
    }
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    params.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + epsilon);
  }
};

/// Per-state input vectors (one column per state) plus the terminal mask.
struct FeatureMap {
  Eigen::MatrixXd columns;
  std::vector<bool> terminal;

  static std::shared_ptr<const FeatureMap> from(const Environment& env) {
    auto fm = std::make_shared<FeatureMap>();
    const std::size_t n = env.features.size();
    const std::size_t dim = n ? env.features.front().size() : 0;
    fm->columns.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(n));
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t d = 0; d < dim; ++d)
        fm->columns(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(s)) = env.features[s][d];
    fm->terminal = env.mdp.terminal_mask();
    return fm;
  }

  Eigen::MatrixXd gather(std::span<const std::size_t> states) const {
    Eigen::MatrixXd x(columns.rows(), static_cast<Eigen::Index>(states.size()));
    for (std::size_t i = 0; i < states.size(); ++i)
      x.col(static_cast<Eigen::Index>(i)) = columns.col(static_cast<Eigen::Index>(states[i]));
    return x;
  }
};

struct FitItem {
  std::size_t state;
  std::size_t action;
  double target;
};

/// Q(s, .) from either an exact table or an MLP over state features.
/// Terminal states evaluate to zero in both backends.
class QFunction {
 public:
  static QFunction tabular(std::size_t n_states, std::size_t n_actions, std::vector<bool> terminal = {}) {
    QFunction qf;
    qf.n_states_ = n_states;
    qf.n_actions_ = n_actions;
    qf.table_ = QTable(n_states, n_actions);
    qf.terminal_ = terminal.empty() ? std::vector<bool>(n_states, false) : std::move(terminal);
    return qf;
  }

  static QFunction mlp(std::shared_ptr<const FeatureMap> features, std::size_t n_actions, Mlp net) {
    if (net.input_dim() != static_cast<std::size_t>(features->columns.rows()))
      throw DimensionError("mlp input size does not match the feature dimension");
    if (net.output_dim() != n_actions) throw DimensionError("mlp output size must equal n_actions");
    QFunction qf;
    qf.n_states_ = static_cast<std::size_t>(features->columns.cols());
    qf.n_actions_ = n_actions;
    qf.terminal_ = features->terminal;
    qf.features_ = std::move(features);
    qf.net_ = std::move(net);
    return qf;
  }

  bool is_tabular() const { return features_ == nullptr; }
  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  bool is_terminal(std::size_t s) const { return terminal_[s]; }

  QTable& table() { return table_; }
  const QTable& table() const { return table_; }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  const FeatureMap& features() const { return *features_; }

  void set(std::size_t s, std::size_t a, double v) {
    if (!is_tabular()) throw UsageError("set is only defined for the tabular backend");
    table_(s, a) = v;
  }

  /// Action values at each listed state: n_actions x states.size().
  Eigen::MatrixXd eval_batch(std::span<const std::size_t> states) const {
    Eigen::MatrixXd out;
    if (is_tabular()) {
      out.resize(static_cast<Eigen::Index>(n_actions_), static_cast<Eigen::Index>(states.size()));
      for (std::size_t i = 0; i < states.size(); ++i)
        for (std::size_t a = 0; a < n_actions_; ++a)
          out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(i)) = table_(states[i], a);
    } else {
      out = net_.forward(features_->gather(states));
    }
    for (std::size_t i = 0; i < states.size(); ++i)
      if (terminal_[states[i]]) out.col(static_cast<Eigen::Index>(i)).setZero();
    return out;
  }

 private:
  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  std::vector<bool> terminal_;
  QTable table_;
  std::shared_ptr<const FeatureMap> features_;
  Mlp net_;
};

inline std::vector<double> q_eval(const QFunction& qf, std::size_t s) {
  if (s >= qf.n_states()) throw IndexError("q_eval: state out of range");
  if (qf.is_tabular()) {
    if (qf.is_terminal(s)) return std::vector<double>(qf.n_actions(), 0.0);
    auto row = qf.table().row(s);
    return {row.begin(), row.end()};
  }
  const std::size_t states[1] = {s};
  const Eigen::MatrixXd out = qf.eval_batch(states);
  return {out.data(), out.data() + out.size()};
}

/// One step on the mean squared error between Q(s)[a] and the targets.
/// Returns the loss before the step. The tabular backend applies
/// Q[s,a] += lr * (target - Q[s,a]) item by item.
inline double fit_step(QFunction& qf, OptimizerState& opt, std::span<const FitItem> batch, std::size_t step_index = 0) {
  if (batch.empty()) throw EmptyInputError("fit_step: empty batch");
  for (const FitItem& it : batch) {
    if (!std::isfinite(it.target)) throw DivergenceError("fit_step: non-finite target", step_index);
    if (it.state >= qf.n_states() || it.action >= qf.n_actions()) throw IndexError("fit_step: index out of range");
  }
  const double n = static_cast<double>(batch.size());
  if (qf.is_tabular()) {
    double loss = 0.0;
    for (const FitItem& it : batch) {
      const double err = it.target - qf.table()(it.state, it.action);
      loss += err * err;
    }
    for (const FitItem& it : batch) {
      if (qf.is_terminal(it.state)) continue;
      double& cell = qf.table()(it.state, it.action);
      cell = (1.0 - opt.learning_rate) * cell + opt.learning_rate * it.target;  // exact at lr = 1
    }
    loss /= n;
    if (!std::isfinite(loss)) throw DivergenceError("fit_step: non-finite loss", step_index);
    return loss;
  }

  std::vector<std::size_t> states(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) states[i] = batch[i].state;
  Mlp::Cache cache;
  const Eigen::MatrixXd out = qf.net().forward(qf.features().gather(states), cache);
  Eigen::MatrixXd d_out = Eigen::MatrixXd::Zero(out.rows(), out.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    const auto row = static_cast<Eigen::Index>(batch[i].action);
    const double err = out(row, col) - batch[i].target;
    loss += err * err;
    d_out(row, col) = 2.0 * err / n;
  }
  loss /= n;
  Eigen::VectorXd grad;
  qf.net().backward(cache, d_out, grad);
  if (!std::isfinite(loss) || !grad.allFinite()) throw DivergenceError("fit_step: non-finite loss or gradient", step_index);
  opt.apply(qf.net().params(), grad);
  return loss;
}

/// Dense Q table over every state of the model.
inline QTable extract_table(const QFunction& qf, const TabularMdp& mdp) {
  if (qf.n_states() != mdp.n_states() || qf.n_actions() != mdp.n_actions())
    throw DimensionError("extract_table: q-function shape does not match the mdp");
  if (qf.is_tabular()) {
    QTable out = qf.table();
    for (std::size_t s = 0; s < mdp.n_states(); ++s)
      if (qf.is_terminal(s))
        for (double& v : out.row(s)) v = 0.0;
    return out;
  }
  std::vector<std::size_t> all(mdp.n_states());
  for (std::size_t s = 0; s < all.size(); ++s) all[s] = s;
  const Eigen::MatrixXd values = qf.eval_batch(all);
  QTable out(mdp.n_states(), mdp.n_actions());
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    for (std::size_t a = 0; a < mdp.n_actions(); ++a)
      out(s, a) = values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(s));
  return out;
}

/// Deep copy for use as a target network.
inline QFunction sync_target(const QFunction& src) { return src; }

/// Stochastic policy pi(.|s) = softmax(mlp(features(s))).
class PolicyNet {
 public:
  PolicyNet() = default;
  PolicyNet(std::shared_ptr<const FeatureMap> features, Mlp net) : features_(std::move(features)), net_(std::move(net)) {
    if (net_.input_dim() != static_cast<std::size_t>(features_->columns.rows()))
      throw DimensionError("policy net input size does not match the feature dimension");
  }

  std::size_t n_actions() const { return net_.output_dim(); }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

  /// n_actions x states.size() probabilities.
  Eigen::MatrixXd probs(std::span<const std::size_t> states) const {
    return softmax_columns(net_.forward(features_->gather(states)));
  }

  /// One step on the mean cross-entropy -sum_a target(a) log pi(a|s). Returns the pre-step loss.
  double fit_step(OptimizerState& opt, std::span<const std::size_t> states, const Eigen::MatrixXd& targets,
                  std::size_t step_index = 0) {
    if (states.empty()) throw EmptyInputError("policy fit_step: empty batch");
    Mlp::Cache cache;
    const Eigen::MatrixXd logits = net_.forward(features_->gather(states), cache);
    const Eigen::MatrixXd p = softmax_columns(logits);
    const double n = static_cast<double>(states.size());
    double loss = 0.0;
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      for (Eigen::Index a = 0; a < p.rows(); ++a)
        if (targets(a, j) > 0.0) loss -= targets(a, j) * std::log(std::max(p(a, j), 1e-12));
    loss /= n;
    const Eigen::MatrixXd d_logits = (p - targets) / n;
    Eigen::VectorXd grad;
    net_.backward(cache, d_logits, grad);
    if (!std::isfinite(loss) || !grad.allFinite()) throw DivergenceError("policy fit_step diverged", step_index);
    opt.apply(net_.params(), grad);
    return loss;
  }

  static Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd p = logits;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      const double mx = p.col(j).maxCoeff();
      p.col(j) = (p.col(j).array() - mx).exp().matrix();
      p.col(j) /= p.col(j).sum();
    }
    return p;
  }

 private:
  std::shared_ptr<const FeatureMap> features_;
  Mlp net_;
};

// Checkpoint format (text):
//   qoracle-mlp 1
//   activation <relu|tanh|softplus>
//   layers <n> <size_0> ... <size_n-1>
//   params <count>
//   <one value per line, layer by layer: weights column-major, then bias>

inline void save_checkpoint(std::ostream& out, const Mlp& net) {
  out << "qoracle-mlp 1\n";
  out << "activation " << to_string(net.activation()) << '\n';
  out << "layers " << net.sizes().size();
  for (std::size_t s : net.sizes()) out << ' ' << s;
  out << '\n';
  out << "params " << net.params().size() << '\n';
  for (Eigen::Index i = 0; i < net.params().size(); ++i) out << format_double(net.params()[i]) << '\n';
}

inline Mlp load_checkpoint(std::istream& in) {
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "qoracle-mlp" || version != 1)
    throw ParseError("not a qoracle-mlp v1 checkpoint", 1, "header");
  std::string key, act_name;
  if (!(in >> key >> act_name) || key != "activation") throw ParseError("expected activation", 2, "activation");
  const auto act = activation_from_string(act_name);
  if (!act) throw ParseError("unknown activation " + act_name, 2, "activation");
  std::size_t n = 0;
  if (!(in >> key >> n) || key != "layers" || n < 2) throw ParseError("expected layers", 3, "layers");
  std::vector<std::size_t> sizes(n);
  for (auto& s : sizes)
    if (!(in >> s)) throw ParseError("truncated layer sizes", 3, "layers");
  Mlp net = Mlp::zeros(sizes, *act);
  Eigen::Index count = 0;
  if (!(in >> key >> count) || key != "params" || count != net.params().size())
    throw ParseError("parameter count does not match the layer sizes", 4, "params");
  for (Eigen::Index i = 0; i < count; ++i) {
    std::string tok;
    if (!(in >> tok)) throw ParseError("truncated parameters", 5 + static_cast<std::size_t>(i), "params");
    net.params()[i] = detail::parse_double(tok, 5 + static_cast<std::size_t>(i), "params");
  }
  return net;
}

}  // namespace qoracle
