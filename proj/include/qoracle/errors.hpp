#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qoracle {

/// Two tables (or a table and an MDP) disagree on shape.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A state or action index is out of range.
struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// A model, policy, layout or configuration violates its invariants.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// An operation that needs at least one element received none.
struct EmptyInputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// The caller used an object in a state where the operation is not allowed.
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Fixed-point iteration hit its cap before reaching the tolerance.
struct ConvergenceError : std::runtime_error {
  ConvergenceError(const std::string& what, double final_residual)
      : std::runtime_error(what), residual(final_residual) {}
  double residual;
};

/// A value or gradient became non-finite.
struct DivergenceError : std::runtime_error {
  DivergenceError(const std::string& what, std::size_t at_step)
      : std::runtime_error(what), step(at_step) {}
  std::size_t step;
};

/// Malformed text input (MDP files, policy files, experiment configs).
struct ParseError : std::runtime_error {
  ParseError(const std::string& what, std::size_t at_line, std::string at_field = {})
      : std::runtime_error(what), line(at_line), field(std::move(at_field)) {}
  std::size_t line;
  std::string field;
};

/// A CSV input lacks a column the caller asked for.
struct MissingColumnError : std::invalid_argument {
  explicit MissingColumnError(const std::string& name)
      : std::invalid_argument("missing column '" + name + "'"), column(name) {}
  std::string column;
};

/// The environment has no 2-D layout to draw a heatmap on.
struct UnsupportedLayoutError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace qoracle
