#pragma once

// Text formats for MDPs, policies and tables.
//
// MDP file (whitespace separated, '#' starts a comment):
//
//   mdp <n_states> <n_actions> <discount>
//   init <p_0> ... <p_{n_states-1}>          optional, default: point mass on state 0
//   terminal <s> <s> ...                      optional, may repeat
//   <s> <a> <reward> <next>:<prob> ...        exactly one record per (s, a)
//
// Policy file:
//
//   policy <n_states> <n_actions>
//   <p(0|s)> ... <p(n_actions-1|s)>           one line per state, in order
//
// Table CSV: header "state,a0,a1,...", then one row per state.

#include <array>
#include <charconv>
#include <cstddef>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qoracle/errors.hpp"
#include "qoracle/mdp.hpp"
#include "qoracle/table.hpp"

namespace qoracle {

/// Shortest representation that round-trips; identical bytes for identical doubles.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  (void)ec;
  return std::string(buf.data(), end);
}

namespace detail {

inline std::string strip_comment(const std::string& line) {
  const auto hash = line.find('#');
  return hash == std::string::npos ? line : line.substr(0, hash);
}

inline double parse_double(std::string_view tok, std::size_t line, const char* field) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError("expected a number for " + std::string(field) + ", got '" + std::string(tok) + "'", line, field);
  return v;
}

inline std::size_t parse_index(std::string_view tok, std::size_t line, const char* field) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError("expected a nonnegative integer for " + std::string(field) + ", got '" + std::string(tok) + "'",
                     line, field);
  return v;
}

inline std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

}  // namespace detail

inline TabularMdp read_mdp(std::istream& in) {
  std::size_t n_states = 0, n_actions = 0;
  double discount = 0.0;
  bool have_header = false;
  std::vector<double> init;
  std::vector<bool> terminal;
  std::vector<std::vector<Successor>> kernel;
  std::vector<bool> seen;
  Table rewards;

  std::string raw;
  for (std::size_t line_no = 1; std::getline(in, raw); ++line_no) {
    const auto tok = detail::tokenize(detail::strip_comment(raw));
    if (tok.empty()) continue;
    if (tok[0] == "mdp") {
      if (have_header) throw ParseError("duplicate header", line_no, "mdp");
      if (tok.size() != 4) throw ParseError("header needs n_states n_actions discount", line_no, "mdp");
      n_states = detail::parse_index(tok[1], line_no, "n_states");
      n_actions = detail::parse_index(tok[2], line_no, "n_actions");
      discount = detail::parse_double(tok[3], line_no, "discount");
      if (n_states == 0 || n_actions == 0) throw ParseError("empty state or action space", line_no, "mdp");
      have_header = true;
      kernel.assign(n_states * n_actions, {});
      seen.assign(n_states * n_actions, false);
      terminal.assign(n_states, false);
      rewards = Table(n_states, n_actions);
      continue;
    }
    if (!have_header) throw ParseError("first record must be the 'mdp' header", line_no, tok[0]);
    if (tok[0] == "init") {
      if (tok.size() != n_states + 1) throw ParseError("init needs one probability per state", line_no, "init");
      init.clear();
      for (std::size_t i = 1; i < tok.size(); ++i) init.push_back(detail::parse_double(tok[i], line_no, "init"));
      continue;
    }
    if (tok[0] == "terminal") {
      for (std::size_t i = 1; i < tok.size(); ++i) {
        const auto s = detail::parse_index(tok[i], line_no, "terminal");
        if (s >= n_states) throw ParseError("terminal state out of range", line_no, "terminal");
        terminal[s] = true;
      }
      continue;
    }
    if (tok.size() < 4) throw ParseError("record needs state action reward and successors", line_no, "record");
    const auto s = detail::parse_index(tok[0], line_no, "state");
    const auto a = detail::parse_index(tok[1], line_no, "action");
    if (s >= n_states || a >= n_actions) throw ParseError("state or action out of range", line_no, "record");
    const std::size_t i = s * n_actions + a;
    if (seen[i]) throw ParseError("duplicate record for (s,a)", line_no, "record");
    seen[i] = true;
    rewards(s, a) = detail::parse_double(tok[2], line_no, "reward");
    for (std::size_t k = 3; k < tok.size(); ++k) {
      const auto colon = tok[k].find(':');
      if (colon == std::string::npos) throw ParseError("successor must be next:prob", line_no, "successor");
      const std::string_view view(tok[k]);
      const auto next = detail::parse_index(view.substr(0, colon), line_no, "successor");
      const auto prob = detail::parse_double(view.substr(colon + 1), line_no, "probability");
      if (next >= n_states) throw ParseError("successor state out of range", line_no, "successor");
      kernel[i].push_back({next, prob});
    }
  }
  if (!have_header) throw ParseError("missing 'mdp' header", 0, "mdp");
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (!seen[i])
      throw ParseError("missing record for state " + std::to_string(i / n_actions) + " action " +
                           std::to_string(i % n_actions),
                       0, "record");
  if (init.empty()) {
    init.assign(n_states, 0.0);
    init[0] = 1.0;
  }
  return TabularMdp(n_states, n_actions, discount, kernel, std::move(rewards), std::move(init), std::move(terminal));
}

inline void write_mdp(std::ostream& out, const TabularMdp& mdp) {
  out << "mdp " << mdp.n_states() << ' ' << mdp.n_actions() << ' ' << format_double(mdp.discount()) << '\n';
  out << "init";
  for (double p : mdp.initial_dist()) out << ' ' << format_double(p);
  out << '\n';
  bool any_terminal = false;
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    if (mdp.is_terminal(s)) {
      if (!any_terminal) out << "terminal";
      any_terminal = true;
      out << ' ' << s;
    }
  if (any_terminal) out << '\n';
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      out << s << ' ' << a << ' ' << format_double(mdp.reward(s, a));
      for (const Successor& x : mdp.successors(s, a)) out << ' ' << x.next << ':' << format_double(x.prob);
      out << '\n';
    }
}

inline Policy read_policy(std::istream& in) {
  std::string raw;
  std::size_t line_no = 0;
  std::size_t n_states = 0, n_actions = 0;
  bool have_header = false;
  Policy pi;
  std::size_t next_row = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto tok = detail::tokenize(detail::strip_comment(raw));
    if (tok.empty()) continue;
    if (!have_header) {
      if (tok.size() != 3 || tok[0] != "policy") throw ParseError("expected 'policy n_states n_actions'", line_no, "policy");
      n_states = detail::parse_index(tok[1], line_no, "n_states");
      n_actions = detail::parse_index(tok[2], line_no, "n_actions");
      pi = Policy(n_states, n_actions);
      have_header = true;
      continue;
    }
    if (next_row >= n_states) throw ParseError("more rows than states", line_no, "row");
    if (tok.size() != n_actions) throw ParseError("row needs one probability per action", line_no, "row");
    for (std::size_t a = 0; a < n_actions; ++a) pi(next_row, a) = detail::parse_double(tok[a], line_no, "probability");
    ++next_row;
  }
  if (!have_header) throw ParseError("missing 'policy' header", 0, "policy");
  if (next_row != n_states) throw ParseError("fewer rows than states", line_no, "row");
  pi.validate();
  return pi;
}

inline void write_policy(std::ostream& out, const Policy& pi) {
  out << "policy " << pi.rows() << ' ' << pi.cols() << '\n';
  for (std::size_t s = 0; s < pi.rows(); ++s) {
    for (std::size_t a = 0; a < pi.cols(); ++a) out << (a ? " " : "") << format_double(pi(s, a));
    out << '\n';
  }
}

inline void write_table_csv(std::ostream& out, const Table& t) {
  out << "state";
  for (std::size_t a = 0; a < t.cols(); ++a) out << ",a" << a;
  out << '\n';
  for (std::size_t s = 0; s < t.rows(); ++s) {
    out << s;
    for (double v : t.row(s)) out << ',' << format_double(v);
    out << '\n';
  }
}

inline void write_vector_csv(std::ostream& out, const std::vector<double>& v, const char* column) {
  out << "state," << column << '\n';
  for (std::size_t s = 0; s < v.size(); ++s) out << s << ',' << format_double(v[s]) << '\n';
}

/// Reads a table written by write_table_csv (or a vector written by write_vector_csv).
inline Table read_table_csv(std::istream& in) {
  std::string raw;
  if (!std::getline(in, raw)) throw ParseError("empty table file", 0, "header");
  std::size_t cols = 0;
  for (char c : raw) cols += (c == ',');
  std::vector<double> values;
  std::size_t rows = 0;
  for (std::size_t line_no = 2; std::getline(in, raw); ++line_no) {
    if (raw.empty()) continue;
    std::size_t start = raw.find(',');
    std::size_t got = 0;
    while (start != std::string::npos) {
      const std::size_t end = raw.find(',', start + 1);
      const std::string_view cell(raw.data() + start + 1, (end == std::string::npos ? raw.size() : end) - start - 1);
      values.push_back(detail::parse_double(cell, line_no, "cell"));
      ++got;
      start = end;
    }
    if (got != cols) throw ParseError("row has the wrong number of cells", line_no, "row");
    ++rows;
  }
  Table t(rows, cols);
  std::copy(values.begin(), values.end(), t.values().begin());
  return t;
}

}  // namespace qoracle
