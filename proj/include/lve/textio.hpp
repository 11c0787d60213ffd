#pragma once

#include <string>
#include <vector>

#include "lve/engine.hpp"
#include "lve/parfactor.hpp"

namespace lve {

/// Parse failure with position information.
struct ParseError : std::runtime_error {
  ParseError(std::size_t line, std::size_t column, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ", col " +
                           std::to_string(column) + ": " + what),
        line(line),
        column(column) {}
  std::size_t line;
  std::size_t column;
};

/// Model text format, line oriented:
///
///   # comment
///   domain person = alice, bob, carl
///   domain idx = x1..x100
///   predicate Smokes(person): true, false
///   predicate Topic(): srl, db, ai
///   parfactor Smokes(X), #Y[Friends(X,Y)] | X in {alice,bob}, Y in all
///     true  (true:1,false:2)  0.5
///     ...
///
/// Identifiers starting with an uppercase letter are logvars, everything
/// else names constants, predicates or domains. A parfactor's constraint is
/// `all`, a comma list of `VAR in {...}` / `VAR in all`, or
/// `tuples (a,b), (c,d)` with columns in first-occurrence order of the
/// logvars. One potential row per line: one value token per argument
/// (histograms as `(value:count,...)`), then the weight.
Model parseModel(const std::string& text);

/// Evidence text: one `Pred(c1,...,cn) = value` per line.
std::vector<Observation> parseEvidence(const std::string& text,
                                       const Model& model);

/// A ground query atom `Pred(c1,...,cn)`.
Query parseQuery(const std::string& text, const Model& model);

/// Canonical printer; parseModel(printModel(m)) prints back identically.
std::string printModel(const Model& model);

std::string printEvidence(const std::vector<Observation>& evidence);

}  // namespace lve
