#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lve/types.hpp"

namespace lve {

namespace detail {
struct CtNode;
using CtNodePtr = std::shared_ptr<const CtNode>;
}  // namespace detail

/// A finite relation over an ordered tuple of logvars, stored as an ordered
/// constraint tree: one level per logvar, sibling edges carry disjoint
/// subdomains, and the relation is the union over root-to-leaf paths of the
/// Cartesian product of the edge labels. Trees are kept maximally merged
/// (no node has two edges leading into structurally equal subtrees), with
/// sibling edges ordered by their smallest constant, so equal relations with
/// equal level orders are structurally equal.
///
/// Values are stored as indices into each logvar's domain. Instances are
/// immutable; every operation returns a fresh tree.
class ConstraintTree {
public:
  ConstraintTree() = default;

  /// The empty relation over the given logvars.
  static ConstraintTree empty(std::vector<LogVar> logvars);
  /// Cartesian product of per-logvar value sets (indices into each domain).
  static ConstraintTree product(std::vector<LogVar> logvars,
                                std::vector<std::vector<int>> valueSets);
  /// Full product of the logvars' whole domains.
  static ConstraintTree fullProduct(std::vector<LogVar> logvars);
  /// Relation listing the given tuples (built bottom-up, merged maximally).
  static ConstraintTree fromTuples(std::vector<LogVar> logvars,
                                   const std::vector<std::vector<int>>& tuples);
  /// The nullary relation holding the empty tuple (used by parfactors whose
  /// atoms are all ground).
  static ConstraintTree nullary();

  const std::vector<LogVar>& logvars() const { return logvars_; }
  bool hasLogvar(const LogVar& v) const;
  std::size_t arity() const { return logvars_.size(); }

  bool isEmpty() const { return !root_; }
  std::uint64_t cardinality() const;
  bool contains(const std::vector<int>& tuple) const;

  /// Explicit tuple list in canonical (depth-first) order. Exponential in
  /// general; meant for tests, grounding and small relations.
  std::vector<std::vector<int>> tuples() const;

  // --- relational algebra -------------------------------------------------

  /// pi_vars: result columns are exactly `vars`, in the given order.
  ConstraintTree project(const std::vector<LogVar>& vars) const;
  /// sigma_{var = value}; the column is kept (restricted to the value).
  ConstraintTree selectEq(const LogVar& var, int value) const;
  /// rho: renames columns; each target must have the same domain as its
  /// source and renaming must keep columns distinct.
  ConstraintTree rename(
      const std::vector<std::pair<LogVar, LogVar>>& mapping) const;
  /// Natural join on the logvars shared with `other` (by identity).
  ConstraintTree join(const ConstraintTree& other) const;
  /// Cartesian product; logvar sets must be disjoint.
  ConstraintTree cartesian(const ConstraintTree& other) const;

  /// Splitting on overlap: partitions this relation into the tuples whose
  /// `vars` projection occurs in `other` (first) and those whose does not
  /// (second). `vars[i]` of this relation is matched against `otherVars[i]`.
  /// Either side may be empty.
  std::pair<ConstraintTree, ConstraintTree> splitOnOverlap(
      const ConstraintTree& other, const std::vector<LogVar>& vars,
      const std::vector<LogVar>& otherVars) const;

  /// COUNT_{Y|Z}(t): how many Y-values co-occur with t's Z-value. Returns 1
  /// when Y is empty. `tuple` must belong to the relation.
  std::uint64_t countFor(const std::vector<LogVar>& Y,
                         const std::vector<LogVar>& Z,
                         const std::vector<int>& tuple) const;

  /// The conditional count of Y given Z when all tuples agree on it,
  /// nullopt otherwise. Computed from edge-label cardinalities.
  std::optional<std::uint64_t> conditionalCount(
      const std::vector<LogVar>& Y, const std::vector<LogVar>& Z) const;

  /// GROUP-BY(C, COUNT_{Y|Z}): partition cells keyed by the count, in
  /// ascending key order. Cells keep this relation's column order.
  std::vector<std::pair<std::uint64_t, ConstraintTree>> groupByCount(
      const std::vector<LogVar>& Y, const std::vector<LogVar>& Z) const;

  /// GROUP-BY(C, JOINT-COUNT_{X,{c1,c2}}) for a counted logvar X and a
  /// partition {c1, c2} of this relation (same columns). Keys are pairs
  /// (|X-values in c1|, |X-values in c2|), ascending.
  std::vector<std::pair<std::pair<std::uint64_t, std::uint64_t>, ConstraintTree>>
  groupByJointCount(const LogVar& counted, const ConstraintTree& c1,
                    const ConstraintTree& c2) const;

  /// GROUP-BY(C, pi_X): one cell per value of `var`, keyed by the value,
  /// ascending. Used by GROUND-LOGVAR.
  std::vector<std::pair<int, ConstraintTree>> groupByValue(
      const LogVar& var) const;

  /// Same relation, new level order (a permutation of the logvars).
  ConstraintTree reorder(const std::vector<LogVar>& newOrder) const;

  /// Appends a column `dst` constrained to equal the existing column `src`
  /// (both share a domain). Supports atom linearization.
  ConstraintTree duplicateColumn(const LogVar& src, const LogVar& dst) const;

  /// Extensional equality against `other`, matching this relation's
  /// `vars[i]` with `other`'s `otherVars[i]`.
  bool sameRelation(const ConstraintTree& other,
                    const std::vector<LogVar>& vars,
                    const std::vector<LogVar>& otherVars) const;
  /// Subset test under the same column matching.
  bool subsetOf(const ConstraintTree& other, const std::vector<LogVar>& vars,
                const std::vector<LogVar>& otherVars) const;
  /// Do the two relations share at least one tuple (under the matching)?
  bool overlaps(const ConstraintTree& other, const std::vector<LogVar>& vars,
                const std::vector<LogVar>& otherVars) const;

  /// Structural equality: same level order, identical canonical trees.
  bool structurallyEqual(const ConstraintTree& other) const;

  /// Indented node/edge listing; stable under the canonical ordering.
  std::string dump() const;

private:
  ConstraintTree(std::vector<LogVar> logvars, detail::CtNodePtr root);
  std::size_t levelOf(const LogVar& v) const;

  std::vector<LogVar> logvars_;
  detail::CtNodePtr root_;  // null means the empty relation
};

/// Explicit tuple-set relation: the reference implementation the tree is
/// tested against. Columns are logvars, values domain indices.
class TupleSet {
public:
  TupleSet() = default;
  TupleSet(std::vector<LogVar> logvars, std::vector<std::vector<int>> tuples);

  static TupleSet fromTree(const ConstraintTree& t);

  const std::vector<LogVar>& logvars() const { return logvars_; }
  const std::vector<std::vector<int>>& tuples() const { return tuples_; }
  std::size_t size() const { return tuples_.size(); }

  TupleSet project(const std::vector<LogVar>& vars) const;
  TupleSet selectEq(const LogVar& var, int value) const;
  TupleSet rename(const std::vector<std::pair<LogVar, LogVar>>& mapping) const;
  TupleSet join(const TupleSet& other) const;
  std::pair<TupleSet, TupleSet> splitOnOverlap(
      const TupleSet& other, const std::vector<LogVar>& vars,
      const std::vector<LogVar>& otherVars) const;
  std::uint64_t countFor(const std::vector<LogVar>& Y,
                         const std::vector<LogVar>& Z,
                         const std::vector<int>& tuple) const;
  std::optional<std::uint64_t> conditionalCount(
      const std::vector<LogVar>& Y, const std::vector<LogVar>& Z) const;

  bool sameRelation(const TupleSet& other) const;

private:
  std::size_t levelOf(const LogVar& v) const;
  void normalize();

  std::vector<LogVar> logvars_;
  std::vector<std::vector<int>> tuples_;
};

}  // namespace lve
