#pragma once

#include <string>
#include <vector>

#include "lve/parfactor.hpp"

namespace lve {

enum class OpKind {
  Multiply,
  SumOut,
  CountConvert,
  Split,
  Expand,
  CountNormalize,
  Absorb,
  GroundLogvar,
};

const char* opKindName(OpKind kind);

/// One applied model rewrite: the parfactors it consumed, the parfactors it
/// produced, and its cost (the total number of table rows it created).
struct OperatorResult {
  OpKind kind;
  std::vector<ParfactorPtr> removed;
  std::vector<ParfactorPtr> added;
  std::uint64_t costRows = 0;
};

OperatorResult makeResult(OpKind kind, std::vector<ParfactorPtr> removed,
                          std::vector<ParfactorPtr> added);

/// A one-to-one correspondence between free logvars of two parfactors,
/// induced by matching arguments onto each other positionally.
struct Alignment {
  std::vector<std::pair<LogVar, LogVar>> pairs;  // g1 logvar -> g2 logvar
  std::vector<std::pair<std::size_t, std::size_t>> matchedArgs;
};

/// Enumerates the valid alignments between two parfactors, those matching
/// more arguments first (ties resolved lexicographically on the matched
/// argument index lists). The empty alignment, valid whenever both
/// constraints are non-empty, comes last.
std::vector<Alignment> findAlignments(const Parfactor& g1,
                                      const Parfactor& g2);

/// A parfactor without its table: what operator planning works on. Chains
/// of prospective rewrites are shaped and costed without materializing any
/// potential.
struct ParfactorShape {
  std::vector<ParfactorArg> args;
  ConstraintTree constraint;
  std::vector<ArgSpace> spaces;

  std::uint64_t tableRows() const { return tableSize(spaces); }
  std::vector<LogVar> freeVars() const { return freeLogvars(args); }
};

ParfactorShape shapeOf(const Parfactor& g);

std::vector<Alignment> findAlignments(const ParfactorShape& s1,
                                      const ParfactorShape& s2);

/// Lifted multiplication. Arguments matched by the alignment appear once
/// in the product; each side is scaled by 1/r of the other's conditional
/// count of its unaligned logvars. Logvars of g1 are standardized apart
/// internally.
ParfactorPtr multiply(const ParfactorPtr& g1, const ParfactorPtr& g2,
                      const Alignment& theta);

/// The shape multiply would produce, with the same precondition checks but
/// no table.
ParfactorShape multiplyShape(const ParfactorShape& s1,
                             const ParfactorShape& s2,
                             const Alignment& theta);

/// Lifted summing-out of argument `argIndex`. Callers are responsible for
/// the model-level precondition (no other argument in the model covers the
/// summed randvars); the structural preconditions are checked here.
ParfactorPtr sumOut(const ParfactorPtr& g, std::size_t argIndex);

/// Counting conversion on logvar `x`: the unique atom containing x becomes
/// a counting formula over x.
ParfactorPtr countConvert(const ParfactorPtr& g, const LogVar& x);

/// Splitting on overlap with another coverage of the same predicate.
/// Returns one or two parfactors partitioning g; phi is unchanged.
std::vector<ParfactorPtr> split(const ParfactorPtr& g, std::size_t argIndex,
                                const Coverage& other);

/// Expansion of the counting formula at `argIndex` against an overlapping
/// coverage: cells lying entirely inside or outside the overlap keep their
/// formula, mixed cells get a common and an exclusive formula with
/// phi'(l, h_com, h_excl) = phi(l, h_com + h_excl).
std::vector<ParfactorPtr> expand(const ParfactorPtr& g, std::size_t argIndex,
                                 const Coverage& other);

/// Partitions g so that Y is count-normalized w.r.t. Z in every cell.
std::vector<ParfactorPtr> countNormalize(const ParfactorPtr& g,
                                         const std::vector<LogVar>& Y,
                                         const std::vector<LogVar>& Z);

/// Lifted absorption of evidence into the argument at `argIndex`. The
/// argument's randvars must all be covered by the evidence.
ParfactorPtr absorb(const ParfactorPtr& g, std::size_t argIndex,
                    const EvidenceParfactor& e);

/// Grounds a free logvar: one parfactor per value, the logvar's column
/// restricted to a singleton.
std::vector<ParfactorPtr> groundLogvar(const ParfactorPtr& g, const LogVar& x);

/// Repeatedly splits/expands the two parfactors until every cross pair of
/// same-predicate arguments covers identical or disjoint randvar sets.
struct ShatterPairResult {
  std::vector<ParfactorPtr> left;
  std::vector<ParfactorPtr> right;
  std::vector<OperatorResult> steps;
  bool changed = false;
  /// The linearized inputs the split chains start from (same as the inputs
  /// when those were already linear).
  ParfactorPtr linearizedLeft, linearizedRight;
};

ShatterPairResult shatterPair(ParfactorPtr g1, ParfactorPtr g2);

}  // namespace lve
