#pragma once

#include <memory>
#include <string>
#include <vector>

#include "lve/constraint.hpp"
#include "lve/potential.hpp"
#include "lve/types.hpp"

namespace lve {

class Parfactor;
using ParfactorPtr = std::shared_ptr<const Parfactor>;

/// phi(A)|C: an argument sequence, a potential over the arguments' value
/// spaces and a constraint over all logvars of the arguments (counted
/// logvars included). Counted logvars must be count-normalized w.r.t. the
/// free logvars, which pins down each counting argument's histogram space.
class Parfactor {
public:
  static ParfactorPtr make(std::vector<ParfactorArg> args, Potential potential,
                           ConstraintTree constraint);
  /// Builds the potential from fn over the derived argument spaces.
  static ParfactorPtr make(
      std::vector<ParfactorArg> args,
      const std::function<double(const std::vector<int>&)>& fn,
      NumericMode mode, ConstraintTree constraint);

  const std::vector<ParfactorArg>& args() const { return args_; }
  const Potential& potential() const { return potential_; }
  const ConstraintTree& constraint() const { return constraint_; }

  /// Free logvars of the argument list, first-occurrence order.
  const std::vector<LogVar>& freeVars() const { return freeVars_; }
  /// Counted logvars, argument order.
  const std::vector<LogVar>& countedVars() const { return countedVars_; }

  std::uint64_t tableRows() const { return potential_.size(); }

  std::string toString() const;

private:
  Parfactor(std::vector<ParfactorArg> args, Potential potential,
            ConstraintTree constraint);

  std::vector<ParfactorArg> args_;
  Potential potential_;
  ConstraintTree constraint_;
  std::vector<LogVar> freeVars_;
  std::vector<LogVar> countedVars_;
};

/// Argument spaces implied by (args, constraint): predicate ranges for
/// atoms, histogramRange(|range|, conditional count) for counting formulas.
std::vector<ArgSpace> argSpacesFor(const std::vector<ParfactorArg>& args,
                                   const ConstraintTree& constraint);

/// Rewrites the parfactor so every atom has pairwise-distinct logvar
/// arguments: constants become fresh logvars with singleton projections,
/// repeated logvars become fresh logvars tied by equality tuples. The set
/// of groundings is unchanged; already-linear parfactors come back as-is.
ParfactorPtr linearize(const ParfactorPtr& g);

/// The set of randvars covered by one argument, as a relation over one
/// fresh-or-existing logvar per predicate position.
struct Coverage {
  PredicatePtr pred;
  std::vector<LogVar> positionVars;
  ConstraintTree relation;

  bool sameAs(const Coverage& other) const;
  bool subsetOf(const Coverage& other) const;
  bool overlaps(const Coverage& other) const;
  bool containsGround(const std::vector<int>& constants) const;
  std::uint64_t size() const { return relation.cardinality(); }
};

Coverage coverageOf(const Parfactor& g, std::size_t argIndex);
Coverage coverageOfArg(const ParfactorArg& arg, const ConstraintTree& c);

/// phi_E(P(X))|C_E with phi_E(o) = 1 and 0 elsewhere.
struct EvidenceParfactor {
  PredicatePtr pred;
  std::vector<LogVar> positionVars;
  ConstraintTree constraint;
  int observedValue;

  Coverage coverage() const { return {pred, positionVars, constraint}; }
};

/// Declarations plus a parfactor set.
struct Model {
  std::vector<DomainPtr> domains;
  std::vector<PredicatePtr> predicates;
  std::vector<ParfactorPtr> parfactors;

  DomainPtr findDomain(const std::string& name) const;
  PredicatePtr findPredicate(const std::string& name) const;
};

}  // namespace lve
