#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lve/parfactor.hpp"

namespace lve {

/// Raised when grounding would exceed the configured randvar budget.
struct SizeCapError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A ground atom P(c1,...,cn); constants as domain indices.
struct GroundAtom {
  PredicatePtr pred;
  std::vector<int> consts;

  friend bool operator<(const GroundAtom& a, const GroundAtom& b);
  friend bool operator==(const GroundAtom& a, const GroundAtom& b) {
    return a.pred == b.pred && a.consts == b.consts;
  }
  std::string toString() const;
};

/// A propositional factor: distinct randvars plus a dense row-major table
/// in linear space.
struct GroundFactor {
  std::vector<int> randvars;  // indices into GroundModel::randvars
  std::vector<double> table;
};

struct GroundObservation {
  int randvar;
  int value;
};

/// A propositional factor model with optional evidence, the reference
/// semantics for everything lifted.
struct GroundModel {
  std::vector<GroundAtom> randvars;  // sorted, canonical order
  std::vector<GroundFactor> factors;
  std::vector<GroundObservation> evidence;

  int rangeOf(int randvar) const {
    return static_cast<int>(randvars[randvar].pred->rangeSize());
  }
  int indexOfRandvar(const GroundAtom& a) const;
};

/// Default budget: the total joint state space of the ground randvars may
/// not exceed 2^24; overridable through the LVE_GROUND_CAP environment
/// variable and per call.
double groundCapBits();

/// Grounds a parfactor set: one factor per instantiation of each
/// parfactor's free logvars, counting formulas unrolled over the covered
/// randvars. Potentials are converted to linear space.
GroundModel groundParfactors(const std::vector<ParfactorPtr>& parfactors,
                             double capBits = groundCapBits());

struct Observation {
  PredicatePtr pred;
  std::vector<int> args;
  int value;
};

/// groundParfactors plus evidence attached as observations.
GroundModel groundModel(const Model& model,
                        const std::vector<Observation>& evidence,
                        double capBits = groundCapBits());

/// Classical variable elimination for the marginal of one randvar, with
/// Lemma-2 conditioning for the evidence. Returns a normalized
/// distribution over the randvar's range.
std::vector<double> veMarginal(const GroundModel& gm, const GroundAtom& query);

/// The full unnormalized joint as a dense table over the model's randvars
/// in canonical order (evidence included as indicator factors).
std::vector<double> jointEnumerate(const GroundModel& gm);

/// Unnormalized joint restricted to a subset of randvars: entries of the
/// kept randvars' joint table, all other randvars summed out. `keep` holds
/// indices into gm.randvars.
std::vector<double> marginalJointTable(const GroundModel& gm,
                                       const std::vector<int>& keep);

}  // namespace lve
