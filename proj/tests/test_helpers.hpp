#pragma once

#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "lve/ground.hpp"
#include "lve/parfactor.hpp"

namespace lvetest {

using namespace lve;

inline DomainPtr boolDomainNamed(const std::string& name, int n) {
  return makeDomain(name, "c", n);
}

inline std::vector<std::string> boolRange() { return {"true", "false"}; }

/// Builds a parfactor over the given args/constraint with a linear table.
inline ParfactorPtr pf(std::vector<ParfactorArg> args, ConstraintTree c,
                       std::vector<double> table) {
  auto spaces = argSpacesFor(args, c);
  return Parfactor::make(std::move(args),
                         Potential::fromValues(spaces, std::move(table),
                                               NumericMode::Linear),
                         std::move(c));
}

inline ParfactorPtr randomTablePf(std::vector<ParfactorArg> args,
                                  ConstraintTree c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  return Parfactor::make(
      std::move(args),
      [&](const std::vector<int>&) { return 1.0 - dist(rng); },
      NumericMode::Linear, std::move(c));
}

/// Unnormalized ground joint of a parfactor set over a fixed randvar
/// universe (the union of both sides, passed in sorted).
struct JointOracle {
  GroundModel gm;
  std::vector<double> table;  // indexed over gm.randvars in order
};

inline JointOracle jointOf(const std::vector<ParfactorPtr>& pfs) {
  JointOracle j;
  j.gm = groundParfactors(pfs, 26.0);
  j.table = jointEnumerate(j.gm);
  return j;
}

/// Compares unnormalized ground joints of two parfactor sets; randvars of
/// `after` must be a subset of `before`'s (extra ones are summed out of
/// `before`). Returns the max relative error.
inline double jointMaxRelError(const std::vector<ParfactorPtr>& before,
                               const std::vector<ParfactorPtr>& after) {
  GroundModel gmB = groundParfactors(before, 26.0);
  GroundModel gmA = groundParfactors(after, 26.0);
  // Map each randvar of gmA into gmB.
  std::vector<int> keep;
  for (const auto& rv : gmA.randvars) {
    int idx = gmB.indexOfRandvar(rv);
    if (idx < 0) throw StructuralError("after-model mentions a new randvar");
    keep.push_back(idx);
  }
  std::vector<double> marg = marginalJointTable(gmB, keep);
  std::vector<double> joint = jointEnumerate(gmA);
  double maxRel = 0;
  for (std::size_t i = 0; i < joint.size(); ++i) {
    double denom = std::max({std::abs(marg[i]), std::abs(joint[i]), 1e-300});
    maxRel = std::max(maxRel, std::abs(marg[i] - joint[i]) / denom);
  }
  return maxRel;
}

/// Max relative error between two distributions.
inline double distMaxRelError(const std::vector<double>& a,
                              const std::vector<double>& b) {
  double maxRel = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-300});
    maxRel = std::max(maxRel, std::abs(a[i] - b[i]) / denom);
  }
  return maxRel;
}

}  // namespace lvetest
