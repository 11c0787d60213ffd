#include "lve/parfactor.hpp"

#include <algorithm>
#include <sstream>

namespace lve {

std::vector<ArgSpace> argSpacesFor(const std::vector<ParfactorArg>& args,
                                   const ConstraintTree& constraint) {
  std::vector<LogVar> free = freeLogvars(args);
  std::vector<ArgSpace> spaces;
  spaces.reserve(args.size());
  for (const auto& arg : args) {
    int k = static_cast<int>(arg.predicate()->rangeSize());
    if (!arg.isCounting()) {
      spaces.push_back(ArgSpace::atom(k));
      continue;
    }
    auto n = constraint.conditionalCount({arg.counting().countedLogvar()}, free);
    if (!n)
      throw StructuralError("counted logvar '" +
                            arg.counting().countedLogvar().name() +
                            "' is not count-normalized w.r.t. the free "
                            "logvars (COUNT-NORMALIZE first)");
    spaces.push_back(ArgSpace::counting(k, static_cast<int>(*n)));
  }
  return spaces;
}

Parfactor::Parfactor(std::vector<ParfactorArg> args, Potential potential,
                     ConstraintTree constraint)
    : args_(std::move(args)),
      potential_(std::move(potential)),
      constraint_(std::move(constraint)),
      freeVars_(freeLogvars(args_)),
      countedVars_(countedLogvars(args_)) {}

ParfactorPtr Parfactor::make(std::vector<ParfactorArg> args,
                             Potential potential, ConstraintTree constraint) {
  if (constraint.isEmpty())
    throw StructuralError("parfactor over an empty constraint");

  // Counted logvars are bound by their formula; they may not occur free
  // anywhere and no two formulas may share one.
  std::vector<LogVar> counted = countedLogvars(args);
  for (std::size_t i = 0; i < counted.size(); ++i)
    for (std::size_t j = i + 1; j < counted.size(); ++j)
      if (counted[i] == counted[j])
        throw StructuralError("two counting formulas share a counted logvar");
  std::vector<LogVar> free = freeLogvars(args);
  for (const auto& c : counted)
    if (std::find(free.begin(), free.end(), c) != free.end())
      throw StructuralError("counted logvar '" + c.name() +
                            "' also occurs free");

  // The constraint's columns are exactly the argument logvars.
  std::vector<LogVar> expected = free;
  expected.insert(expected.end(), counted.begin(), counted.end());
  if (expected.size() != constraint.logvars().size())
    throw StructuralError("constraint columns do not match argument logvars");
  for (const auto& v : expected)
    if (!constraint.hasLogvar(v))
      throw StructuralError("constraint misses logvar '" + v.name() + "'");

  std::vector<ArgSpace> spaces = argSpacesFor(args, constraint);
  if (spaces.size() != potential.spaces().size())
    throw StructuralError("potential arity does not match arguments");
  for (std::size_t i = 0; i < spaces.size(); ++i)
    if (!(spaces[i] == potential.spaces()[i]))
      throw StructuralError("potential space mismatch at argument " +
                            std::to_string(i));

  return ParfactorPtr(new Parfactor(std::move(args), std::move(potential),
                                    std::move(constraint)));
}

ParfactorPtr Parfactor::make(
    std::vector<ParfactorArg> args,
    const std::function<double(const std::vector<int>&)>& fn, NumericMode mode,
    ConstraintTree constraint) {
  std::vector<ArgSpace> spaces = argSpacesFor(args, constraint);
  Potential p = Potential::build(std::move(spaces), fn, mode);
  return make(std::move(args), std::move(p), std::move(constraint));
}

std::string Parfactor::toString() const {
  std::ostringstream os;
  os << "phi(";
  for (std::size_t i = 0; i < args_.size(); ++i) {
    if (i) os << ", ";
    os << args_[i].toString();
  }
  os << ") | " << constraint_.cardinality() << " tuples, "
     << potential_.size() << " rows";
  return os.str();
}

namespace {

// Rewrites one atom so its argument positions are pairwise-distinct
// logvars, extending the constraint as it goes.
Atom linearizeAtom(const Atom& atom, std::vector<LogVar>& usedHere,
                   ConstraintTree& constraint, bool& changed) {
  std::vector<Term> terms;
  terms.reserve(atom.args().size());
  for (std::size_t p = 0; p < atom.args().size(); ++p) {
    const Term& t = atom.args()[p];
    const DomainPtr& slot = atom.predicate()->argDomains()[p];
    if (!isVar(t)) {
      LogVar fresh = LogVar::fresh(slot->name() + "_k", slot);
      constraint = constraint.cartesian(
          ConstraintTree::product({fresh}, {{asConst(t)}}));
      terms.emplace_back(fresh);
      changed = true;
      continue;
    }
    const LogVar& v = asVar(t);
    if (std::find(usedHere.begin(), usedHere.end(), v) == usedHere.end()) {
      usedHere.push_back(v);
      terms.emplace_back(v);
      continue;
    }
    LogVar fresh = LogVar::fresh(v.name() + "_d", v.domain());
    constraint = constraint.duplicateColumn(v, fresh);
    usedHere.push_back(fresh);
    terms.emplace_back(fresh);
    changed = true;
  }
  return Atom(atom.predicate(), std::move(terms));
}

}  // namespace

ParfactorPtr linearize(const ParfactorPtr& g) {
  bool changed = false;
  ConstraintTree constraint = g->constraint();
  std::vector<ParfactorArg> args;
  args.reserve(g->args().size());
  for (const auto& arg : g->args()) {
    std::vector<LogVar> usedHere;
    Atom atom = linearizeAtom(arg.atom(), usedHere, constraint, changed);
    if (arg.isCounting())
      args.emplace_back(CountingFormula(atom, arg.counting().countedLogvar()));
    else
      args.emplace_back(std::move(atom));
  }
  if (!changed) return g;
  return Parfactor::make(std::move(args), g->potential(),
                         std::move(constraint));
}

Coverage coverageOf(const Parfactor& g, std::size_t argIndex) {
  return coverageOfArg(g.args()[argIndex], g.constraint());
}

Coverage coverageOfArg(const ParfactorArg& arg, const ConstraintTree& c) {
  const Atom& atom = arg.atom();
  ConstraintTree rel = c;
  std::vector<LogVar> posVars;
  posVars.reserve(atom.args().size());
  std::vector<LogVar> usedHere;
  for (std::size_t p = 0; p < atom.args().size(); ++p) {
    const Term& t = atom.args()[p];
    const DomainPtr& slot = atom.predicate()->argDomains()[p];
    if (!isVar(t)) {
      LogVar fresh = LogVar::fresh("_pos", slot);
      rel = rel.cartesian(ConstraintTree::product({fresh}, {{asConst(t)}}));
      posVars.push_back(fresh);
      continue;
    }
    const LogVar& v = asVar(t);
    if (std::find(usedHere.begin(), usedHere.end(), v) == usedHere.end()) {
      usedHere.push_back(v);
      posVars.push_back(v);
      continue;
    }
    LogVar fresh = LogVar::fresh("_pos", slot);
    rel = rel.duplicateColumn(v, fresh);
    posVars.push_back(fresh);
  }
  return Coverage{atom.predicate(), posVars, rel.project(posVars)};
}

bool Coverage::sameAs(const Coverage& other) const {
  if (pred != other.pred) return false;
  return relation.sameRelation(other.relation, positionVars,
                               other.positionVars);
}

bool Coverage::subsetOf(const Coverage& other) const {
  if (pred != other.pred) return false;
  return relation.subsetOf(other.relation, positionVars, other.positionVars);
}

bool Coverage::overlaps(const Coverage& other) const {
  if (pred != other.pred) return false;
  return relation.overlaps(other.relation, positionVars, other.positionVars);
}

bool Coverage::containsGround(const std::vector<int>& constants) const {
  return relation.contains(constants);
}

DomainPtr Model::findDomain(const std::string& name) const {
  for (const auto& d : domains)
    if (d->name() == name) return d;
  return nullptr;
}

PredicatePtr Model::findPredicate(const std::string& name) const {
  for (const auto& p : predicates)
    if (p->name() == name) return p;
  return nullptr;
}

}  // namespace lve
