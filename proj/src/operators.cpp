#include "lve/operators.hpp"

#include <algorithm>
#include <set>

namespace lve {

const char* opKindName(OpKind kind) {
  switch (kind) {
    case OpKind::Multiply: return "MULTIPLY";
    case OpKind::SumOut: return "SUM-OUT";
    case OpKind::CountConvert: return "COUNT-CONVERT";
    case OpKind::Split: return "SPLIT";
    case OpKind::Expand: return "EXPAND";
    case OpKind::CountNormalize: return "COUNT-NORMALIZE";
    case OpKind::Absorb: return "ABSORB";
    case OpKind::GroundLogvar: return "GROUND-LOGVAR";
  }
  return "?";
}

OperatorResult makeResult(OpKind kind, std::vector<ParfactorPtr> removed,
                          std::vector<ParfactorPtr> added) {
  OperatorResult r;
  r.kind = kind;
  r.removed = std::move(removed);
  r.added = std::move(added);
  for (const auto& p : r.added) r.costRows += p->tableRows();
  return r;
}

namespace {

bool containsVar(const std::vector<LogVar>& vars, const LogVar& v) {
  return std::find(vars.begin(), vars.end(), v) != vars.end();
}

std::vector<LogVar> varsMinus(const std::vector<LogVar>& a,
                              const std::vector<LogVar>& b) {
  std::vector<LogVar> out;
  for (const auto& v : a)
    if (!containsVar(b, v)) out.push_back(v);
  return out;
}

std::vector<LogVar> varsIntersect(const std::vector<LogVar>& a,
                                  const std::vector<LogVar>& b) {
  std::vector<LogVar> out;
  for (const auto& v : a)
    if (containsVar(b, v)) out.push_back(v);
  return out;
}

/// Free logvars of all arguments except the one at `skip`.
std::vector<LogVar> freeVarsExcept(const std::vector<ParfactorArg>& args,
                                   std::size_t skip) {
  std::vector<LogVar> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i == skip) continue;
    for (const auto& v : args[i].logvars())
      if (!containsVar(out, v)) out.push_back(v);
  }
  return out;
}

}  // namespace

// --- alignments --------------------------------------------------------------

namespace {

// Position-wise logvar correspondences induced by matching arg i of g1
// with arg j of g2. Returns false when the pair cannot be matched.
bool inducePairs(const ParfactorArg& a1, const ParfactorArg& a2,
                 std::vector<std::pair<LogVar, LogVar>>& pairs) {
  if (a1.predicate() != a2.predicate()) return false;
  if (a1.isCounting() != a2.isCounting()) return false;
  const auto& t1 = a1.atom().args();
  const auto& t2 = a2.atom().args();
  for (std::size_t p = 0; p < t1.size(); ++p) {
    if (!isVar(t1[p]) || !isVar(t2[p])) {
      if (isVar(t1[p]) != isVar(t2[p])) return false;
      if (asConst(t1[p]) != asConst(t2[p])) return false;
      continue;
    }
    const LogVar& v1 = asVar(t1[p]);
    const LogVar& v2 = asVar(t2[p]);
    bool counted1 = a1.isCounting() && v1 == a1.counting().countedLogvar();
    bool counted2 = a2.isCounting() && v2 == a2.counting().countedLogvar();
    if (counted1 != counted2) return false;
    if (counted1) continue;  // bound positions are not part of the alignment
    for (const auto& [f, t] : pairs) {
      if (f == v1 && !(t == v2)) return false;
      if (!(f == v1) && t == v2) return false;
    }
    bool present = false;
    for (const auto& [f, t] : pairs)
      if (f == v1 && t == v2) present = true;
    if (!present) pairs.emplace_back(v1, v2);
  }
  return true;
}

// Bounded enumeration over precomputed compatible pairs. A matched pair
// must have identical covered randvar sets (implied by the alignment
// condition), which keeps the fan-out per argument tiny in practice.
constexpr std::size_t kMaxMatchings = 4096;

void enumerateMatchings(
    const std::vector<std::vector<std::size_t>>& compatible, std::size_t i,
    std::vector<bool>& used2,
    std::vector<std::pair<std::size_t, std::size_t>>& current,
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>>& out) {
  if (out.size() >= kMaxMatchings) return;
  if (i == compatible.size()) {
    out.push_back(current);
    return;
  }
  enumerateMatchings(compatible, i + 1, used2, current, out);
  for (std::size_t j : compatible[i]) {
    if (used2[j]) continue;
    used2[j] = true;
    current.emplace_back(i, j);
    enumerateMatchings(compatible, i + 1, used2, current, out);
    current.pop_back();
    used2[j] = false;
  }
}

}  // namespace

std::vector<Alignment> findAlignments(const ParfactorShape& g1,
                                      const ParfactorShape& g2) {
  std::vector<std::vector<std::size_t>> compatible(g1.args.size());
  {
    std::vector<Coverage> cov2(g2.args.size());
    for (std::size_t j = 0; j < g2.args.size(); ++j)
      cov2[j] = coverageOfArg(g2.args[j], g2.constraint);
    for (std::size_t i = 0; i < g1.args.size(); ++i) {
      Coverage cov1 = coverageOfArg(g1.args[i], g1.constraint);
      for (std::size_t j = 0; j < g2.args.size(); ++j) {
        if (g1.args[i].predicate() != g2.args[j].predicate()) continue;
        if (g1.args[i].isCounting() != g2.args[j].isCounting()) continue;
        std::vector<std::pair<LogVar, LogVar>> probe;
        if (!inducePairs(g1.args[i], g2.args[j], probe)) continue;
        if (!cov1.sameAs(cov2[j])) continue;
        compatible[i].push_back(j);
      }
    }
  }
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> matchings;
  std::vector<bool> used2(g2.args.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> current;
  enumerateMatchings(compatible, 0, used2, current, matchings);

  std::vector<Alignment> all;
  for (const auto& matching : matchings) {
    std::vector<std::pair<LogVar, LogVar>> pairs;
    bool ok = true;
    for (const auto& [i, j] : matching)
      if (!inducePairs(g1.args[i], g2.args[j], pairs)) {
        ok = false;
        break;
      }
    if (!ok) continue;
    // Injectivity on both sides is enforced by inducePairs; validate the
    // alignment condition rho_theta(pi_X(C1)) = pi_X'(C2).
    std::vector<LogVar> sources, targets;
    for (const auto& [f, t] : pairs) {
      sources.push_back(f);
      targets.push_back(t);
    }
    if (!g1.constraint.sameRelation(g2.constraint, sources, targets))
      continue;
    Alignment a;
    a.pairs = std::move(pairs);
    a.matchedArgs = matching;
    all.push_back(std::move(a));
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const Alignment& a, const Alignment& b) {
                     if (a.matchedArgs.size() != b.matchedArgs.size())
                       return a.matchedArgs.size() > b.matchedArgs.size();
                     return a.matchedArgs < b.matchedArgs;
                   });
  // Alignments with identical variable maps multiply identically; keep the
  // one matching the most arguments.
  std::vector<Alignment> out;
  std::set<std::vector<std::pair<std::uint64_t, std::uint64_t>>> seen;
  for (auto& a : all) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> key;
    for (const auto& [f, t] : a.pairs) key.emplace_back(f.id(), t.id());
    std::sort(key.begin(), key.end());
    if (!seen.insert(key).second) continue;
    out.push_back(std::move(a));
  }
  return out;
}

ParfactorShape shapeOf(const Parfactor& g) {
  return ParfactorShape{g.args(), g.constraint(), g.potential().spaces()};
}

std::vector<Alignment> findAlignments(const Parfactor& g1,
                                      const Parfactor& g2) {
  return findAlignments(shapeOf(g1), shapeOf(g2));
}

// --- multiply ----------------------------------------------------------------

namespace {

Substitution renamingFor(const std::vector<LogVar>& vars,
                         const std::string& suffix,
                         std::vector<std::pair<LogVar, LogVar>>& pairsOut) {
  Substitution s;
  for (const auto& v : vars) {
    LogVar fresh = LogVar::fresh(v.name() + suffix, v.domain());
    s.add(v, fresh);
    pairsOut.emplace_back(v, fresh);
  }
  return s;
}

}  // namespace

namespace {

struct MultiplyPlan {
  ParfactorShape shape;
  std::vector<std::size_t> pos2;  // g2 arg index -> result position
  double e1 = 1, e2 = 1;          // scaling exponents
};

MultiplyPlan planMultiply(const ParfactorShape& g1in,
                          const ParfactorShape& g2, const Alignment& theta) {
  // Standardize the left operand apart so the only shared columns after
  // renaming are the alignment targets.
  std::vector<LogVar> allVars1 = g1in.freeVars();
  for (const auto& v : countedLogvars(g1in.args)) allVars1.push_back(v);
  std::vector<std::pair<LogVar, LogVar>> freshPairs;
  Substitution freshen = renamingFor(allVars1, "'", freshPairs);
  auto renamedVar = [&](const LogVar& v) { return asVar(freshen.at(v)); };

  std::vector<ParfactorArg> args1;
  for (const auto& a : g1in.args) args1.push_back(freshen.apply(a));
  ConstraintTree c1 = g1in.constraint.rename(freshPairs);

  // Apply the alignment: the renamed g1 sources take the g2 target names.
  std::vector<std::pair<LogVar, LogVar>> alignPairs;
  Substitution align;
  for (const auto& [src, dst] : theta.pairs) {
    alignPairs.emplace_back(renamedVar(src), dst);
    align.add(renamedVar(src), dst);
  }
  {  // Def. 4: the aligned projections must agree.
    std::vector<LogVar> sources, targets;
    for (const auto& [f, t] : alignPairs) {
      sources.push_back(f);
      targets.push_back(t);
    }
    if (!c1.sameRelation(g2.constraint, sources, targets))
      throw PreconditionError(
          "MULTIPLY: alignment projections differ (SPLIT first)");
  }
  for (auto& a : args1) a = align.apply(a);
  c1 = c1.rename(alignPairs);

  // Scaling exponents: Y_i, the free logvars outside the alignment, must be
  // count-normalized w.r.t. the aligned logvars X_i.
  std::vector<LogVar> x1, x2;
  for (const auto& [f, t] : theta.pairs) {
    x1.push_back(f);
    x2.push_back(t);
  }
  std::vector<LogVar> y1 = varsMinus(g1in.freeVars(), x1);
  std::vector<LogVar> y2 = varsMinus(g2.freeVars(), x2);
  auto r1 = g1in.constraint.conditionalCount(y1, x1);
  auto r2 = g2.constraint.conditionalCount(y2, x2);
  if (!r1)
    throw PreconditionError(
        "MULTIPLY: unaligned logvars of the left parfactor are not "
        "count-normalized (COUNT-NORMALIZE first)");
  if (!r2)
    throw PreconditionError(
        "MULTIPLY: unaligned logvars of the right parfactor are not "
        "count-normalized (COUNT-NORMALIZE first)");

  ConstraintTree joined = c1.join(g2.constraint);
  if (joined.isEmpty())
    throw PreconditionError("MULTIPLY: joined constraint is empty");

  // Merge arguments covering the same randvars: an argument of g2 whose
  // positions carry, for every tuple of the joined constraint, the same
  // values as a renamed g1 argument denotes the same (counting) randvar
  // group and appears once. Columns used only by dropped arguments are
  // functionally determined by the kept ones and are projected away.
  auto columnsAlwaysEqual = [&](const LogVar& a, const LogVar& b) {
    if (a == b) return true;
    for (const auto& t : joined.project({a, b}).tuples())
      if (t[0] != t[1]) return false;
    return true;
  };
  std::vector<ParfactorArg> resultArgs = args1;
  std::vector<std::size_t> pos2(g2.args.size());
  for (std::size_t j = 0; j < g2.args.size(); ++j) {
    const ParfactorArg& a2 = g2.args[j];
    bool merged = false;
    for (std::size_t i = 0; i < args1.size() && !merged; ++i) {
      const ParfactorArg& a1 = args1[i];
      if (a1.predicate() != a2.predicate()) continue;
      if (a1.isCounting() != a2.isCounting()) continue;
      const auto& t1 = a1.atom().args();
      const auto& t2 = a2.atom().args();
      bool same = true;
      for (std::size_t p = 0; p < t1.size() && same; ++p) {
        bool c1p = a1.isCounting() && isVar(t1[p]) &&
                   asVar(t1[p]) == a1.counting().countedLogvar();
        bool c2p = a2.isCounting() && isVar(t2[p]) &&
                   asVar(t2[p]) == a2.counting().countedLogvar();
        if (c1p != c2p) {
          same = false;
        } else if (c1p) {
          // Counted positions are compared below, jointly.
        } else if (!isVar(t1[p]) || !isVar(t2[p])) {
          same = t1[p] == t2[p];
        } else {
          same = columnsAlwaysEqual(asVar(t1[p]), asVar(t2[p]));
        }
      }
      if (!same) continue;
      if (a1.isCounting()) {
        // The two counted columns must carry identical value sets for
        // every combination of the remaining columns.
        const LogVar& x1c = a1.counting().countedLogvar();
        const LogVar& x2c = a2.counting().countedLogvar();
        std::vector<LogVar> shared = varsMinus(joined.logvars(), {x1c, x2c});
        std::vector<LogVar> vars1c = shared, vars2c = shared;
        vars1c.push_back(x1c);
        vars2c.push_back(x2c);
        if (!joined.sameRelation(joined, vars1c, vars2c)) continue;
      }
      pos2[j] = i;
      merged = true;
    }
    if (!merged) {
      pos2[j] = resultArgs.size();
      resultArgs.push_back(a2);
    }
  }

  std::vector<LogVar> usedVars = freeLogvars(resultArgs);
  for (const auto& v : countedLogvars(resultArgs)) usedVars.push_back(v);
  ConstraintTree resultC = joined.project(usedVars);

  MultiplyPlan plan;
  plan.shape.spaces = argSpacesFor(resultArgs, resultC);
  plan.shape.args = std::move(resultArgs);
  plan.shape.constraint = std::move(resultC);
  plan.pos2 = std::move(pos2);
  plan.e1 = 1.0 / static_cast<double>(*r2);
  plan.e2 = 1.0 / static_cast<double>(*r1);
  return plan;
}

}  // namespace

ParfactorShape multiplyShape(const ParfactorShape& s1,
                             const ParfactorShape& s2,
                             const Alignment& theta) {
  return planMultiply(s1, s2, theta).shape;
}

ParfactorPtr multiply(const ParfactorPtr& g1, const ParfactorPtr& g2,
                      const Alignment& theta) {
  if (g1->potential().mode() != g2->potential().mode())
    throw StructuralError("MULTIPLY: operands in different numeric modes");
  MultiplyPlan plan = planMultiply(shapeOf(*g1), shapeOf(*g2), theta);
  Arith arith{g1->potential().mode()};
  const Potential& p1 = g1->potential();
  const Potential& p2 = g2->potential();

  std::vector<int> v1(p1.spaces().size()), v2(p2.spaces().size());
  Potential product = Potential::build(
      plan.shape.spaces,
      [&](const std::vector<int>& v) {
        for (std::size_t i = 0; i < v1.size(); ++i) v1[i] = v[i];
        for (std::size_t j = 0; j < v2.size(); ++j) v2[j] = v[plan.pos2[j]];
        return arith.mul(arith.pow(p1.lookup(v1), plan.e1),
                         arith.pow(p2.lookup(v2), plan.e2));
      },
      p1.mode());

  return Parfactor::make(plan.shape.args, std::move(product),
                         plan.shape.constraint);
}

// --- sum-out -----------------------------------------------------------------

ParfactorPtr sumOut(const ParfactorPtr& g, std::size_t argIndex) {
  const auto& args = g->args();
  const ParfactorArg& target = args[argIndex];
  std::vector<LogVar> targetFree = target.logvars();
  std::vector<LogVar> othersFree = freeVarsExcept(args, argIndex);

  // Precondition 2: the argument contains every free logvar whose
  // projection is not a singleton.
  for (const auto& v : g->freeVars()) {
    if (containsVar(targetFree, v)) continue;
    if (g->constraint().project({v}).cardinality() != 1)
      throw PreconditionError("SUM-OUT: logvar '" + v.name() +
                              "' is missing from the summed argument "
                              "(COUNT-CONVERT it first)");
  }

  // Precondition 3: the argument's exclusive logvars are count-normalized.
  std::vector<LogVar> xExcl = varsMinus(targetFree, othersFree);
  std::vector<LogVar> xCom = varsIntersect(targetFree, othersFree);
  auto r = g->constraint().conditionalCount(xExcl, xCom);
  if (!r)
    throw PreconditionError(
        "SUM-OUT: exclusive logvars are not count-normalized "
        "(COUNT-NORMALIZE first)");

  std::vector<ParfactorArg> resultArgs;
  for (std::size_t i = 0; i < args.size(); ++i)
    if (i != argIndex) resultArgs.push_back(args[i]);

  std::vector<LogVar> dropped = xExcl;
  if (target.isCounting())
    dropped.push_back(target.counting().countedLogvar());
  ConstraintTree resultC =
      g->constraint().project(varsMinus(g->constraint().logvars(), dropped));

  const Potential& p = g->potential();
  Arith arith = p.arith();
  const ArgSpace& space = p.spaces()[argIndex];
  double exponent = static_cast<double>(*r);

  std::vector<ArgSpace> spaces = argSpacesFor(resultArgs, resultC);
  std::vector<int> full(args.size());
  Potential summed = Potential::build(
      spaces,
      [&](const std::vector<int>& v) {
        for (std::size_t i = 0, k = 0; i < args.size(); ++i)
          if (i != argIndex) full[i] = v[k++];
        double acc = arith.zero();
        for (std::size_t val = 0; val < space.size(); ++val) {
          full[argIndex] = static_cast<int>(val);
          double term = p.lookup(full);
          if (space.isCounting()) {
            term = arith.mode == NumericMode::Log
                       ? term + space.logMulFor(static_cast<int>(val))
                       : term * space.mulFor(static_cast<int>(val));
          }
          acc = arith.add(acc, term);
        }
        return arith.pow(acc, exponent);
      },
      p.mode());

  return Parfactor::make(std::move(resultArgs), std::move(summed),
                         std::move(resultC));
}

// --- count conversion ----------------------------------------------------------

ParfactorPtr countConvert(const ParfactorPtr& g, const LogVar& x) {
  const auto& args = g->args();
  std::size_t target = args.size();
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (!containsVar(args[i].logvars(), x)) continue;
    if (target != args.size())
      throw PreconditionError(
          "COUNT-CONVERT: logvar occurs in more than one argument");
    target = i;
  }
  if (target == args.size())
    throw PreconditionError("COUNT-CONVERT: logvar not free in any argument");
  if (args[target].isCounting())
    throw PreconditionError(
        "COUNT-CONVERT: logvar occurs in a counting formula");

  std::vector<LogVar> rest = varsMinus(g->freeVars(), {x});
  auto n = g->constraint().conditionalCount({x}, rest);
  if (!n)
    throw PreconditionError(
        "COUNT-CONVERT: logvar is not count-normalized (COUNT-NORMALIZE "
        "first)");

  // Existing counted logvars must be independent of x in the constraint.
  for (const auto& xc : g->countedVars()) {
    ConstraintTree pairRel = g->constraint().project({x, xc});
    ConstraintTree prod = g->constraint().project({x}).cartesian(
        g->constraint().project({xc}));
    if (!pairRel.sameRelation(prod, {x, xc}, {x, xc}))
      throw PreconditionError(
          "COUNT-CONVERT: counted logvars are entangled with the converted "
          "logvar");
  }

  std::vector<ParfactorArg> resultArgs = args;
  resultArgs[target] = ParfactorArg(CountingFormula(args[target].atom(), x));

  const Potential& p = g->potential();
  Arith arith = p.arith();
  std::vector<ArgSpace> spaces = argSpacesFor(resultArgs, g->constraint());
  const ArgSpace& hspace = spaces[target];
  std::vector<int> full(args.size());
  Potential converted = Potential::build(
      spaces,
      [&](const std::vector<int>& v) {
        const Histogram& h = hspace.histogramAt(v[target]);
        for (std::size_t i = 0; i < args.size(); ++i) full[i] = v[i];
        double acc = arith.one();
        for (std::size_t val = 0; val < h.counts.size(); ++val) {
          if (h.counts[val] == 0) continue;
          full[target] = static_cast<int>(val);
          acc = arith.mul(acc, arith.pow(p.lookup(full),
                                         static_cast<double>(h.counts[val])));
        }
        return acc;
      },
      p.mode());

  return Parfactor::make(std::move(resultArgs), std::move(converted),
                         g->constraint());
}

// --- split / expand ------------------------------------------------------------

namespace {

std::vector<LogVar> atomPositionVars(const ParfactorArg& arg) {
  std::vector<LogVar> vars;
  for (const auto& t : arg.atom().args()) {
    if (!isVar(t))
      throw PreconditionError("argument atom holds a constant (linearize "
                              "first)");
    const LogVar& v = asVar(t);
    if (containsVar(vars, v))
      throw PreconditionError("argument atom repeats a logvar (linearize "
                              "first)");
    vars.push_back(v);
  }
  return vars;
}

}  // namespace

std::vector<ParfactorPtr> split(const ParfactorPtr& g, std::size_t argIndex,
                                const Coverage& other) {
  const ParfactorArg& arg = g->args()[argIndex];
  if (arg.isCounting())
    throw PreconditionError("SPLIT applies to atoms; use EXPAND");
  if (arg.predicate() != other.pred)
    throw PreconditionError("SPLIT: predicate mismatch");
  std::vector<LogVar> vars = atomPositionVars(arg);
  auto [com, exc] =
      g->constraint().splitOnOverlap(other.relation, vars, other.positionVars);
  std::vector<ParfactorPtr> out;
  for (const ConstraintTree* cell : {&com, &exc}) {
    if (cell->isEmpty()) continue;
    out.push_back(Parfactor::make(g->args(), g->potential(), *cell));
  }
  return out;
}

std::vector<ParfactorPtr> expand(const ParfactorPtr& g, std::size_t argIndex,
                                 const Coverage& other) {
  const ParfactorArg& arg = g->args()[argIndex];
  if (!arg.isCounting())
    throw PreconditionError("EXPAND applies to counting formulas; use SPLIT");
  if (arg.predicate() != other.pred)
    throw PreconditionError("EXPAND: predicate mismatch");
  const LogVar& counted = arg.counting().countedLogvar();
  std::vector<LogVar> atomVars = atomPositionVars(arg);

  const ConstraintTree& c = g->constraint();
  auto [ccom, cexcl] =
      c.splitOnOverlap(other.relation, atomVars, other.positionVars);
  auto cells = c.groupByJointCount(counted, ccom, cexcl);

  std::vector<ParfactorPtr> out;
  for (const auto& [key, cell] : cells) {
    auto [nCom, nExcl] = key;
    if (nCom == 0 || nExcl == 0) {
      out.push_back(Parfactor::make(g->args(), g->potential(), cell));
      continue;
    }
    LogVar xCom = LogVar::fresh(counted.name() + "c", counted.domain());
    LogVar xExcl = LogVar::fresh(counted.name() + "e", counted.domain());
    ConstraintTree cellCom = cell.splitOnOverlap(ccom, cell.logvars(),
                                                 ccom.logvars()).first;
    ConstraintTree cellExcl = cell.splitOnOverlap(cexcl, cell.logvars(),
                                                  cexcl.logvars()).first;
    ConstraintTree inner = cellCom.rename({{counted, xCom}})
                               .join(cellExcl.rename({{counted, xExcl}}));
    ConstraintTree cellC = cell.project(freeLogvars(g->args())).join(inner);

    Substitution subCom, subExcl;
    subCom.add(counted, Term(xCom));
    subExcl.add(counted, Term(xExcl));
    std::vector<ParfactorArg> resultArgs;
    for (std::size_t i = 0; i < g->args().size(); ++i) {
      if (i != argIndex) {
        resultArgs.push_back(g->args()[i]);
        continue;
      }
      resultArgs.emplace_back(
          CountingFormula(subCom.apply(arg.atom()), xCom));
      resultArgs.emplace_back(
          CountingFormula(subExcl.apply(arg.atom()), xExcl));
    }

    const Potential& p = g->potential();
    std::vector<ArgSpace> spaces = argSpacesFor(resultArgs, cellC);
    const ArgSpace& comSpace = spaces[argIndex];
    const ArgSpace& exclSpace = spaces[argIndex + 1];
    std::vector<int> full(g->args().size());
    Potential expanded = Potential::build(
        spaces,
        [&](const std::vector<int>& v) {
          for (std::size_t i = 0, k = 0; i < g->args().size(); ++i) {
            if (i == argIndex) {
              Histogram sum =
                  histogramAdd(comSpace.histogramAt(v[k]),
                               exclSpace.histogramAt(v[k + 1]));
              full[i] = p.spaces()[i].indexOfHistogram(sum);
              k += 2;
            } else {
              full[i] = v[k++];
            }
          }
          return p.lookup(full);
        },
        p.mode());

    out.push_back(Parfactor::make(std::move(resultArgs), std::move(expanded),
                                  std::move(cellC)));
  }
  return out;
}

// --- count normalization ---------------------------------------------------------

std::vector<ParfactorPtr> countNormalize(const ParfactorPtr& g,
                                         const std::vector<LogVar>& Y,
                                         const std::vector<LogVar>& Z) {
  for (const auto& v : Y)
    if (!containsVar(g->freeVars(), v))
      throw PreconditionError("COUNT-NORMALIZE: Y must be free logvars");
  for (const auto& v : Z) {
    if (!containsVar(g->freeVars(), v) || containsVar(Y, v))
      throw PreconditionError(
          "COUNT-NORMALIZE: Z must be free logvars disjoint from Y");
  }
  std::vector<ParfactorPtr> out;
  for (const auto& [key, cell] : g->constraint().groupByCount(Y, Z))
    out.push_back(Parfactor::make(g->args(), g->potential(), cell));
  return out;
}

// --- absorb ------------------------------------------------------------------

ParfactorPtr absorb(const ParfactorPtr& g, std::size_t argIndex,
                    const EvidenceParfactor& e) {
  const ParfactorArg& arg = g->args()[argIndex];
  if (arg.predicate() != e.pred)
    throw PreconditionError("ABSORB: predicate mismatch");
  Coverage cov = coverageOf(*g, argIndex);
  if (!cov.subsetOf(e.coverage()))
    throw PreconditionError(
        "ABSORB: argument randvars only partially observed (SPLIT first)");

  std::vector<LogVar> atomVars = atomPositionVars(arg);
  std::vector<LogVar> othersFree = freeVarsExcept(g->args(), argIndex);
  std::vector<LogVar> xExcl = varsMinus(atomVars, othersFree);
  std::vector<LogVar> xNce = xExcl;
  if (arg.isCounting())
    xNce = varsMinus(xNce, {arg.counting().countedLogvar()});
  std::vector<LogVar> lPrime = varsMinus(g->freeVars(), xExcl);

  auto r = g->constraint().conditionalCount(xNce, lPrime);
  if (!r)
    throw PreconditionError(
        "ABSORB: exclusive logvars are not count-normalized "
        "(COUNT-NORMALIZE first)");

  int evidenceIndex;
  if (!arg.isCounting()) {
    evidenceIndex = e.observedValue;
  } else {
    auto n = g->constraint().conditionalCount(
        {arg.counting().countedLogvar()}, g->freeVars());
    Histogram h;
    h.counts.assign(arg.predicate()->rangeSize(), 0);
    h.counts[static_cast<std::size_t>(e.observedValue)] =
        static_cast<int>(*n);
    evidenceIndex = g->potential().spaces()[argIndex].indexOfHistogram(h);
  }

  std::vector<ParfactorArg> resultArgs;
  for (std::size_t i = 0; i < g->args().size(); ++i)
    if (i != argIndex) resultArgs.push_back(g->args()[i]);
  ConstraintTree resultC =
      g->constraint().project(varsMinus(g->constraint().logvars(), xExcl));

  const Potential& p = g->potential();
  Arith arith = p.arith();
  double exponent = static_cast<double>(*r);
  std::vector<ArgSpace> spaces = argSpacesFor(resultArgs, resultC);
  std::vector<int> full(g->args().size());
  Potential absorbed = Potential::build(
      spaces,
      [&](const std::vector<int>& v) {
        for (std::size_t i = 0, k = 0; i < g->args().size(); ++i)
          full[i] = (i == argIndex) ? evidenceIndex : v[k++];
        return arith.pow(p.lookup(full), exponent);
      },
      p.mode());

  return Parfactor::make(std::move(resultArgs), std::move(absorbed),
                         std::move(resultC));
}

// --- grounding ------------------------------------------------------------------

std::vector<ParfactorPtr> groundLogvar(const ParfactorPtr& g, const LogVar& x) {
  if (!containsVar(g->freeVars(), x))
    throw PreconditionError("GROUND-LOGVAR: logvar not free in the parfactor");
  std::vector<ParfactorPtr> out;
  for (const auto& [value, cell] : g->constraint().groupByValue(x))
    out.push_back(Parfactor::make(g->args(), g->potential(), cell));
  return out;
}

// --- shattering -----------------------------------------------------------------

namespace {

std::vector<ParfactorPtr> refineAgainst(const ParfactorPtr& g,
                                        std::size_t argIndex,
                                        const Coverage& other,
                                        OperatorResult& step) {
  if (g->args()[argIndex].isCounting()) {
    auto cells = expand(g, argIndex, other);
    step = makeResult(OpKind::Expand, {g}, cells);
    return cells;
  }
  auto cells = split(g, argIndex, other);
  step = makeResult(OpKind::Split, {g}, cells);
  return cells;
}

}  // namespace

namespace {

struct CoveredParfactor {
  ParfactorPtr parfactor;
  std::vector<Coverage> coverages;

  explicit CoveredParfactor(ParfactorPtr p) : parfactor(std::move(p)) {
    for (std::size_t i = 0; i < parfactor->args().size(); ++i)
      coverages.push_back(coverageOf(*parfactor, i));
  }
};

// Refines the two sides until every cross pair of same-predicate argument
// coverages is identical or disjoint. A worklist of side pairs avoids
// rescanning everything after each refinement.
void shatterLists(std::vector<CoveredParfactor>& left,
                  std::vector<CoveredParfactor>& right,
                  std::vector<OperatorResult>& steps, bool& changed) {
  std::vector<std::pair<std::size_t, std::size_t>> work;
  for (std::size_t a = 0; a < left.size(); ++a)
    for (std::size_t b = 0; b < right.size(); ++b) work.emplace_back(a, b);

  std::size_t guard = 0;
  while (!work.empty()) {
    if (++guard > 200000)
      throw StructuralError("shattering did not converge");
    auto [a, b] = work.back();
    work.pop_back();
    if (!left[a].parfactor || !right[b].parfactor) continue;
    const CoveredParfactor& p1 = left[a];
    const CoveredParfactor& p2 = right[b];
    bool refined = false;
    for (std::size_t i = 0; i < p1.coverages.size() && !refined; ++i) {
      for (std::size_t j = 0; j < p2.coverages.size() && !refined; ++j) {
        if (p1.coverages[i].pred != p2.coverages[j].pred) continue;
        const Coverage& c1 = p1.coverages[i];
        const Coverage& c2 = p2.coverages[j];
        if (c1.sameAs(c2) || !c1.overlaps(c2)) continue;
        bool refineLeft = !c1.subsetOf(c2);
        auto& side = refineLeft ? left : right;
        auto& other = refineLeft ? right : left;
        std::size_t victim = refineLeft ? a : b;
        OperatorResult step;
        auto cells = refineAgainst(side[victim].parfactor,
                                   refineLeft ? i : j,
                                   refineLeft ? c2 : c1, step);
        steps.push_back(std::move(step));
        changed = true;
        side[victim].parfactor = nullptr;
        for (auto& cell : cells) {
          side.emplace_back(cell);
          std::size_t fresh = side.size() - 1;
          for (std::size_t o = 0; o < other.size(); ++o) {
            if (!other[o].parfactor) continue;
            if (refineLeft)
              work.emplace_back(fresh, o);
            else
              work.emplace_back(o, fresh);
          }
        }
        refined = true;
      }
    }
    if (refined) continue;
  }
}

}  // namespace

ShatterPairResult shatterPair(ParfactorPtr g1, ParfactorPtr g2) {
  ShatterPairResult result;
  ParfactorPtr l1 = linearize(g1);
  ParfactorPtr l2 = linearize(g2);
  result.linearizedLeft = l1;
  result.linearizedRight = l2;
  result.changed = l1 != g1 || l2 != g2;

  std::vector<CoveredParfactor> left{CoveredParfactor(l1)};
  std::vector<CoveredParfactor> right{CoveredParfactor(l2)};
  shatterLists(left, right, result.steps, result.changed);
  for (const auto& p : left)
    if (p.parfactor) result.left.push_back(p.parfactor);
  for (const auto& p : right)
    if (p.parfactor) result.right.push_back(p.parfactor);
  return result;
}

}  // namespace lve
