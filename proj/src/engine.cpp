#include "lve/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <cmath>
#include <map>
#include <sstream>

namespace lve {

std::string Query::toString() const {
  GroundAtom a{pred, args};
  return a.toString();
}

std::string TraceEntry::toString() const {
  std::ostringstream os;
  os << "step=" << step << " op=" << opKindName(kind) << " consumed=[";
  for (std::size_t i = 0; i < consumed.size(); ++i) {
    if (i) os << ',';
    os << consumed[i];
  }
  os << "] produced=[";
  for (std::size_t i = 0; i < produced.size(); ++i) {
    if (i) os << ',';
    os << produced[i];
  }
  os << "] rows=" << costRows;
  return os.str();
}

EngineState::EngineState(std::vector<ParfactorPtr> parfactors,
                         EngineOptions options)
    : options_(options) {
  for (auto& p : parfactors) insert(p);
}

std::uint64_t EngineState::insert(const ParfactorPtr& p) {
  parfactors_.emplace_back(nextId_++, p);
  return parfactors_.back().first;
}

ParfactorPtr EngineState::byId(std::uint64_t id) const {
  for (const auto& [pid, p] : parfactors_)
    if (pid == id) return p;
  return nullptr;
}

std::vector<OpKind> EngineState::opKinds() const {
  std::vector<OpKind> kinds;
  kinds.reserve(trace_.size());
  for (const auto& t : trace_) kinds.push_back(t.kind);
  return kinds;
}

void EngineState::apply(const OperatorResult& result) {
  TraceEntry entry;
  entry.step = trace_.size();
  entry.kind = result.kind;
  entry.costRows = result.costRows;
  for (const auto& r : result.removed) {
    bool found = false;
    for (std::size_t i = 0; i < parfactors_.size(); ++i) {
      if (parfactors_[i].second == r) {
        entry.consumed.push_back(parfactors_[i].first);
        parfactors_.erase(parfactors_.begin() +
                          static_cast<std::ptrdiff_t>(i));
        found = true;
        break;
      }
    }
    if (!found)
      throw StructuralError("operator consumed a parfactor not in the model");
  }
  for (const auto& a : result.added) entry.produced.push_back(insert(a));
  rowsCreated_ += result.costRows;
  trace_.push_back(std::move(entry));
}

void EngineState::replaceSilently(const ParfactorPtr& from,
                                  const ParfactorPtr& to) {
  for (auto& [id, p] : parfactors_) {
    if (p == from) {
      p = to;
      return;
    }
  }
  throw StructuralError("replaceSilently: parfactor not in the model");
}

// --- helpers -----------------------------------------------------------------

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

Coverage queryCoverage(const Query& q) {
  std::vector<LogVar> posVars;
  for (const auto& d : q.pred->argDomains())
    posVars.push_back(LogVar::fresh("_q", d));
  return Coverage{q.pred, posVars,
                  ConstraintTree::fromTuples(posVars, {q.args})};
}

bool argCoversQuery(const Parfactor& p, std::size_t argIdx, const Query& q) {
  if (p.args()[argIdx].predicate() != q.pred) return false;
  return coverageOf(p, argIdx).containsGround(q.args);
}

/// Exactly the query randvar and nothing else?
bool argIsQueryOnly(const Parfactor& p, std::size_t argIdx, const Query& q) {
  if (p.args()[argIdx].predicate() != q.pred) return false;
  Coverage cov = coverageOf(p, argIdx);
  return cov.size() == 1 && cov.containsGround(q.args);
}

bool onlyQueryRemains(const EngineState& state, const Query& q) {
  for (const auto& [id, p] : state.parfactors())
    for (std::size_t i = 0; i < p->args().size(); ++i)
      if (!argIsQueryOnly(*p, i, q)) return false;
  return true;
}

/// Per-enumeration view of every argument's coverage, backed by the
/// engine-wide cache (parfactors are immutable).
struct CoverageMap {
  std::vector<std::vector<Coverage>> byParfactor;

  explicit CoverageMap(EngineState& state) {
    if (state.coverageCache.size() > 16384) state.coverageCache.clear();
    for (const auto& [id, p] : state.parfactors()) {
      std::vector<Coverage> covs;
      for (std::size_t j = 0; j < p->args().size(); ++j) {
        auto key = std::make_pair(p.get(), j);
        auto it = state.coverageCache.find(key);
        if (it == state.coverageCache.end())
          it = state.coverageCache
                   .emplace(key, std::make_pair(p, coverageOf(*p, j)))
                   .first;
        covs.push_back(it->second.second);
      }
      byParfactor.push_back(std::move(covs));
    }
  }
};

/// A counting formula whose group holds a single randvar per grounding is
/// value-isomorphic to a plain atom: the delta histogram on v corresponds
/// to the value v. Unrolling it frees the counted logvar and re-indexes
/// the table, which lets the atom machinery (aliasing, splits) take over.
ParfactorPtr unrollSingletonCountings(const ParfactorPtr& g) {
  bool any = false;
  for (std::size_t i = 0; i < g->args().size(); ++i)
    if (g->potential().spaces()[i].isCounting() &&
        g->potential().spaces()[i].total() == 1)
      any = true;
  if (!any) return g;

  std::vector<ParfactorArg> args;
  for (const auto& arg : g->args()) {
    if (arg.isCounting()) {
      auto n = g->constraint().conditionalCount(
          {arg.counting().countedLogvar()}, freeLogvars(g->args()));
      if (n && *n == 1) {
        args.emplace_back(arg.atom());
        continue;
      }
    }
    args.push_back(arg);
  }
  const Potential& p = g->potential();
  std::vector<ArgSpace> spaces = argSpacesFor(args, g->constraint());
  std::vector<int> full(args.size());
  Potential unrolled = Potential::build(
      spaces,
      [&](const std::vector<int>& v) {
        for (std::size_t i = 0; i < args.size(); ++i) {
          const ArgSpace& oldSpace = p.spaces()[i];
          if (oldSpace.isCounting() && !spaces[i].isCounting()) {
            Histogram delta;
            delta.counts.assign(oldSpace.rangeSize(), 0);
            delta.counts[static_cast<std::size_t>(v[i])] = 1;
            full[i] = oldSpace.indexOfHistogram(delta);
          } else {
            full[i] = v[i];
          }
        }
        return p.lookup(full);
      },
      p.mode());
  return Parfactor::make(std::move(args), std::move(unrolled),
                         g->constraint());
}

/// Do the two columns hold the same value in every tuple?
bool columnsAlwaysEqual(const ConstraintTree& c, const LogVar& a,
                        const LogVar& b) {
  if (a == b) return true;
  for (const auto& t : c.project({a, b}).tuples())
    if (t[0] != t[1]) return false;
  return true;
}

/// Merges arguments of one parfactor that instantiate to the same randvar
/// for every grounding (same predicate, per-position equal columns): the
/// potential collapses onto its diagonal. Unblocks elimination on models
/// like phi(P(X), P(Y)) with a diagonal constraint.
ParfactorPtr mergeAliasedArgs(const ParfactorPtr& g) {
  const auto& args = g->args();
  std::vector<std::size_t> position;
  std::vector<ParfactorArg> kept;
  for (const auto& arg : args) {
    std::size_t at = kept.size();
    for (std::size_t u = 0; u < kept.size(); ++u) {
      const ParfactorArg& other = kept[u];
      if (other.predicate() != arg.predicate()) continue;
      if (other.isCounting() != arg.isCounting()) continue;
      bool aliased = true;
      for (std::size_t p = 0; p < arg.atom().args().size() && aliased; ++p) {
        const Term& t1 = other.atom().args()[p];
        const Term& t2 = arg.atom().args()[p];
        bool counted1 = other.isCounting() && isVar(t1) &&
                        asVar(t1) == other.counting().countedLogvar();
        bool counted2 = arg.isCounting() && isVar(t2) &&
                        asVar(t2) == arg.counting().countedLogvar();
        if (counted1 != counted2) {
          aliased = false;
        } else if (counted1) {
          // Compared jointly below.
        } else if (!isVar(t1) || !isVar(t2)) {
          aliased = t1 == t2;
        } else {
          aliased = columnsAlwaysEqual(g->constraint(), asVar(t1), asVar(t2));
        }
      }
      if (aliased && arg.isCounting()) {
        // Two formulas count the same randvars iff their counted columns
        // carry equal value sets for every combination of the rest.
        const LogVar& c1 = other.counting().countedLogvar();
        const LogVar& c2 = arg.counting().countedLogvar();
        if (c1 != c2) {
          std::vector<LogVar> rest;
          for (const auto& v : g->constraint().logvars())
            if (v != c1 && v != c2) rest.push_back(v);
          std::vector<LogVar> left = rest, right = rest;
          left.push_back(c1);
          right.push_back(c2);
          aliased = g->constraint().sameRelation(g->constraint(), left, right);
        }
      }
      if (aliased) {
        at = u;
        break;
      }
    }
    position.push_back(at);
    if (at == kept.size()) kept.push_back(arg);
  }
  if (kept.size() == args.size()) return g;

  // Drop the columns only the dropped arguments used.
  std::vector<LogVar> neededVars = freeLogvars(kept);
  for (const auto& v : countedLogvars(kept)) neededVars.push_back(v);
  ConstraintTree c = g->constraint().project(neededVars);

  const Potential& p = g->potential();
  std::vector<ArgSpace> spaces = argSpacesFor(kept, c);
  std::vector<int> full(args.size());
  Potential merged = Potential::build(
      spaces,
      [&](const std::vector<int>& v) {
        for (std::size_t i = 0; i < args.size(); ++i) full[i] = v[position[i]];
        return p.lookup(full);
      },
      p.mode());
  return Parfactor::make(std::move(kept), std::move(merged), std::move(c));
}

}  // namespace

// --- evidence ------------------------------------------------------------------

std::vector<EvidenceParfactor> buildEvidenceParfactors(
    const std::vector<Observation>& observations, const Query& query) {
  std::map<std::pair<std::string, const Predicate*>,
           std::map<std::vector<int>, int>>
      byPred;
  for (const auto& obs : observations) {
    if (obs.args.size() != obs.pred->arity())
      throw InputError("evidence arity mismatch for '" + obs.pred->name() +
                       "'");
    if (obs.value < 0 ||
        obs.value >= static_cast<int>(obs.pred->rangeSize()))
      throw InputError("evidence value out of range for '" +
                       obs.pred->name() + "'");
    if (obs.pred == query.pred && obs.args == query.args)
      throw InputError("the query randvar is observed");
    auto& group = byPred[{obs.pred->name(), obs.pred.get()}];
    auto [it, inserted] = group.emplace(obs.args, obs.value);
    if (!inserted && it->second != obs.value)
      throw InputError("contradictory evidence on " +
                       GroundAtom{obs.pred, obs.args}.toString());
  }

  std::vector<EvidenceParfactor> out;
  for (const auto& [key, group] : byPred) {
    const Predicate* rawPred = key.second;
    PredicatePtr pred;
    for (const auto& obs : observations)
      if (obs.pred.get() == rawPred) {
        pred = obs.pred;
        break;
      }
    std::map<int, std::vector<std::vector<int>>> byValue;
    for (const auto& [args, value] : group) byValue[value].push_back(args);
    for (const auto& [value, tuples] : byValue) {
      std::vector<LogVar> posVars;
      for (const auto& d : pred->argDomains())
        posVars.push_back(LogVar::fresh("_e", d));
      out.push_back(EvidenceParfactor{
          pred, posVars, ConstraintTree::fromTuples(posVars, tuples), value});
    }
  }
  return out;
}

void incorporateEvidence(EngineState& state,
                         const std::vector<EvidenceParfactor>& evidence) {
  for (const auto& e : evidence) {
    bool progress = true;
    int guard = 0;
    while (progress) {
      if (++guard > 100000)
        throw StructuralError("evidence incorporation did not converge");
      progress = false;
      for (const auto& [id, pf] : state.parfactors()) {
        for (std::size_t argIdx = 0; argIdx < pf->args().size(); ++argIdx) {
          if (pf->args()[argIdx].predicate() != e.pred) continue;
          Coverage cov = coverageOf(*pf, argIdx);
          if (!cov.overlaps(e.coverage())) continue;
          if (!cov.subsetOf(e.coverage())) {
            // Partial overlap: refine first.
            if (pf->args()[argIdx].isCounting()) {
              auto cells = expand(pf, argIdx, e.coverage());
              state.apply(makeResult(OpKind::Expand, {pf}, cells));
            } else {
              auto cells = split(pf, argIdx, e.coverage());
              state.apply(makeResult(OpKind::Split, {pf}, cells));
            }
            progress = true;
            break;
          }
          // Fully covered: absorb, count-normalizing if needed.
          const ParfactorArg& arg = pf->args()[argIdx];
          std::vector<LogVar> atomVars;
          for (const auto& t : arg.atom().args()) atomVars.push_back(asVar(t));
          std::vector<LogVar> othersFree;
          for (std::size_t k = 0; k < pf->args().size(); ++k) {
            if (k == argIdx) continue;
            for (const auto& v : pf->args()[k].logvars())
              if (!containsVar(othersFree, v)) othersFree.push_back(v);
          }
          std::vector<LogVar> xExcl = varsMinus(atomVars, othersFree);
          std::vector<LogVar> xNce = xExcl;
          if (arg.isCounting())
            xNce = varsMinus(xNce, {arg.counting().countedLogvar()});
          std::vector<LogVar> lPrime = varsMinus(pf->freeVars(), xExcl);
          if (!pf->constraint().conditionalCount(xNce, lPrime)) {
            auto cells = countNormalize(pf, xNce, lPrime);
            state.apply(makeResult(OpKind::CountNormalize, {pf}, cells));
            progress = true;
            break;
          }
          ParfactorPtr absorbed = absorb(pf, argIdx, e);
          state.apply(makeResult(OpKind::Absorb, {pf}, {absorbed}));
          progress = true;
          break;
        }
        if (progress) break;
      }
    }
    // e is now fully incorporated and implicitly dropped.
  }
}

// --- shattering ------------------------------------------------------------------

void initialShatter(EngineState& state, const Query& query) {
  // Pairwise properness via a worklist: parfactors produced by a split are
  // re-checked against everything still alive.
  {
    std::vector<ParfactorPtr> alive;
    for (const auto& [id, p] : state.parfactors()) alive.push_back(p);
    std::vector<std::pair<std::size_t, std::size_t>> work;
    for (std::size_t a = 0; a < alive.size(); ++a)
      for (std::size_t b = a + 1; b < alive.size(); ++b)
        work.emplace_back(a, b);
    std::size_t guard = 0;
    while (!work.empty()) {
      if (++guard > 200000)
        throw StructuralError("shattering did not converge");
      auto [a, b] = work.back();
      work.pop_back();
      if (!alive[a] || !alive[b]) continue;
      ShatterPairResult sp = shatterPair(alive[a], alive[b]);
      if (!sp.changed) continue;
      // Linearization inside shatterPair swaps representations; sync it
      // before replaying the split steps, whose chains start from the
      // linearized parfactors.
      if (sp.linearizedLeft != alive[a]) {
        state.replaceSilently(alive[a], sp.linearizedLeft);
        alive[a] = sp.linearizedLeft;
      }
      if (sp.linearizedRight != alive[b]) {
        state.replaceSilently(alive[b], sp.linearizedRight);
        alive[b] = sp.linearizedRight;
      }
      if (sp.steps.empty()) continue;
      for (const auto& step : sp.steps) state.apply(step);
      std::vector<std::size_t> fresh;
      if (!(sp.left.size() == 1 && sp.left[0] == alive[a])) {
        alive[a] = nullptr;
        for (const auto& p : sp.left) {
          alive.push_back(p);
          fresh.push_back(alive.size() - 1);
        }
      }
      if (!(sp.right.size() == 1 && sp.right[0] == alive[b])) {
        alive[b] = nullptr;
        for (const auto& p : sp.right) {
          alive.push_back(p);
          fresh.push_back(alive.size() - 1);
        }
      }
      for (std::size_t f : fresh)
        for (std::size_t o = 0; o < alive.size(); ++o)
          if (o != f && alive[o]) work.emplace_back(std::min(o, f),
                                                    std::max(o, f));
    }
  }

  // Isolate the query randvar in its own singleton group.
  Coverage probe = queryCoverage(query);
  bool progress = true;
  std::size_t guard = 0;
  while (progress) {
    if (++guard > 100000)
      throw StructuralError("query isolation did not converge");
    progress = false;
    for (const auto& [id, pf] : state.parfactors()) {
      for (std::size_t argIdx = 0; argIdx < pf->args().size(); ++argIdx) {
        if (pf->args()[argIdx].predicate() != query.pred) continue;
        Coverage cov = coverageOf(*pf, argIdx);
        if (!cov.overlaps(probe) || cov.sameAs(probe)) continue;
        if (pf->args()[argIdx].isCounting()) {
          auto cells = expand(pf, argIdx, probe);
          state.apply(makeResult(OpKind::Expand, {pf}, cells));
        } else {
          auto cells = split(pf, argIdx, probe);
          state.apply(makeResult(OpKind::Split, {pf}, cells));
        }
        progress = true;
        break;
      }
      if (progress) break;
    }
  }
}

// --- candidate enumeration ---------------------------------------------------------

namespace {

/// Structural sum-out preconditions local to one parfactor.
struct SumOutCheck {
  bool logvarsOk = false;   // precondition 2
  bool normalized = false;  // precondition 3
  std::vector<LogVar> xExcl, xCom;
  std::vector<LogVar> missing;  // non-singleton logvars outside the argument
};

SumOutCheck checkSumOutLocal(const std::vector<ParfactorArg>& args,
                             const ConstraintTree& constraint,
                             std::size_t argIdx) {
  SumOutCheck c;
  std::vector<LogVar> targetFree = args[argIdx].logvars();
  c.logvarsOk = true;
  for (const auto& v : freeLogvars(args)) {
    if (containsVar(targetFree, v)) continue;
    if (constraint.project({v}).cardinality() != 1) {
      c.logvarsOk = false;
      c.missing.push_back(v);
    }
  }
  if (!c.logvarsOk) return c;
  std::vector<LogVar> othersFree;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (k == argIdx) continue;
    for (const auto& v : args[k].logvars())
      if (!containsVar(othersFree, v)) othersFree.push_back(v);
  }
  c.xExcl = varsMinus(targetFree, othersFree);
  c.xCom = varsIntersect(targetFree, othersFree);
  c.normalized = constraint.conditionalCount(c.xExcl, c.xCom).has_value();
  return c;
}

SumOutCheck checkSumOutLocal(const ParfactorPtr& pf, std::size_t argIdx) {
  return checkSumOutLocal(pf->args(), pf->constraint(), argIdx);
}

struct RankedCandidate {
  int rank;
  Candidate candidate;
};

void sortCandidates(std::vector<RankedCandidate>& cands) {
  std::stable_sort(cands.begin(), cands.end(),
                   [](const RankedCandidate& a, const RankedCandidate& b) {
                     if (a.rank != b.rank) return a.rank < b.rank;
                     if (a.candidate.costRows != b.candidate.costRows)
                       return a.candidate.costRows < b.candidate.costRows;
                     int tag = std::string(opKindName(a.candidate.kind))
                                   .compare(opKindName(b.candidate.kind));
                     if (tag != 0) return tag < 0;
                     return a.candidate.consumedIds < b.candidate.consumedIds;
                   });
}

/// One argument group: same predicate and kind, identical covered randvars.
struct ArgGroup {
  std::vector<std::pair<std::size_t, std::size_t>> members;  // (pfIdx, argIdx)
  Coverage cover;
  bool coversQuery = false;
  bool blocked = false;  // overlapped by a non-member argument
};

std::vector<ArgGroup> collectGroups(const EngineState& state,
                                    const CoverageMap& covs,
                                    const Query& query) {
  const auto& pfs = state.parfactors();
  std::vector<ArgGroup> groups;
  std::vector<std::vector<int>> groupOf(pfs.size());
  for (std::size_t a = 0; a < pfs.size(); ++a) {
    groupOf[a].assign(pfs[a].second->args().size(), -1);
    for (std::size_t i = 0; i < covs.byParfactor[a].size(); ++i) {
      const Coverage& cov = covs.byParfactor[a][i];
      bool counting = pfs[a].second->args()[i].isCounting();
      int found = -1;
      for (std::size_t gidx = 0; gidx < groups.size(); ++gidx) {
        const auto& [pa, pi] = groups[gidx].members.front();
        if (pfs[pa].second->args()[pi].isCounting() != counting) continue;
        if (!groups[gidx].cover.sameAs(cov)) continue;
        found = static_cast<int>(gidx);
        break;
      }
      if (found < 0) {
        ArgGroup g;
        g.cover = cov;
        g.coversQuery =
            cov.pred == query.pred && cov.containsGround(query.args);
        groups.push_back(std::move(g));
        found = static_cast<int>(groups.size() - 1);
      }
      groups[static_cast<std::size_t>(found)].members.emplace_back(a, i);
      groupOf[a][i] = found;
    }
  }
  // A group is eliminable only if nothing outside it touches its randvars.
  for (std::size_t a = 0; a < pfs.size(); ++a) {
    for (std::size_t i = 0; i < covs.byParfactor[a].size(); ++i) {
      int g = groupOf[a][i];
      for (std::size_t gidx = 0; gidx < groups.size(); ++gidx) {
        if (static_cast<int>(gidx) == g) continue;
        if (groups[gidx].cover.pred != covs.byParfactor[a][i].pred) continue;
        if (groups[gidx].cover.overlaps(covs.byParfactor[a][i]))
          groups[gidx].blocked = true;
      }
    }
    // Two members inside one parfactor block each other as well.
    std::map<int, int> seen;
    for (std::size_t i = 0; i < covs.byParfactor[a].size(); ++i)
      if (++seen[groupOf[a][i]] > 1 && groupOf[a][i] >= 0)
        groups[static_cast<std::size_t>(groupOf[a][i])].blocked = true;
  }
  return groups;
}

/// A full elimination of one group: multiply the parfactors it spans (the
/// group arguments unified by the alignments), then sum the group out,
/// count-normalizing in between when required. The chain is shaped and
/// costed without materializing any table; the real operators run only
/// when the candidate is applied. Returns nothing when the chain cannot
/// be assembled; `normalizeWish` then may carry an enabling
/// COUNT-NORMALIZE of a model parfactor.
std::optional<Candidate> planElimination(
    const EngineState& state, const ArgGroup& group,
    std::optional<Candidate>& normalizeWish) {
  const auto& pfs = state.parfactors();
  if (group.coversQuery || group.blocked) return std::nullopt;

  // Distinct parfactors, ascending id, with their group argument.
  std::vector<std::pair<std::uint64_t, std::pair<ParfactorPtr, std::size_t>>>
      involved;
  for (const auto& [pfIdx, argIdx] : group.members)
    involved.push_back({pfs[pfIdx].first, {pfs[pfIdx].second, argIdx}});
  std::sort(involved.begin(), involved.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });

  std::uint64_t cost = 0;
  ParfactorShape acc = shapeOf(*involved[0].second.first);
  std::size_t accTarget = involved[0].second.second;
  std::vector<std::uint64_t> consumedIds{involved[0].first};

  // Selects the first alignment unifying the two group arguments; the
  // apply-time replay makes the same choice (the enumeration is
  // structural, so fresh logvar names do not affect it).
  auto chooseAlignment = [](const std::vector<Alignment>& alignments,
                            std::size_t ti,
                            std::size_t tj) -> const Alignment* {
    for (const auto& theta : alignments)
      for (const auto& [i, j] : theta.matchedArgs)
        if (i == ti && j == tj) return &theta;
    return nullptr;
  };

  for (std::size_t k = 1; k < involved.size(); ++k) {
    ParfactorShape next = shapeOf(*involved[k].second.first);
    std::size_t nextTarget = involved[k].second.second;
    consumedIds.push_back(involved[k].first);
    auto alignments = findAlignments(acc, next);
    const Alignment* chosen = chooseAlignment(alignments, accTarget,
                                              nextTarget);
    if (!chosen) return std::nullopt;
    // Scaling preconditions; a failure on a model parfactor becomes an
    // enabling COUNT-NORMALIZE wish.
    std::vector<LogVar> x1, x2;
    for (const auto& [f, t] : chosen->pairs) {
      x1.push_back(f);
      x2.push_back(t);
    }
    std::vector<LogVar> y1 = varsMinus(acc.freeVars(), x1);
    std::vector<LogVar> y2 = varsMinus(next.freeVars(), x2);
    bool ok1 = acc.constraint.conditionalCount(y1, x1).has_value();
    bool ok2 = next.constraint.conditionalCount(y2, x2).has_value();
    if (!ok1 || !ok2) {
      const ParfactorPtr offender =
          ok1 ? involved[k].second.first : nullptr;
      if (offender && !normalizeWish) {
        try {
          auto cells = countNormalize(offender, y2, x2);
          if (cells.size() >= 2) {
            OperatorResult op =
                makeResult(OpKind::CountNormalize, {offender}, cells);
            Candidate c;
            c.kind = OpKind::CountNormalize;
            c.costRows = op.costRows;
            c.consumedIds = {involved[k].first};
            c.description = "COUNT-NORMALIZE for MULTIPLY";
            c.apply = [op](EngineState& s) { s.apply(op); };
            normalizeWish = std::move(c);
          }
        } catch (const PreconditionError&) {
        }
      }
      return std::nullopt;
    }
    try {
      acc = multiplyShape(acc, next, *chosen);
    } catch (const PreconditionError&) {
      return std::nullopt;
    } catch (const StructuralError&) {
      return std::nullopt;
    }
    // The group argument keeps its position among the left operand's args.
    // The joint product is the medium of the elimination; the candidate is
    // costed by what the summing-out creates, so eliminations with equal
    // residues compare equally regardless of how they were assembled.
  }

  // Shape the summing-out of the group argument.
  std::vector<LogVar> targetFree = acc.args[accTarget].logvars();
  for (const auto& v : freeLogvars(acc.args)) {
    if (containsVar(targetFree, v)) continue;
    if (acc.constraint.project({v}).cardinality() != 1) return std::nullopt;
  }
  std::vector<LogVar> othersFree;
  for (std::size_t k = 0; k < acc.args.size(); ++k) {
    if (k == accTarget) continue;
    for (const auto& v : acc.args[k].logvars())
      if (!containsVar(othersFree, v)) othersFree.push_back(v);
  }
  std::vector<LogVar> xExcl = varsMinus(targetFree, othersFree);
  std::vector<LogVar> xCom = varsIntersect(targetFree, othersFree);
  bool needsNormalize =
      !acc.constraint.conditionalCount(xExcl, xCom).has_value();

  auto shapeSumCost = [&](const ParfactorShape& in) -> std::uint64_t {
    std::vector<ParfactorArg> rest;
    for (std::size_t i = 0; i < in.args.size(); ++i)
      if (i != accTarget) rest.push_back(in.args[i]);
    std::vector<LogVar> dropped = xExcl;
    if (in.args[accTarget].isCounting())
      dropped.push_back(in.args[accTarget].counting().countedLogvar());
    ConstraintTree c =
        in.constraint.project(varsMinus(in.constraint.logvars(), dropped));
    return tableSize(argSpacesFor(rest, c));
  };

  try {
    if (!needsNormalize) {
      cost += shapeSumCost(acc);
    } else {
      auto cells = acc.constraint.groupByCount(xExcl, xCom);
      if (cells.size() < 2) return std::nullopt;
      for (const auto& [key, cell] : cells) {
        ParfactorShape cellShape{acc.args, cell,
                                 argSpacesFor(acc.args, cell)};
        cost += cellShape.tableRows();
        cost += shapeSumCost(cellShape);
      }
    }
  } catch (const PreconditionError&) {
    return std::nullopt;
  } catch (const StructuralError&) {
    return std::nullopt;
  }

  // Replay with real tables on application.
  std::vector<std::pair<ParfactorPtr, std::size_t>> members;
  for (const auto& [id, m] : involved) members.push_back(m);
  Candidate c;
  c.kind = OpKind::SumOut;
  c.costRows = cost;
  c.consumedIds = consumedIds;
  c.pureSumOut = involved.size() == 1 && !needsNormalize;
  c.description = "ELIMINATE " + acc.args[accTarget].toString();
  c.apply = [members, chooseAlignment](EngineState& s) {
    ParfactorPtr cur = members[0].first;
    std::size_t target = members[0].second;
    for (std::size_t k = 1; k < members.size(); ++k) {
      auto alignments = findAlignments(*cur, *members[k].first);
      const Alignment* chosen =
          chooseAlignment(alignments, target, members[k].second);
      if (!chosen)
        throw StructuralError("elimination replay lost its alignment");
      ParfactorPtr product = multiply(cur, members[k].first, *chosen);
      s.apply(makeResult(OpKind::Multiply, {cur, members[k].first},
                         {product}));
      cur = product;
    }
    SumOutCheck chk2 = checkSumOutLocal(cur->args(), cur->constraint(),
                                        target);
    if (chk2.normalized) {
      ParfactorPtr result = sumOut(cur, target);
      s.apply(makeResult(OpKind::SumOut, {cur}, {result}));
    } else {
      auto cells = countNormalize(cur, chk2.xExcl, chk2.xCom);
      s.apply(makeResult(OpKind::CountNormalize, {cur}, cells));
      for (const auto& cell : cells) {
        ParfactorPtr result = sumOut(cell, target);
        s.apply(makeResult(OpKind::SumOut, {cell}, {result}));
      }
    }
  };
  return c;
}

}  // namespace

struct EngineState::CachedPlan {
  std::optional<Candidate> plan;
  std::optional<Candidate> normalizeWish;
  // Pins the group members so their addresses cannot be reused while this
  // entry can still be hit.
  std::vector<ParfactorPtr> pinned;
};

std::vector<Candidate> enumerateCandidates(EngineState& state,
                                           const Query& query) {
  std::vector<RankedCandidate> out;
  const auto& pfs = state.parfactors();
  CoverageMap covs(state);
  std::vector<ArgGroup> groups = collectGroups(state, covs, query);

  // Eliminations: the sum-out branch of the main loop. An elimination that
  // needs no interleaved COUNT-NORMALIZE ranks ahead of the enablers.
  // Plans only depend on the group's own parfactors, which are immutable,
  // so they are cached across loop iterations.
  if (state.planCache.size() > 4096) state.planCache.clear();
  for (const auto& group : groups) {
    if (group.coversQuery || group.blocked) continue;
    std::vector<std::pair<const Parfactor*, std::size_t>> key;
    for (const auto& [pfIdx, argIdx] : group.members)
      key.emplace_back(pfs[pfIdx].second.get(), argIdx);
    std::sort(key.begin(), key.end());
    auto it = state.planCache.find(key);
    if (it == state.planCache.end()) {
      auto entry = std::make_shared<EngineState::CachedPlan>();
      for (const auto& [pfIdx, argIdx] : group.members)
        entry->pinned.push_back(pfs[pfIdx].second);
      entry->plan = planElimination(state, group, entry->normalizeWish);
      it = state.planCache.emplace(std::move(key), std::move(entry)).first;
    }
    if (it->second->plan) {
      out.push_back({it->second->plan->pureSumOut ? 1 : 2,
                     *it->second->plan});
    } else if (it->second->normalizeWish) {
      out.push_back({2, *it->second->normalizeWish});
    }
  }

  // MULTIPLY as a standalone enabler: merging two parfactors that share a
  // group often exposes eliminations that no single parfactor offers.
  // One candidate per group and round, combining its two oldest members.
  for (const auto& group : groups) {
    if (group.members.size() < 2) continue;
    std::vector<std::pair<std::uint64_t, std::pair<ParfactorPtr, std::size_t>>>
        involved;
    for (const auto& [pfIdx, argIdx] : group.members)
      involved.push_back({pfs[pfIdx].first, {pfs[pfIdx].second, argIdx}});
    std::sort(involved.begin(), involved.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });
    if (involved[0].second.first == involved[1].second.first)
      continue;  // both args in one parfactor: nothing to merge
    const ParfactorPtr& p1 = involved[0].second.first;
    const ParfactorPtr& p2 = involved[1].second.first;
    std::size_t t1 = involved[0].second.second;
    std::size_t t2 = involved[1].second.second;
    auto alignments = findAlignments(*p1, *p2);
    const Alignment* chosen = nullptr;
    for (const auto& theta : alignments) {
      for (const auto& [i, j] : theta.matchedArgs)
        if (i == t1 && j == t2) {
          chosen = &theta;
          break;
        }
      if (chosen) break;
    }
    if (!chosen) continue;
    try {
      ParfactorShape shape = multiplyShape(shapeOf(*p1), shapeOf(*p2),
                                           *chosen);
      // Estimate what summing the merged group out will eventually cost:
      // every non-singleton logvar missing from the target argument needs
      // a counting conversion, growing the table by a histogram dimension.
      // Merges that would entangle several large groups rank accordingly.
      std::uint64_t estimate = shape.tableRows();
      std::vector<LogVar> targetFree = shape.args[t1].logvars();
      for (const auto& v : freeLogvars(shape.args)) {
        if (containsVar(targetFree, v)) continue;
        std::uint64_t values = shape.constraint.project({v}).cardinality();
        if (values > 1) estimate *= values + 1;
      }
      Candidate c;
      c.kind = OpKind::Multiply;
      c.costRows = estimate;
      c.consumedIds = {involved[0].first, involved[1].first};
      c.description = "MULTIPLY";
      Alignment theta = *chosen;
      ParfactorPtr l = p1, r = p2;
      c.apply = [l, r, theta](EngineState& s) {
        ParfactorPtr product = multiply(l, r, theta);
        s.apply(makeResult(OpKind::Multiply, {l, r}, {product}));
      };
      out.push_back({2, std::move(c)});
    } catch (const PreconditionError&) {
    } catch (const StructuralError&) {
    }
  }

  // COUNT-CONVERT: proposed when it unblocks an elimination in its own
  // parfactor or unifies an atom group with an existing counting group.
  for (std::size_t pfIdx = 0; pfIdx < pfs.size(); ++pfIdx) {
    const auto& [id, pf] = pfs[pfIdx];
    for (const auto& x : pf->freeVars()) {
      std::size_t holder = pf->args().size();
      bool eligible = true;
      for (std::size_t i = 0; i < pf->args().size(); ++i) {
        if (!containsVar(pf->args()[i].logvars(), x)) continue;
        if (holder != pf->args().size() || pf->args()[i].isCounting()) {
          eligible = false;
          break;
        }
        holder = i;
      }
      if (!eligible || holder == pf->args().size()) continue;

      bool helps = false;
      for (std::size_t j = 0; j < pf->args().size() && !helps; ++j) {
        if (j == holder) continue;
        if (covs.byParfactor[pfIdx][j].pred == query.pred &&
            covs.byParfactor[pfIdx][j].containsGround(query.args))
          continue;
        SumOutCheck chk = checkSumOutLocal(pf, j);
        if (!chk.logvarsOk && containsVar(chk.missing, x)) helps = true;
      }
      if (!helps) {
        // Would the converted group match an existing counting group?
        const Coverage& cov = covs.byParfactor[pfIdx][holder];
        for (std::size_t b = 0; b < pfs.size() && !helps; ++b) {
          for (std::size_t j = 0; j < covs.byParfactor[b].size(); ++j) {
            if (b == pfIdx && j == holder) continue;
            if (!pfs[b].second->args()[j].isCounting()) continue;
            if (covs.byParfactor[b][j].pred != cov.pred) continue;
            if (covs.byParfactor[b][j].sameAs(cov)) {
              helps = true;
              break;
            }
          }
        }
      }
      if (!helps) continue;
      // Converting a logvar with conditional count 1 only re-indexes the
      // table; skip it (it would immediately be unrolled again).
      {
        std::vector<LogVar> rest = varsMinus(pf->freeVars(), {x});
        auto n = pf->constraint().conditionalCount({x}, rest);
        if (n && *n == 1) continue;
      }

      try {
        // Shape the conversion; the table is built only on application.
        std::vector<ParfactorArg> convertedArgs = pf->args();
        convertedArgs[holder] =
            ParfactorArg(CountingFormula(pf->args()[holder].atom(), x));
        std::uint64_t cost =
            tableSize(argSpacesFor(convertedArgs, pf->constraint()));
        Candidate c;
        c.kind = OpKind::CountConvert;
        c.costRows = cost;
        c.consumedIds = {id};
        c.description = "COUNT-CONVERT " + x.name();
        ParfactorPtr target = pf;
        LogVar var = x;
        c.apply = [target, var](EngineState& s) {
          ParfactorPtr converted = countConvert(target, var);
          s.apply(makeResult(OpKind::CountConvert, {target}, {converted}));
        };
        out.push_back({2, std::move(c)});
      } catch (const PreconditionError&) {
      } catch (const StructuralError&) {
      }
    }
  }

  // Shattering of improper cross-parfactor pairs.
  for (std::size_t a = 0; a < pfs.size(); ++a) {
    for (std::size_t b = a + 1; b < pfs.size(); ++b) {
      const auto& [id1, p1] = pfs[a];
      const auto& [id2, p2] = pfs[b];
      bool improper = false;
      for (std::size_t i = 0; i < p1->args().size() && !improper; ++i) {
        for (std::size_t j = 0; j < p2->args().size() && !improper; ++j) {
          if (p1->args()[i].predicate() != p2->args()[j].predicate())
            continue;
          const Coverage& c1 = covs.byParfactor[a][i];
          const Coverage& c2 = covs.byParfactor[b][j];
          if (!c1.sameAs(c2) && c1.overlaps(c2)) improper = true;
        }
      }
      if (!improper) continue;
      ShatterPairResult sp = shatterPair(p1, p2);
      std::uint64_t cost = 0;
      for (const auto& step : sp.steps) cost += step.costRows;
      Candidate c;
      c.kind = sp.steps.empty() ? OpKind::Split : sp.steps.front().kind;
      c.costRows = cost;
      c.consumedIds = {id1, id2};
      c.description = "SHATTER pair";
      ParfactorPtr o1 = p1, o2 = p2;
      c.apply = [sp, o1, o2](EngineState& s) {
        if (sp.linearizedLeft != o1)
          s.replaceSilently(o1, sp.linearizedLeft);
        if (sp.linearizedRight != o2)
          s.replaceSilently(o2, sp.linearizedRight);
        for (const auto& step : sp.steps) s.apply(step);
      };
      out.push_back({2, std::move(c)});
    }
  }

  // Self-shattering: a multiply can leave one parfactor with two arguments
  // whose randvar sets partially overlap, which blocks every elimination.
  // Splitting/expanding an argument against its sibling's coverage refines
  // the parfactor until the pair is proper.
  for (std::size_t pfIdx = 0; pfIdx < pfs.size(); ++pfIdx) {
    const auto& [id, pf] = pfs[pfIdx];
    for (std::size_t i = 0; i < pf->args().size(); ++i) {
      for (std::size_t j = i + 1; j < pf->args().size(); ++j) {
        if (pf->args()[i].predicate() != pf->args()[j].predicate()) continue;
        const Coverage& ci = covs.byParfactor[pfIdx][i];
        const Coverage& cj = covs.byParfactor[pfIdx][j];
        if (ci.sameAs(cj) || !ci.overlaps(cj)) continue;
        std::size_t target = pf->args()[i].isCounting() ? i : j;
        const Coverage& other = target == i ? cj : ci;
        try {
          std::vector<ParfactorPtr> cells;
          OpKind kind;
          if (pf->args()[target].isCounting()) {
            cells = expand(pf, target, other);
            kind = OpKind::Expand;
          } else {
            cells = split(pf, target, other);
            kind = OpKind::Split;
          }
          if (cells.size() == 1 &&
              cells[0]->args().size() == pf->args().size())
            continue;  // no refinement happened
          OperatorResult op = makeResult(kind, {pf}, cells);
          Candidate c;
          c.kind = kind;
          c.costRows = op.costRows;
          c.consumedIds = {id};
          c.description = "SELF-SHATTER";
          c.apply = [op](EngineState& s) { s.apply(op); };
          out.push_back({2, std::move(c)});
        } catch (const PreconditionError&) {
        }
      }
    }
  }

  // GROUND-LOGVAR: strictly the last resort (it shreds the lifted
  // structure); considered only when nothing else applies, cheapest
  // grounding first. Costed as the number of groundings times the table
  // size.
  for (const auto& [id, pf] : pfs) {
    for (const auto& x : pf->freeVars()) {
      std::uint64_t values = pf->constraint().project({x}).cardinality();
      if (values < 2) continue;
      Candidate c;
      c.kind = OpKind::GroundLogvar;
      c.costRows = values * pf->tableRows();
      c.consumedIds = {id};
      c.description = "GROUND-LOGVAR " + x.name();
      ParfactorPtr target = pf;
      LogVar var = x;
      c.apply = [target, var](EngineState& s) {
        auto cells = groundLogvar(target, var);
        s.apply(makeResult(OpKind::GroundLogvar, {target}, cells));
      };
      out.push_back({3, std::move(c)});
    }
  }

  sortCandidates(out);
  std::vector<Candidate> result;
  result.reserve(out.size());
  for (auto& rc : out) result.push_back(std::move(rc.candidate));
  return result;
}

// --- the main loop ----------------------------------------------------------------

namespace {

std::vector<double> finalDistribution(const EngineState& state,
                                      const Query& query) {
  Arith arith{state.options().mode};
  std::size_t k = query.pred->rangeSize();
  std::vector<double> weight(k, arith.one());
  for (const auto& [id, pf] : state.parfactors()) {
    const Potential& p = pf->potential();
    for (std::size_t v = 0; v < k; ++v) {
      std::vector<int> valuation;
      for (std::size_t i = 0; i < pf->args().size(); ++i) {
        const ArgSpace& space = p.spaces()[i];
        if (!space.isCounting()) {
          valuation.push_back(static_cast<int>(v));
        } else {
          Histogram h;
          h.counts.assign(space.rangeSize(), 0);
          h.counts[v] = space.total();
          valuation.push_back(space.indexOfHistogram(h));
        }
      }
      weight[v] = arith.mul(weight[v], p.lookup(valuation));
    }
  }
  // Normalize.
  std::vector<double> dist(k);
  if (state.options().mode == NumericMode::Linear) {
    double z = 0;
    for (double w : weight) z += w;
    if (!(z > 0) || !std::isfinite(z))
      throw NumericError("degenerate partition function");
    for (std::size_t v = 0; v < k; ++v) dist[v] = weight[v] / z;
  } else {
    double hi = *std::max_element(weight.begin(), weight.end());
    if (!std::isfinite(hi))
      throw NumericError("degenerate partition function");
    double z = 0;
    for (double w : weight) z += std::exp(w - hi);
    for (std::size_t v = 0; v < k; ++v)
      dist[v] = std::exp(weight[v] - hi) / z;
  }
  return dist;
}

/// Representation cleanup after a rewrite: collapses counting formulas
/// over single randvars and aliased duplicate arguments. Keeps chains of
/// splits from accumulating unmergeable fragments.
void normalizeRepresentation(EngineState& state) {
  bool progress = true;
  while (progress) {
    progress = false;
    for (const auto& [id, pf] : state.parfactors()) {
      ParfactorPtr rewritten = pf;
      try {
        rewritten = mergeAliasedArgs(unrollSingletonCountings(pf));
      } catch (const StructuralError&) {
        rewritten = pf;
      }
      if (rewritten != pf) {
        state.replaceSilently(pf, rewritten);
        progress = true;
        break;
      }
    }
  }
}

MarginalResult runQueryInMode(const Model& model,
                              const std::vector<Observation>& evidence,
                              const Query& query,
                              const EngineOptions& options) {
  auto start = std::chrono::steady_clock::now();

  std::vector<ParfactorPtr> loaded;
  bool queryCovered = false;
  for (const auto& g : model.parfactors) {
    ParfactorPtr p = linearize(g);
    p = mergeAliasedArgs(p);
    if (p->potential().mode() != options.mode) {
      p = Parfactor::make(p->args(), p->potential().toMode(options.mode),
                          p->constraint());
    }
    loaded.push_back(p);
    for (std::size_t i = 0; i < p->args().size(); ++i)
      if (argCoversQuery(*p, i, query)) queryCovered = true;
  }
  if (!queryCovered)
    throw InputError("query randvar " + query.toString() +
                     " is not covered by the model");

  EngineState state(std::move(loaded), options);
  std::vector<EvidenceParfactor> ev =
      buildEvidenceParfactors(evidence, query);
  incorporateEvidence(state, ev);
  initialShatter(state, query);
  normalizeRepresentation(state);

  std::uint64_t steps = 0;
  while (!onlyQueryRemains(state, query)) {
    if (++steps > state.options().maxSteps)
      throw StructuralError("engine exceeded the step budget");
    std::vector<Candidate> candidates = enumerateCandidates(state, query);
    if (!candidates.empty() && std::getenv("LVE_DEBUG_STEPS")) {
      std::size_t maxRows = 0;
      for (const auto& [id, p] : state.parfactors())
        maxRows = std::max(maxRows, static_cast<std::size_t>(p->tableRows()));
      std::cerr << "[lve] step " << steps << " pick "
                << candidates.front().description << " cost "
                << candidates.front().costRows << " pfs "
                << state.parfactors().size() << " maxRows " << maxRows
                << "\n";
      const char* dumpEvery = std::getenv("LVE_DEBUG_STATE");
      if (candidates.front().costRows > 100000000ull ||
          (dumpEvery && steps % std::strtoull(dumpEvery, nullptr, 10) == 0)) {
        for (const auto& c : candidates)
          std::cerr << "  cand " << c.description << " cost " << c.costRows
                    << "\n";
        for (const auto& [id, p] : state.parfactors())
          std::cerr << "  id" << id << " " << p->toString() << "\n";
      }
    }
    if (candidates.empty()) {
      std::ostringstream os;
      os << "no applicable operator (stuck model):";
      for (const auto& [id, pf] : state.parfactors()) {
        os << "\n  id" << id << " " << pf->toString();
        for (std::size_t i = 0; i < pf->args().size(); ++i) {
          Coverage ci = coverageOf(*pf, i);
          os << "\n    arg" << i << " covers " << ci.size();
          for (std::size_t j = i + 1; j < pf->args().size(); ++j) {
            Coverage cj = coverageOf(*pf, j);
            if (ci.pred != cj.pred) continue;
            os << " [vs arg" << j << ": "
               << (ci.sameAs(cj) ? "same"
                                 : ci.overlaps(cj) ? "overlap" : "disjoint")
               << "]";
          }
        }
      }
      throw StructuralError(os.str());
    }
    if (candidates.front().costRows > options.maxCandidateRows)
      throw StructuralError(
          "cheapest operation would create " +
          std::to_string(candidates.front().costRows) +
          " rows, over the sanity bound");
    candidates.front().apply(state);
    normalizeRepresentation(state);
  }

  MarginalResult result;
  result.query = query;
  result.distribution = finalDistribution(state, query);
  result.opCount = state.trace().size();
  result.rowsCreated = state.rowsCreated();
  result.opKinds = state.opKinds();
  if (options.captureTrace)
    for (const auto& t : state.trace())
      result.traceLines.push_back(t.toString());
  auto end = std::chrono::steady_clock::now();
  result.wallTimeMs =
      std::chrono::duration<double, std::milli>(end - start).count();
  return result;
}

}  // namespace

MarginalResult runQuery(const Model& model,
                        const std::vector<Observation>& evidence,
                        const Query& query, const EngineOptions& options) {
  if (options.mode == NumericMode::Linear) {
    try {
      return runQueryInMode(model, evidence, query, options);
    } catch (const NumericError&) {
      EngineOptions logOptions = options;
      logOptions.mode = NumericMode::Log;
      return runQueryInMode(model, evidence, query, logOptions);
    }
  }
  return runQueryInMode(model, evidence, query, options);
}

}  // namespace lve
