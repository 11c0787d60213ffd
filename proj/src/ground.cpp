#include "lve/ground.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <set>
#include <sstream>

namespace lve {

bool operator<(const GroundAtom& a, const GroundAtom& b) {
  if (a.pred != b.pred) {
    if (a.pred->name() != b.pred->name()) return a.pred->name() < b.pred->name();
    return a.pred < b.pred;
  }
  return a.consts < b.consts;
}

std::string GroundAtom::toString() const {
  std::ostringstream os;
  os << pred->name() << '(';
  for (std::size_t i = 0; i < consts.size(); ++i) {
    if (i) os << ',';
    os << pred->argDomains()[i]->constants()[consts[i]];
  }
  os << ')';
  return os.str();
}

int GroundModel::indexOfRandvar(const GroundAtom& a) const {
  auto it = std::lower_bound(randvars.begin(), randvars.end(), a);
  if (it == randvars.end() || !(*it == a)) return -1;
  return static_cast<int>(it - randvars.begin());
}

double groundCapBits() {
  if (const char* env = std::getenv("LVE_GROUND_CAP")) {
    char* end = nullptr;
    double v = std::strtod(env, &end);
    if (end != env && v > 0) return v;
  }
  return 24.0;
}

namespace {

GroundAtom instantiate(const Atom& atom, const std::vector<LogVar>& vars,
                       const std::vector<int>& tuple) {
  std::vector<int> consts;
  consts.reserve(atom.args().size());
  for (const auto& t : atom.args()) {
    if (!isVar(t)) {
      consts.push_back(asConst(t));
      continue;
    }
    auto it = std::find(vars.begin(), vars.end(), asVar(t));
    consts.push_back(tuple[static_cast<std::size_t>(it - vars.begin())]);
  }
  return GroundAtom{atom.predicate(), std::move(consts)};
}

}  // namespace

GroundModel groundParfactors(const std::vector<ParfactorPtr>& parfactors,
                             double capBits) {
  // Pass 1: the randvar universe.
  std::set<GroundAtom> universe;
  for (const auto& g : parfactors) {
    const auto& free = g->freeVars();
    ConstraintTree freeRel = g->constraint().project(free);
    for (const auto& l : freeRel.tuples()) {
      for (const auto& arg : g->args()) {
        if (!arg.isCounting()) {
          universe.insert(instantiate(arg.atom(), free, l));
          continue;
        }
        const LogVar& counted = arg.counting().countedLogvar();
        ConstraintTree sel = g->constraint();
        for (std::size_t i = 0; i < free.size(); ++i)
          sel = sel.selectEq(free[i], l[i]);
        for (const auto& xt : sel.project({counted}).tuples()) {
          std::vector<LogVar> varsPlus = free;
          varsPlus.push_back(counted);
          std::vector<int> tuplePlus = l;
          tuplePlus.push_back(xt[0]);
          universe.insert(instantiate(arg.counting().atom(), varsPlus,
                                      tuplePlus));
        }
      }
    }
  }

  GroundModel gm;
  gm.randvars.assign(universe.begin(), universe.end());
  double bits = 0;
  for (const auto& rv : gm.randvars)
    bits += std::log2(static_cast<double>(rv.pred->rangeSize()));
  if (bits > capBits)
    throw SizeCapError("ground model needs " + std::to_string(bits) +
                       " bits of joint state, cap is " +
                       std::to_string(capBits));

  // Pass 2: one factor per free-logvar instantiation.
  for (const auto& g : parfactors) {
    const Potential linear = g->potential().toMode(NumericMode::Linear);
    const auto& free = g->freeVars();
    ConstraintTree freeRel = g->constraint().project(free);
    for (const auto& l : freeRel.tuples()) {
      // Argument slots: atom args hold one randvar, counting args a group.
      std::vector<std::vector<int>> slotRandvars(g->args().size());
      for (std::size_t ai = 0; ai < g->args().size(); ++ai) {
        const auto& arg = g->args()[ai];
        if (!arg.isCounting()) {
          slotRandvars[ai].push_back(
              gm.indexOfRandvar(instantiate(arg.atom(), free, l)));
          continue;
        }
        const LogVar& counted = arg.counting().countedLogvar();
        ConstraintTree sel = g->constraint();
        for (std::size_t i = 0; i < free.size(); ++i)
          sel = sel.selectEq(free[i], l[i]);
        for (const auto& xt : sel.project({counted}).tuples()) {
          std::vector<LogVar> varsPlus = free;
          varsPlus.push_back(counted);
          std::vector<int> tuplePlus = l;
          tuplePlus.push_back(xt[0]);
          slotRandvars[ai].push_back(gm.indexOfRandvar(
              instantiate(arg.counting().atom(), varsPlus, tuplePlus)));
        }
      }

      GroundFactor f;
      for (const auto& slot : slotRandvars)
        for (int rv : slot)
          if (std::find(f.randvars.begin(), f.randvars.end(), rv) ==
              f.randvars.end())
            f.randvars.push_back(rv);

      std::size_t total = 1;
      for (int rv : f.randvars)
        total *= static_cast<std::size_t>(gm.rangeOf(rv));
      f.table.resize(total);
      std::vector<int> assignment(f.randvars.size(), 0);
      for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rem = flat;
        for (std::size_t i = f.randvars.size(); i-- > 0;) {
          assignment[i] = static_cast<int>(
              rem % static_cast<std::size_t>(gm.rangeOf(f.randvars[i])));
          rem /= static_cast<std::size_t>(gm.rangeOf(f.randvars[i]));
        }
        auto valueOf = [&](int rv) {
          auto it = std::find(f.randvars.begin(), f.randvars.end(), rv);
          return assignment[static_cast<std::size_t>(
              it - f.randvars.begin())];
        };
        std::vector<int> valuation(g->args().size());
        for (std::size_t ai = 0; ai < g->args().size(); ++ai) {
          const auto& arg = g->args()[ai];
          if (!arg.isCounting()) {
            valuation[ai] = valueOf(slotRandvars[ai][0]);
          } else {
            Histogram h;
            h.counts.assign(arg.predicate()->rangeSize(), 0);
            for (int rv : slotRandvars[ai]) ++h.counts[valueOf(rv)];
            valuation[ai] =
                linear.spaces()[ai].indexOfHistogram(h);
          }
        }
        f.table[flat] = linear.lookup(valuation);
      }
      gm.factors.push_back(std::move(f));
    }
  }
  return gm;
}

GroundModel groundModel(const Model& model,
                        const std::vector<Observation>& evidence,
                        double capBits) {
  GroundModel gm = groundParfactors(model.parfactors, capBits);
  for (const auto& obs : evidence) {
    int rv = gm.indexOfRandvar(GroundAtom{obs.pred, obs.args});
    if (rv < 0)
      throw StructuralError("evidence on randvar not in the ground model: " +
                            GroundAtom{obs.pred, obs.args}.toString());
    gm.evidence.push_back({rv, obs.value});
  }
  return gm;
}

namespace {

struct VEFactor {
  std::vector<int> vars;
  std::vector<double> table;
};

std::size_t veTableSize(const GroundModel& gm, const std::vector<int>& vars) {
  std::size_t n = 1;
  for (int v : vars) n *= static_cast<std::size_t>(gm.rangeOf(v));
  return n;
}

VEFactor multiplyAll(const GroundModel& gm, const std::vector<VEFactor>& fs) {
  VEFactor out;
  for (const auto& f : fs)
    for (int v : f.vars)
      if (std::find(out.vars.begin(), out.vars.end(), v) == out.vars.end())
        out.vars.push_back(v);
  std::sort(out.vars.begin(), out.vars.end());
  std::size_t total = veTableSize(gm, out.vars);
  out.table.assign(total, 1.0);
  std::vector<int> assignment(out.vars.size());
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (std::size_t i = out.vars.size(); i-- > 0;) {
      assignment[i] = static_cast<int>(
          rem % static_cast<std::size_t>(gm.rangeOf(out.vars[i])));
      rem /= static_cast<std::size_t>(gm.rangeOf(out.vars[i]));
    }
    double prod = 1.0;
    for (const auto& f : fs) {
      std::size_t idx = 0;
      for (int v : f.vars) {
        auto it = std::find(out.vars.begin(), out.vars.end(), v);
        idx = idx * static_cast<std::size_t>(gm.rangeOf(v)) +
              static_cast<std::size_t>(
                  assignment[static_cast<std::size_t>(it - out.vars.begin())]);
      }
      prod *= f.table[idx];
    }
    out.table[flat] = prod;
  }
  return out;
}

VEFactor sumOutVar(const GroundModel& gm, const VEFactor& f, int var) {
  VEFactor out;
  for (int v : f.vars)
    if (v != var) out.vars.push_back(v);
  std::size_t total = veTableSize(gm, out.vars);
  out.table.assign(total, 0.0);
  std::vector<int> assignment(f.vars.size());
  for (std::size_t flat = 0; flat < f.table.size(); ++flat) {
    std::size_t rem = flat;
    for (std::size_t i = f.vars.size(); i-- > 0;) {
      assignment[i] = static_cast<int>(
          rem % static_cast<std::size_t>(gm.rangeOf(f.vars[i])));
      rem /= static_cast<std::size_t>(gm.rangeOf(f.vars[i]));
    }
    std::size_t idx = 0;
    for (std::size_t i = 0; i < f.vars.size(); ++i) {
      if (f.vars[i] == var) continue;
      idx = idx * static_cast<std::size_t>(gm.rangeOf(f.vars[i])) +
            static_cast<std::size_t>(assignment[i]);
    }
    out.table[idx] += f.table[flat];
  }
  return out;
}

std::vector<VEFactor> initialFactors(const GroundModel& gm) {
  std::vector<VEFactor> fs;
  for (const auto& f : gm.factors) {
    // Re-sort each factor's vars into ascending order.
    std::vector<int> sorted = f.randvars;
    std::sort(sorted.begin(), sorted.end());
    VEFactor vf;
    vf.vars = sorted;
    std::size_t total = veTableSize(gm, sorted);
    vf.table.resize(total);
    std::vector<int> assignment(sorted.size());
    for (std::size_t flat = 0; flat < total; ++flat) {
      std::size_t rem = flat;
      for (std::size_t i = sorted.size(); i-- > 0;) {
        assignment[i] = static_cast<int>(
            rem % static_cast<std::size_t>(gm.rangeOf(sorted[i])));
        rem /= static_cast<std::size_t>(gm.rangeOf(sorted[i]));
      }
      std::size_t idx = 0;
      for (int v : f.randvars) {
        auto it = std::find(sorted.begin(), sorted.end(), v);
        idx = idx * static_cast<std::size_t>(gm.rangeOf(v)) +
              static_cast<std::size_t>(
                  assignment[static_cast<std::size_t>(it - sorted.begin())]);
      }
      vf.table[flat] = f.table[idx];
    }
    fs.push_back(std::move(vf));
  }
  // Lemma-2 conditioning: evidence as indicator factors.
  for (const auto& obs : gm.evidence) {
    VEFactor vf;
    vf.vars = {obs.randvar};
    vf.table.assign(static_cast<std::size_t>(gm.rangeOf(obs.randvar)), 0.0);
    vf.table[static_cast<std::size_t>(obs.value)] = 1.0;
    fs.push_back(std::move(vf));
  }
  return fs;
}

}  // namespace

std::vector<double> veMarginal(const GroundModel& gm, const GroundAtom& query) {
  int q = gm.indexOfRandvar(query);
  if (q < 0)
    throw StructuralError("query randvar not in the ground model: " +
                          query.toString());
  std::vector<VEFactor> fs = initialFactors(gm);

  std::set<int> remaining;
  for (std::size_t i = 0; i < gm.randvars.size(); ++i)
    remaining.insert(static_cast<int>(i));
  remaining.erase(q);

  while (!remaining.empty()) {
    // Min-degree greedy: eliminate the randvar whose combined factor
    // mentions the fewest other randvars.
    int best = -1;
    std::size_t bestDegree = 0;
    for (int v : remaining) {
      std::set<int> neighbors;
      for (const auto& f : fs)
        if (std::find(f.vars.begin(), f.vars.end(), v) != f.vars.end())
          neighbors.insert(f.vars.begin(), f.vars.end());
      neighbors.erase(v);
      if (best < 0 || neighbors.size() < bestDegree) {
        best = v;
        bestDegree = neighbors.size();
      }
    }
    std::vector<VEFactor> involved, rest;
    for (auto& f : fs) {
      if (std::find(f.vars.begin(), f.vars.end(), best) != f.vars.end())
        involved.push_back(std::move(f));
      else
        rest.push_back(std::move(f));
    }
    if (!involved.empty()) {
      VEFactor joint = multiplyAll(gm, involved);
      rest.push_back(sumOutVar(gm, joint, best));
    }
    fs = std::move(rest);
    remaining.erase(best);
  }

  VEFactor final = multiplyAll(gm, fs);
  std::vector<double> dist(static_cast<std::size_t>(gm.rangeOf(q)), 1.0);
  if (!final.vars.empty()) dist = final.table;
  double z = std::accumulate(dist.begin(), dist.end(), 0.0);
  if (z <= 0)
    throw StructuralError("zero partition function in ground VE");
  for (double& d : dist) d /= z;
  return dist;
}

std::vector<double> jointEnumerate(const GroundModel& gm) {
  std::vector<int> all(gm.randvars.size());
  std::iota(all.begin(), all.end(), 0);
  return marginalJointTable(gm, all);
}

std::vector<double> marginalJointTable(const GroundModel& gm,
                                       const std::vector<int>& keep) {
  double bits = 0;
  for (const auto& rv : gm.randvars)
    bits += std::log2(static_cast<double>(rv.pred->rangeSize()));
  if (bits > 26.0)
    throw SizeCapError("joint enumeration over too many randvars");

  std::vector<int> all(gm.randvars.size());
  std::iota(all.begin(), all.end(), 0);
  std::size_t totalAll = veTableSize(gm, all);
  std::size_t totalKeep = veTableSize(gm, keep);
  std::vector<double> out(totalKeep, 0.0);
  std::vector<VEFactor> fs = initialFactors(gm);
  std::vector<int> assignment(gm.randvars.size());
  for (std::size_t flat = 0; flat < totalAll; ++flat) {
    std::size_t rem = flat;
    for (std::size_t i = gm.randvars.size(); i-- > 0;) {
      assignment[i] =
          static_cast<int>(rem % static_cast<std::size_t>(
                                     gm.rangeOf(static_cast<int>(i))));
      rem /= static_cast<std::size_t>(gm.rangeOf(static_cast<int>(i)));
    }
    double prod = 1.0;
    for (const auto& f : fs) {
      std::size_t idx = 0;
      for (int v : f.vars)
        idx = idx * static_cast<std::size_t>(gm.rangeOf(v)) +
              static_cast<std::size_t>(assignment[static_cast<std::size_t>(v)]);
      prod *= f.table[idx];
      if (prod == 0.0) break;
    }
    std::size_t idxKeep = 0;
    for (int v : keep)
      idxKeep = idxKeep * static_cast<std::size_t>(gm.rangeOf(v)) +
                static_cast<std::size_t>(assignment[static_cast<std::size_t>(v)]);
    out[idxKeep] += prod;
  }
  return out;
}

}  // namespace lve
