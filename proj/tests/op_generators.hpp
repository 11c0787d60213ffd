#pragma once

// Randomized generators of applicable operator instances, shared by the
// unit tests and the acceptance suite. Every instance is small enough for
// joint enumeration, which is what the equivalence checks run on.

#include <random>

#include "lve/operators.hpp"
#include "test_helpers.hpp"

namespace lvetest {

using namespace lve;

struct OpWorld {
  DomainPtr dx, dy, dz;
  PredicatePtr P;   // P(dx)
  PredicatePtr F;   // F(dx, dy)
  PredicatePtr Q;   // Q(dy)

  explicit OpWorld(std::mt19937_64& rng, int maxRange = 3) {
    // Kept small enough that the joint-enumeration oracle stays cheap.
    int nx = 2 + static_cast<int>(rng() % 2);
    int ny = 2 + static_cast<int>(rng() % 2);
    dx = makeDomain("dx", "x", nx);
    dy = makeDomain("dy", "y", ny);
    dz = makeDomain("dz", "z", 2);
    auto range = [&](const char* base) {
      std::vector<std::string> r{"v0", "v1", "v2"};
      r.resize(2 + rng() % static_cast<std::uint64_t>(maxRange - 1));
      for (auto& s : r) s = std::string(base) + s;
      return r;
    };
    P = makePredicate("P", {dx}, range("p"));
    F = makePredicate("F", {dx, dy}, range("f"));
    Q = makePredicate("Q", {dy}, range("q"));
  }
};

/// A random nonempty subset relation over the given logvars.
inline ConstraintTree randomRelation(const std::vector<LogVar>& vars,
                                     std::mt19937_64& rng,
                                     int keepPercent = 60) {
  std::vector<std::vector<int>> tuples;
  std::size_t total = 1;
  for (const auto& v : vars) total *= v.domain()->size();
  while (tuples.empty()) {
    for (std::size_t t = 0; t < total; ++t) {
      if (static_cast<int>(rng() % 100) >= keepPercent) continue;
      std::vector<int> tuple;
      std::size_t rem = t;
      for (const auto& v : vars) {
        tuple.push_back(static_cast<int>(rem % v.domain()->size()));
        rem /= v.domain()->size();
      }
      tuples.push_back(std::move(tuple));
    }
  }
  return ConstraintTree::fromTuples(vars, tuples);
}

/// A relation where every X-value pairs with the same number of Y-values
/// (count-normalized by construction, not necessarily a product).
inline ConstraintTree normalizedRelation(const LogVar& x, const LogVar& y,
                                         std::mt19937_64& rng) {
  std::size_t ny = y.domain()->size();
  std::size_t k = 1 + rng() % ny;
  std::vector<std::vector<int>> tuples;
  for (std::size_t xi = 0; xi < x.domain()->size(); ++xi) {
    std::vector<int> ys(ny);
    for (std::size_t i = 0; i < ny; ++i) ys[i] = static_cast<int>(i);
    std::shuffle(ys.begin(), ys.end(), rng);
    for (std::size_t i = 0; i < k; ++i)
      tuples.push_back({static_cast<int>(xi), ys[i]});
  }
  return ConstraintTree::fromTuples({x, y}, tuples);
}

struct SumOutInstance {
  ParfactorPtr g;
  std::size_t argIndex;
};

inline SumOutInstance genSumOut(std::mt19937_64& rng) {
  OpWorld w(rng);
  LogVar X = LogVar::fresh("X", w.dx);
  LogVar Y = LogVar::fresh("Y", w.dy);
  switch (rng() % 3) {
    case 0: {
      // Sum F(X,Y) out of phi(F(X,Y), P(X)); Y-count uniform per x.
      ConstraintTree c = normalizedRelation(X, Y, rng);
      return {randomTablePf({Atom(w.F, {Term(X), Term(Y)}),
                             Atom(w.P, {Term(X)})},
                            c, rng),
              0};
    }
    case 1: {
      // Single-argument counting formula: sum the whole group.
      LogVar Xc = LogVar::fresh("Xc", w.dx);
      ConstraintTree cc = randomRelation({Xc}, rng);
      return {randomTablePf(
                  {ParfactorArg(CountingFormula(Atom(w.P, {Term(Xc)}), Xc))},
                  cc, rng),
              0};
    }
    default: {
      // Sum P(X) out of phi(P(X), #Y[F(X,Y)]).
      ConstraintTree c = ConstraintTree::fullProduct({X, Y});
      return {randomTablePf(
                  {Atom(w.P, {Term(X)}),
                   ParfactorArg(
                       CountingFormula(Atom(w.F, {Term(X), Term(Y)}), Y))},
                  c, rng),
              0};
    }
  }
}

struct MultiplyInstance {
  ParfactorPtr g1, g2;
  Alignment theta;
};

inline MultiplyInstance genMultiply(std::mt19937_64& rng) {
  OpWorld w(rng);
  LogVar X1 = LogVar::fresh("X1", w.dx);
  LogVar X2 = LogVar::fresh("X2", w.dx);
  LogVar Y2 = LogVar::fresh("Y2", w.dy);
  ConstraintTree base = randomRelation({X1}, rng);

  ParfactorPtr g1 = randomTablePf({Atom(w.P, {Term(X1)})}, base, rng);
  ParfactorPtr g2;
  if (rng() % 2) {
    // 1:1 alignment on the shared unary group.
    g2 = randomTablePf({Atom(w.P, {Term(X2)})}, base.rename({{X1, X2}}), rng);
  } else {
    // m:n alignment: g2 carries an extra logvar, count-normalized.
    ConstraintTree ext = normalizedRelation(X2, Y2, rng);
    // Restrict to the shared x-values so projections agree.
    ext = ext.join(base.rename({{X1, X2}}));
    // The join may lose x-values with no y's; rebuild base accordingly.
    ConstraintTree shrunk = ext.project({X2}).rename({{X2, X1}});
    g1 = randomTablePf({Atom(w.P, {Term(X1)})}, shrunk, rng);
    g2 = randomTablePf(
        {Atom(w.P, {Term(X2)}), Atom(w.F, {Term(X2), Term(Y2)})}, ext, rng);
  }
  auto alignments = findAlignments(*g1, *g2);
  for (const auto& a : alignments)
    if (!a.matchedArgs.empty()) return {g1, g2, a};
  throw StructuralError("generator failed to align");
}

struct CountConvertInstance {
  ParfactorPtr g;
  LogVar x;
};

inline CountConvertInstance genCountConvert(std::mt19937_64& rng) {
  OpWorld w(rng);
  LogVar X = LogVar::fresh("X", w.dx);
  LogVar Y = LogVar::fresh("Y", w.dy);
  if (rng() % 2) {
    // phi(F(X,Y), Q(Y)): convert X (count-normalized w.r.t. Y).
    ConstraintTree c = normalizedRelation(Y, X, rng).project({X, Y});
    return {randomTablePf(
                {Atom(w.F, {Term(X), Term(Y)}), Atom(w.Q, {Term(Y)})}, c,
                rng),
            X};
  }
  // phi(P(X), #Y[Q(Y)]) with an existing counted logvar; the constraint
  // is a product so the independence precondition holds.
  ConstraintTree c = ConstraintTree::fullProduct({X, Y});
  return {randomTablePf(
              {Atom(w.P, {Term(X)}),
               ParfactorArg(CountingFormula(Atom(w.Q, {Term(Y)}), Y))},
              c, rng),
          X};
}

struct SplitInstance {
  ParfactorPtr g;
  std::size_t argIndex;
  Coverage other;
};

inline SplitInstance genSplit(std::mt19937_64& rng) {
  OpWorld w(rng);
  LogVar X = LogVar::fresh("X", w.dx);
  LogVar Y = LogVar::fresh("Y", w.dy);
  ConstraintTree c = randomRelation({X, Y}, rng);
  ParfactorPtr g =
      randomTablePf({Atom(w.F, {Term(X), Term(Y)})}, c, rng);
  LogVar Xo = LogVar::fresh("Xo", w.dx);
  LogVar Yo = LogVar::fresh("Yo", w.dy);
  Coverage other{w.F, {Xo, Yo}, randomRelation({Xo, Yo}, rng, 50)};
  return {g, 0, other};
}

struct ExpandInstance {
  ParfactorPtr g;
  std::size_t argIndex;
  Coverage other;
};

inline ExpandInstance genExpand(std::mt19937_64& rng) {
  OpWorld w(rng);
  LogVar X = LogVar::fresh("X", w.dx);
  LogVar Y = LogVar::fresh("Y", w.dy);
  bool withContext = rng() % 2;
  ConstraintTree c = withContext ? ConstraintTree::fullProduct({X, Y})
                                 : normalizedRelation(X, Y, rng);
  std::vector<ParfactorArg> args;
  if (withContext) args.emplace_back(Atom(w.P, {Term(X)}));
  args.emplace_back(CountingFormula(Atom(w.F, {Term(X), Term(Y)}), Y));
  ParfactorPtr g = randomTablePf(args, c, rng);
  LogVar Xo = LogVar::fresh("Xo", w.dx);
  LogVar Yo = LogVar::fresh("Yo", w.dy);
  Coverage other{w.F, {Xo, Yo}, randomRelation({Xo, Yo}, rng, 50)};
  return {g, withContext ? std::size_t{1} : std::size_t{0}, other};
}

struct NormalizeInstance {
  ParfactorPtr g;
  std::vector<LogVar> Y, Z;
};

inline NormalizeInstance genCountNormalize(std::mt19937_64& rng) {
  OpWorld w(rng);
  LogVar X = LogVar::fresh("X", w.dx);
  LogVar Y = LogVar::fresh("Y", w.dy);
  ConstraintTree c = randomRelation({X, Y}, rng);
  ParfactorPtr g =
      randomTablePf({Atom(w.F, {Term(X), Term(Y)})}, c, rng);
  return {g, {Y}, {X}};
}

struct AbsorbInstance {
  ParfactorPtr g;
  std::size_t argIndex;
  EvidenceParfactor evidence;
  ParfactorPtr evidenceAsParfactor;  // indicator table, for the oracle
};

inline AbsorbInstance genAbsorb(std::mt19937_64& rng) {
  OpWorld w(rng);
  LogVar X = LogVar::fresh("X", w.dx);
  LogVar Y = LogVar::fresh("Y", w.dy);
  bool crv = rng() % 2;
  ConstraintTree c = crv ? ConstraintTree::fullProduct({X, Y})
                         : normalizedRelation(X, Y, rng);
  std::vector<ParfactorArg> args;
  if (crv)
    args.emplace_back(CountingFormula(Atom(w.F, {Term(X), Term(Y)}), Y));
  else
    args.emplace_back(Atom(w.F, {Term(X), Term(Y)}));
  args.emplace_back(Atom(w.P, {Term(X)}));
  ParfactorPtr g = randomTablePf(args, c, rng);

  int value = static_cast<int>(rng() % w.F->rangeSize());
  LogVar Xe = LogVar::fresh("Xe", w.dx);
  LogVar Ye = LogVar::fresh("Ye", w.dy);
  ConstraintTree ce = ConstraintTree::fullProduct({Xe, Ye});
  EvidenceParfactor e{w.F, {Xe, Ye}, ce, value};

  ParfactorPtr epf = Parfactor::make(
      {ParfactorArg(Atom(w.F, {Term(Xe), Term(Ye)}))},
      [&](const std::vector<int>& v) { return v[0] == value ? 1.0 : 0.0; },
      NumericMode::Linear, ce);
  return {g, 0, e, epf};
}

struct GroundInstance {
  ParfactorPtr g;
  LogVar x;
};

inline GroundInstance genGroundLogvar(std::mt19937_64& rng) {
  OpWorld w(rng);
  LogVar X = LogVar::fresh("X", w.dx);
  LogVar Y = LogVar::fresh("Y", w.dy);
  ConstraintTree c = randomRelation({X, Y}, rng);
  ParfactorPtr g = randomTablePf(
      {Atom(w.F, {Term(X), Term(Y)}), Atom(w.P, {Term(X)})}, c, rng);
  return {g, rng() % 2 ? X : Y};
}

}  // namespace lvetest
