#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "lve/constraint.hpp"
#include "test_helpers.hpp"

using namespace lve;

namespace {

// The parent/child relation: every child has two parents, parents have
// one or two children.
struct ParentChild {
  DomainPtr parents = makeDomain("parents", {"ann", "bob", "carl", "debbie"});
  DomainPtr children = makeDomain("children", {"eric", "finn", "gemma"});
  LogVar P = LogVar::fresh("P", parents);
  LogVar C = LogVar::fresh("C", children);
  ConstraintTree rel = ConstraintTree::fromTuples(
      {P, C},
      {{0, 0}, {1, 0}, {2, 1}, {3, 1}, {2, 2}, {3, 2}});
};

// The professor/student supervision relation.
struct Supervision {
  DomainPtr profs = makeDomain("profs", {"p1", "p2", "p3", "p4", "p5"});
  DomainPtr studs = makeDomain("studs", {"s1", "s2", "s3", "s4", "s5", "s6"});
  LogVar P = LogVar::fresh("P", profs);
  LogVar S = LogVar::fresh("S", studs);
  ConstraintTree rel = ConstraintTree::fromTuples(
      {P, S},
      {{0, 0}, {0, 1}, {1, 1}, {1, 2}, {2, 4}, {3, 2}, {3, 3}, {4, 5}});
};

std::set<std::vector<int>> asSet(const std::vector<std::vector<int>>& ts) {
  return {ts.begin(), ts.end()};
}

}  // namespace

TEST_CASE("fromTuples/toTuples round-trip and maximal merging") {
  DomainPtr x = makeDomain("x", {"ann", "bob", "carl"});
  DomainPtr y = makeDomain("y", {"dave", "ed", "fred", "gina"});
  LogVar X = LogVar::fresh("X", x);
  LogVar Y = LogVar::fresh("Y", y);

  std::vector<std::vector<int>> tuples;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 4; ++b) tuples.push_back({a, b});
  ConstraintTree t = ConstraintTree::fromTuples({X, Y}, tuples);
  CHECK(t.cardinality() == 12);
  CHECK(asSet(t.tuples()) == asSet(tuples));

  // The full product merges into a single path.
  ConstraintTree prod = ConstraintTree::product({X, Y},
                                                {{0, 1, 2}, {0, 1, 2, 3}});
  CHECK(t.structurallyEqual(prod));

  // Canonicality: rebuilding from the extension reproduces the tree.
  ConstraintTree again = ConstraintTree::fromTuples({X, Y}, t.tuples());
  CHECK(t.structurallyEqual(again));

  ConstraintTree none = ConstraintTree::fromTuples({X, Y}, {});
  CHECK(none.isEmpty());
  CHECK(none.cardinality() == 0);

  ConstraintTree single = ConstraintTree::fromTuples({X, Y}, {{0, 1}});
  CHECK(single.cardinality() == 1);
  CHECK(single.contains({0, 1}));
  CHECK(!single.contains({0, 2}));
}

TEST_CASE("projection discards lower levels") {
  ParentChild ex;
  auto proj = ex.rel.project({ex.P});
  CHECK(asSet(proj.tuples()) ==
        asSet({{0}, {1}, {2}, {3}}));
  // Projection onto all vars is the identity.
  auto all = ex.rel.project({ex.P, ex.C});
  CHECK(all.structurallyEqual(ex.rel));
  CHECK_THROWS_AS(ex.rel.project({LogVar::fresh("Z", ex.parents)}),
                  StructuralError);
}

TEST_CASE("selection and self-join") {
  Supervision ex;
  auto sel = ex.rel.selectEq(ex.P, 0);
  CHECK(asSet(sel.tuples()) == asSet({{0, 0}, {0, 1}}));
  CHECK(ex.rel.join(ex.rel).structurallyEqual(ex.rel));
}

TEST_CASE("rename and product of a common/exclusive split") {
  DomainPtr dom = makeDomain("dom", "x", 100);
  LogVar X = LogVar::fresh("X", dom);
  std::vector<int> first40, rest60, all100;
  for (int i = 0; i < 100; ++i) {
    all100.push_back(i);
    (i < 40 ? first40 : rest60).push_back(i);
  }
  ConstraintTree c1 = ConstraintTree::product({X}, {all100});
  ConstraintTree c2 = ConstraintTree::product({X}, {first40});
  auto [com, excl] = c1.splitOnOverlap(c2, {X}, {X});
  CHECK(com.cardinality() == 40);
  CHECK(excl.cardinality() == 60);
  CHECK(asSet(com.tuples()) ==
        asSet(ConstraintTree::product({X}, {first40}).tuples()));

  LogVar X1 = LogVar::fresh("X1", dom);
  LogVar X2 = LogVar::fresh("X2", dom);
  ConstraintTree joined = com.rename({{X, X1}}).join(excl.rename({{X, X2}}));
  CHECK(joined.cardinality() == 2400);
  CHECK(joined.arity() == 2);
}

TEST_CASE("splitOnOverlap partitions an every-other-x relation") {
  DomainPtr dx = makeDomain("dx", "x", 50);
  DomainPtr dy = makeDomain("dy", "y", 50);
  DomainPtr dz = makeDomain("dz", "z", 5);
  LogVar X = LogVar::fresh("X", dx);
  LogVar Y = LogVar::fresh("Y", dy);
  LogVar Z = LogVar::fresh("Z", dz);
  LogVar X2 = LogVar::fresh("X2", dx);
  LogVar Y2 = LogVar::fresh("Y2", dy);

  ConstraintTree c1 = ConstraintTree::fullProduct({X, Y, Z});
  std::vector<int> evens;
  for (int i = 1; i < 50; i += 2) evens.push_back(i);  // every second x
  ConstraintTree c2 = ConstraintTree::product(
      {X2, Y2}, {evens, [] {
                   std::vector<int> all;
                   for (int i = 0; i < 50; ++i) all.push_back(i);
                   return all;
                 }()});

  auto [com, excl] = c1.splitOnOverlap(c2, {X, Y}, {X2, Y2});
  CHECK(com.cardinality() == 25u * 50u * 5u);
  CHECK(excl.cardinality() == 25u * 50u * 5u);
  CHECK(com.cardinality() + excl.cardinality() == c1.cardinality());
  for (const auto& t : com.tuples())
    if (excl.contains(t)) FAIL("overlap between partition cells");

  // Disjoint constraints: everything is exclusive.
  ConstraintTree offDomain = ConstraintTree::product(
      {LogVar::fresh("X3", dx)}, {{0}});
  ConstraintTree c3 = ConstraintTree::product({X, Y, Z},
                                              {{1}, {2}, {0, 1}});
  auto [com2, excl2] = c3.splitOnOverlap(offDomain, {X},
                                         {offDomain.logvars()[0]});
  CHECK(com2.isEmpty());
  CHECK(excl2.structurallyEqual(c3));
}

TEST_CASE("count function on the parent/child relation") {
  ParentChild ex;
  // Every child has two parents.
  CHECK(ex.rel.countFor({ex.P}, {ex.C}, {0, 0}) == 2);
  CHECK(ex.rel.countFor({ex.P}, {ex.C}, {2, 2}) == 2);
  // Ann has one child; Carl has two.
  CHECK(ex.rel.countFor({ex.C}, {ex.P}, {0, 0}) == 1);
  CHECK(ex.rel.countFor({ex.C}, {ex.P}, {2, 1}) == 2);
  // COUNT with empty Y is 1.
  CHECK(ex.rel.countFor({}, {ex.P}, {0, 0}) == 1);
  CHECK_THROWS_AS(ex.rel.countFor({ex.P}, {ex.C}, {0, 1}),
                  PreconditionError);
}

TEST_CASE("count-normalization checks") {
  ParentChild ex;
  auto n = ex.rel.conditionalCount({ex.P}, {ex.C});
  REQUIRE(n.has_value());
  CHECK(*n == 2);
  CHECK(!ex.rel.conditionalCount({ex.C}, {ex.P}).has_value());

  // A full Cartesian product is count-normalized at the domain size.
  DomainPtr d = makeDomain("d", "v", 7);
  LogVar A = LogVar::fresh("A", d);
  LogVar B = LogVar::fresh("B", d);
  auto m = ConstraintTree::fullProduct({A, B}).conditionalCount({B}, {A});
  REQUIRE(m.has_value());
  CHECK(*m == 7);
}

TEST_CASE("groupByCount splits professors by student count") {
  Supervision ex;
  auto cells = ex.rel.groupByCount({ex.S}, {ex.P});
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].first == 1);
  CHECK(asSet(cells[0].second.tuples()) == asSet({{2, 4}, {4, 5}}));
  CHECK(cells[1].first == 2);
  CHECK(cells[1].second.cardinality() == 6);

  // Each cell is count-normalized afterwards.
  for (const auto& [key, cell] : cells) {
    auto n = cell.conditionalCount({ex.S}, {ex.P});
    REQUIRE(n.has_value());
    CHECK(*n == key);
  }

  // A constant key function yields a single cell.
  auto one = ex.rel.groupByCount({}, {ex.P});
  REQUIRE(one.size() == 1);
  CHECK(one[0].second.structurallyEqual(ex.rel));
}

TEST_CASE("groupByJointCount reproduces the friendship grouping") {
  DomainPtr dx = makeDomain("people", {"ann", "bob", "carl"});
  DomainPtr dy = makeDomain("friends", {"dave", "ed", "fred", "gina"});
  LogVar X = LogVar::fresh("X", dx);
  LogVar Y = LogVar::fresh("Y", dy);
  ConstraintTree c = ConstraintTree::fullProduct({X, Y});
  CHECK(c.cardinality() == 12);

  LogVar X2 = LogVar::fresh("X2", dx);
  LogVar Y2 = LogVar::fresh("Y2", dy);
  ConstraintTree cPrime =
      ConstraintTree::product({X2, Y2}, {{0, 1}, {0, 1}});

  auto [com, excl] = c.splitOnOverlap(cPrime, {X, Y}, {X2, Y2});
  CHECK(com.cardinality() == 4);
  CHECK(excl.cardinality() == 8);

  auto cells = c.groupByJointCount(Y, com, excl);
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].first == std::make_pair(std::uint64_t{0}, std::uint64_t{4}));
  CHECK(asSet(cells[0].second.project({X}).tuples()) == asSet({{2}}));
  CHECK(cells[0].second.cardinality() == 4);
  CHECK(cells[1].first == std::make_pair(std::uint64_t{2}, std::uint64_t{2}));
  CHECK(asSet(cells[1].second.project({X}).tuples()) == asSet({{0}, {1}}));
  CHECK(cells[1].second.cardinality() == 8);
}

TEST_CASE("reorder preserves the extension") {
  DomainPtr dx = makeDomain("dx", "x", 9);
  DomainPtr dy = makeDomain("dy", "y", 10);
  DomainPtr dz = makeDomain("dz", "z", 5);
  LogVar X = LogVar::fresh("X", dx);
  LogVar Y = LogVar::fresh("Y", dy);
  LogVar Z = LogVar::fresh("Z", dz);
  std::vector<std::vector<int>> tuples;
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 10; ++y)
      for (int z = 0; z < 5; ++z) tuples.push_back({x, y, z});
  for (int x = 3; x < 6; ++x)
    for (int y = 0; y < 4; ++y)
      for (int z = 2; z < 5; ++z) tuples.push_back({x, y, z});
  for (int y = 5; y < 10; ++y) tuples.push_back({7, y, 0});
  ConstraintTree t = ConstraintTree::fromTuples({X, Y, Z}, tuples);

  auto reordered = t.reorder({Z, Y, X});
  CHECK(reordered.cardinality() == t.cardinality());
  auto back = reordered.project({X, Y, Z});
  CHECK(back.structurallyEqual(t));
  // Identity reorder returns a structurally equal tree.
  CHECK(t.reorder({X, Y, Z}).structurallyEqual(t));
}

TEST_CASE("randomized oracle equivalence against tuple sets") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 120; ++trial) {
    int arity = 1 + static_cast<int>(rng() % 4);
    std::vector<LogVar> vars;
    for (int i = 0; i < arity; ++i) {
      int size = 2 + static_cast<int>(rng() % 5);
      vars.push_back(
          LogVar::fresh("V" + std::to_string(i),
                        makeDomain("d" + std::to_string(i), "c", size)));
    }
    auto randomRelation = [&](const std::vector<LogVar>& vs) {
      std::vector<std::vector<int>> tuples;
      std::size_t total = 1;
      for (const auto& v : vs) total *= v.domain()->size();
      for (std::size_t t = 0; t < total; ++t) {
        if (rng() % 100 >= 55) continue;
        std::vector<int> tuple;
        std::size_t rem = t;
        for (const auto& v : vs) {
          tuple.push_back(static_cast<int>(rem % v.domain()->size()));
          rem /= v.domain()->size();
        }
        tuples.push_back(std::move(tuple));
      }
      return tuples;
    };

    auto tuples = randomRelation(vars);
    if (tuples.empty()) continue;
    ConstraintTree tree = ConstraintTree::fromTuples(vars, tuples);
    TupleSet ts(vars, tuples);

    CHECK(tree.cardinality() == ts.size());
    CHECK(asSet(tree.tuples()) == asSet(ts.tuples()));

    // project
    std::vector<LogVar> someVars;
    for (const auto& v : vars)
      if (rng() % 2) someVars.push_back(v);
    if (someVars.empty()) someVars.push_back(vars[0]);
    CHECK(asSet(tree.project(someVars).tuples()) ==
          asSet(ts.project(someVars).tuples()));

    // selectEq
    const LogVar& sv = vars[rng() % vars.size()];
    int valueIdx = static_cast<int>(rng() % sv.domain()->size());
    CHECK(asSet(tree.selectEq(sv, valueIdx).tuples()) ==
          asSet(ts.selectEq(sv, valueIdx).tuples()));

    // conditional counts
    std::vector<LogVar> Y, Z;
    for (const auto& v : vars) {
      int coin = static_cast<int>(rng() % 3);
      if (coin == 0) Y.push_back(v);
      else if (coin == 1) Z.push_back(v);
    }
    CHECK(tree.conditionalCount(Y, Z) == ts.conditionalCount(Y, Z));
    if (!Y.empty()) {
      auto cells = tree.groupByCount(Y, Z);
      std::uint64_t covered = 0;
      for (const auto& [key, cell] : cells) {
        covered += cell.cardinality();
        TupleSet cellTs = TupleSet::fromTree(cell);
        auto n = cellTs.conditionalCount(Y, Z);
        REQUIRE(n.has_value());
        CHECK(*n == key);
      }
      CHECK(covered == tree.cardinality());
    }

    // splitOnOverlap against a second random relation over a var subset
    std::vector<LogVar> overlapVars;
    for (const auto& v : vars)
      if (rng() % 2) overlapVars.push_back(v);
    if (overlapVars.empty()) overlapVars.push_back(vars[0]);
    std::vector<LogVar> otherVars;
    for (const auto& v : overlapVars)
      otherVars.push_back(LogVar::fresh(v.name() + "o", v.domain()));
    auto otherTuples = randomRelation(otherVars);
    if (!otherTuples.empty()) {
      ConstraintTree other = ConstraintTree::fromTuples(otherVars, otherTuples);
      TupleSet otherTs(otherVars, otherTuples);
      auto [tc, te] = tree.splitOnOverlap(other, overlapVars, otherVars);
      auto [sc, se] = ts.splitOnOverlap(otherTs, overlapVars, otherVars);
      CHECK(asSet(tc.tuples()) == asSet(sc.tuples()));
      CHECK(asSet(te.tuples()) == asSet(se.tuples()));

      // join on renamed shared columns
      std::vector<std::pair<LogVar, LogVar>> renames;
      for (std::size_t i = 0; i < overlapVars.size(); ++i)
        renames.emplace_back(otherVars[i], overlapVars[i]);
      ConstraintTree joined = tree.join(other.rename(renames));
      TupleSet joinedTs = ts.join(otherTs.rename(renames));
      CHECK(joined.cardinality() == joinedTs.size());
      if (!joined.isEmpty())
        CHECK(asSet(joined.project(joinedTs.logvars()).tuples()) ==
              asSet(joinedTs.tuples()));
    }

    // reorder: any permutation preserves the extension
    std::vector<LogVar> perm = vars;
    std::shuffle(perm.begin(), perm.end(), rng);
    ConstraintTree reordered = tree.reorder(perm);
    CHECK(asSet(reordered.project(vars).tuples()) == asSet(tree.tuples()));
    // ... and the reordered tree is canonical for its own order.
    ConstraintTree rebuilt =
        ConstraintTree::fromTuples(perm, reordered.tuples());
    CHECK(rebuilt.structurallyEqual(reordered));
  }
}

TEST_CASE("groupByValue partitions by a column") {
  Supervision ex;
  auto cells = ex.rel.groupByValue(ex.P);
  REQUIRE(cells.size() == 5);
  std::uint64_t total = 0;
  for (const auto& [value, cell] : cells) {
    total += cell.cardinality();
    for (const auto& t : cell.tuples()) CHECK(t[0] == value);
  }
  CHECK(total == ex.rel.cardinality());
}

TEST_CASE("duplicateColumn ties a fresh column to an existing one") {
  DomainPtr d = makeDomain("d", "v", 4);
  LogVar A = LogVar::fresh("A", d);
  LogVar B = LogVar::fresh("B", d);
  ConstraintTree t = ConstraintTree::fromTuples({A}, {{0}, {2}, {3}});
  ConstraintTree dup = t.duplicateColumn(A, B);
  CHECK(dup.arity() == 2);
  CHECK(asSet(dup.tuples()) == asSet({{0, 0}, {2, 2}, {3, 3}}));
}

TEST_CASE("dump renders a stable indented listing") {
  ParentChild ex;
  std::string text = ex.rel.dump();
  CHECK(text.find("P in {ann,bob}") != std::string::npos);
  CHECK(text.find("C in {eric}") != std::string::npos);
  CHECK(ex.rel.dump() == text);
}
