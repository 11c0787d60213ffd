#include <doctest.h>

#include <map>
#include <random>

#include "lve/parfactor.hpp"
#include "lve/potential.hpp"
#include "lve/types.hpp"
#include "test_helpers.hpp"

using namespace lve;
using lvetest::boolRange;

TEST_CASE("histogramRange enumerates count vectors, descending") {
  auto hs = histogramRange(2, 3);
  REQUIRE(hs.size() == 4);
  CHECK(hs[0].counts == std::vector<int>{3, 0});
  CHECK(hs[1].counts == std::vector<int>{2, 1});
  CHECK(hs[2].counts == std::vector<int>{1, 2});
  CHECK(hs[3].counts == std::vector<int>{0, 3});

  auto single = histogramRange(1, 5);
  REQUIRE(single.size() == 1);
  CHECK(single[0].counts == std::vector<int>{5});

  CHECK(histogramRange(3, 2).size() == 6);
  CHECK(histogramRangeSize(3, 2) == 6);
}

TEST_CASE("histogramRange matches brute-force enumeration") {
  // Bucket all r^n assignments by their histogram; the enumeration must
  // produce exactly that set, and multiplicities must count the buckets.
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    int r = 1 + static_cast<int>(rng() % 4);
    int n = static_cast<int>(rng() % 9);
    std::map<std::vector<int>, std::uint64_t> buckets;
    std::uint64_t total = 1;
    for (int i = 0; i < n; ++i) total *= static_cast<std::uint64_t>(r);
    for (std::uint64_t a = 0; a < total; ++a) {
      std::vector<int> counts(static_cast<std::size_t>(r), 0);
      std::uint64_t rem = a;
      for (int i = 0; i < n; ++i) {
        ++counts[rem % static_cast<std::uint64_t>(r)];
        rem /= static_cast<std::uint64_t>(r);
      }
      ++buckets[counts];
    }
    auto enumerated = histogramRange(r, n);
    REQUIRE(enumerated.size() == buckets.size());
    for (const auto& h : enumerated) {
      auto it = buckets.find(h.counts);
      REQUIRE(it != buckets.end());
      CHECK(multiplicity(h) == doctest::Approx(static_cast<double>(it->second)));
    }
    // No duplicates.
    for (std::size_t i = 1; i < enumerated.size(); ++i)
      CHECK(enumerated[i].counts != enumerated[i - 1].counts);
  }
}

TEST_CASE("histogramAdd is pointwise and checks key sets") {
  Histogram a{{2, 1}}, b{{1, 3}};
  CHECK(histogramAdd(a, b).counts == std::vector<int>{3, 4});
  Histogram zero{{0, 0}};
  CHECK(histogramAdd(a, zero).counts == a.counts);
  CHECK(histogramAdd(Histogram{{2, 0}}, Histogram{{0, 4}}).counts ==
        std::vector<int>{2, 4});
  CHECK_THROWS_AS(histogramAdd(a, Histogram{{1, 1, 1}}), StructuralError);
}

TEST_CASE("multiplicity is the multinomial coefficient") {
  CHECK(multiplicity(Histogram{{2, 1}}) == doctest::Approx(3.0));
  CHECK(multiplicity(Histogram{{7, 0, 0}}) == doctest::Approx(1.0));
  // Sum of multiplicities over all histograms is r^n.
  for (int r = 1; r <= 4; ++r) {
    for (int n = 0; n <= 10; ++n) {
      double sum = 0;
      for (const auto& h : histogramRange(r, n)) sum += multiplicity(h);
      CHECK(sum == doctest::Approx(std::pow(r, n)));
    }
  }
  // Large totals fall back to log space without losing much precision.
  Histogram big{{500, 500}};
  CHECK(std::log(multiplicity(big)) ==
        doctest::Approx(logMultiplicity(big)).epsilon(1e-9));
}

TEST_CASE("mulFor is 1 on atoms and the multiplicity on counting args") {
  ArgSpace atomSpace = ArgSpace::atom(2);
  CHECK(atomSpace.mulFor(0) == 1.0);
  CHECK(atomSpace.mulFor(1) == 1.0);

  ArgSpace crv = ArgSpace::counting(2, 3);
  int i21 = crv.indexOfHistogram(Histogram{{2, 1}});
  CHECK(crv.mulFor(i21) == doctest::Approx(3.0));
  int i03 = crv.indexOfHistogram(Histogram{{0, 3}});
  CHECK(crv.mulFor(i03) == doctest::Approx(1.0));
}

TEST_CASE("potential build/lookup round-trips; empty product is scalar") {
  // phi1 and phi2 of the worked two-factor example.
  std::vector<ArgSpace> s1{ArgSpace::atom(2), ArgSpace::atom(2)};
  // (A1, S) rows: tt, tf, ft, ff
  Potential phi1 = Potential::fromValues(s1, {1, 2, 2, 1}, NumericMode::Linear);
  CHECK(phi1.lookup({0, 0}) == 1.0);   // A1=true, S=true
  CHECK(phi1.lookup({1, 0}) == 2.0);   // A1=false, S=true

  std::vector<ArgSpace> s2{ArgSpace::atom(2), ArgSpace::atom(2)};
  // (T, A1) with T in {SRL, DB}: rows SRL/true, SRL/false, DB/true, DB/false
  Potential phi2 = Potential::fromValues(s2, {3, 1, 2, 2}, NumericMode::Linear);
  CHECK(phi2.lookup({0, 0}) == 3.0);   // T=SRL, A1=true

  Potential scalar = Potential::constant(4.5, NumericMode::Linear);
  CHECK(scalar.size() == 1);
  CHECK(scalar.lookup({}) == 4.5);

  // build/lookup round-trip on a random function.
  std::vector<ArgSpace> s3{ArgSpace::atom(3), ArgSpace::counting(2, 2),
                           ArgSpace::atom(2)};
  std::mt19937_64 rng(3);
  std::map<std::vector<int>, double> fn;
  Potential built = Potential::build(
      s3,
      [&](const std::vector<int>& v) {
        double x = static_cast<double>(rng() % 1000) / 1000.0 + 0.001;
        fn[v] = x;
        return x;
      },
      NumericMode::Linear);
  for (const auto& [v, x] : fn) CHECK(built.lookup(v) == doctest::Approx(x));
  CHECK_THROWS_AS(built.lookup({0, 0, 5}), StructuralError);
}

TEST_CASE("type invariants reject malformed values") {
  CHECK_THROWS_AS(makeDomain("d", std::vector<std::string>{}),
                  StructuralError);
  CHECK_THROWS_AS(makeDomain("d", {"a", "a"}), StructuralError);
  CHECK_THROWS_AS(makePredicate("P", {}, {}), StructuralError);

  DomainPtr d = makeDomain("people", {"ann", "bob"});
  PredicatePtr p = makePredicate("P", {d, d}, boolRange());
  LogVar x = LogVar::fresh("X", d);
  CHECK_THROWS_AS(Atom(p, {Term(x)}), StructuralError);  // arity
  DomainPtr other = makeDomain("other", {"q"});
  LogVar y = LogVar::fresh("Y", other);
  CHECK_THROWS_AS(Atom(p, {Term(x), Term(y)}), StructuralError);  // domain

  // Counted logvar must occur exactly once.
  Atom diag(p, {Term(x), Term(x)});
  CHECK_THROWS_AS(CountingFormula(diag, x), StructuralError);
}

TEST_CASE("linearize separates repeated logvars") {
  DomainPtr d = makeDomain("dom", {"x1", "x2", "x3"});
  PredicatePtr p = makePredicate("P", {d, d}, boolRange());
  LogVar x = LogVar::fresh("X", d);
  auto g = lvetest::pf({Atom(p, {Term(x), Term(x)})},
                       ConstraintTree::product({x}, {{0, 1, 2}}),
                       {0.5, 2.0});
  auto lin = linearize(g);
  REQUIRE(lin->args().size() == 1);
  const Atom& atom = lin->args()[0].atom();
  REQUIRE(isVar(atom.args()[0]));
  REQUIRE(isVar(atom.args()[1]));
  CHECK(asVar(atom.args()[0]) != asVar(atom.args()[1]));
  // Constraint holds exactly the diagonal tuples.
  auto tuples = lin->constraint().tuples();
  REQUIRE(tuples.size() == 3);
  for (const auto& t : tuples) CHECK(t[0] == t[1]);
  // Groundings are unchanged.
  CHECK(lvetest::jointMaxRelError({g}, {lin}) < 1e-12);
}

TEST_CASE("linearize replaces constants by singleton columns") {
  DomainPtr d = makeDomain("dom", {"a", "b"});
  PredicatePtr q = makePredicate("Q", {d, d}, boolRange());
  LogVar y = LogVar::fresh("Y", d);
  auto g = lvetest::pf({Atom(q, {Term(0), Term(y)})},
                       ConstraintTree::product({y}, {{0, 1}}),
                       {0.3, 0.7});
  auto lin = linearize(g);
  const Atom& atom = lin->args()[0].atom();
  REQUIRE(isVar(atom.args()[0]));
  const LogVar& fresh = asVar(atom.args()[0]);
  auto proj = lin->constraint().project({fresh}).tuples();
  REQUIRE(proj.size() == 1);
  CHECK(proj[0][0] == 0);
  CHECK(lvetest::jointMaxRelError({g}, {lin}) < 1e-12);

  // Idempotence: already-linear parfactors come back unchanged.
  CHECK(linearize(lin) == lin);
}

TEST_CASE("parfactor validation") {
  DomainPtr d = makeDomain("dom", {"a", "b", "c"});
  PredicatePtr p = makePredicate("P", {d}, boolRange());
  LogVar x = LogVar::fresh("X", d);

  // Constraint column mismatch.
  LogVar z = LogVar::fresh("Z", d);
  CHECK_THROWS_AS(
      lvetest::pf({Atom(p, {Term(x)})},
                  ConstraintTree::product({z}, {{0, 1}}), {1, 1}),
      StructuralError);

  // Empty constraints are not materialized as parfactors.
  CHECK_THROWS_AS(lvetest::pf({Atom(p, {Term(x)})},
                              ConstraintTree::empty({x}), {1, 1}),
                  StructuralError);

  // Counting formula requires a count-normalized counted logvar.
  DomainPtr d2 = makeDomain("dom2", {"u", "v"});
  PredicatePtr f = makePredicate("F", {d2, d}, boolRange());
  LogVar w = LogVar::fresh("W", d2);
  LogVar y = LogVar::fresh("Y", d);
  // W=u pairs with {a,b}, W=v with {a}: not count-normalized.
  auto skewed = ConstraintTree::fromTuples({w, y}, {{0, 0}, {0, 1}, {1, 0}});
  CHECK_THROWS_AS(
      lvetest::pf({ParfactorArg(CountingFormula(Atom(f, {Term(w), Term(y)}), y))},
                  skewed, {1, 1, 1}),
      StructuralError);
}
