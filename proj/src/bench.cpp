#include "lve/bench.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace lve {

namespace {

double randomWeight(std::mt19937_64& rng) {
  // (0, 1]: potentials stay strictly positive.
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  return 1.0 - dist(rng);
}

ParfactorPtr randomParfactor(std::vector<ParfactorArg> args,
                             ConstraintTree constraint,
                             std::mt19937_64& rng) {
  return Parfactor::make(
      std::move(args),
      [&rng](const std::vector<int>&) { return randomWeight(rng); },
      NumericMode::Linear, std::move(constraint));
}

BenchmarkInstance generateWorkshopAttrs(const BenchmarkSpec& spec,
                                        std::mt19937_64& rng) {
  BenchmarkInstance inst;
  DomainPtr person = makeDomain("person", "p", spec.domainSize);
  inst.model.domains = {person};
  std::vector<std::string> boolRange{"true", "false"};
  PredicatePtr attends = makePredicate("Attends", {person}, boolRange);
  inst.model.predicates = {attends};
  std::vector<PredicatePtr> attrs;
  for (int i = 1; i <= spec.attrCount; ++i) {
    attrs.push_back(makePredicate("Attr" + std::to_string(i), {}, boolRange));
    inst.model.predicates.push_back(attrs.back());
  }
  PredicatePtr series = makePredicate("Series", {}, boolRange);
  inst.model.predicates.push_back(series);

  for (int i = 0; i < spec.attrCount; ++i) {
    LogVar x = LogVar::fresh("X", person);
    inst.model.parfactors.push_back(randomParfactor(
        {Atom(attends, {Term(x)}), Atom(attrs[i], {})},
        ConstraintTree::fullProduct({x}), rng));
  }
  LogVar x = LogVar::fresh("X", person);
  inst.model.parfactors.push_back(
      randomParfactor({Atom(attends, {Term(x)}), Atom(series, {})},
                      ConstraintTree::fullProduct({x}), rng));
  inst.query = Query{series, {}};
  return inst;
}

BenchmarkInstance generateCompeting(const BenchmarkSpec& spec,
                                    std::mt19937_64& rng) {
  BenchmarkInstance inst;
  DomainPtr person = makeDomain("person", "p", spec.domainSize);
  DomainPtr workshop = makeDomain("workshop", "w", spec.workshopCount);
  inst.model.domains = {person, workshop};
  std::vector<std::string> boolRange{"true", "false"};
  PredicatePtr attends = makePredicate("Attends", {person}, boolRange);
  PredicatePtr hot = makePredicate("Hot", {workshop}, boolRange);
  PredicatePtr series = makePredicate("Series", {}, boolRange);
  inst.model.predicates = {attends, hot, series};

  {
    LogVar x = LogVar::fresh("X", person);
    LogVar y = LogVar::fresh("Y", workshop);
    inst.model.parfactors.push_back(randomParfactor(
        {Atom(attends, {Term(x)}), Atom(hot, {Term(y)})},
        ConstraintTree::fullProduct({x, y}), rng));
  }
  {
    LogVar x = LogVar::fresh("X", person);
    inst.model.parfactors.push_back(
        randomParfactor({Atom(attends, {Term(x)}), Atom(series, {})},
                        ConstraintTree::fullProduct({x}), rng));
  }
  inst.query = Query{series, {}};
  return inst;
}

BenchmarkInstance generateSocial(const BenchmarkSpec& spec,
                                 std::mt19937_64& rng) {
  BenchmarkInstance inst;
  DomainPtr person = makeDomain("person", "p", spec.domainSize);
  inst.model.domains = {person};
  std::vector<std::string> boolRange{"true", "false"};
  PredicatePtr smokes = makePredicate("Smokes", {person}, boolRange);
  PredicatePtr asthma = makePredicate("Asthma", {person}, boolRange);
  PredicatePtr friends = makePredicate("Friends", {person, person}, boolRange);
  inst.model.predicates = {smokes, asthma, friends};

  {
    LogVar x = LogVar::fresh("X", person);
    inst.model.parfactors.push_back(randomParfactor(
        {Atom(smokes, {Term(x)})}, ConstraintTree::fullProduct({x}), rng));
  }
  {
    LogVar x = LogVar::fresh("X", person);
    inst.model.parfactors.push_back(randomParfactor(
        {Atom(asthma, {Term(x)})}, ConstraintTree::fullProduct({x}), rng));
  }
  {
    LogVar x = LogVar::fresh("X", person);
    LogVar y = LogVar::fresh("Y", person);
    inst.model.parfactors.push_back(
        randomParfactor({Atom(friends, {Term(x), Term(y)})},
                        ConstraintTree::fullProduct({x, y}), rng));
  }
  {
    LogVar x = LogVar::fresh("X", person);
    inst.model.parfactors.push_back(randomParfactor(
        {Atom(asthma, {Term(x)}), Atom(smokes, {Term(x)})},
        ConstraintTree::fullProduct({x}), rng));
  }
  {
    LogVar x = LogVar::fresh("X", person);
    LogVar y = LogVar::fresh("Y", person);
    inst.model.parfactors.push_back(randomParfactor(
        {Atom(asthma, {Term(x)}), Atom(friends, {Term(x), Term(y)}),
         Atom(smokes, {Term(y)})},
        ConstraintTree::fullProduct({x, y}), rng));
  }
  return inst;
}

}  // namespace

BenchmarkInstance generateBenchmark(const BenchmarkSpec& spec) {
  if (spec.domainSize < 1) throw InputError("domain size must be positive");
  if (spec.evidenceFraction < 0 || spec.evidenceFraction > 1)
    throw InputError("evidence fraction must be in [0, 1]");
  std::mt19937_64 rng(spec.seed);

  BenchmarkInstance inst;
  if (spec.family == "workshop-attrs") {
    if (spec.attrCount < 1) throw InputError("attrCount must be positive");
    inst = generateWorkshopAttrs(spec, rng);
  } else if (spec.family == "competing") {
    if (spec.workshopCount < 1)
      throw InputError("workshopCount must be positive");
    inst = generateCompeting(spec, rng);
  } else if (spec.family == "social") {
    inst = generateSocial(spec, rng);
  } else {
    throw InputError("unknown benchmark family '" + spec.family + "'");
  }

  // Evidence lands only on unary-predicate randvars, uniform values.
  std::vector<std::pair<PredicatePtr, int>> unary;
  for (const auto& p : inst.model.predicates)
    if (p->arity() == 1)
      for (std::size_t i = 0; i < p->argDomains()[0]->size(); ++i)
        unary.emplace_back(p, static_cast<int>(i));
  std::size_t count = static_cast<std::size_t>(
      std::llround(spec.evidenceFraction * static_cast<double>(unary.size())));
  std::shuffle(unary.begin(), unary.end(), rng);
  std::vector<bool> observed(unary.size(), false);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> valueDist(
        0, static_cast<int>(unary[i].first->rangeSize()) - 1);
    inst.evidence.push_back(
        Observation{unary[i].first, {unary[i].second}, valueDist(rng)});
    observed[i] = true;
  }

  if (spec.family == "social") {
    // Query: a random unobserved randvar, preferring unary ones.
    std::vector<Query> unobserved;
    for (std::size_t i = count; i < unary.size(); ++i)
      unobserved.push_back(Query{unary[i].first, {unary[i].second}});
    if (unobserved.empty()) {
      PredicatePtr friends = inst.model.findPredicate("Friends");
      std::uniform_int_distribution<int> pick(0, spec.domainSize - 1);
      inst.query = Query{friends, {pick(rng), pick(rng)}};
    } else {
      std::uniform_int_distribution<std::size_t> pick(0,
                                                      unobserved.size() - 1);
      inst.query = unobserved[pick(rng)];
    }
  }
  return inst;
}

const char* BenchRow::csvHeader() {
  return "family,n,evidence_frac,seed,runtime_ms,op_count,rows_created,"
         "marginal_first,max_rel_error";
}

std::string BenchRow::toCsv() const {
  std::ostringstream os;
  os << spec.family << ',' << spec.domainSize << ',' << spec.evidenceFraction
     << ',' << spec.seed << ',' << runtimeMs << ',' << opCount << ','
     << rowsCreated << ',';
  os.precision(12);
  os << marginalFirst << ',';
  if (oracleSkipped)
    os << "skip";
  else if (maxRelError)
    os << *maxRelError;
  return os.str();
}

BenchRow runBench(const BenchmarkSpec& spec, const EngineOptions& options,
                  bool withOracle) {
  BenchmarkInstance inst = generateBenchmark(spec);
  MarginalResult res = runQuery(inst.model, inst.evidence, inst.query, options);

  BenchRow row;
  row.spec = spec;
  row.runtimeMs = res.wallTimeMs;
  row.opCount = res.opCount;
  row.rowsCreated = res.rowsCreated;
  row.marginalFirst = res.distribution[0];

  if (withOracle) {
    try {
      GroundModel gm = groundModel(inst.model, inst.evidence);
      std::vector<double> oracle =
          veMarginal(gm, GroundAtom{inst.query.pred, inst.query.args});
      double maxRel = 0;
      for (std::size_t v = 0; v < oracle.size(); ++v) {
        double denom = std::max(std::abs(oracle[v]), 1e-300);
        maxRel = std::max(maxRel,
                          std::abs(oracle[v] - res.distribution[v]) / denom);
      }
      row.maxRelError = maxRel;
    } catch (const SizeCapError&) {
      row.oracleSkipped = true;
    }
  }
  return row;
}

}  // namespace lve
