#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lve/ground.hpp"
#include "lve/operators.hpp"
#include "lve/parfactor.hpp"

namespace lve {

/// Raised for bad user input (unknown query, contradictory evidence, ...).
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A single ground randvar to compute the marginal of.
struct Query {
  PredicatePtr pred;
  std::vector<int> args;

  std::string toString() const;
};

struct EngineOptions {
  NumericMode mode = NumericMode::Linear;
  bool captureTrace = false;
  std::uint64_t maxSteps = 1000000;
  /// Refuse any single operation that would create more rows than this.
  std::uint64_t maxCandidateRows = 500000000;
};

struct TraceEntry {
  std::size_t step;
  OpKind kind;
  std::vector<std::uint64_t> consumed;
  std::vector<std::uint64_t> produced;
  std::uint64_t costRows;

  std::string toString() const;
};

struct MarginalResult {
  Query query;
  std::vector<double> distribution;  // over range(pred), sums to 1
  std::size_t opCount = 0;
  std::uint64_t rowsCreated = 0;
  double wallTimeMs = 0;
  std::vector<std::string> traceLines;
  /// Multiset of operator kinds applied, for invariance checks.
  std::vector<OpKind> opKinds;
};

/// The engine's mutable model state: parfactors with stable ids plus the
/// trace of applied operations.
class EngineState {
public:
  EngineState(std::vector<ParfactorPtr> parfactors, EngineOptions options);

  const std::vector<std::pair<std::uint64_t, ParfactorPtr>>& parfactors()
      const {
    return parfactors_;
  }
  const EngineOptions& options() const { return options_; }
  const std::vector<TraceEntry>& trace() const { return trace_; }
  std::uint64_t rowsCreated() const { return rowsCreated_; }
  std::vector<OpKind> opKinds() const;

  /// Removes the consumed parfactors, inserts the produced ones and
  /// appends a trace entry.
  void apply(const OperatorResult& result);

  /// Representation-level rewrite (no model semantics change, no trace
  /// entry): swaps one parfactor for an equivalent one.
  void replaceSilently(const ParfactorPtr& from, const ParfactorPtr& to);

  /// Cache of elimination plans keyed by the exact (parfactor, argument)
  /// identities of one group; parfactors are immutable, so entries stay
  /// valid as long as all members are still in the model.
  struct CachedPlan;
  std::map<std::vector<std::pair<const Parfactor*, std::size_t>>,
           std::shared_ptr<const CachedPlan>>
      planCache;
  /// Coverage cache; the value pins the parfactor so its address cannot
  /// be reused while the entry lives.
  std::map<std::pair<const Parfactor*, std::size_t>,
           std::pair<ParfactorPtr, Coverage>>
      coverageCache;

  ParfactorPtr byId(std::uint64_t id) const;

private:
  std::uint64_t insert(const ParfactorPtr& p);

  std::vector<std::pair<std::uint64_t, ParfactorPtr>> parfactors_;
  EngineOptions options_;
  std::vector<TraceEntry> trace_;
  std::uint64_t nextId_ = 1;
  std::uint64_t rowsCreated_ = 0;
};

/// One proposed rewrite: a cost (total table rows it would create) plus the
/// closure that performs it. Ordering inside a branch is by (costRows,
/// operator tag, consumed ids).
struct Candidate {
  OpKind kind;
  std::uint64_t costRows;
  std::vector<std::uint64_t> consumedIds;
  std::string description;
  /// Directly applicable summing-out (no multiplications or interleaved
  /// count-normalization): the preferred branch of the main loop.
  bool pureSumOut = false;
  std::function<void(EngineState&)> apply;
};

/// Groups ground observations into evidence parfactors (one per predicate
/// and observed value). Rejects contradictions and evidence on the query.
std::vector<EvidenceParfactor> buildEvidenceParfactors(
    const std::vector<Observation>& observations, const Query& query);

/// Splits model parfactors as needed and absorbs every observed randvar
/// group; evidence parfactors are fully incorporated and dropped.
void incorporateEvidence(EngineState& state,
                         const std::vector<EvidenceParfactor>& evidence);

/// Makes all cross-parfactor argument pairs proper and isolates the query
/// randvar in its own singleton group.
void initialShatter(EngineState& state, const Query& query);

/// The enabling-operator candidates at the current state (the sum-out
/// branch of the main loop is handled separately and is not listed here
/// unless no sum-out applies; see runQuery). Sorted best-first.
std::vector<Candidate> enumerateCandidates(EngineState& state,
                                           const Query& query);

/// Computes the marginal of the query by lifted variable elimination.
MarginalResult runQuery(const Model& model,
                        const std::vector<Observation>& evidence,
                        const Query& query, const EngineOptions& options = {});

}  // namespace lve
