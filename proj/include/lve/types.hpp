#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace lve {

/// Raised when an input violates a structural requirement (bad arity,
/// value out of range, mismatched key sets, ...).
struct StructuralError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when an operator is invoked on inputs that fail its preconditions.
/// The message names the enabling operation to apply, where one exists.
struct PreconditionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A finite, ordered set of constants. The declaration order is canonical:
/// it fixes tuple encodings and potential-table layouts.
class Domain {
public:
  Domain(std::string name, std::vector<std::string> constants);

  const std::string& name() const { return name_; }
  const std::vector<std::string>& constants() const { return constants_; }
  std::size_t size() const { return constants_.size(); }

  /// Index of a constant, or nullopt if it is not in this domain.
  std::optional<int> indexOf(const std::string& constant) const;

private:
  std::string name_;
  std::vector<std::string> constants_;
};

using DomainPtr = std::shared_ptr<const Domain>;

DomainPtr makeDomain(std::string name, std::vector<std::string> constants);
/// Convenience for synthetic models: constants prefix1..prefixN.
DomainPtr makeDomain(std::string name, const std::string& prefix, int n);

/// A predicate with typed argument slots and a finite, ordered range.
class Predicate {
public:
  Predicate(std::string name, std::vector<DomainPtr> argDomains,
            std::vector<std::string> range);

  const std::string& name() const { return name_; }
  const std::vector<DomainPtr>& argDomains() const { return argDomains_; }
  const std::vector<std::string>& range() const { return range_; }
  std::size_t arity() const { return argDomains_.size(); }
  std::size_t rangeSize() const { return range_.size(); }

  std::optional<int> rangeIndexOf(const std::string& value) const;

private:
  std::string name_;
  std::vector<DomainPtr> argDomains_;
  std::vector<std::string> range_;
};

using PredicatePtr = std::shared_ptr<const Predicate>;

PredicatePtr makePredicate(std::string name, std::vector<DomainPtr> argDomains,
                           std::vector<std::string> range);

/// A logical variable. Identity-based: two LogVars are the same variable
/// iff they were created by the same fresh() call. Ordering follows
/// creation sequence, which keeps engine traces deterministic.
class LogVar {
public:
  LogVar() = default;
  static LogVar fresh(std::string name, DomainPtr domain);

  bool valid() const { return info_ != nullptr; }
  const std::string& name() const { return info_->name; }
  const DomainPtr& domain() const { return info_->domain; }
  std::uint64_t id() const { return info_->id; }

  friend bool operator==(const LogVar& a, const LogVar& b) {
    return a.info_ == b.info_;
  }
  friend bool operator!=(const LogVar& a, const LogVar& b) {
    return !(a == b);
  }
  friend bool operator<(const LogVar& a, const LogVar& b) {
    return a.info_->id < b.info_->id;
  }

private:
  struct Info {
    std::string name;
    DomainPtr domain;
    std::uint64_t id;
  };
  std::shared_ptr<const Info> info_;
};

struct LogVarHash {
  std::size_t operator()(const LogVar& v) const {
    return std::hash<std::uint64_t>()(v.id());
  }
};

/// An atom argument: either a logvar or a constant (encoded as the index
/// into the domain of the corresponding predicate slot).
using Term = std::variant<LogVar, int>;

inline bool isVar(const Term& t) { return std::holds_alternative<LogVar>(t); }
inline const LogVar& asVar(const Term& t) { return std::get<LogVar>(t); }
inline int asConst(const Term& t) { return std::get<int>(t); }

/// P(t1, ..., tn) with terms typed against the predicate's slots.
class Atom {
public:
  Atom(PredicatePtr predicate, std::vector<Term> args);

  const PredicatePtr& predicate() const { return predicate_; }
  const std::vector<Term>& args() const { return args_; }

  /// Distinct logvars in argument order.
  std::vector<LogVar> logvars() const;
  bool isGround() const;

  friend bool operator==(const Atom& a, const Atom& b);

  std::string toString() const;

private:
  PredicatePtr predicate_;
  std::vector<Term> args_;
};

/// A value-count vector aligned with a predicate's declared range order.
struct Histogram {
  std::vector<int> counts;

  int total() const;
  friend bool operator==(const Histogram& a, const Histogram& b) {
    return a.counts == b.counts;
  }
  friend bool operator<(const Histogram& a, const Histogram& b) {
    return a.counts < b.counts;
  }
  std::string toString(const Predicate& pred) const;
};

/// All count vectors over `rangeSize` buckets summing to `total`, ordered
/// lexicographically descending. The list has C(total+rangeSize-1, rangeSize-1)
/// entries.
std::vector<Histogram> histogramRange(int rangeSize, int total);

/// Pointwise sum; both histograms must have the same bucket count.
Histogram histogramAdd(const Histogram& a, const Histogram& b);

/// Multinomial coefficient total! / prod(counts!). Exact in integer
/// arithmetic while it fits, computed through lgamma beyond that.
double multiplicity(const Histogram& h);
/// log of multiplicity(h); exact enough for log-space potentials.
double logMultiplicity(const Histogram& h);

/// Number of histograms over r buckets with total n: C(n+r-1, r-1).
std::uint64_t histogramRangeSize(int rangeSize, int total);

/// #X[P(...)] with X occurring among the atom's arguments.
class CountingFormula {
public:
  CountingFormula(Atom atom, LogVar countedLogvar);

  const Atom& atom() const { return atom_; }
  const LogVar& countedLogvar() const { return counted_; }

  friend bool operator==(const CountingFormula& a, const CountingFormula& b);

  std::string toString() const;

private:
  Atom atom_;
  LogVar counted_;
};

/// One argument of a parfactor: a plain atom or a counting formula.
class ParfactorArg {
public:
  ParfactorArg(Atom atom) : value_(std::move(atom)) {}            // NOLINT
  ParfactorArg(CountingFormula cf) : value_(std::move(cf)) {}     // NOLINT

  bool isCounting() const {
    return std::holds_alternative<CountingFormula>(value_);
  }
  const Atom& atom() const {
    return isCounting() ? std::get<CountingFormula>(value_).atom()
                        : std::get<Atom>(value_);
  }
  const CountingFormula& counting() const {
    return std::get<CountingFormula>(value_);
  }
  const PredicatePtr& predicate() const { return atom().predicate(); }

  /// Free logvars: the atom's logvars minus the counted one.
  std::vector<LogVar> logvars() const;
  /// All logvars of the underlying atom, counted one included.
  std::vector<LogVar> allLogvars() const;

  friend bool operator==(const ParfactorArg& a, const ParfactorArg& b);

  std::string toString() const;

private:
  std::variant<Atom, CountingFormula> value_;
};

/// Mapping from logvars to terms. Renaming substitutions map injectively
/// onto logvars; grounding substitutions map onto constants.
class Substitution {
public:
  Substitution() = default;

  void add(const LogVar& from, Term to);
  bool maps(const LogVar& v) const;
  const Term& at(const LogVar& v) const;
  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<LogVar, Term>>& entries() const {
    return entries_;
  }

  bool isRenaming() const;

  Atom apply(const Atom& a) const;
  ParfactorArg apply(const ParfactorArg& a) const;

private:
  std::vector<std::pair<LogVar, Term>> entries_;
};

/// Free logvars of an argument sequence, in first-occurrence order.
std::vector<LogVar> freeLogvars(const std::vector<ParfactorArg>& args);
/// Counted logvars of an argument sequence, in argument order.
std::vector<LogVar> countedLogvars(const std::vector<ParfactorArg>& args);

}  // namespace lve
