#include "lve/types.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace lve {

Domain::Domain(std::string name, std::vector<std::string> constants)
    : name_(std::move(name)), constants_(std::move(constants)) {
  if (constants_.empty())
    throw StructuralError("domain '" + name_ + "' must be non-empty");
  std::unordered_set<std::string> seen;
  for (const auto& c : constants_)
    if (!seen.insert(c).second)
      throw StructuralError("domain '" + name_ + "' repeats constant '" + c +
                            "'");
}

std::optional<int> Domain::indexOf(const std::string& constant) const {
  for (std::size_t i = 0; i < constants_.size(); ++i)
    if (constants_[i] == constant) return static_cast<int>(i);
  return std::nullopt;
}

DomainPtr makeDomain(std::string name, std::vector<std::string> constants) {
  return std::make_shared<const Domain>(std::move(name), std::move(constants));
}

DomainPtr makeDomain(std::string name, const std::string& prefix, int n) {
  std::vector<std::string> cs;
  cs.reserve(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i) cs.push_back(prefix + std::to_string(i));
  return makeDomain(std::move(name), std::move(cs));
}

Predicate::Predicate(std::string name, std::vector<DomainPtr> argDomains,
                     std::vector<std::string> range)
    : name_(std::move(name)),
      argDomains_(std::move(argDomains)),
      range_(std::move(range)) {
  if (range_.empty())
    throw StructuralError("predicate '" + name_ + "' has an empty range");
  std::unordered_set<std::string> seen;
  for (const auto& v : range_)
    if (!seen.insert(v).second)
      throw StructuralError("predicate '" + name_ + "' repeats range value '" +
                            v + "'");
}

std::optional<int> Predicate::rangeIndexOf(const std::string& value) const {
  for (std::size_t i = 0; i < range_.size(); ++i)
    if (range_[i] == value) return static_cast<int>(i);
  return std::nullopt;
}

PredicatePtr makePredicate(std::string name, std::vector<DomainPtr> argDomains,
                           std::vector<std::string> range) {
  return std::make_shared<const Predicate>(std::move(name),
                                           std::move(argDomains),
                                           std::move(range));
}

LogVar LogVar::fresh(std::string name, DomainPtr domain) {
  static std::atomic<std::uint64_t> counter{0};
  LogVar v;
  auto info = std::make_shared<Info>();
  info->name = std::move(name);
  info->domain = std::move(domain);
  info->id = counter.fetch_add(1, std::memory_order_relaxed);
  v.info_ = std::move(info);
  return v;
}

Atom::Atom(PredicatePtr predicate, std::vector<Term> args)
    : predicate_(std::move(predicate)), args_(std::move(args)) {
  if (args_.size() != predicate_->arity())
    throw StructuralError("atom of '" + predicate_->name() +
                          "' has wrong arity");
  for (std::size_t i = 0; i < args_.size(); ++i) {
    const auto& slot = predicate_->argDomains()[i];
    if (isVar(args_[i])) {
      if (asVar(args_[i]).domain() != slot)
        throw StructuralError("logvar '" + asVar(args_[i]).name() +
                              "' has the wrong domain for '" +
                              predicate_->name() + "'");
    } else {
      int c = asConst(args_[i]);
      if (c < 0 || c >= static_cast<int>(slot->size()))
        throw StructuralError("constant index out of range in atom of '" +
                              predicate_->name() + "'");
    }
  }
}

std::vector<LogVar> Atom::logvars() const {
  std::vector<LogVar> out;
  for (const auto& t : args_) {
    if (!isVar(t)) continue;
    const LogVar& v = asVar(t);
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  }
  return out;
}

bool Atom::isGround() const {
  return std::all_of(args_.begin(), args_.end(),
                     [](const Term& t) { return !isVar(t); });
}

bool operator==(const Atom& a, const Atom& b) {
  if (a.predicate_ != b.predicate_) return false;
  return a.args_ == b.args_;
}

std::string Atom::toString() const {
  std::ostringstream os;
  os << predicate_->name() << '(';
  for (std::size_t i = 0; i < args_.size(); ++i) {
    if (i) os << ',';
    if (isVar(args_[i]))
      os << asVar(args_[i]).name();
    else
      os << predicate_->argDomains()[i]->constants()[asConst(args_[i])];
  }
  os << ')';
  return os.str();
}

int Histogram::total() const {
  int t = 0;
  for (int c : counts) t += c;
  return t;
}

std::string Histogram::toString(const Predicate& pred) const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (i) os << ',';
    os << pred.range()[i] << ':' << counts[i];
  }
  os << ')';
  return os.str();
}

namespace {
void enumerateHistograms(int buckets, int remaining, std::vector<int>& acc,
                         std::vector<Histogram>& out) {
  if (buckets == 1) {
    acc.push_back(remaining);
    out.push_back(Histogram{acc});
    acc.pop_back();
    return;
  }
  for (int c = remaining; c >= 0; --c) {
    acc.push_back(c);
    enumerateHistograms(buckets - 1, remaining - c, acc, out);
    acc.pop_back();
  }
}
}  // namespace

std::vector<Histogram> histogramRange(int rangeSize, int total) {
  if (rangeSize < 1) throw StructuralError("histogramRange: rangeSize < 1");
  if (total < 0) throw StructuralError("histogramRange: negative total");
  std::vector<Histogram> out;
  std::vector<int> acc;
  enumerateHistograms(rangeSize, total, acc, out);
  return out;
}

Histogram histogramAdd(const Histogram& a, const Histogram& b) {
  if (a.counts.size() != b.counts.size())
    throw StructuralError("histogramAdd: mismatched key sets");
  Histogram r = a;
  for (std::size_t i = 0; i < r.counts.size(); ++i) r.counts[i] += b.counts[i];
  return r;
}

double multiplicity(const Histogram& h) {
  // Exact path: repeatedly multiply binomials while they fit in 64 bits.
  // n! / prod(ni!) = prod over buckets of C(partial_total, ni).
  std::uint64_t result = 1;
  std::uint64_t partial = 0;
  bool exact = true;
  for (int c : h.counts) {
    if (c < 0) throw StructuralError("multiplicity: negative count");
    for (int j = 1; j <= c && exact; ++j) {
      ++partial;
      std::uint64_t num;
      if (__builtin_mul_overflow(result, partial, &num)) {
        exact = false;
        break;
      }
      // C(partial, j) builds up divisibly at each step.
      result = num / static_cast<std::uint64_t>(j);
    }
    if (!exact) break;
  }
  if (exact) return static_cast<double>(result);
  return std::exp(logMultiplicity(h));
}

double logMultiplicity(const Histogram& h) {
  double lg = std::lgamma(static_cast<double>(h.total()) + 1.0);
  for (int c : h.counts) lg -= std::lgamma(static_cast<double>(c) + 1.0);
  return lg;
}

std::uint64_t histogramRangeSize(int rangeSize, int total) {
  // C(total + rangeSize - 1, rangeSize - 1)
  std::uint64_t n = static_cast<std::uint64_t>(total + rangeSize - 1);
  std::uint64_t k = static_cast<std::uint64_t>(rangeSize - 1);
  if (k > n - k) k = n - k;
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

CountingFormula::CountingFormula(Atom atom, LogVar countedLogvar)
    : atom_(std::move(atom)), counted_(std::move(countedLogvar)) {
  int occurrences = 0;
  for (const auto& t : atom_.args())
    if (isVar(t) && asVar(t) == counted_) ++occurrences;
  if (occurrences != 1)
    throw StructuralError(
        "counted logvar must occur exactly once in the atom (linearize "
        "first)");
}

bool operator==(const CountingFormula& a, const CountingFormula& b) {
  return a.atom_ == b.atom_ && a.counted_ == b.counted_;
}

std::string CountingFormula::toString() const {
  return "#" + counted_.name() + "[" + atom_.toString() + "]";
}

std::vector<LogVar> ParfactorArg::logvars() const {
  std::vector<LogVar> all = atom().logvars();
  if (!isCounting()) return all;
  std::vector<LogVar> out;
  for (const auto& v : all)
    if (v != counting().countedLogvar()) out.push_back(v);
  return out;
}

std::vector<LogVar> ParfactorArg::allLogvars() const { return atom().logvars(); }

bool operator==(const ParfactorArg& a, const ParfactorArg& b) {
  return a.value_ == b.value_;
}

std::string ParfactorArg::toString() const {
  return isCounting() ? counting().toString() : atom().toString();
}

void Substitution::add(const LogVar& from, Term to) {
  for (auto& [f, t] : entries_)
    if (f == from) {
      if (!(t == to))
        throw StructuralError("substitution maps '" + from.name() +
                              "' twice, inconsistently");
      return;
    }
  entries_.emplace_back(from, std::move(to));
}

bool Substitution::maps(const LogVar& v) const {
  for (const auto& [f, t] : entries_)
    if (f == v) return true;
  return false;
}

const Term& Substitution::at(const LogVar& v) const {
  for (const auto& [f, t] : entries_)
    if (f == v) return t;
  throw StructuralError("substitution does not map '" + v.name() + "'");
}

bool Substitution::isRenaming() const {
  std::vector<LogVar> targets;
  for (const auto& [f, t] : entries_) {
    if (!isVar(t)) return false;
    const LogVar& v = asVar(t);
    if (std::find(targets.begin(), targets.end(), v) != targets.end())
      return false;
    targets.push_back(v);
  }
  return true;
}

Atom Substitution::apply(const Atom& a) const {
  std::vector<Term> args;
  args.reserve(a.args().size());
  for (const auto& t : a.args()) {
    if (isVar(t) && maps(asVar(t)))
      args.push_back(at(asVar(t)));
    else
      args.push_back(t);
  }
  return Atom(a.predicate(), std::move(args));
}

ParfactorArg Substitution::apply(const ParfactorArg& a) const {
  if (!a.isCounting()) return ParfactorArg(apply(a.atom()));
  const auto& cf = a.counting();
  LogVar counted = cf.countedLogvar();
  if (maps(counted)) {
    const Term& t = at(counted);
    if (!isVar(t))
      throw StructuralError("cannot substitute a constant for counted logvar");
    counted = asVar(t);
  }
  return ParfactorArg(CountingFormula(apply(cf.atom()), counted));
}

std::vector<LogVar> freeLogvars(const std::vector<ParfactorArg>& args) {
  std::vector<LogVar> out;
  for (const auto& a : args)
    for (const auto& v : a.logvars())
      if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  return out;
}

std::vector<LogVar> countedLogvars(const std::vector<ParfactorArg>& args) {
  std::vector<LogVar> out;
  for (const auto& a : args)
    if (a.isCounting()) out.push_back(a.counting().countedLogvar());
  return out;
}

}  // namespace lve
