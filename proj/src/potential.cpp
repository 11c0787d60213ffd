#include "lve/potential.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lve {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

double Arith::one() const { return mode == NumericMode::Log ? 0.0 : 1.0; }

double Arith::zero() const { return mode == NumericMode::Log ? kNegInf : 0.0; }

bool Arith::isZero(double a) const {
  return mode == NumericMode::Log ? a == kNegInf : a == 0.0;
}

double Arith::mul(double a, double b) const {
  return mode == NumericMode::Log ? a + b : a * b;
}

double Arith::pow(double a, double e) const {
  if (mode == NumericMode::Log) {
    if (e == 0.0) return 0.0;       // x^0 = 1, even for x = 0
    if (a == kNegInf) return kNegInf;  // 0^e = 0 for e > 0
    return a * e;
  }
  return std::pow(a, e);
}

double Arith::add(double a, double b) const {
  if (mode == NumericMode::Linear) return a + b;
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

double Arith::mulScalarLinear(double a, double linearFactor) const {
  if (mode == NumericMode::Linear) return a * linearFactor;
  return a + std::log(linearFactor);
}

double Arith::fromLinear(double x) const {
  return mode == NumericMode::Log ? (x == 0.0 ? kNegInf : std::log(x)) : x;
}

double Arith::toLinear(double x) const {
  return mode == NumericMode::Log ? std::exp(x) : x;
}

ArgSpace ArgSpace::atom(int rangeSize) {
  if (rangeSize < 1) throw StructuralError("ArgSpace: empty range");
  ArgSpace s;
  s.counting_ = false;
  s.rangeSize_ = rangeSize;
  return s;
}

ArgSpace ArgSpace::counting(int rangeSize, int total) {
  if (rangeSize < 1) throw StructuralError("ArgSpace: empty range");
  if (total < 0) throw StructuralError("ArgSpace: negative histogram total");
  ArgSpace s;
  s.counting_ = true;
  s.rangeSize_ = rangeSize;
  s.total_ = total;
  s.histograms_ = histogramRange(rangeSize, total);
  return s;
}

std::size_t ArgSpace::size() const {
  return counting_ ? histograms_.size() : static_cast<std::size_t>(rangeSize_);
}

int ArgSpace::indexOfHistogram(const Histogram& h) const {
  // histograms_ is sorted lexicographically descending
  auto it = std::lower_bound(
      histograms_.begin(), histograms_.end(), h,
      [](const Histogram& a, const Histogram& b) { return b < a; });
  if (it == histograms_.end() || !(*it == h))
    throw StructuralError("histogram not in argument space");
  return static_cast<int>(it - histograms_.begin());
}

double ArgSpace::mulFor(int valueIndex) const {
  if (!counting_) return 1.0;
  return multiplicity(histograms_[valueIndex]);
}

double ArgSpace::logMulFor(int valueIndex) const {
  if (!counting_) return 0.0;
  return logMultiplicity(histograms_[valueIndex]);
}

bool operator==(const ArgSpace& a, const ArgSpace& b) {
  return a.counting_ == b.counting_ && a.rangeSize_ == b.rangeSize_ &&
         (!a.counting_ || a.total_ == b.total_);
}

std::size_t tableSize(const std::vector<ArgSpace>& spaces) {
  std::size_t n = 1;
  for (const auto& s : spaces) n *= s.size();
  return n;
}

void Potential::initStrides() {
  strides_.assign(spaces_.size(), 1);
  for (std::size_t i = spaces_.size(); i-- > 1;)
    strides_[i - 1] = strides_[i] * spaces_[i].size();
}

void Potential::validate() const {
  for (double v : *values_) {
    if (std::isnan(v)) throw NumericError("potential entry is NaN");
    if (mode_ == NumericMode::Linear) {
      if (v < 0.0) throw StructuralError("potential entry is negative");
      if (std::isinf(v)) throw NumericError("potential entry overflowed");
    } else if (v == std::numeric_limits<double>::infinity()) {
      throw NumericError("log potential entry overflowed");
    }
  }
}

Potential Potential::build(
    std::vector<ArgSpace> spaces,
    const std::function<double(const std::vector<int>&)>& fn,
    NumericMode mode) {
  Potential p;
  p.spaces_ = std::move(spaces);
  p.mode_ = mode;
  p.initStrides();
  std::size_t n = tableSize(p.spaces_);
  auto values = std::make_shared<std::vector<double>>(n);
  std::vector<int> valuation(p.spaces_.size(), 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    p.unflatten(flat, valuation);
    (*values)[flat] = fn(valuation);
  }
  p.values_ = std::move(values);
  p.validate();
  return p;
}

Potential Potential::fromValues(std::vector<ArgSpace> spaces,
                                std::vector<double> values, NumericMode mode) {
  Potential p;
  p.spaces_ = std::move(spaces);
  p.mode_ = mode;
  p.initStrides();
  if (values.size() != tableSize(p.spaces_))
    throw StructuralError("potential table length mismatch");
  p.values_ = std::make_shared<const std::vector<double>>(std::move(values));
  p.validate();
  return p;
}

Potential Potential::constant(double value, NumericMode mode) {
  return fromValues({}, {value}, mode);
}

std::size_t Potential::flatten(const std::vector<int>& valuation) const {
  if (valuation.size() != spaces_.size())
    throw StructuralError("valuation arity mismatch");
  std::size_t flat = 0;
  for (std::size_t i = 0; i < spaces_.size(); ++i) {
    if (valuation[i] < 0 ||
        static_cast<std::size_t>(valuation[i]) >= spaces_[i].size())
      throw StructuralError("valuation component out of range");
    flat += strides_[i] * static_cast<std::size_t>(valuation[i]);
  }
  return flat;
}

void Potential::unflatten(std::size_t flat, std::vector<int>& valuation) const {
  valuation.resize(spaces_.size());
  for (std::size_t i = 0; i < spaces_.size(); ++i) {
    valuation[i] = static_cast<int>(flat / strides_[i]);
    flat %= strides_[i];
  }
}

double Potential::lookup(const std::vector<int>& valuation) const {
  return (*values_)[flatten(valuation)];
}

Potential Potential::toMode(NumericMode target) const {
  if (target == mode_) return *this;
  Potential p = *this;
  p.mode_ = target;
  Arith a{target};
  auto values = std::make_shared<std::vector<double>>(*values_);
  for (double& v : *values)
    v = target == NumericMode::Log ? (v == 0.0 ? a.zero() : std::log(v))
                                   : std::exp(v);
  p.values_ = std::move(values);
  p.validate();
  return p;
}

Potential Potential::power(double exponent) const {
  Potential p = *this;
  Arith a{mode_};
  auto values = std::make_shared<std::vector<double>>(*values_);
  for (double& v : *values) v = a.pow(v, exponent);
  p.values_ = std::move(values);
  p.validate();
  return p;
}

}  // namespace lve
