#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lve/types.hpp"

namespace lve {

/// Raised when potential arithmetic leaves the representable range in
/// linear mode; the engine reacts by retrying in log space.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class NumericMode { Linear, Log };

/// Mode-aware arithmetic on potential entries. In log mode entries hold
/// log-weights and zero is -infinity.
struct Arith {
  NumericMode mode = NumericMode::Linear;

  double one() const;
  double zero() const;
  bool isZero(double a) const;
  double mul(double a, double b) const;
  double pow(double a, double e) const;
  double add(double a, double b) const;
  double mulScalarLinear(double a, double linearFactor) const;
  double fromLinear(double x) const;
  double toLinear(double x) const;
};

/// The ordered value list one parfactor argument ranges over: a predicate
/// range for atom arguments, an enumerated histogram list for counting
/// formulas.
class ArgSpace {
public:
  static ArgSpace atom(int rangeSize);
  static ArgSpace counting(int rangeSize, int total);

  bool isCounting() const { return counting_; }
  int rangeSize() const { return rangeSize_; }
  int total() const { return total_; }
  std::size_t size() const;
  const std::vector<Histogram>& histograms() const { return histograms_; }
  const Histogram& histogramAt(int index) const { return histograms_[index]; }
  int indexOfHistogram(const Histogram& h) const;

  /// MUL(A, v): 1 for atom arguments, the histogram multiplicity otherwise.
  double mulFor(int valueIndex) const;
  double logMulFor(int valueIndex) const;

  friend bool operator==(const ArgSpace& a, const ArgSpace& b);

private:
  bool counting_ = false;
  int rangeSize_ = 0;
  int total_ = 0;
  std::vector<Histogram> histograms_;
};

/// A dense row-major table over a sequence of argument spaces. The first
/// argument is the outermost index. Immutable once built.
class Potential {
public:
  Potential() = default;

  /// Evaluates fn over the full Cartesian product in canonical order.
  /// fn receives per-argument value indices and must return a value in
  /// the requested mode.
  static Potential build(std::vector<ArgSpace> spaces,
                         const std::function<double(const std::vector<int>&)>& fn,
                         NumericMode mode);
  static Potential fromValues(std::vector<ArgSpace> spaces,
                              std::vector<double> values, NumericMode mode);
  /// Zero-argument table holding a single entry.
  static Potential constant(double value, NumericMode mode);

  const std::vector<ArgSpace>& spaces() const { return spaces_; }
  NumericMode mode() const { return mode_; }
  Arith arith() const { return Arith{mode_}; }
  std::size_t size() const { return values_->size(); }
  const std::vector<double>& values() const { return *values_; }

  double lookup(const std::vector<int>& valuation) const;
  double at(std::size_t flat) const { return (*values_)[flat]; }

  std::size_t flatten(const std::vector<int>& valuation) const;
  void unflatten(std::size_t flat, std::vector<int>& valuation) const;

  Potential toMode(NumericMode target) const;

  /// Entry-wise a^e (0^0 is 1).
  Potential power(double exponent) const;

private:
  // The table is immutable and shared between parfactors that differ only
  // in their constraints (partition cells, groundings).
  std::vector<ArgSpace> spaces_;
  std::vector<std::size_t> strides_;
  std::shared_ptr<const std::vector<double>> values_ =
      std::make_shared<const std::vector<double>>();
  NumericMode mode_ = NumericMode::Linear;

  void initStrides();
  void validate() const;
};

/// Table length of the Cartesian product of the spaces.
std::size_t tableSize(const std::vector<ArgSpace>& spaces);

}  // namespace lve
