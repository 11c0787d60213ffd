#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lve/engine.hpp"

namespace lve {

/// A synthetic benchmark instance. Evidence lands only on unary-predicate
/// randvars; potentials are seeded uniform draws from (0, 1].
struct BenchmarkSpec {
  std::string family;  // workshop-attrs | competing | social
  int domainSize = 8;
  int attrCount = 2;      // workshop-attrs: number of workshop attributes
  int workshopCount = 3;  // competing: number of workshops
  double evidenceFraction = 0.0;
  std::uint64_t seed = 0;
};

struct BenchmarkInstance {
  Model model;
  std::vector<Observation> evidence;
  Query query;
};

BenchmarkInstance generateBenchmark(const BenchmarkSpec& spec);

struct BenchRow {
  BenchmarkSpec spec;
  double runtimeMs = 0;
  std::size_t opCount = 0;
  std::uint64_t rowsCreated = 0;
  double marginalFirst = 0;
  /// Relative error vs ground VE; unset when the oracle was not requested,
  /// "skip" in the CSV when it was requested but the model is over the cap.
  std::optional<double> maxRelError;
  bool oracleSkipped = false;

  std::string toCsv() const;
  static const char* csvHeader();
};

BenchRow runBench(const BenchmarkSpec& spec, const EngineOptions& options,
                  bool withOracle);

}  // namespace lve
