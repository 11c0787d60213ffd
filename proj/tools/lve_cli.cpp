#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "lve/bench.hpp"
#include "lve/engine.hpp"
#include "lve/ground.hpp"
#include "lve/textio.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitParse = 2;
constexpr int kExitInput = 3;
constexpr int kExitSizeCap = 4;

std::string readFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw lve::InputError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int runQueryCommand(const std::string& modelPath,
                    const std::string& evidencePath, const std::string& query,
                    bool oracle, bool logSpace, bool trace, double groundCap) {
  lve::Model model = lve::parseModel(readFile(modelPath));
  std::vector<lve::Observation> evidence;
  if (!evidencePath.empty())
    evidence = lve::parseEvidence(readFile(evidencePath), model);
  lve::Query q = lve::parseQuery(query, model);

  lve::EngineOptions options;
  options.mode = logSpace ? lve::NumericMode::Log : lve::NumericMode::Linear;
  options.captureTrace = trace;
  lve::MarginalResult res = lve::runQuery(model, evidence, q, options);

  if (trace)
    for (const auto& line : res.traceLines) std::cerr << line << '\n';

  std::cout << "query: " << q.toString() << '\n';
  for (std::size_t v = 0; v < res.distribution.size(); ++v) {
    std::cout << "  P(" << q.pred->range()[v] << ") = ";
    std::cout.precision(12);
    std::cout << res.distribution[v] << '\n';
  }
  std::cout << "ops: " << res.opCount << "  rows: " << res.rowsCreated
            << "  time_ms: " << res.wallTimeMs << '\n';

  if (oracle) {
    lve::GroundModel gm = lve::groundModel(model, evidence, groundCap);
    std::vector<double> ref =
        lve::veMarginal(gm, lve::GroundAtom{q.pred, q.args});
    double maxRel = 0;
    for (std::size_t v = 0; v < ref.size(); ++v)
      maxRel = std::max(maxRel, std::abs(ref[v] - res.distribution[v]) /
                                    std::max(std::abs(ref[v]), 1e-300));
    std::cout << "oracle_max_rel_error: " << maxRel << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lifted variable elimination over parfactor models"};
  app.require_subcommand(1);

  double groundCap = lve::groundCapBits();

  auto* queryCmd = app.add_subcommand("query", "answer a marginal query");
  std::string modelPath, evidencePath, queryText;
  bool oracle = false, logSpace = false, trace = false;
  queryCmd->add_option("--model", modelPath, "model file")->required();
  queryCmd->add_option("--evidence", evidencePath, "evidence file");
  queryCmd->add_option("--query", queryText, "ground query atom, e.g. 'Series()'")
      ->required();
  queryCmd->add_flag("--oracle", oracle, "also run ground VE and report error");
  queryCmd->add_flag("--log-space", logSpace, "log-space potentials");
  queryCmd->add_flag("--trace", trace, "print the operator trace to stderr");
  queryCmd->add_option("--ground-cap", groundCap,
                       "ground-model budget in bits (LVE_GROUND_CAP)");

  auto* benchCmd = app.add_subcommand("bench", "run a synthetic benchmark");
  lve::BenchmarkSpec spec;
  std::string csvPath;
  bool benchOracle = false, benchLinear = false;
  int reps = 1;
  benchCmd->add_option("--family", spec.family,
                       "workshop-attrs | competing | social")
      ->required();
  benchCmd->add_option("--n", spec.domainSize, "domain size")->required();
  benchCmd->add_option("--attrs", spec.attrCount, "workshop-attrs: attributes");
  benchCmd->add_option("--workshops", spec.workshopCount,
                       "competing: workshops");
  benchCmd->add_option("--evidence-frac", spec.evidenceFraction,
                       "fraction of unary randvars observed");
  benchCmd->add_option("--seed", spec.seed, "RNG seed");
  benchCmd->add_option("--reps", reps, "repetitions (seed, seed+1, ...)");
  benchCmd->add_flag("--oracle", benchOracle,
                     "compare with ground VE when under the size cap");
  benchCmd->add_flag("--linear", benchLinear,
                     "linear-space potentials (default is log-space)");
  benchCmd->add_option("--csv", csvPath, "append CSV rows to this file");

  auto* plotCmd = app.add_subcommand(
      "plot-data", "bench rows over a list of domain sizes");
  std::string nList = "50,100,200,500,1000";
  lve::BenchmarkSpec plotSpec;
  std::string plotCsv;
  plotCmd->add_option("--family", plotSpec.family, "benchmark family")
      ->required();
  plotCmd->add_option("--n-list", nList, "comma-separated domain sizes");
  plotCmd->add_option("--attrs", plotSpec.attrCount, "workshop attributes");
  plotCmd->add_option("--workshops", plotSpec.workshopCount, "workshops");
  plotCmd->add_option("--evidence-frac", plotSpec.evidenceFraction,
                      "fraction observed");
  plotCmd->add_option("--seed", plotSpec.seed, "RNG seed");
  plotCmd->add_option("--csv", plotCsv, "append CSV rows to this file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (queryCmd->parsed()) {
      return runQueryCommand(modelPath, evidencePath, queryText, oracle,
                             logSpace, trace, groundCap);
    }
    if (benchCmd->parsed()) {
      lve::EngineOptions options;
      options.mode =
          benchLinear ? lve::NumericMode::Linear : lve::NumericMode::Log;
      std::ostream* out = &std::cout;
      std::ofstream file;
      if (!csvPath.empty()) {
        file.open(csvPath, std::ios::app);
        out = &file;
      }
      *out << lve::BenchRow::csvHeader() << '\n';
      for (int r = 0; r < reps; ++r) {
        lve::BenchmarkSpec s = spec;
        s.seed = spec.seed + static_cast<std::uint64_t>(r);
        *out << lve::runBench(s, options, benchOracle).toCsv() << '\n';
      }
      return kExitOk;
    }
    if (plotCmd->parsed()) {
      lve::EngineOptions options;
      options.mode = lve::NumericMode::Log;
      std::ostream* out = &std::cout;
      std::ofstream file;
      if (!plotCsv.empty()) {
        file.open(plotCsv, std::ios::app);
        out = &file;
      }
      *out << lve::BenchRow::csvHeader() << '\n';
      std::stringstream ns(nList);
      std::string tok;
      while (std::getline(ns, tok, ',')) {
        lve::BenchmarkSpec s = plotSpec;
        s.domainSize = std::stoi(tok);
        *out << lve::runBench(s, options, false).toCsv() << '\n';
      }
      return kExitOk;
    }
  } catch (const lve::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitParse;
  } catch (const lve::SizeCapError& e) {
    std::cerr << "size cap: " << e.what() << '\n';
    return kExitSizeCap;
  } catch (const lve::InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
