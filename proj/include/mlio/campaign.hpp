#pragma once

#include <cstdint>
#include <functional>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlio/driver.hpp"
#include "mlio/testbed.hpp"
#include "mlio/trainer.hpp"

namespace mlio {

/// One benchmark campaign; the JSON schema is documented in docs/formats.md.
struct CampaignConfig {
  std::vector<FunctionId> functions{kAllFunctions.begin(), kAllFunctions.end()};
  std::vector<int> dims{2};
  int repetitions = 5;
  int n_u = 100;
  int n_p = 100;
  std::vector<UqKind> uq{UqKind::robust, UqKind::stochastic};
  int setting = 1;
  std::uint64_t seed = 0;
  TrainerConfig trainer;  // trainer.n_tot_max is the budget
  std::filesystem::path out = "campaign";
  std::filesystem::path pool_cache;  // empty: pools are rebuilt every time
  int jobs = 1;

  void validate() const;
};

nlohmann::json to_json(const CampaignConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
CampaignConfig campaign_from_json(const nlohmann::json& j);

struct TracePoint {
  int n_tot = 0;
  double ia = 1.0;
  double so = 1.0;
};

struct RunRecord {
  FunctionId function = FunctionId::step;
  int dim = 2;
  int repetition = 0;
  UqKind uq = UqKind::robust;
  std::uint64_t seed = 0;
  std::string name;  // run directory name
  bool ok = false;
  std::string error;
  std::vector<TracePoint> trace;
  Metrics final;
  int n_tot = 0;
  double seconds = 0.0;
};

/// Metric value after `samples` evaluations: 1 before the first estimate,
/// otherwise the last trace point with n_tot <= samples.
double trace_value_at(const std::vector<TracePoint>& trace, int samples, bool so);

/// Linear-interpolation quantile (q in [0, 1]) of unsorted values.
double quantile(std::vector<double> values, double q);

struct CampaignSummary {
  CampaignConfig config;
  std::vector<RunRecord> runs;
  int failures() const;
};

/// Benchmark problem of one run: seeded translation, reference pool as the
/// design grid and sampling pool, reference at the pool point nearest the
/// box center, second initial set drawn from the pool with the run seed among
/// points off every axis line through the reference.
MlioProblem make_benchmark_problem(const TestProblem& prob, const ReferencePool& pool, UqKind uq,
                                   std::uint64_t seed);

/// Runs one benchmark configuration in memory; `stop` may end training early.
RunRecord run_benchmark(FunctionId id, int dim, int repetition, UqKind uq, const CampaignConfig& cfg,
                        const ReferencePool& pool, MlioResult* result = nullptr,
                        const std::function<bool(const std::vector<TracePoint>&)>& stop = {});

/// Runs every (function, D, repetition, uq) and writes the campaign files.
CampaignSummary run_campaign(const CampaignConfig& cfg);

/// Long-format CSV: samples,metric,uq,function,D,quantile,value.
void emit_convergence(std::ostream& os, const CampaignSummary& summary);
/// Final metrics per group: function,D,uq,metric,n_runs,min,q25,median,q75,max.
void emit_aggregate(std::ostream& os, const CampaignSummary& summary);

/// Hex SHA-256 of a file.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace mlio
