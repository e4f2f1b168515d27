#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mlio/decomposed.hpp"
#include "mlio/meta_opt.hpp"

namespace mlio {

struct TrainerConfig {
  double v_ratio = 0.5;
  double g_ratio = 0.5;
  double tau_val = 1e-3;
  double tau_ci = 1e-2;
  int n_tot_max = 1000;
  int n_ss_max = 100;
  int v_min = 0;  // 0 means D
  int ga_population = 100;
  int ga_generations = 100;
  int n_windows = 10;
  std::uint64_t seed = 0;

  void validate() const;
  int validation_period() const;  // ceil(1 / v_ratio)
};

/// Per-layer (eps_val, eps_ci), index 0..2 for layers 1..3.
struct LayerErrors {
  std::array<double, 3> val{inf(), inf(), inf()};
  std::array<double, 3> ci{inf(), inf(), inf()};

  static constexpr double inf() { return std::numeric_limits<double>::infinity(); }
};

enum class SampleKind { train, val, greedy };
std::string_view to_string(SampleKind k);

/// One evaluated point; iteration 0 is the initial layout.
struct LedgerEntry {
  int iter = 0;
  Layer layer = Layer::free;
  SampleKind kind = SampleKind::train;
  Eigen::VectorXd x;
  double value = 0.0;
  LayerErrors errors;
  int n_tot = 0;
};

enum class Termination { running, quality_met, budget_exhausted, stopped };
std::string_view to_string(Termination t);

struct TrainerState {
  int iter = 0;
  Layer cursor = Layer::symmetric;
  int greedy_count = 0;
  int greedy_fallbacks = 0;
  LayerErrors errors;
  std::vector<LayerErrors> history;  // one entry per iteration, after retraining
  std::vector<LedgerEntry> ledger;
  Termination termination = Termination::running;
};

/// Planned point of the initial layout; the trainer evaluates it.
struct PlannedSample {
  Eigen::VectorXd x;
  Layer layer = Layer::free;
  int axis = -1;
  bool validation = false;
};

struct InitialPlan {
  Eigen::VectorXd reference;
  std::vector<PlannedSample> points;
  int size() const { return static_cast<int>(points.size()) + 1; }
};

using BlackBox = std::function<double(const Eigen::VectorXd&)>;
/// Returns a candidate subset (columns) for the greedy layer-3 step.
using GreedyOperator = std::function<Eigen::MatrixXd(const DecomposedSurrogate&)>;
/// Called after every retrain; returning true stops training.
using TrainerHook = std::function<bool(const DecomposedSurrogate&, const TrainerState&)>;

/// Search settings shared by the acquisition and validation rules. With a
/// candidate set, every search is restricted to it (its distinct coordinate
/// values for the 1-D layers); otherwise the GA runs on the unit box.
struct SearchContext {
  std::shared_ptr<const CandidateSet> candidates;
  int ga_population = 100;
  int ga_generations = 100;
  std::uint64_t seed = 0;
  int n_ss_max = 100;
};

struct SearchResult {
  Eigen::VectorXd x;
  int axis = -1;
  double variance = 0.0;  // acquisition value at x
};

/// True when no further axis sample fits along dimension d.
bool axis_capped(const DecomposedSurrogate& s, int d, const SearchContext& ctx);
bool layer_capped(const DecomposedSurrogate& s, Layer layer, const SearchContext& ctx);

/// Maximum-variance point of a layer that is not yet evaluated. Throws
/// CapReached when nothing is left.
SearchResult next_exploration(const DecomposedSurrogate& s, Layer layer, const SearchContext& ctx);

/// Maximin point of a layer's pool. Throws CapReached when nothing is left.
SearchResult next_validation(const DecomposedSurrogate& s, Layer layer, const SearchContext& ctx);

/// 1-D maximin over [0, 1]: the endpoint or gap midpoint farthest from `taken`.
double maximin_1d(std::vector<double> taken);

/// eps_ci = 1.95996 sigma_max / range, falling back to the absolute
/// half-width when the range is 0.
double ci_error(double max_variance, double range);

/// Validation errors of every trained layer. eps_ci is copied from `ci`.
LayerErrors compute_errors(const DecomposedSurrogate& s, const std::array<double, 3>& ci);

/// Member of the greedy subset with maximal layer-3 variance, skipping
/// evaluated points. Throws EmptySubset when none remain.
SearchResult greedy_step(const DecomposedSurrogate& s, const GreedyOperator& g);

struct TrainingContext {
  std::shared_ptr<const CandidateSet> candidates;
  GreedyOperator greedy;
  TrainerHook hook;
};

struct TrainingResult {
  DecomposedSurrogate surrogate;
  TrainerState state;
};

TrainingResult run_training(const BlackBox& f, const TrainerConfig& cfg, const InitialPlan& init,
                            const TrainingContext& ctx = {});

/// Ledger CSV: iter,layer,kind,x1..xD,value,eps_val_sym,eps_val_sep,
/// eps_val_free,eps_ci_sym,eps_ci_sep,eps_ci_free,n_tot
void write_ledger_csv(std::ostream& os, const std::vector<LedgerEntry>& ledger, int dim);

}  // namespace mlio
