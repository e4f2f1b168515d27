#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mlio/decomposed.hpp"
#include "mlio/testbed.hpp"
#include "mlio/trainer.hpp"

namespace mlio {

/// Design optimization under uncertainty over x = [u; p] in [0,1]^(Du+Dp).
struct MlioProblem {
  BlackBox cost;
  int design_dim = 1;
  int parameter_dim = 1;
  UqKind uq = UqKind::robust;
  Eigen::MatrixXd parameter_samples;  // Dp x n_p, the set UQ_p is taken over
  Eigen::MatrixXd design_grid;        // Du x n_u; empty means a GA over u
  /// Optional sampling pool. When given together with a design grid it must be
  /// the joint grid, column i * n_p + j = [u_i; p_j].
  std::shared_ptr<const CandidateSet> candidates;
  /// [u; p] sets; the first one becomes the reference point.
  std::vector<Eigen::VectorXd> initial_sets;
  std::uint64_t seed = 0;

  int dim() const { return design_dim + parameter_dim; }
};

/// Joint grid of every design with every parameter sample.
Eigen::MatrixXd joint_grid(const Eigen::MatrixXd& designs, const Eigen::MatrixXd& parameters);

/// Initial layout: the reference, `setting` axis points per dimension on the
/// box edges (snapped to the extreme pool coordinates when a pool is given,
/// one value inward where the reference already sits on the edge),
/// the remaining initial sets as free points, and maximin validation points.
InitialPlan build_initialization(const MlioProblem& problem, int setting, const TrainerConfig& cfg);

/// Number of points build_initialization produces.
int initialization_size(int dim, int setting, int n_free, double v_ratio);

struct DesignChoice {
  Eigen::Index index = -1;  // design grid column, -1 in GA mode
  Eigen::VectorXd u;
  double uq_estimate = 0.0;
  Eigen::MatrixXd subset;  // [u; p_j] for every parameter sample
};

/// Design minimizing UQ_p of the surrogate mean; ties go to the lowest grid
/// index. Throws NoCandidates without parameter samples.
DesignChoice design_greedy(const DecomposedSurrogate& s, const MlioProblem& problem);

using MlioHook =
    std::function<bool(const DecomposedSurrogate&, const TrainerState&, const DesignChoice&)>;

struct MlioResult {
  DesignChoice optimum;
  DecomposedSurrogate surrogate;
  TrainerState state;
};

MlioResult run_mlio(const MlioProblem& problem, const TrainerConfig& cfg, int setting,
                    const MlioHook& hook = {});

nlohmann::json result_summary(const MlioResult& result);
/// Writes surrogate.json, ledger.csv and summary.json into dir.
void write_result_bundle(const MlioResult& result, const std::filesystem::path& dir);

}  // namespace mlio
