#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace mlio {

/// Batched objective: receives candidate points as columns and returns one
/// value per column. Excluded points may report -infinity.
using BatchObjective = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

/// Real-coded GA settings.
///
/// Operators: tournament selection of size 3, blend crossover (BLX-0.5),
/// per-coordinate Gaussian mutation whose standard deviation decays linearly
/// over the generations, and elitism of one individual.
struct GaConfig {
  int population = 100;
  int generations = 100;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::uint64_t seed = 0;
  Eigen::MatrixXd warm_start;  // optional seed individuals, one per column
  double mutation_rate = 0.2;
  double mutation_scale = 0.1;  // initial sigma as a fraction of the box width
};

struct MaximizeResult {
  Eigen::VectorXd point;
  double value = -std::numeric_limits<double>::infinity();
  Eigen::Index index = -1;  // pool index for pool_argmax, -1 otherwise
};

/// Maximizes `objective` over the box of `cfg`. Deterministic given the seed;
/// the best-so-far value is monotone across generations.
MaximizeResult ga_maximize(const BatchObjective& objective, const GaConfig& cfg);

/// Exhaustive maximum over the pool columns; ties go to the lowest index.
/// Points are evaluated in chunks of `chunk` columns.
MaximizeResult pool_argmax(const BatchObjective& objective, const Eigen::MatrixXd& pool,
                           Eigen::Index chunk = 4096);

/// Index of the largest entry; ties go to the lowest index.
Eigen::Index argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& values);

using ResidualFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct LeastSquaresOptions {
  int max_iterations = 200;
  double gradient_tolerance = 1e-12;
  double step_tolerance = 1e-12;
  double function_tolerance = 1e-15;
};

struct LeastSquaresResult {
  Eigen::VectorXd params;
  double objective = 0.0;  // sum of squared residuals
  int iterations = 0;
};

/// Projected Levenberg-Marquardt on the box [lower, upper]. The returned
/// parameters are feasible and never worse than `init`.
///
/// Throws FitFailure when the residual is not finite at `init`.
LeastSquaresResult bounded_least_squares(const ResidualFunction& residual,
                                         const Eigen::VectorXd& lower,
                                         const Eigen::VectorXd& upper,
                                         const Eigen::VectorXd& init,
                                         const LeastSquaresOptions& options = {});

}  // namespace mlio
