#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace mlio {

enum class FunctionId { step, alpine, sum_squares, levy, rosenbrock, ackley };

inline constexpr std::array<FunctionId, 6> kAllFunctions = {
    FunctionId::step, FunctionId::alpine, FunctionId::sum_squares,
    FunctionId::levy, FunctionId::rosenbrock, FunctionId::ackley};

std::string_view to_string(FunctionId id);
/// Accepts the display names (Step, SumSquares, ...) case-insensitively.
FunctionId function_id_from_string(std::string_view name);

/// Raw analytical formula at x in original units.
double evaluate_raw(FunctionId id, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Translated, normalized test function on [0,1]^D.
///
/// x_d = (xbar_d - T_d)(B_d2 - B_d1) + B_d1. The first D/2 coordinates are the
/// design variables u, the remaining D/2 the uncertain parameters p.
struct TestProblem {
  FunctionId id = FunctionId::step;
  int dim = 2;
  Eigen::VectorXd lower, upper;  // B_d1, B_d2
  Eigen::VectorXd translation;   // T
  double minf = 0.0;
  double maxf = 1.0;  // conservative maximum as tabulated

  int design_dim() const { return dim / 2; }
  int parameter_dim() const { return dim - dim / 2; }
};

std::pair<double, double> default_bounds(FunctionId id);

TestProblem make_problem(FunctionId id, int dim, const Eigen::VectorXd& translation);
/// Draws T uniformly in [0,1]^D (one shared value for Step and Alpine).
TestProblem make_problem(FunctionId id, int dim, std::uint64_t seed);

double tabulated_max(FunctionId id, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                     const Eigen::VectorXd& translation);

Eigen::VectorXd to_raw(const TestProblem& prob, const Eigen::Ref<const Eigen::VectorXd>& xbar);
double evaluate_normalized(const TestProblem& prob, const Eigen::Ref<const Eigen::VectorXd>& xbar);

/// Radical inverse of `index` in `base`.
double radical_inverse(std::uint64_t index, int base);
/// Halton point number `index` (>= 1) using the first `dim` primes.
Eigen::VectorXd halton(std::uint64_t index, int dim);
/// Points first..first+count-1 as columns.
Eigen::MatrixXd halton_points(int count, int dim, std::uint64_t first = 1);
std::vector<int> first_primes(int count);

enum class UqKind { robust, stochastic };
std::string_view to_string(UqKind kind);
UqKind uq_kind_from_string(std::string_view name);

/// robust: max, stochastic: arithmetic mean.
template <typename Derived>
double uq_reduce(UqKind kind, const Eigen::DenseBase<Derived>& values) {
  return kind == UqKind::robust ? double(values.maxCoeff()) : double(values.mean());
}

/// Factorial Halton reference sampling with cached normalized responses.
struct ReferencePool {
  FunctionId id = FunctionId::step;
  int dim = 2;
  std::uint64_t seed = 0;
  Eigen::MatrixXd u_points;   // D_u x n_u
  Eigen::MatrixXd p_points;   // D_p x n_p
  Eigen::MatrixXd responses;  // n_u x n_p
  Eigen::VectorXd uq_robust, uq_stochastic;

  Eigen::Index n_u() const { return u_points.cols(); }
  Eigen::Index n_p() const { return p_points.cols(); }
  const Eigen::VectorXd& uq(UqKind kind) const {
    return kind == UqKind::robust ? uq_robust : uq_stochastic;
  }
  double uq_true(Eigen::Index u_index, UqKind kind) const { return uq(kind)[u_index]; }

  /// All (u_i, p_j) pairs as columns of a D x (n_u n_p) matrix; column i*n_p + j.
  Eigen::MatrixXd joint_points() const;
};

ReferencePool build_reference_pool(const TestProblem& prob, int n_u, int n_p,
                                   std::uint64_t seed = 0);

/// Writes <stem>.csv (n_u*n_p rows: u..., p..., value) and <stem>.json.
void write_reference_pool(const ReferencePool& pool, const std::filesystem::path& stem);
/// Reads a pool written by write_reference_pool; recomputes the UQ caches.
ReferencePool read_reference_pool(const std::filesystem::path& stem);

inline constexpr double kMetricFloor = 1e-5;

struct Metrics {
  double ia = 1.0;
  double so = 1.0;
};

/// IA and SO of a method that chose design `u_index` and estimates its UQ
/// value as `uq_estimate`; normalized by the true UQ range and clamped to
/// [kMetricFloor, 1].
Metrics compute_metrics(const ReferencePool& pool, UqKind kind, Eigen::Index u_index,
                        double uq_estimate);

}  // namespace mlio
