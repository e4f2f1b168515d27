#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "mlio/errors.hpp"
#include "mlio/variogram.hpp"

namespace mlio {

inline constexpr double kConditionLimit = 1e8;
inline constexpr double kGuardNugget = 1e-8;
inline constexpr double kVarianceTolerance = 1e-12;

template <typename Scalar>
struct Prediction {
  Scalar mean{0};
  Scalar variance{0};
};

/// Euclidean distances between the columns of `a` (D x N) and `b` (D x M),
/// computed by explicit differences so coincident points give exactly 0.
template <typename DA, typename DB>
Eigen::Matrix<typename DA::Scalar, Eigen::Dynamic, Eigen::Dynamic> pairwise_distances(
    const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  using Scalar = typename DA::Scalar;
  if (a.rows() != b.rows()) throw DimensionMismatch("point sets differ in dimension");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(a.cols(), b.cols());
  for (Eigen::Index j = 0; j < b.cols(); ++j)
    out.col(j) = (a.colwise() - b.col(j)).colwise().norm().transpose();
  return out;
}

/// Ordinary Kriging system over N observations, factorized once.
///
/// The bordered matrix is
///
///   alpha = [ Gamma  1 ]      Gamma_ij = gamma(|x_i - x_j|)
///           [ 1^T    0 ]
///
/// and a query x0 solves alpha [w; lambda] = [gamma_0; 1]. The mean is w^T z,
/// the variance w^T gamma_0 + lambda.
template <typename Scalar = double>
class KrigingSystem {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  KrigingSystem() = default;

  Eigen::Index size() const { return locations_.cols(); }
  Eigen::Index dim() const { return locations_.rows(); }
  bool empty() const { return size() == 0; }
  const Matrix& locations() const { return locations_; }
  const Vector& values() const { return values_; }
  /// Model actually used in Gamma, including a guard nugget when engaged.
  const VariogramFit& fit() const { return fit_; }
  bool nugget_guard() const { return guarded_; }
  Scalar rcond() const { return rcond_; }
  /// Bordered matrix as assembled, before factorization.
  const Matrix& bordered() const { return alpha_; }

  /// Right-hand side [gamma_0; 1] for each query given its distances to the
  /// observations (N x M).
  template <typename Derived>
  Matrix rhs_from_distances(const Eigen::MatrixBase<Derived>& dist) const {
    Matrix rhs(size() + 1, dist.cols());
    rhs.topRows(size()) = eval_model_array(fit_, dist.array()).matrix();
    rhs.row(size()).setOnes();
    return rhs;
  }

  /// Weights and Lagrange multiplier [w; lambda] for one query.
  template <typename Derived>
  Vector solve_weights(const Eigen::MatrixBase<Derived>& query) const {
    require_query(query.rows());
    const Matrix rhs = rhs_from_distances(pairwise_distances(locations_, query));
    return lu_.solve(rhs).col(0);
  }

  template <typename Derived>
  Prediction<Scalar> predict(const Eigen::MatrixBase<Derived>& query) const {
    require_query(query.rows());
    const Matrix rhs = rhs_from_distances(pairwise_distances(locations_, query));
    const Vector xi = lu_.solve(rhs).col(0);
    Prediction<Scalar> p;
    p.mean = xi.head(size()).dot(values_);
    p.variance = clamp_variance(xi.dot(rhs.col(0)));
    return p;
  }

  /// Means for queries with known distances (N x M); costs O(N) per query.
  template <typename Derived>
  Vector mean_from_distances(const Eigen::MatrixBase<Derived>& dist) const {
    require_distances(dist.rows());
    return eval_model_array(fit_, dist.array()).matrix().transpose() * dual_.head(size()) +
           Vector::Constant(dist.cols(), dual_[size()]);
  }

  /// Variances for queries with known distances (N x M).
  template <typename Derived>
  Vector variance_from_distances(const Eigen::MatrixBase<Derived>& dist) const {
    require_distances(dist.rows());
    const Matrix rhs = rhs_from_distances(dist);
    const Matrix xi = lu_.solve(rhs);
    Vector var = (xi.array() * rhs.array()).colwise().sum().transpose();
    for (auto& v : var) v = clamp_variance(v);
    return var;
  }

  /// Batched predictions for the columns of `queries` (D x M).
  template <typename Derived>
  void predict_batch(const Eigen::MatrixBase<Derived>& queries, Vector* mean, Vector* variance,
                     Eigen::Index chunk = 2048) const {
    require_query(queries.rows());
    const Eigen::Index m = queries.cols();
    if (mean) mean->resize(m);
    if (variance) variance->resize(m);
    for (Eigen::Index start = 0; start < m; start += chunk) {
      const Eigen::Index n = std::min(chunk, m - start);
      const Matrix dist = pairwise_distances(locations_, queries.middleCols(start, n));
      if (mean) mean->segment(start, n) = mean_from_distances(dist);
      if (variance) variance->segment(start, n) = variance_from_distances(dist);
    }
  }

  /// Round-off allowance for negative variances; grows with the condition
  /// estimate of alpha.
  Scalar variance_tolerance() const {
    const Scalar eps = std::numeric_limits<Scalar>::epsilon();
    const Scalar kappa = rcond_ > Scalar(0) ? Scalar(1) / rcond_ : Scalar(1);
    return std::max(Scalar(kVarianceTolerance), Scalar(8) * eps * kappa * Scalar(fit_.scale));
  }

  Scalar clamp_variance(Scalar v) const {
    if (v >= Scalar(0)) return v;
    if (v > -variance_tolerance()) return Scalar(0);
    throw InternalConsistency("negative Kriging variance " + std::to_string(double(v)));
  }

 private:
  template <typename S, typename DL, typename DV>
  friend KrigingSystem<S> assemble_system(const Eigen::MatrixBase<DL>&,
                                          const Eigen::MatrixBase<DV>&, const VariogramFit&);

  void require_query(Eigen::Index rows) const {
    if (empty()) throw NotTrained("Kriging system has no observations");
    if (rows != dim()) throw DimensionMismatch("query dimension does not match observations");
  }
  void require_distances(Eigen::Index rows) const {
    if (empty()) throw NotTrained("Kriging system has no observations");
    if (rows != size()) throw DimensionMismatch("distance rows do not match observations");
  }

  Matrix locations_;
  Vector values_;
  VariogramFit fit_;
  Matrix alpha_;
  Eigen::PartialPivLU<Matrix> lu_;
  Vector dual_;  // alpha^{-1} [z; 0], so mean = [gamma_0; 1]^T dual
  Scalar rcond_{0};
  bool guarded_ = false;
};

/// Builds and factorizes the bordered system for observations at the columns
/// of `locations` (D x N). If the condition estimate exceeds 1e8 the model is
/// rebuilt with a 1e-8 nugget added.
template <typename Scalar = double, typename DL, typename DV>
KrigingSystem<Scalar> assemble_system(const Eigen::MatrixBase<DL>& locations,
                                      const Eigen::MatrixBase<DV>& values,
                                      const VariogramFit& fit) {
  using Matrix = typename KrigingSystem<Scalar>::Matrix;
  const Eigen::Index n = locations.cols();
  if (n < 2) throw TooFewPoints("Kriging needs at least 2 observations");
  if (values.size() != n) throw DimensionMismatch("values and locations differ in length");

  KrigingSystem<Scalar> sys;
  sys.locations_ = locations.template cast<Scalar>();
  sys.values_ = values.template cast<Scalar>();
  sys.fit_ = fit;

  const Matrix dist = pairwise_distances(sys.locations_, sys.locations_);
  auto factorize = [&]() {
    sys.alpha_.resize(n + 1, n + 1);
    sys.alpha_.topLeftCorner(n, n) = eval_model_array(sys.fit_, dist.array()).matrix();
    sys.alpha_.row(n).setOnes();
    sys.alpha_.col(n).setOnes();
    sys.alpha_(n, n) = Scalar(0);
    sys.lu_.compute(sys.alpha_);
    const Scalar rc = sys.lu_.rcond();
    sys.rcond_ = std::isfinite(double(rc)) ? rc : Scalar(0);
  };

  factorize();
  if (sys.rcond_ < Scalar(1) / Scalar(kConditionLimit)) {
    sys.guarded_ = true;
    sys.fit_.nugget += kGuardNugget;
    sys.fit_.sill = std::max(sys.fit_.sill, sys.fit_.nugget);
    factorize();
    if (sys.rcond_ < Scalar(1e-14))
      throw SingularSystem("Kriging system is singular even with the nugget guard");
  }

  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rhs(n + 1);
  rhs.head(n) = sys.values_;
  rhs[n] = Scalar(0);
  sys.dual_ = sys.lu_.solve(rhs);
  if (!sys.dual_.allFinite()) throw SingularSystem("non-finite Kriging solution");
  return sys;
}

/// Interval [mean - q sigma, mean + q sigma] with q the normal quantile at
/// (1 + P) / 2.
template <typename Scalar>
std::pair<Scalar, Scalar> confidence_interval(const Prediction<Scalar>& p, double probability) {
  if (!(probability > 0.0 && probability < 1.0))
    throw InvalidProbability("confidence level must lie in (0, 1)");
  if (p.variance < Scalar(0)) throw InvalidProbability("negative variance");
  const double q = boost::math::quantile(boost::math::normal(), 0.5 * (1.0 + probability));
  const Scalar half = Scalar(q) * std::sqrt(p.variance);
  return {p.mean - half, p.mean + half};
}

/// Half-width factor of the 95% interval, about 1.95996.
inline double ci95_factor() {
  static const double q = boost::math::quantile(boost::math::normal(), 0.975);
  return q;
}

}  // namespace mlio
