#pragma once

#include <map>
#include <memory>
#include <vector>

#include <Eigen/Dense>

namespace mlio {

/// Exact-coordinate key used to detect coincident points.
using PointKey = std::vector<double>;

inline PointKey key_of(const Eigen::Ref<const Eigen::VectorXd>& x) {
  return PointKey(x.data(), x.data() + x.size());
}

/// Finite set of admissible sample locations (columns), with the distinct
/// coordinate values of every dimension precomputed for the 1-D layers.
class CandidateSet {
 public:
  CandidateSet() = default;
  explicit CandidateSet(Eigen::MatrixXd points);

  const Eigen::MatrixXd& points() const { return points_; }
  Eigen::Index size() const { return points_.cols(); }
  int dim() const { return static_cast<int>(points_.rows()); }

  /// Sorted distinct values of coordinate d.
  const std::vector<double>& axis_values(int d) const { return axis_values_[d]; }
  /// For each candidate, the position of its coordinate d in axis_values(d).
  const std::vector<int>& axis_index(int d) const { return axis_index_[d]; }

  /// Index of the candidate equal to x, or -1.
  Eigen::Index find(const Eigen::Ref<const Eigen::VectorXd>& x) const;

 private:
  Eigen::MatrixXd points_;
  std::vector<std::vector<double>> axis_values_;
  std::vector<std::vector<int>> axis_index_;
  std::map<PointKey, Eigen::Index> lookup_;
};

/// Distances from a growing list of points to every candidate, one row per
/// point in insertion order.
class DistanceCache {
 public:
  DistanceCache() = default;
  explicit DistanceCache(std::shared_ptr<const CandidateSet> candidates);

  bool attached() const { return candidates_ != nullptr; }
  const CandidateSet& candidates() const { return *candidates_; }
  std::shared_ptr<const CandidateSet> candidates_ptr() const { return candidates_; }

  Eigen::Index rows() const { return rows_; }
  Eigen::Index append(const Eigen::Ref<const Eigen::VectorXd>& x);
  void clear() { rows_ = 0; }

  /// First n rows (n x M).
  auto top(Eigen::Index n) const { return dist_.topRows(n); }
  auto row(Eigen::Index i) const { return dist_.row(i); }

 private:
  std::shared_ptr<const CandidateSet> candidates_;
  Eigen::MatrixXd dist_;
  Eigen::Index rows_ = 0;
};

/// Distances from x to every candidate.
Eigen::VectorXd distances_to(const CandidateSet& candidates,
                             const Eigen::Ref<const Eigen::VectorXd>& x);

}  // namespace mlio
