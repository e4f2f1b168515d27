#include "mlio/distance_cache.hpp"

#include <algorithm>

#include "mlio/errors.hpp"

namespace mlio {

CandidateSet::CandidateSet(Eigen::MatrixXd points) : points_(std::move(points)) {
  const int dim = static_cast<int>(points_.rows());
  axis_values_.resize(dim);
  axis_index_.resize(dim);
  for (int d = 0; d < dim; ++d) {
    std::vector<double> values;
    values.reserve(points_.cols());
    for (Eigen::Index m = 0; m < points_.cols(); ++m) values.push_back(points_(d, m));
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    axis_index_[d].resize(points_.cols());
    for (Eigen::Index m = 0; m < points_.cols(); ++m) {
      const auto it = std::lower_bound(values.begin(), values.end(), points_(d, m));
      axis_index_[d][m] = static_cast<int>(it - values.begin());
    }
    axis_values_[d] = std::move(values);
  }
  for (Eigen::Index m = 0; m < points_.cols(); ++m) lookup_.emplace(key_of(points_.col(m)), m);
}

Eigen::Index CandidateSet::find(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const auto it = lookup_.find(key_of(x));
  return it == lookup_.end() ? -1 : it->second;
}

Eigen::VectorXd distances_to(const CandidateSet& candidates,
                             const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != candidates.dim()) throw DimensionMismatch("point and candidates differ in dimension");
  return (candidates.points().colwise() - x).colwise().norm().transpose();
}

DistanceCache::DistanceCache(std::shared_ptr<const CandidateSet> candidates)
    : candidates_(std::move(candidates)) {}

Eigen::Index DistanceCache::append(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (!candidates_) throw InternalConsistency("distance cache has no candidates");
  if (rows_ == dist_.rows()) {
    Eigen::MatrixXd grown(std::max<Eigen::Index>(64, 2 * dist_.rows()), candidates_->size());
    grown.topRows(rows_) = dist_.topRows(rows_);
    dist_.swap(grown);
  }
  dist_.row(rows_) = distances_to(*candidates_, x).transpose();
  return rows_++;
}

}  // namespace mlio
