#pragma once

#include <array>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mlio/distance_cache.hpp"
#include "mlio/kriging.hpp"
#include "mlio/variogram.hpp"

namespace mlio {

/// Layer tags. Layer 0 marks the reference point.
enum class Layer : int { reference = 0, symmetric = 1, separable = 2, free = 3 };

enum class Variant { delta, direct };

std::string_view to_string(Variant v);

/// One evaluated point. Axis samples (symmetric and separable) differ from
/// the reference only in coordinate `axis`.
struct Sample {
  Eigen::VectorXd x;
  double z = 0.0;
  Layer layer = Layer::free;
  int axis = -1;
  bool validation = false;
};

struct SurrogateOptions {
  int n_windows = 10;
};

/// Fitted sub-surrogate: the Kriging system plus the model it was built from.
struct SubModel {
  KrigingSystem<double> system;
  VariogramFit fit;  // as fitted; the system may carry a guard nugget on top
  VariogramWarmStart warm;
  bool trained = false;
};

/// Three-layer decomposed Kriging surrogate.
///
/// Layer 1 is one 1-D Kriging along dimension 0 on residuals z - z_ref and is
/// applied to every coordinate:
///   z_sym(x) = z_ref + sum_d [k1(x_d) - k1(xref_d)]
/// (the anchoring term vanishes when the reference is on the diagonal).
/// Layer 2 has one 1-D Kriging per dimension d >= 1, on residuals z - z_sym
/// (delta) or z - z_ref (direct):
///   delta  z_sep(x) = z_sym(x) + sum_{d>=1} k2_d(x_d)
///   direct z_sep(x) = z_ref + sum_{d>=1} k2_d(x_d)
/// Layer 3 is a full Kriging over the reference and every axis and free
/// training point, on residuals z - z_sep (delta) or z - z_ref (direct).
/// The active variant of layers 2 and 3 is the one with the smaller
/// validation NRMSE; ties go to delta.
class DecomposedSurrogate {
 public:
  DecomposedSurrogate() = default;
  DecomposedSurrogate(Eigen::VectorXd x_ref, double z_ref, SurrogateOptions opts = {});

  int dim() const { return static_cast<int>(x_ref_.size()); }
  const Eigen::VectorXd& x_ref() const { return x_ref_; }
  double z_ref() const { return z_ref_; }
  const SurrogateOptions& options() const { return opts_; }

  /// Shares a candidate set; distance rows for layer-3 training points are
  /// then kept for fast sweeps over the candidates.
  void attach_candidates(std::shared_ptr<const CandidateSet> candidates);
  bool has_candidates() const { return cache_.attached(); }
  const CandidateSet& candidates() const { return cache_.candidates(); }
  std::shared_ptr<const CandidateSet> candidates_ptr() const { return cache_.candidates_ptr(); }

  /// Appends an evaluated sample; the reference sample is implicit.
  void add_sample(Sample s);
  const std::vector<Sample>& samples() const { return samples_; }
  bool contains(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd axis_point(int d, double t) const;

  int n_train(Layer layer) const;
  int n_validation(Layer layer) const;
  int n_train_axis(int d) const;
  int n_validation_axis(int d) const;
  int n_total() const { return static_cast<int>(samples_.size()) + 1; }
  /// Reference plus every axis and free training point.
  int n_union() const { return n_train(Layer::symmetric) + n_train(Layer::separable) + n_train(Layer::free) + 1; }
  int n_validation_total() const;

  /// 1-D coordinates of dimension d held by the axis pool of that dimension
  /// (symmetric for d = 0), including the pivot.
  std::vector<double> axis_coordinates(int d, bool with_validation) const;

  void retrain_symmetric();
  void retrain_separable();
  void retrain_free();
  void retrain(Layer layer);
  void retrain_all();

  bool trained(Layer layer) const;
  Variant active(Layer layer) const;
  void set_active(Layer layer, Variant v);
  /// Validation NRMSE of a layer variant; +inf when the layer has no
  /// validation points.
  double validation_error(Layer layer, Variant v) const;
  double validation_error(Layer layer) const { return validation_error(layer, active(layer)); }
  /// Observed min/max range of the layer's pool (absolute errors are used
  /// when it is 0).
  double value_range(Layer layer) const;

  /// 1-D sub-surrogate along dimension d: layer 1 for d = 0, the active
  /// layer-2 variant otherwise.
  const SubModel& axis_model(int d) const;
  const SubModel& axis_model(int d, Variant v) const;
  const SubModel& free_model(Variant v) const;
  const SubModel& free_model() const { return free_model(active(Layer::free)); }

  Prediction<double> predict_symmetric(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Prediction<double> predict_separable(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Prediction<double> predict_separable(const Eigen::Ref<const Eigen::VectorXd>& x, Variant v) const;
  Prediction<double> predict_full(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Prediction<double> predict_full(const Eigen::Ref<const Eigen::VectorXd>& x, Variant v) const;

  /// Means (and optionally layer-3 variances) of the full reconstruction at
  /// the columns of X.
  Eigen::VectorXd mean_full(const Eigen::MatrixXd& X) const;
  Eigen::VectorXd mean_separable(const Eigen::MatrixXd& X) const;
  Eigen::VectorXd mean_symmetric(const Eigen::MatrixXd& X) const;
  Eigen::VectorXd variance_full(const Eigen::MatrixXd& X) const;

  /// 1-D variance of the axis sub-surrogate of dimension d at coordinates t.
  Eigen::VectorXd axis_variance(int d, const Eigen::VectorXd& t) const;

  /// Full means at every candidate, and layer-3 variances at chosen
  /// candidate indices, using the cached distance rows.
  Eigen::VectorXd candidate_means() const;
  Eigen::VectorXd candidate_variances(const std::vector<Eigen::Index>& indices) const;
  Eigen::VectorXd candidate_variances() const;
  /// Distance from every candidate to its nearest layer-3 training point.
  Eigen::VectorXd candidate_nearest_union() const;

  nlohmann::json to_json() const;
  /// Rebuilds every system from the stored samples and fits without refitting.
  static DecomposedSurrogate from_json(const nlohmann::json& j,
                                       std::shared_ptr<const CandidateSet> candidates = nullptr);

 private:
  Eigen::VectorXd sym_mean_at(const Eigen::MatrixXd& X) const;
  Eigen::VectorXd sep_mean_at(const Eigen::MatrixXd& X, Variant v) const;
  Eigen::VectorXd sep_mean_on_candidates(Variant v) const;
  Eigen::VectorXd sym_mean_on_candidates() const;
  Eigen::VectorXd axis_mean(const SubModel& m, const Eigen::VectorXd& t) const;
  Eigen::MatrixXd union_locations() const;
  Eigen::VectorXd union_values() const;
  void refit(SubModel& model, const Eigen::MatrixXd& loc, const Eigen::VectorXd& residuals) const;
  void rebuild(SubModel& model, const Eigen::MatrixXd& loc, const Eigen::VectorXd& residuals) const;
  void train_symmetric(bool fit);
  void train_separable(bool fit);
  void train_free(bool fit);
  double nrmse(const Eigen::VectorXd& err, double range) const;
  void require(Layer layer) const;

  Eigen::VectorXd x_ref_;
  double z_ref_ = 0.0;
  SurrogateOptions opts_;
  std::vector<Sample> samples_;  // chronological, reference excluded
  std::vector<Eigen::Index> union_order_;  // indices into samples_ of training points
  std::set<PointKey> keys_;

  SubModel sym_;
  std::vector<std::array<SubModel, 2>> sep_;  // [d][variant], d = 0 unused
  std::array<SubModel, 2> free_;
  Variant sep_active_ = Variant::delta;
  Variant free_active_ = Variant::delta;
  std::array<double, 2> sym_error_{inf(), inf()};
  std::array<double, 2> sep_error_{inf(), inf()};
  std::array<double, 2> free_error_{inf(), inf()};

  DistanceCache cache_;  // row 0 is the reference, then union_order_

  static constexpr double inf() { return std::numeric_limits<double>::infinity(); }
};

/// Writes / reads the surrogate schema documented in docs/formats.md.
void save_surrogate(const DecomposedSurrogate& s, const std::filesystem::path& path);
DecomposedSurrogate load_surrogate(const std::filesystem::path& path,
                                   std::shared_ptr<const CandidateSet> candidates = nullptr);

}  // namespace mlio
