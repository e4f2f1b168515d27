#include "mlio/decomposed.hpp"

#include <algorithm>
#include <cmath>

#include "mlio/errors.hpp"

namespace mlio {

std::string_view to_string(Variant v) { return v == Variant::delta ? "delta" : "direct"; }

namespace {

constexpr Eigen::Index kChunk = 2048;

int variant_slot(Variant v) { return v == Variant::delta ? 0 : 1; }

Eigen::MatrixXd axis_distances(const KrigingSystem<double>& sys, const Eigen::VectorXd& t) {
  const Eigen::RowVectorXd loc = sys.locations().row(0);
  Eigen::MatrixXd dist(loc.size(), t.size());
  for (Eigen::Index q = 0; q < t.size(); ++q) dist.col(q) = (loc.transpose().array() - t[q]).abs();
  return dist;
}

double range_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *hi - *lo;
}

}  // namespace

DecomposedSurrogate::DecomposedSurrogate(Eigen::VectorXd x_ref, double z_ref, SurrogateOptions opts)
    : x_ref_(std::move(x_ref)), z_ref_(z_ref), opts_(opts) {
  if (x_ref_.size() < 1) throw DimensionMismatch("reference point must have at least one coordinate");
  if (!std::isfinite(z_ref_)) throw BlackBoxFailure("non-finite reference response", "reference");
  sep_.resize(x_ref_.size());
  keys_.insert(key_of(x_ref_));
}

void DecomposedSurrogate::attach_candidates(std::shared_ptr<const CandidateSet> candidates) {
  if (!candidates) {
    cache_ = DistanceCache();
    return;
  }
  if (candidates->dim() != dim()) throw DimensionMismatch("candidate set has wrong dimension");
  cache_ = DistanceCache(std::move(candidates));
  cache_.append(x_ref_);
  for (Eigen::Index idx : union_order_) cache_.append(samples_[idx].x);
}

Eigen::VectorXd DecomposedSurrogate::axis_point(int d, double t) const {
  Eigen::VectorXd x = x_ref_;
  x[d] = t;
  return x;
}

bool DecomposedSurrogate::contains(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return keys_.count(key_of(x)) > 0;
}

void DecomposedSurrogate::add_sample(Sample s) {
  if (s.x.size() != dim()) throw DimensionMismatch("sample has wrong dimension");
  if (!std::isfinite(s.z)) throw BlackBoxFailure("non-finite response", "sample");
  if (s.layer == Layer::reference) throw InternalConsistency("the reference sample is implicit");
  if (s.layer == Layer::symmetric || s.layer == Layer::separable) {
    const bool ok_axis = s.layer == Layer::symmetric ? s.axis == 0 : (s.axis >= 1 && s.axis < dim());
    if (!ok_axis) throw InternalConsistency("axis sample on the wrong dimension");
    for (int d = 0; d < dim(); ++d)
      if (d != s.axis && s.x[d] != x_ref_[d])
        throw InternalConsistency("axis sample leaves the reference off its own dimension");
  } else {
    s.axis = -1;
  }
  if (!keys_.insert(key_of(s.x)).second) throw InternalConsistency("point already evaluated");
  samples_.push_back(std::move(s));
  const Sample& added = samples_.back();
  if (!added.validation) {
    union_order_.push_back(static_cast<Eigen::Index>(samples_.size()) - 1);
    if (cache_.attached()) cache_.append(added.x);
  }
}

int DecomposedSurrogate::n_train(Layer layer) const {
  return static_cast<int>(std::count_if(samples_.begin(), samples_.end(), [&](const Sample& s) {
    return s.layer == layer && !s.validation;
  }));
}

int DecomposedSurrogate::n_validation(Layer layer) const {
  return static_cast<int>(std::count_if(samples_.begin(), samples_.end(), [&](const Sample& s) {
    return s.layer == layer && s.validation;
  }));
}

int DecomposedSurrogate::n_train_axis(int d) const {
  return static_cast<int>(std::count_if(samples_.begin(), samples_.end(), [&](const Sample& s) {
    return s.axis == d && !s.validation;
  }));
}

int DecomposedSurrogate::n_validation_axis(int d) const {
  return static_cast<int>(std::count_if(samples_.begin(), samples_.end(), [&](const Sample& s) {
    return s.axis == d && s.validation;
  }));
}

int DecomposedSurrogate::n_validation_total() const {
  return static_cast<int>(
      std::count_if(samples_.begin(), samples_.end(), [](const Sample& s) { return s.validation; }));
}

std::vector<double> DecomposedSurrogate::axis_coordinates(int d, bool with_validation) const {
  std::vector<double> t{x_ref_[d]};
  for (const Sample& s : samples_)
    if (s.axis == d && (with_validation || !s.validation)) t.push_back(s.x[d]);
  return t;
}

Eigen::MatrixXd DecomposedSurrogate::union_locations() const {
  Eigen::MatrixXd loc(dim(), static_cast<Eigen::Index>(union_order_.size()) + 1);
  loc.col(0) = x_ref_;
  for (std::size_t k = 0; k < union_order_.size(); ++k) loc.col(k + 1) = samples_[union_order_[k]].x;
  return loc;
}

Eigen::VectorXd DecomposedSurrogate::union_values() const {
  Eigen::VectorXd z(static_cast<Eigen::Index>(union_order_.size()) + 1);
  z[0] = z_ref_;
  for (std::size_t k = 0; k < union_order_.size(); ++k) z[k + 1] = samples_[union_order_[k]].z;
  return z;
}

void DecomposedSurrogate::refit(SubModel& model, const Eigen::MatrixXd& loc,
                                const Eigen::VectorXd& residuals) const {
  const auto exp = build_experimental(loc, residuals, opts_.n_windows);
  model.fit = fit_models(exp, &model.warm);
  rebuild(model, loc, residuals);
}

void DecomposedSurrogate::rebuild(SubModel& model, const Eigen::MatrixXd& loc,
                                  const Eigen::VectorXd& residuals) const {
  model.system = assemble_system(loc, residuals, model.fit);
  model.trained = true;
}

double DecomposedSurrogate::nrmse(const Eigen::VectorXd& err, double range) const {
  if (err.size() == 0) return inf();
  const double rmse = std::sqrt(err.squaredNorm() / double(err.size()));
  return range > 0.0 ? rmse / range : rmse;
}

double DecomposedSurrogate::value_range(Layer layer) const {
  std::vector<double> z{z_ref_};
  for (const Sample& s : samples_)
    if (layer == Layer::free || s.layer == layer) z.push_back(s.z);
  return range_of(z);
}

void DecomposedSurrogate::train_symmetric(bool fit) {
  std::vector<double> t{x_ref_[0]};
  std::vector<double> r{0.0};
  std::vector<Eigen::Index> val;
  for (std::size_t k = 0; k < samples_.size(); ++k) {
    const Sample& s = samples_[k];
    if (s.layer != Layer::symmetric) continue;
    if (s.validation) {
      val.push_back(static_cast<Eigen::Index>(k));
    } else {
      t.push_back(s.x[0]);
      r.push_back(s.z - z_ref_);
    }
  }
  if (t.size() < 2) throw TooFewPoints("symmetric layer needs a training sample besides the reference");
  const Eigen::MatrixXd loc = Eigen::Map<const Eigen::RowVectorXd>(t.data(), t.size());
  const Eigen::VectorXd res = Eigen::Map<const Eigen::VectorXd>(r.data(), r.size());
  fit ? refit(sym_, loc, res) : rebuild(sym_, loc, res);

  Eigen::MatrixXd V(dim(), val.size());
  Eigen::VectorXd zv(val.size());
  for (std::size_t k = 0; k < val.size(); ++k) {
    V.col(k) = samples_[val[k]].x;
    zv[k] = samples_[val[k]].z;
  }
  const double e = nrmse(zv - sym_mean_at(V), value_range(Layer::symmetric));
  sym_error_ = {e, e};
}

void DecomposedSurrogate::train_separable(bool fit) {
  if (dim() == 1) {
    sep_error_ = {0.0, 0.0};
    sep_active_ = Variant::delta;
    return;
  }
  require(Layer::symmetric);
  for (int d = 1; d < dim(); ++d) {
    std::vector<double> t{x_ref_[d]};
    std::vector<Eigen::Index> idx;
    for (std::size_t k = 0; k < samples_.size(); ++k) {
      const Sample& s = samples_[k];
      if (s.axis == d && !s.validation) {
        t.push_back(s.x[d]);
        idx.push_back(static_cast<Eigen::Index>(k));
      }
    }
    if (t.size() < 2) throw TooFewPoints("separable layer needs a training sample on every dimension");
    Eigen::MatrixXd pts(dim(), t.size());
    Eigen::VectorXd z(t.size());
    pts.col(0) = x_ref_;
    z[0] = z_ref_;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      pts.col(k + 1) = samples_[idx[k]].x;
      z[k + 1] = samples_[idx[k]].z;
    }
    const Eigen::MatrixXd loc = Eigen::Map<const Eigen::RowVectorXd>(t.data(), t.size());
    const Eigen::VectorXd delta_res = z - sym_mean_at(pts);
    const Eigen::VectorXd direct_res = z.array() - z_ref_;
    if (fit) {
      refit(sep_[d][0], loc, delta_res);
      refit(sep_[d][1], loc, direct_res);
    } else {
      rebuild(sep_[d][0], loc, delta_res);
      rebuild(sep_[d][1], loc, direct_res);
    }
  }

  const double range = value_range(Layer::separable);
  for (Variant v : {Variant::delta, Variant::direct}) {
    double worst = -1.0;
    for (int d = 1; d < dim(); ++d) {
      std::vector<Eigen::Index> val;
      for (std::size_t k = 0; k < samples_.size(); ++k)
        if (samples_[k].axis == d && samples_[k].validation) val.push_back(static_cast<Eigen::Index>(k));
      if (val.empty()) continue;
      Eigen::MatrixXd V(dim(), val.size());
      Eigen::VectorXd zv(val.size());
      for (std::size_t k = 0; k < val.size(); ++k) {
        V.col(k) = samples_[val[k]].x;
        zv[k] = samples_[val[k]].z;
      }
      worst = std::max(worst, nrmse(zv - sep_mean_at(V, v), range));
    }
    sep_error_[variant_slot(v)] = worst < 0.0 ? inf() : worst;
  }
  sep_active_ = sep_error_[1] < sep_error_[0] ? Variant::direct : Variant::delta;
}

void DecomposedSurrogate::train_free(bool fit) {
  require(Layer::symmetric);
  require(Layer::separable);
  const Eigen::MatrixXd loc = union_locations();
  const Eigen::VectorXd z = union_values();
  const Eigen::VectorXd delta_res = z - sep_mean_at(loc, sep_active_);
  const Eigen::VectorXd direct_res = z.array() - z_ref_;
  if (fit) {
    refit(free_[0], loc, delta_res);
    refit(free_[1], loc, direct_res);
  } else {
    rebuild(free_[0], loc, delta_res);
    rebuild(free_[1], loc, direct_res);
  }

  std::vector<Eigen::Index> val;
  for (std::size_t k = 0; k < samples_.size(); ++k)
    if (samples_[k].validation) val.push_back(static_cast<Eigen::Index>(k));
  Eigen::MatrixXd V(dim(), val.size());
  Eigen::VectorXd zv(val.size());
  for (std::size_t k = 0; k < val.size(); ++k) {
    V.col(k) = samples_[val[k]].x;
    zv[k] = samples_[val[k]].z;
  }
  const double range = value_range(Layer::free);
  const Eigen::VectorXd sep_at_val = sep_mean_at(V, sep_active_);
  for (Variant v : {Variant::delta, Variant::direct}) {
    const SubModel& m = free_[variant_slot(v)];
    Eigen::VectorXd pred = m.system.mean_from_distances(pairwise_distances(loc, V));
    pred += v == Variant::delta ? sep_at_val : Eigen::VectorXd::Constant(V.cols(), z_ref_);
    free_error_[variant_slot(v)] = nrmse(zv - pred, range);
  }
  free_active_ = free_error_[1] < free_error_[0] ? Variant::direct : Variant::delta;
}

void DecomposedSurrogate::retrain_symmetric() { train_symmetric(true); }
void DecomposedSurrogate::retrain_separable() { train_separable(true); }
void DecomposedSurrogate::retrain_free() { train_free(true); }

void DecomposedSurrogate::retrain(Layer layer) {
  switch (layer) {
    case Layer::symmetric:
      return retrain_symmetric();
    case Layer::separable:
      return retrain_separable();
    case Layer::free:
      return retrain_free();
    case Layer::reference:
      break;
  }
}

void DecomposedSurrogate::retrain_all() {
  retrain_symmetric();
  retrain_separable();
  retrain_free();
}

bool DecomposedSurrogate::trained(Layer layer) const {
  switch (layer) {
    case Layer::reference:
      return true;
    case Layer::symmetric:
      return sym_.trained;
    case Layer::separable:
      if (dim() == 1) return sym_.trained;
      for (int d = 1; d < dim(); ++d)
        if (!sep_[d][0].trained || !sep_[d][1].trained) return false;
      return true;
    case Layer::free:
      return free_[0].trained && free_[1].trained;
  }
  return false;
}

void DecomposedSurrogate::require(Layer layer) const {
  if (!trained(layer)) throw NotTrained("layer " + std::to_string(int(layer)) + " is not trained");
}

Variant DecomposedSurrogate::active(Layer layer) const {
  if (layer == Layer::separable) return sep_active_;
  if (layer == Layer::free) return free_active_;
  return Variant::delta;
}

void DecomposedSurrogate::set_active(Layer layer, Variant v) {
  if (layer == Layer::separable) sep_active_ = v;
  if (layer == Layer::free) free_active_ = v;
}

double DecomposedSurrogate::validation_error(Layer layer, Variant v) const {
  switch (layer) {
    case Layer::symmetric:
      return sym_error_[variant_slot(v)];
    case Layer::separable:
      return sep_error_[variant_slot(v)];
    case Layer::free:
      return free_error_[variant_slot(v)];
    case Layer::reference:
      break;
  }
  return 0.0;
}

const SubModel& DecomposedSurrogate::axis_model(int d) const {
  return d == 0 ? sym_ : axis_model(d, sep_active_);
}

const SubModel& DecomposedSurrogate::axis_model(int d, Variant v) const {
  if (d < 0 || d >= dim()) throw DimensionMismatch("axis index out of range");
  if (d == 0) return sym_;
  return sep_[d][variant_slot(v)];
}

const SubModel& DecomposedSurrogate::free_model(Variant v) const { return free_[variant_slot(v)]; }

Eigen::VectorXd DecomposedSurrogate::axis_mean(const SubModel& m, const Eigen::VectorXd& t) const {
  if (!m.trained) throw NotTrained("axis sub-surrogate is not trained");
  return m.system.mean_from_distances(axis_distances(m.system, t));
}

Eigen::VectorXd DecomposedSurrogate::axis_variance(int d, const Eigen::VectorXd& t) const {
  const SubModel& m = axis_model(d);
  if (!m.trained) throw NotTrained("axis sub-surrogate is not trained");
  return m.system.variance_from_distances(axis_distances(m.system, t));
}

Eigen::VectorXd DecomposedSurrogate::sym_mean_at(const Eigen::MatrixXd& X) const {
  if (X.rows() != dim()) throw DimensionMismatch("query has wrong dimension");
  const Eigen::VectorXd anchor = axis_mean(sym_, x_ref_);
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(X.data(), X.size());
  Eigen::MatrixXd k = axis_mean(sym_, flat).reshaped(dim(), X.cols());
  k.colwise() -= anchor;
  return (k.colwise().sum().transpose().array() + z_ref_).matrix();
}

Eigen::VectorXd DecomposedSurrogate::sep_mean_at(const Eigen::MatrixXd& X, Variant v) const {
  Eigen::VectorXd mean = v == Variant::delta ? sym_mean_at(X)
                                             : Eigen::VectorXd::Constant(X.cols(), z_ref_);
  for (int d = 1; d < dim(); ++d)
    mean += axis_mean(sep_[d][variant_slot(v)], X.row(d).transpose());
  return mean;
}

Eigen::VectorXd DecomposedSurrogate::mean_symmetric(const Eigen::MatrixXd& X) const {
  require(Layer::symmetric);
  return sym_mean_at(X);
}

Eigen::VectorXd DecomposedSurrogate::mean_separable(const Eigen::MatrixXd& X) const {
  require(Layer::separable);
  return sep_mean_at(X, sep_active_);
}

Eigen::VectorXd DecomposedSurrogate::mean_full(const Eigen::MatrixXd& X) const {
  require(Layer::free);
  const SubModel& m = free_model();
  Eigen::VectorXd mean(X.cols());
  for (Eigen::Index start = 0; start < X.cols(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, X.cols() - start);
    mean.segment(start, n) =
        m.system.mean_from_distances(pairwise_distances(m.system.locations(), X.middleCols(start, n)));
  }
  if (free_active_ == Variant::delta) mean += sep_mean_at(X, sep_active_);
  else mean.array() += z_ref_;
  return mean;
}

Eigen::VectorXd DecomposedSurrogate::variance_full(const Eigen::MatrixXd& X) const {
  require(Layer::free);
  Eigen::VectorXd var;
  free_model().system.predict_batch(X, nullptr, &var);
  return var;
}

Prediction<double> DecomposedSurrogate::predict_symmetric(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  require(Layer::symmetric);
  const Eigen::MatrixXd X = x;
  Prediction<double> p;
  p.mean = sym_mean_at(X)[0];
  p.variance = axis_variance(0, x).sum();
  return p;
}

Prediction<double> DecomposedSurrogate::predict_separable(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return predict_separable(x, sep_active_);
}

Prediction<double> DecomposedSurrogate::predict_separable(const Eigen::Ref<const Eigen::VectorXd>& x,
                                                          Variant v) const {
  require(Layer::separable);
  const Eigen::MatrixXd X = x;
  Prediction<double> p;
  p.mean = sep_mean_at(X, v)[0];
  for (int d = 1; d < dim(); ++d) {
    const SubModel& m = sep_[d][variant_slot(v)];
    p.variance += m.system.variance_from_distances(axis_distances(m.system, x.segment(d, 1)))[0];
  }
  return p;
}

Prediction<double> DecomposedSurrogate::predict_full(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return predict_full(x, free_active_);
}

Prediction<double> DecomposedSurrogate::predict_full(const Eigen::Ref<const Eigen::VectorXd>& x,
                                                     Variant v) const {
  require(Layer::free);
  const Prediction<double> residual = free_model(v).system.predict(x);
  const Eigen::MatrixXd X = x;
  Prediction<double> p;
  p.mean = residual.mean + (v == Variant::delta ? sep_mean_at(X, sep_active_)[0] : z_ref_);
  p.variance = residual.variance;
  return p;
}

Eigen::VectorXd DecomposedSurrogate::sym_mean_on_candidates() const {
  const CandidateSet& c = cache_.candidates();
  const Eigen::VectorXd anchor = axis_mean(sym_, x_ref_);
  Eigen::VectorXd mean = Eigen::VectorXd::Constant(c.size(), z_ref_);
  for (int d = 0; d < dim(); ++d) {
    const auto& values = c.axis_values(d);
    const Eigen::VectorXd k =
        axis_mean(sym_, Eigen::Map<const Eigen::VectorXd>(values.data(), values.size())).array() - anchor[d];
    const auto& index = c.axis_index(d);
    for (Eigen::Index m = 0; m < c.size(); ++m) mean[m] += k[index[m]];
  }
  return mean;
}

Eigen::VectorXd DecomposedSurrogate::sep_mean_on_candidates(Variant v) const {
  const CandidateSet& c = cache_.candidates();
  Eigen::VectorXd mean = v == Variant::delta ? sym_mean_on_candidates()
                                             : Eigen::VectorXd::Constant(c.size(), z_ref_);
  for (int d = 1; d < dim(); ++d) {
    const auto& values = c.axis_values(d);
    const Eigen::VectorXd k = axis_mean(sep_[d][variant_slot(v)],
                                        Eigen::Map<const Eigen::VectorXd>(values.data(), values.size()));
    const auto& index = c.axis_index(d);
    for (Eigen::Index m = 0; m < c.size(); ++m) mean[m] += k[index[m]];
  }
  return mean;
}

Eigen::VectorXd DecomposedSurrogate::candidate_means() const {
  require(Layer::free);
  if (!cache_.attached()) throw InternalConsistency("no candidate set attached");
  const SubModel& m = free_model();
  const Eigen::Index n = m.system.size();
  const Eigen::Index total = cache_.candidates().size();
  Eigen::VectorXd mean(total);
  for (Eigen::Index start = 0; start < total; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, total - start);
    mean.segment(start, len) = m.system.mean_from_distances(cache_.top(n).middleCols(start, len));
  }
  if (free_active_ == Variant::delta) mean += sep_mean_on_candidates(sep_active_);
  else mean.array() += z_ref_;
  return mean;
}

Eigen::VectorXd DecomposedSurrogate::candidate_variances(const std::vector<Eigen::Index>& indices) const {
  require(Layer::free);
  if (!cache_.attached()) throw InternalConsistency("no candidate set attached");
  const SubModel& m = free_model();
  const Eigen::Index n = m.system.size();
  const auto total = static_cast<Eigen::Index>(indices.size());
  Eigen::VectorXd var(total);
  Eigen::MatrixXd dist(n, std::min(kChunk, std::max<Eigen::Index>(total, 1)));
  for (Eigen::Index start = 0; start < total; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, total - start);
    for (Eigen::Index k = 0; k < len; ++k) dist.col(k) = cache_.top(n).col(indices[start + k]);
    var.segment(start, len) = m.system.variance_from_distances(dist.leftCols(len));
  }
  return var;
}

Eigen::VectorXd DecomposedSurrogate::candidate_variances() const {
  require(Layer::free);
  if (!cache_.attached()) throw InternalConsistency("no candidate set attached");
  const SubModel& m = free_model();
  const Eigen::Index n = m.system.size();
  const Eigen::Index total = cache_.candidates().size();
  Eigen::VectorXd var(total);
  for (Eigen::Index start = 0; start < total; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, total - start);
    var.segment(start, len) = m.system.variance_from_distances(cache_.top(n).middleCols(start, len));
  }
  return var;
}

Eigen::VectorXd DecomposedSurrogate::candidate_nearest_union() const {
  if (!cache_.attached()) throw InternalConsistency("no candidate set attached");
  return cache_.top(n_union()).colwise().minCoeff().transpose();
}

}  // namespace mlio
