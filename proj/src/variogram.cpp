#include "mlio/variogram.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "mlio/errors.hpp"
#include "mlio/meta_opt.hpp"

namespace mlio {

std::string_view to_string(VariogramKind kind) {
  switch (kind) {
    case VariogramKind::spherical:
      return "spherical";
    case VariogramKind::exponential:
      return "exponential";
    case VariogramKind::gaussian:
      return "gaussian";
    case VariogramKind::linear:
      return "linear";
  }
  return "unknown";
}

VariogramKind variogram_kind_from_string(std::string_view name) {
  for (auto kind : {VariogramKind::spherical, VariogramKind::exponential,
                    VariogramKind::gaussian, VariogramKind::linear})
    if (to_string(kind) == name) return kind;
  throw FormatError("unknown variogram kind '" + std::string(name) + "'");
}

ExperimentalSemivariogram build_experimental(const Eigen::MatrixXd& locations,
                                             const Eigen::VectorXd& residuals,
                                             int n_windows) {
  const Eigen::Index n = locations.cols();
  if (n < 2) throw TooFewPoints("experimental semivariogram needs at least 2 observations");
  if (residuals.size() != n) throw DimensionMismatch("residuals and locations differ in length");
  if (n_windows < 1) throw InvalidConfig("at least one lag window is required");

  Eigen::MatrixXd dist(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j)
      dist(i, j) = dist(j, i) = (locations.col(i) - locations.col(j)).norm();
  }

  ExperimentalSemivariogram exp;
  exp.windows = n_windows;
  exp.dim = static_cast<int>(locations.rows());
  exp.max_lag = dist.maxCoeff();
  const double width = exp.max_lag / n_windows;

  auto window_of = [&](double h) {
    if (width <= 0.0) return 0;
    int w = std::min(static_cast<int>(h / width), n_windows - 1);
    while (w > 0 && h < exp.max_lag * w / n_windows) --w;
    while (w < n_windows - 1 && h >= exp.max_lag * (w + 1) / n_windows) ++w;
    return w;
  };

  std::vector<double> lag_sum(n_windows), gamma_sum(n_windows);
  std::vector<int> count(n_windows);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::fill(lag_sum.begin(), lag_sum.end(), 0.0);
    std::fill(gamma_sum.begin(), gamma_sum.end(), 0.0);
    std::fill(count.begin(), count.end(), 0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const int w = window_of(dist(i, j));
      const double diff = residuals[i] - residuals[j];
      lag_sum[w] += dist(i, j);
      gamma_sum[w] += 0.5 * diff * diff;
      ++count[w];
    }
    for (int w = 0; w < n_windows; ++w) {
      if (count[w] == 0) continue;
      exp.lag.push_back(lag_sum[w] / count[w]);
      exp.gamma.push_back(gamma_sum[w] / count[w]);
    }
  }
  return exp;
}

namespace {

double semivariance_scale(const ExperimentalSemivariogram& exp) {
  const double top = exp.gamma.empty() ? 0.0 : *std::max_element(exp.gamma.begin(), exp.gamma.end());
  return top > 1.0 ? top : 1.0;
}

double max_range(const ExperimentalSemivariogram& exp) { return std::sqrt(double(exp.dim)); }
double min_range(const ExperimentalSemivariogram& exp) { return 1e-6 * max_range(exp); }

// Parameters are optimized as (a, b, t) with c = t * b so the box also keeps
// the nugget below the sill.
Eigen::Vector3d to_params(const VariogramFit& fit) {
  const double t = fit.sill > 0.0 ? std::clamp(fit.nugget / fit.sill, 0.0, 1.0) : 0.0;
  return {fit.range, fit.sill, t};
}

VariogramFit from_params(VariogramKind kind, const Eigen::Vector3d& p, double scale) {
  VariogramFit fit;
  fit.kind = kind;
  fit.range = p[0];
  fit.sill = p[1];
  fit.nugget = p[2] * p[1];
  fit.scale = scale;
  return fit;
}

double sse_of(const ExperimentalSemivariogram& exp, const VariogramFit& fit) {
  double sse = 0.0;
  for (std::size_t k = 0; k < exp.size(); ++k) {
    const double d = exp.gamma[k] - eval_model(fit, exp.lag[k]);
    sse += d * d;
  }
  return sse;
}

}  // namespace

VariogramFit initial_guess(const ExperimentalSemivariogram& exp, VariogramKind kind) {
  if (exp.empty()) throw TooFewPoints("empty experimental semivariogram");
  const double scale = semivariance_scale(exp);
  const double n = static_cast<double>(exp.size());
  const double mean_lag = std::accumulate(exp.lag.begin(), exp.lag.end(), 0.0) / n;
  const double mean_gamma = std::accumulate(exp.gamma.begin(), exp.gamma.end(), 0.0) / n / scale;

  VariogramFit unit;
  unit.kind = kind;
  VariogramFit fit;
  fit.kind = kind;
  fit.scale = scale;
  fit.range = std::clamp(mean_lag, min_range(exp), max_range(exp));
  fit.sill = std::clamp(mean_gamma / eval_model(unit, 1.0), 0.0, 1.0);
  fit.nugget = 0.0;
  fit.sse = sse_of(exp, fit);
  return fit;
}

namespace {

VariogramFit solve_from(const ExperimentalSemivariogram& exp, VariogramKind kind,
                        const VariogramFit& start) {
  const double scale = start.scale;
  const Eigen::Index m = static_cast<Eigen::Index>(exp.size());
  const Eigen::ArrayXd lag = Eigen::Map<const Eigen::ArrayXd>(exp.lag.data(), m);
  const Eigen::ArrayXd target = Eigen::Map<const Eigen::ArrayXd>(exp.gamma.data(), m) / scale;
  auto residual = [&](const Eigen::VectorXd& p) -> Eigen::VectorXd {
    return (target - eval_model_array(from_params(kind, p, 1.0), lag).col(0)).matrix();
  };
  const Eigen::Vector3d lower(min_range(exp), 0.0, 0.0);
  const Eigen::Vector3d upper(max_range(exp), 1.0, 1.0);
  const auto result = bounded_least_squares(residual, lower, upper, to_params(start));
  VariogramFit fit = from_params(kind, result.params, scale);
  fit.sse = sse_of(exp, fit);
  if (!std::isfinite(fit.sse)) throw FitFailure("non-finite SSE");
  return fit;
}

}  // namespace

VariogramFit fit_model(const ExperimentalSemivariogram& exp, VariogramKind kind,
                       const std::optional<VariogramFit>& warm) {
  VariogramFit cold = initial_guess(exp, kind);
  std::optional<VariogramFit> best;
  auto consider = [&](const VariogramFit& start) {
    try {
      VariogramFit fit = solve_from(exp, kind, start);
      if (!best || fit.sse < best->sse) best = fit;
    } catch (const FitFailure&) {
    }
  };
  // A warm start alone can stay pinned where the range sits on a bound and
  // the residual no longer depends on it, so the cold start is always tried.
  if (warm && warm->kind == kind) {
    VariogramFit start = cold;
    start.range = std::clamp(warm->range, min_range(exp), max_range(exp));
    start.sill = std::clamp(warm->sill, 0.0, 1.0);
    start.nugget = std::clamp(warm->nugget, 0.0, start.sill);
    consider(start);
  }
  consider(cold);
  if (best) return *best;
  cold.fallback = true;
  return cold;
}

VariogramFit fit_models(const ExperimentalSemivariogram& exp, VariogramWarmStart* warm) {
  if (exp.empty()) throw TooFewPoints("empty experimental semivariogram");
  std::optional<VariogramFit> best;
  for (std::size_t k = 0; k < kFittedKinds.size(); ++k) {
    const VariogramKind kind = kFittedKinds[k];
    VariogramFit fit = fit_model(exp, kind, warm ? (*warm)[k] : std::nullopt);
    if (warm && !fit.fallback) (*warm)[k] = fit;
    if (!best || fit.sse < best->sse) best = fit;
  }
  return *best;
}

void write_variogram_csv(std::ostream& os, const ExperimentalSemivariogram& exp,
                         const VariogramFit& fit, int curve_samples) {
  os << "lag,gamma_exp,gamma_fit,kind\n";
  const auto kind = to_string(fit.kind);
  for (std::size_t k = 0; k < exp.size(); ++k)
    os << exp.lag[k] << ',' << exp.gamma[k] << ',' << eval_model(fit, exp.lag[k]) << ','
       << kind << '\n';
  const double top = std::max(exp.max_lag, 1e-12);
  for (int s = 0; s <= curve_samples; ++s) {
    const double h = top * s / std::max(curve_samples, 1);
    os << h << ",," << eval_model(fit, h) << ',' << kind << '\n';
  }
}

}  // namespace mlio
