#pragma once

#include <array>
#include <cmath>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace mlio {

/// Parametric auto-correlation families. `linear` (γ(h) = c + (b - c) h / a, no
/// sill) is never selected by fit_models; it exists for hand-built systems.
enum class VariogramKind { spherical, exponential, gaussian, linear };

inline constexpr std::array<VariogramKind, 3> kFittedKinds = {
    VariogramKind::spherical, VariogramKind::exponential, VariogramKind::gaussian};

std::string_view to_string(VariogramKind kind);
VariogramKind variogram_kind_from_string(std::string_view name);

/// Fitted semivariance model.
///
/// For h > 0 the model is scale * min(b, c + (b - c) * shape(h / a)) and
/// γ(0) = 0, so the nugget is a jump at the origin. Shapes use the practical
/// range convention: all three families reach (about) 95% of the partial sill
/// at h = a.
///
///   spherical    shape(r) = 1.5 r - 0.5 r^3 for r <= 1, else 1
///   exponential  shape(r) = 1 - exp(-3 r)
///   gaussian     shape(r) = 1 - exp(-3 r^2)
///
/// `scale` maps the normalized sill back to response units; it is 1 whenever
/// the experimental semivariances already lie in [0, 1].
struct VariogramFit {
  VariogramKind kind = VariogramKind::spherical;
  double range = 1.0;   // a
  double sill = 1.0;    // b
  double nugget = 0.0;  // c
  double scale = 1.0;
  double sse = 0.0;
  bool fallback = false;  // solver failed, parameters are the initial guess
};

/// Unit shape of a model family evaluated at r = h / a.
template <typename Scalar>
Scalar variogram_shape(VariogramKind kind, Scalar r) {
  using std::exp;
  switch (kind) {
    case VariogramKind::spherical:
      return r >= Scalar(1) ? Scalar(1) : Scalar(1.5) * r - Scalar(0.5) * r * r * r;
    case VariogramKind::exponential:
      return Scalar(1) - exp(Scalar(-3) * r);
    case VariogramKind::gaussian:
      return Scalar(1) - exp(Scalar(-3) * r * r);
    case VariogramKind::linear:
      return r;
  }
  return Scalar(0);
}

/// Semivariance of `fit` at lag h >= 0.
template <typename Scalar>
Scalar eval_model(const VariogramFit& fit, Scalar h) {
  if (!(h > Scalar(0))) return Scalar(0);
  const Scalar a(fit.range), b(fit.sill), c(fit.nugget), s(fit.scale);
  const Scalar g = c + (b - c) * variogram_shape(fit.kind, h / a);
  if (fit.kind == VariogramKind::linear) return s * g;
  return s * (g < b ? g : b);
}

/// Coefficient-wise eval_model over an array of lags, written with array
/// expressions so the transcendental parts vectorize.
template <typename Derived>
Eigen::Array<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> eval_model_array(
    const VariogramFit& fit, const Eigen::ArrayBase<Derived>& lags) {
  using Scalar = typename Derived::Scalar;
  using Arr = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Scalar a(fit.range), b(fit.sill), c(fit.nugget), s(fit.scale);
  const Arr r = lags.derived() / a;
  Arr shape;
  switch (fit.kind) {
    case VariogramKind::spherical:
      shape = (r < Scalar(1)).select(Scalar(1.5) * r - Scalar(0.5) * r.cube(), Scalar(1));
      break;
    case VariogramKind::exponential:
      shape = Scalar(1) - (Scalar(-3) * r).exp();
      break;
    case VariogramKind::gaussian:
      shape = Scalar(1) - (Scalar(-3) * r.square()).exp();
      break;
    case VariogramKind::linear:
      shape = r;
      break;
  }
  Arr g = c + (b - c) * shape;
  if (fit.kind != VariogramKind::linear) g = g.min(b);
  return (lags.derived() > Scalar(0)).select(s * g, Scalar(0));
}

/// Point-wise windowed semivariogram: one (mean lag, mean half squared
/// difference) entry per observation and non-empty lag window.
struct ExperimentalSemivariogram {
  std::vector<double> lag;    // h*
  std::vector<double> gamma;  // γ*
  int windows = 10;
  double max_lag = 0.0;  // h_max, the largest pairwise distance
  int dim = 1;

  std::size_t size() const { return lag.size(); }
  bool empty() const { return lag.empty(); }
};

/// Builds the experimental semivariogram of `residuals` observed at the
/// columns of `locations` (dim x N). Windows split [0, h_max] in equal parts,
/// half-open except the last one which is closed.
ExperimentalSemivariogram build_experimental(const Eigen::MatrixXd& locations,
                                             const Eigen::VectorXd& residuals,
                                             int n_windows = 10);

/// Last best parameters per fitted family, reused as the next initial guess.
using VariogramWarmStart = std::array<std::optional<VariogramFit>, 3>;

/// Initial guess for one family: a = mean lag, b = mean γ* / shape(1), c = 0.
VariogramFit initial_guess(const ExperimentalSemivariogram& exp, VariogramKind kind);

/// Bounded least-squares fit of a single family.
VariogramFit fit_model(const ExperimentalSemivariogram& exp, VariogramKind kind,
                       const std::optional<VariogramFit>& warm = std::nullopt);

/// Fits every family and returns the one with the smallest SSE. When `warm`
/// is given, it seeds each fit and receives the new per-family optima.
VariogramFit fit_models(const ExperimentalSemivariogram& exp,
                        VariogramWarmStart* warm = nullptr);

/// Diagnostic dump with columns lag,gamma_exp,gamma_fit,kind: one row per
/// experimental entry, then `curve_samples` rows of the fitted curve with an
/// empty gamma_exp field.
void write_variogram_csv(std::ostream& os, const ExperimentalSemivariogram& exp,
                         const VariogramFit& fit, int curve_samples = 50);

}  // namespace mlio
