#include "mlio/testbed.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "mlio/errors.hpp"

namespace mlio {

using std::numbers::pi;

std::string_view to_string(FunctionId id) {
  switch (id) {
    case FunctionId::step:
      return "Step";
    case FunctionId::alpine:
      return "Alpine";
    case FunctionId::sum_squares:
      return "SumSquares";
    case FunctionId::levy:
      return "Levy";
    case FunctionId::rosenbrock:
      return "Rosenbrock";
    case FunctionId::ackley:
      return "Ackley";
  }
  return "unknown";
}

namespace {

std::string lower_case(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

FunctionId function_id_from_string(std::string_view name) {
  const std::string key = lower_case(name);
  for (FunctionId id : kAllFunctions)
    if (lower_case(to_string(id)) == key) return id;
  if (key == "sum_squares") return FunctionId::sum_squares;
  throw UnknownId("unknown test function '" + std::string(name) + "'");
}

std::string_view to_string(UqKind kind) {
  return kind == UqKind::robust ? "robust" : "stochastic";
}

UqKind uq_kind_from_string(std::string_view name) {
  const std::string key = lower_case(name);
  if (key == "robust") return UqKind::robust;
  if (key == "stochastic") return UqKind::stochastic;
  throw InvalidConfig("unknown UQ operator '" + std::string(name) + "'");
}

double evaluate_raw(FunctionId id, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::Index n = x.size();
  if (n < 1) throw DimensionMismatch("test function needs at least one coordinate");
  switch (id) {
    case FunctionId::step:
      return (x.array() + 0.5).floor().square().sum();
    case FunctionId::alpine:
      return (x.array() * x.array().sin() + 0.1 * x.array()).abs().sum();
    case FunctionId::sum_squares: {
      double s = 0.0;
      for (Eigen::Index d = 0; d < n; ++d) s += double(d + 1) * x[d] * x[d];
      return s;
    }
    case FunctionId::levy: {
      const Eigen::ArrayXd w = 1.0 + (x.array() - 1.0) / 4.0;
      double s = std::pow(std::sin(pi * w[0]), 2);
      const double wl = w[n - 1];
      s += (wl - 1.0) * (wl - 1.0) * (1.0 + std::pow(std::sin(2.0 * pi * wl), 2));
      for (Eigen::Index d = 1; d + 1 < n; ++d)
        s += (w[d] - 1.0) * (w[d] - 1.0) * (1.0 + 10.0 * std::pow(std::sin(2.0 * pi * w[d] + 1.0), 2));
      return s;
    }
    case FunctionId::rosenbrock: {
      double s = 0.0;
      for (Eigen::Index d = 0; d + 1 < n; ++d) {
        const double a = x[d] * x[d] - x[d + 1];
        s += 100.0 * a * a + (x[d] - 1.0) * (x[d] - 1.0);
      }
      return s;
    }
    case FunctionId::ackley: {
      const double dn = double(n);
      const double r = std::sqrt(x.squaredNorm() / dn);
      const double c = (2.0 * pi * x.array()).cos().sum() / dn;
      return -20.0 * std::exp(-0.2 * r) + 20.0 - std::exp(c) + std::exp(1.0);
    }
  }
  throw UnknownId("unknown test function");
}

std::pair<double, double> default_bounds(FunctionId id) {
  switch (id) {
    case FunctionId::rosenbrock:
      return {0.0, 1.0};
    case FunctionId::ackley:
      return {0.0, 10.0};
    default:
      return {0.0, 20.0};
  }
}

namespace {

// Largest value of 100 (a^2 - b)^2 + (a - 1)^2 over a box. The term is convex
// in b, so b sits on an edge; in a the candidates are the edges and the real
// roots of 400 a^3 + (2 - 400 b) a - 2 = 0.
double rosenbrock_term_max(double a_lo, double a_hi, double b_lo, double b_hi) {
  auto term = [](double a, double b) { return 100.0 * (a * a - b) * (a * a - b) + (a - 1.0) * (a - 1.0); };
  double best = 0.0;
  for (double b : {b_lo, b_hi}) {
    std::vector<double> cand{a_lo, a_hi};
    const double p = (2.0 - 400.0 * b) / 400.0, q = -2.0 / 400.0;
    const double disc = q * q / 4.0 + p * p * p / 27.0;
    if (disc >= 0.0) {
      cand.push_back(std::cbrt(-q / 2.0 + std::sqrt(disc)) + std::cbrt(-q / 2.0 - std::sqrt(disc)));
    } else {
      const double r = 2.0 * std::sqrt(-p / 3.0);
      const double phi = std::acos(std::clamp(3.0 * q / (p * r), -1.0, 1.0));
      for (int k = 0; k < 3; ++k) cand.push_back(r * std::cos((phi - 2.0 * pi * k) / 3.0));
    }
    for (double a : cand)
      if (a >= a_lo && a <= a_hi) best = std::max(best, term(a, b));
  }
  return best;
}

}  // namespace

double tabulated_max(FunctionId id, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                     const Eigen::VectorXd& translation) {
  const Eigen::ArrayXd width = (upper - lower).array();
  const Eigen::ArrayXd t = translation.array();
  const Eigen::ArrayXd xbar_max = t.abs().max((1.0 - t).abs());
  const Eigen::VectorXd x_max = (xbar_max * width + lower.array()).matrix();
  const Eigen::Index n = x_max.size();

  switch (id) {
    case FunctionId::step:
    case FunctionId::sum_squares:
      return evaluate_raw(id, x_max);
    case FunctionId::alpine:
      return 1.1 * x_max.cwiseAbs().sum();
    case FunctionId::levy: {
      const Eigen::ArrayXd w = 1.0 + (x_max.array() - 1.0) / 4.0;
      const double tail = (w[n - 1] - 1.0) * (w[n - 1] - 1.0);
      return 1.0 + 11.0 * (w.head(n - 1) - 1.0).square().sum() + 2.0 * tail;
    }
    case FunctionId::rosenbrock: {
      const Eigen::ArrayXd lo = -t * width + lower.array();
      const Eigen::ArrayXd hi = (1.0 - t) * width + lower.array();
      double total = 0.0;
      for (Eigen::Index d = 0; d + 1 < n; ++d)
        total += rosenbrock_term_max(lo[d], hi[d], lo[d + 1], hi[d + 1]);
      return total;
    }
    case FunctionId::ackley: {
      const double r = std::sqrt(x_max.squaredNorm() / double(n));
      return -20.0 * std::exp(-0.2 * r) + 20.0 - std::exp(-1.0) + std::exp(1.0);
    }
  }
  throw UnknownId("unknown test function");
}

TestProblem make_problem(FunctionId id, int dim, const Eigen::VectorXd& translation) {
  if (dim < 1) throw InvalidConfig("dimension must be positive");
  if (translation.size() != dim) throw DimensionMismatch("translation has wrong size");
  const auto [lo, hi] = default_bounds(id);
  TestProblem prob;
  prob.id = id;
  prob.dim = dim;
  prob.lower = Eigen::VectorXd::Constant(dim, lo);
  prob.upper = Eigen::VectorXd::Constant(dim, hi);
  prob.translation = translation;
  prob.minf = 0.0;
  prob.maxf = tabulated_max(id, prob.lower, prob.upper, translation);
  return prob;
}

TestProblem make_problem(FunctionId id, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd t(dim);
  if (id == FunctionId::step || id == FunctionId::alpine) {
    t.setConstant(unit(rng));
  } else {
    for (int d = 0; d < dim; ++d) t[d] = unit(rng);
  }
  return make_problem(id, dim, t);
}

Eigen::VectorXd to_raw(const TestProblem& prob, const Eigen::Ref<const Eigen::VectorXd>& xbar) {
  if (xbar.size() != prob.dim) throw DimensionMismatch("point has wrong dimension");
  return ((xbar - prob.translation).array() * (prob.upper - prob.lower).array() +
          prob.lower.array())
      .matrix();
}

double evaluate_normalized(const TestProblem& prob, const Eigen::Ref<const Eigen::VectorXd>& xbar) {
  if (xbar.size() != prob.dim) throw DimensionMismatch("point has wrong dimension");
  if ((xbar.array() < 0.0).any() || (xbar.array() > 1.0).any())
    throw OutOfDomain("normalized point outside [0,1]^D");
  const double f = evaluate_raw(prob.id, to_raw(prob, xbar));
  return (f - prob.minf) / (prob.maxf - prob.minf);
}

std::vector<int> first_primes(int count) {
  std::vector<int> primes;
  for (int c = 2; static_cast<int>(primes.size()) < count; ++c) {
    bool is_prime = true;
    for (int p : primes) {
      if (p * p > c) break;
      if (c % p == 0) {
        is_prime = false;
        break;
      }
    }
    if (is_prime) primes.push_back(c);
  }
  return primes;
}

double radical_inverse(std::uint64_t index, int base) {
  double result = 0.0;
  double f = 1.0 / base;
  while (index > 0) {
    result += f * double(index % base);
    index /= base;
    f /= base;
  }
  return result;
}

Eigen::VectorXd halton(std::uint64_t index, int dim) {
  const auto primes = first_primes(dim);
  Eigen::VectorXd x(dim);
  for (int d = 0; d < dim; ++d) x[d] = radical_inverse(index, primes[d]);
  return x;
}

Eigen::MatrixXd halton_points(int count, int dim, std::uint64_t first) {
  const auto primes = first_primes(dim);
  Eigen::MatrixXd pts(dim, count);
  for (int k = 0; k < count; ++k)
    for (int d = 0; d < dim; ++d) pts(d, k) = radical_inverse(first + k, primes[d]);
  return pts;
}

Eigen::MatrixXd ReferencePool::joint_points() const {
  const Eigen::Index du = u_points.rows(), dp = p_points.rows();
  Eigen::MatrixXd out(du + dp, n_u() * n_p());
  for (Eigen::Index i = 0; i < n_u(); ++i) {
    for (Eigen::Index j = 0; j < n_p(); ++j) {
      out.col(i * n_p() + j).head(du) = u_points.col(i);
      out.col(i * n_p() + j).tail(dp) = p_points.col(j);
    }
  }
  return out;
}

namespace {

void fill_uq(ReferencePool& pool) {
  pool.uq_robust = pool.responses.rowwise().maxCoeff();
  pool.uq_stochastic = pool.responses.rowwise().mean();
}

}  // namespace

ReferencePool build_reference_pool(const TestProblem& prob, int n_u, int n_p, std::uint64_t seed) {
  if (n_u < 1 || n_p < 1) throw InvalidConfig("reference pool sizes must be positive");
  ReferencePool pool;
  pool.id = prob.id;
  pool.dim = prob.dim;
  pool.seed = seed;
  pool.u_points = halton_points(n_u, prob.design_dim());
  pool.p_points = halton_points(n_p, prob.parameter_dim());
  pool.responses.resize(n_u, n_p);
  Eigen::VectorXd x(prob.dim);
  for (int i = 0; i < n_u; ++i) {
    x.head(prob.design_dim()) = pool.u_points.col(i);
    for (int j = 0; j < n_p; ++j) {
      x.tail(prob.parameter_dim()) = pool.p_points.col(j);
      pool.responses(i, j) = evaluate_normalized(prob, x);
    }
  }
  fill_uq(pool);
  return pool;
}

void write_reference_pool(const ReferencePool& pool, const std::filesystem::path& stem) {
  std::filesystem::path csv = stem;
  csv += ".csv";
  std::filesystem::path manifest = stem;
  manifest += ".json";

  std::ofstream out(csv);
  if (!out) throw FormatError("cannot write " + csv.string());
  out << std::setprecision(17);
  const Eigen::Index du = pool.u_points.rows(), dp = pool.p_points.rows();
  for (Eigen::Index d = 0; d < du; ++d) out << "u" << d + 1 << ',';
  for (Eigen::Index d = 0; d < dp; ++d) out << "p" << d + 1 << ',';
  out << "value\n";
  for (Eigen::Index i = 0; i < pool.n_u(); ++i) {
    for (Eigen::Index j = 0; j < pool.n_p(); ++j) {
      for (Eigen::Index d = 0; d < du; ++d) out << pool.u_points(d, i) << ',';
      for (Eigen::Index d = 0; d < dp; ++d) out << pool.p_points(d, j) << ',';
      out << pool.responses(i, j) << '\n';
    }
  }

  nlohmann::json j;
  j["id"] = std::string(to_string(pool.id));
  j["D"] = pool.dim;
  j["seed"] = pool.seed;
  j["n_u"] = pool.n_u();
  j["n_p"] = pool.n_p();
  j["data"] = csv.filename().string();
  std::ofstream(manifest) << j.dump(2) << '\n';
}

ReferencePool read_reference_pool(const std::filesystem::path& stem) {
  std::filesystem::path csv = stem;
  csv += ".csv";
  std::filesystem::path manifest = stem;
  manifest += ".json";

  std::ifstream min(manifest);
  if (!min) throw FormatError("cannot read " + manifest.string());
  const nlohmann::json j = nlohmann::json::parse(min);

  ReferencePool pool;
  pool.id = function_id_from_string(j.at("id").get<std::string>());
  pool.dim = j.at("D").get<int>();
  pool.seed = j.at("seed").get<std::uint64_t>();
  const Eigen::Index n_u = j.at("n_u").get<Eigen::Index>();
  const Eigen::Index n_p = j.at("n_p").get<Eigen::Index>();
  const Eigen::Index du = pool.dim / 2, dp = pool.dim - pool.dim / 2;
  pool.u_points.resize(du, n_u);
  pool.p_points.resize(dp, n_p);
  pool.responses.resize(n_u, n_p);

  std::ifstream in(csv);
  if (!in) throw FormatError("cannot read " + csv.string());
  std::string line;
  std::getline(in, line);
  for (Eigen::Index i = 0; i < n_u; ++i) {
    for (Eigen::Index jj = 0; jj < n_p; ++jj) {
      if (!std::getline(in, line)) throw FormatError("reference pool CSV is truncated");
      std::stringstream row(line);
      std::string cell;
      std::vector<double> v;
      while (std::getline(row, cell, ',')) v.push_back(std::stod(cell));
      if (static_cast<Eigen::Index>(v.size()) != pool.dim + 1)
        throw FormatError("reference pool CSV row has wrong width");
      for (Eigen::Index d = 0; d < du; ++d) pool.u_points(d, i) = v[d];
      for (Eigen::Index d = 0; d < dp; ++d) pool.p_points(d, jj) = v[du + d];
      pool.responses(i, jj) = v[pool.dim];
    }
  }
  fill_uq(pool);
  return pool;
}

Metrics compute_metrics(const ReferencePool& pool, UqKind kind, Eigen::Index u_index,
                        double uq_estimate) {
  const Eigen::VectorXd& truth = pool.uq(kind);
  if (u_index < 0 || u_index >= truth.size()) throw UnknownId("design index outside the pool");
  const double range = truth.maxCoeff() - truth.minCoeff();
  if (!(range > 0.0)) throw DegenerateNormalizer("true UQ values are constant over the designs");
  Metrics m;
  m.ia = std::clamp(std::abs(uq_estimate - truth[u_index]) / range, kMetricFloor, 1.0);
  m.so = std::clamp(std::abs(truth[u_index] - truth.minCoeff()) / range, kMetricFloor, 1.0);
  return m;
}

}  // namespace mlio
