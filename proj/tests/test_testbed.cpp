#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "mlio/errors.hpp"
#include "mlio/testbed.hpp"

using namespace mlio;

namespace {

// Exact star discrepancy of a 2-D point set: the supremum is attained on the
// grid spanned by the point coordinates and 1, checking open and closed boxes.
double star_discrepancy(const Eigen::MatrixXd& pts) {
  const Eigen::Index n = pts.cols();
  std::vector<double> xs{1.0}, ys{1.0};
  for (Eigen::Index i = 0; i < n; ++i) {
    xs.push_back(pts(0, i));
    ys.push_back(pts(1, i));
  }
  double worst = 0.0;
  for (double a : xs)
    for (double b : ys) {
      int open = 0, closed = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (pts(0, i) < a && pts(1, i) < b) ++open;
        if (pts(0, i) <= a && pts(1, i) <= b) ++closed;
      }
      const double vol = a * b;
      worst = std::max({worst, vol - double(open) / n, double(closed) / n - vol});
    }
  return worst;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(v.size());
  std::copy(v.begin(), v.end(), out.data());
  return out;
}

}  // namespace

TEST_CASE("raw formulas at hand-computed points") {
  CHECK(evaluate_raw(FunctionId::sum_squares, vec({1.0, 2.0})) == doctest::Approx(9.0));
  CHECK(evaluate_raw(FunctionId::step, vec({0.4, -0.3})) == 0.0);
  CHECK(evaluate_raw(FunctionId::step, vec({0.6, 2.2})) == doctest::Approx(5.0));
  for (int d : {1, 2, 5, 12})
    CHECK(evaluate_raw(FunctionId::ackley, Eigen::VectorXd::Zero(d)) == doctest::Approx(0.0).scale(1.0));
  CHECK(evaluate_raw(FunctionId::alpine, vec({0.0, 0.0, 0.0})) == 0.0);
  // |x sin x + 0.1 x| at x = pi/2 is pi/2 * 1.1
  CHECK(evaluate_raw(FunctionId::alpine, vec({M_PI / 2})) == doctest::Approx(1.1 * M_PI / 2));
  CHECK(evaluate_raw(FunctionId::rosenbrock, vec({1.0, 1.0, 1.0})) == doctest::Approx(0.0));
  CHECK(evaluate_raw(FunctionId::rosenbrock, vec({0.0, 1.0})) == doctest::Approx(101.0));
  CHECK(evaluate_raw(FunctionId::levy, vec({1.0, 1.0, 1.0, 1.0})) == doctest::Approx(0.0).scale(1.0));
  // x = 5 gives w = 2: sin^2(2 pi) + (2-1)^2 (1 + 10 sin^2(4 pi + 1)) + (2-1)^2 (1 + sin^2(4 pi))
  const double s1 = std::sin(1.0);
  CHECK(evaluate_raw(FunctionId::levy, vec({5.0, 5.0, 5.0})) ==
        doctest::Approx(1.0 + 10.0 * s1 * s1 + 1.0));
}

TEST_CASE("normalized values stay in [0,1] for random probes") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (auto id : kAllFunctions) {
    double worst_lo = 0.0, worst_hi = 0.0;
    TestProblem prob;
    for (int probe = 0; probe < 100000; ++probe) {
      const int dim = 2 * (1 + (probe / 100) % 5);
      if (probe % 100 == 0) prob = make_problem(id, dim, rng());
      Eigen::VectorXd x(dim);
      for (int d = 0; d < dim; ++d) x[d] = U(rng);
      const double v = evaluate_normalized(prob, x);
      worst_lo = std::min(worst_lo, v);
      worst_hi = std::max(worst_hi, v);
    }
    INFO(to_string(id));
    CHECK(worst_lo >= 0.0);
    CHECK(worst_hi <= 1.0);
  }
}

TEST_CASE("the minimum is reachable through the translation") {
  std::mt19937_64 rng(4);
  for (auto id : kAllFunctions) {
    for (int trial = 0; trial < 5; ++trial) {
      const auto prob = make_problem(id, 4, rng());
      // raw x = B1 + s (B2 - B1) for xbar = T + s; the minimizer of the raw
      // formula sits at 0 for all but Rosenbrock and Levy, whose minimum is at 1
      const double target = (id == FunctionId::rosenbrock || id == FunctionId::levy) ? 1.0 : 0.0;
      const Eigen::VectorXd xbar =
          prob.translation.array() + (target - prob.lower.array()) / (prob.upper - prob.lower).array();
      if ((xbar.array() < 0.0).any() || (xbar.array() > 1.0).any()) continue;
      INFO(to_string(id));
      CHECK(evaluate_normalized(prob, xbar) <= 1e-12);
    }
  }
  const auto sq = make_problem(FunctionId::sum_squares, 2, vec({0.3, 0.7}));
  CHECK(evaluate_normalized(sq, sq.translation) == 0.0);
}

TEST_CASE("translation is diagonal for Step and Alpine") {
  for (auto id : {FunctionId::step, FunctionId::alpine}) {
    const auto prob = make_problem(id, 6, std::uint64_t{77});
    CHECK((prob.translation.array() == prob.translation[0]).all());
  }
  const auto lv = make_problem(FunctionId::levy, 6, std::uint64_t{77});
  CHECK_FALSE((lv.translation.array() == lv.translation[0]).all());
  CHECK(make_problem(FunctionId::ackley, 4, std::uint64_t{5}).translation ==
        make_problem(FunctionId::ackley, 4, std::uint64_t{5}).translation);
}

TEST_CASE("bounds per function") {
  CHECK(default_bounds(FunctionId::step) == std::pair{0.0, 20.0});
  CHECK(default_bounds(FunctionId::alpine) == std::pair{0.0, 20.0});
  CHECK(default_bounds(FunctionId::sum_squares) == std::pair{0.0, 20.0});
  CHECK(default_bounds(FunctionId::levy) == std::pair{0.0, 20.0});
  CHECK(default_bounds(FunctionId::rosenbrock) == std::pair{0.0, 1.0});
  CHECK(default_bounds(FunctionId::ackley) == std::pair{0.0, 10.0});
}

TEST_CASE("Rosenbrock tabulated maximum dominates a dense grid") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const auto prob = make_problem(FunctionId::rosenbrock, 2, rng());
    double grid = 0.0;
    Eigen::VectorXd x(2);
    for (int i = 0; i < 100; ++i)
      for (int j = 0; j < 100; ++j) {
        x << i / 99.0, j / 99.0;
        grid = std::max(grid, evaluate_raw(prob.id, to_raw(prob, x)));
      }
    CHECK(grid <= prob.maxf * (1 + 1e-12));
  }
  // never below the corner recipe over n in {0, 0.5, 1}
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = 2 + 2 * (trial % 4);
    const auto prob = make_problem(FunctionId::rosenbrock, dim, rng());
    double corners = 0.0;
    for (double ni : {0.0, 0.5, 1.0})
      for (double nj : {0.0, 0.5, 1.0}) {
        const Eigen::VectorXd xi = to_raw(prob, Eigen::VectorXd::Constant(dim, ni));
        const Eigen::VectorXd xj = to_raw(prob, Eigen::VectorXd::Constant(dim, nj));
        double s = 0.0;
        for (int d = 0; d + 1 < dim; ++d)
          s += 100 * std::pow(xi[d] * xi[d] - xj[d + 1], 2) + std::pow(xi[d] - 1, 2);
        corners = std::max(corners, s);
      }
    CHECK(prob.maxf >= corners * (1 - 1e-12));
  }
}

TEST_CASE("out-of-domain and unknown inputs") {
  const auto prob = make_problem(FunctionId::step, 2, std::uint64_t{1});
  CHECK_THROWS_AS(evaluate_normalized(prob, vec({1.2, 0.5})), OutOfDomain);
  CHECK_THROWS_AS(evaluate_normalized(prob, vec({0.5})), DimensionMismatch);
  CHECK_THROWS_AS(function_id_from_string("Sphere"), UnknownId);
  CHECK(function_id_from_string("sumsquares") == FunctionId::sum_squares);
  CHECK(function_id_from_string("Ackley") == FunctionId::ackley);
  CHECK_THROWS_AS(uq_kind_from_string("median"), InvalidConfig);
}

TEST_CASE("Halton radical inverse") {
  CHECK(radical_inverse(1, 2) == 0.5);
  CHECK(radical_inverse(2, 2) == 0.25);
  CHECK(radical_inverse(3, 2) == 0.75);
  CHECK(radical_inverse(4, 2) == 0.125);
  CHECK(radical_inverse(1, 3) == doctest::Approx(1.0 / 3));
  CHECK(radical_inverse(5, 3) == doctest::Approx(2.0 / 3 + 1.0 / 9));
  const Eigen::VectorXd h = halton(1, 2);
  CHECK(h[0] == 0.5);
  CHECK(h[1] == doctest::Approx(1.0 / 3));
  CHECK(first_primes(6) == std::vector<int>{2, 3, 5, 7, 11, 13});
  const Eigen::MatrixXd pts = halton_points(4, 3);
  CHECK(pts.col(3) == halton(4, 3));
  CHECK(halton_points(10, 2, 3).col(0) == halton(3, 2));
}

TEST_CASE("Halton beats random points on star discrepancy") {
  const double halton_d = star_discrepancy(halton_points(100, 2));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    Eigen::MatrixXd r(2, 100);
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = U(rng);
    CHECK(halton_d < star_discrepancy(r));
  }
}

TEST_CASE("uq operators") {
  Eigen::VectorXd v(2);
  v << 0.2, 0.8;
  CHECK(uq_reduce(UqKind::robust, v) == 0.8);
  CHECK(uq_reduce(UqKind::stochastic, v) == doctest::Approx(0.5));
  CHECK(uq_reduce(UqKind::robust, Eigen::VectorXd::Constant(5, 0.3)) == 0.3);
  CHECK(uq_reduce(UqKind::stochastic, Eigen::VectorXd::Constant(5, 0.3)) == doctest::Approx(0.3));
}

TEST_CASE("reference pool caches agree with a recomputation") {
  const auto prob = make_problem(FunctionId::step, 2, std::uint64_t{3});
  const auto pool = build_reference_pool(prob, 100, 100, 3);
  CHECK(pool.responses.rows() == 100);
  CHECK(pool.responses.cols() == 100);
  CHECK(pool.responses.minCoeff() >= 0.0);
  CHECK(pool.responses.maxCoeff() <= 1.0);
  for (Eigen::Index i = 0; i < pool.n_u(); ++i) {
    double mx = -1.0, sum = 0.0;
    Eigen::VectorXd x(2);
    for (Eigen::Index j = 0; j < pool.n_p(); ++j) {
      x << pool.u_points(0, i), pool.p_points(0, j);
      const double v = evaluate_normalized(prob, x);
      mx = std::max(mx, v);
      sum += v;
    }
    CHECK(pool.uq_true(i, UqKind::robust) == mx);
    CHECK(pool.uq_true(i, UqKind::stochastic) == doctest::Approx(sum / 100));
  }
  const Eigen::MatrixXd joint = pool.joint_points();
  CHECK(joint.cols() == 10000);
  CHECK(joint(0, 3 * 100 + 7) == pool.u_points(0, 3));
  CHECK(joint(1, 3 * 100 + 7) == pool.p_points(0, 7));
}

TEST_CASE("reference pool file round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "mlio_test_pool";
  std::filesystem::create_directories(dir);
  const auto prob = make_problem(FunctionId::ackley, 4, std::uint64_t{12});
  const auto pool = build_reference_pool(prob, 7, 5, 12);
  write_reference_pool(pool, dir / "ackley");
  const auto back = read_reference_pool(dir / "ackley");
  CHECK(back.id == pool.id);
  CHECK(back.dim == pool.dim);
  CHECK(back.seed == pool.seed);
  CHECK(back.u_points == pool.u_points);
  CHECK(back.p_points == pool.p_points);
  CHECK(back.responses == pool.responses);
  CHECK(back.uq_robust == pool.uq_robust);
  CHECK_THROWS_AS(read_reference_pool(dir / "missing"), FormatError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("metrics: floor, definition and degenerate normalizer") {
  ReferencePool pool;
  pool.u_points = Eigen::MatrixXd(1, 3);
  pool.u_points << 0.1, 0.5, 0.9;
  pool.p_points = Eigen::MatrixXd(1, 2);
  pool.p_points << 0.2, 0.8;
  pool.responses = Eigen::MatrixXd(3, 2);
  pool.responses << 0.2, 0.4, 0.0, 0.2, 0.6, 0.8;
  pool.uq_robust = pool.responses.rowwise().maxCoeff();
  pool.uq_stochastic = pool.responses.rowwise().mean();
  // robust truth {0.4, 0.2, 0.8}: range 0.6, best design 1
  auto m = compute_metrics(pool, UqKind::robust, 1, 0.2);
  CHECK(m.ia == kMetricFloor);
  CHECK(m.so == kMetricFloor);
  m = compute_metrics(pool, UqKind::robust, 1, 0.5);
  CHECK(m.ia == doctest::Approx(0.5));
  m = compute_metrics(pool, UqKind::robust, 0, 0.4);
  CHECK(m.so == doctest::Approx(1.0 / 3));
  m = compute_metrics(pool, UqKind::robust, 2, 5.0);
  CHECK(m.ia == 1.0);
  CHECK(m.so == 1.0);
  CHECK(Metrics{}.ia == 1.0);
  CHECK(Metrics{}.so == 1.0);
  CHECK_THROWS_AS(compute_metrics(pool, UqKind::robust, 3, 0.0), UnknownId);
  pool.uq_robust.setConstant(0.5);
  CHECK_THROWS_AS(compute_metrics(pool, UqKind::robust, 0, 0.5), DegenerateNormalizer);
}
