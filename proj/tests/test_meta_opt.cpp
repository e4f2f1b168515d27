#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "mlio/errors.hpp"
#include "mlio/meta_opt.hpp"

using namespace mlio;

namespace {

GaConfig box(int dim, std::uint64_t seed = 1) {
  GaConfig cfg;
  cfg.lower = Eigen::VectorXd::Zero(dim);
  cfg.upper = Eigen::VectorXd::Ones(dim);
  cfg.seed = seed;
  return cfg;
}

BatchObjective bowl(const Eigen::VectorXd& centre) {
  return [centre](const Eigen::MatrixXd& X) -> Eigen::VectorXd {
    return -(X.colwise() - centre).colwise().squaredNorm().transpose();
  };
}

}  // namespace

TEST_CASE("GA finds an interior optimum") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Eigen::Vector2d centre(0.31, 0.72);
    const auto r = ga_maximize(bowl(centre), box(2, seed));
    CHECK((r.point - centre).norm() < 1e-2);
    CHECK(r.value <= 0.0);
    CHECK(r.index == -1);
  }
}

TEST_CASE("GA stays feasible and reports the best value it evaluated") {
  GaConfig cfg = box(3, 17);
  cfg.lower << -1.0, 0.5, 2.0;
  cfg.upper << 1.0, 0.6, 5.0;
  double seen = -std::numeric_limits<double>::infinity();
  bool feasible = true;
  auto objective = [&](const Eigen::MatrixXd& X) -> Eigen::VectorXd {
    Eigen::VectorXd v(X.cols());
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
      feasible &= ((X.col(i).array() >= cfg.lower.array()) && (X.col(i).array() <= cfg.upper.array())).all();
      v[i] = std::sin(5 * X(0, i)) + std::cos(3 * X(2, i)) - X(1, i);
      seen = std::max(seen, v[i]);
    }
    return v;
  };
  const auto r = ga_maximize(objective, cfg);
  CHECK(feasible);
  CHECK(r.value == seen);
  CHECK(((r.point.array() >= cfg.lower.array()) && (r.point.array() <= cfg.upper.array())).all());
}

TEST_CASE("GA on a flat landscape returns the constant") {
  auto flat = [](const Eigen::MatrixXd& X) -> Eigen::VectorXd { return Eigen::VectorXd::Constant(X.cols(), 4.5); };
  const auto r = ga_maximize(flat, box(4));
  CHECK(r.value == 4.5);
  CHECK(((r.point.array() >= 0.0) && (r.point.array() <= 1.0)).all());
}

TEST_CASE("GA keeps a warm-started optimum") {
  const Eigen::Vector3d centre(0.123456, 0.654321, 0.999);
  GaConfig cfg = box(3, 5);
  cfg.population = 10;
  cfg.generations = 3;
  cfg.warm_start = centre;
  const auto r = ga_maximize(bowl(centre), cfg);
  CHECK(r.value >= 0.0);
  CHECK(r.point == centre);
}

TEST_CASE("GA is deterministic per seed") {
  auto f = [](const Eigen::MatrixXd& X) -> Eigen::VectorXd {
    return (X.array().sin() * 3).colwise().sum().transpose();
  };
  const auto a = ga_maximize(f, box(5, 99));
  const auto b = ga_maximize(f, box(5, 99));
  CHECK(a.point == b.point);
  CHECK(a.value == b.value);
}

TEST_CASE("pool argmax: single point, ties and an independent scan") {
  auto first_row = [](const Eigen::MatrixXd& X) -> Eigen::VectorXd { return X.row(0).transpose(); };
  Eigen::MatrixXd one(2, 1);
  one << 0.3, 0.4;
  auto r = pool_argmax(first_row, one);
  CHECK(r.index == 0);
  CHECK(r.point == one.col(0));

  Eigen::MatrixXd ties(1, 5);
  ties << 0.1, 0.9, 0.2, 0.9, 0.9;
  r = pool_argmax(first_row, ties, 2);
  CHECK(r.index == 1);
  CHECK(r.value == 0.9);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Eigen::MatrixXd pool(3, 1000);
  for (Eigen::Index i = 0; i < pool.size(); ++i) pool.data()[i] = U(rng);
  auto f = [](const Eigen::MatrixXd& X) -> Eigen::VectorXd {
    return (X.row(0).array() * X.row(1).array() - X.row(2).array().square()).transpose();
  };
  Eigen::Index best = 0;
  double best_v = -1e300;
  for (Eigen::Index i = 0; i < pool.cols(); ++i) {
    const double v = pool(0, i) * pool(1, i) - pool(2, i) * pool(2, i);
    if (v > best_v) {
      best_v = v;
      best = i;
    }
  }
  for (Eigen::Index chunk : {1, 7, 256, 4096}) {
    r = pool_argmax(f, pool, chunk);
    CHECK(r.index == best);
    CHECK(r.value == doctest::Approx(best_v));
  }
  CHECK_THROWS_AS(pool_argmax(f, Eigen::MatrixXd(3, 0)), EmptyPool);
}

TEST_CASE("argmax_lowest tie rule") {
  Eigen::VectorXd v(4);
  v << 1.0, 3.0, 3.0, -2.0;
  CHECK(argmax_lowest(v) == 1);
}

TEST_CASE("bounded least squares") {
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(1, -10.0), hi = Eigen::VectorXd::Constant(1, 10.0);

  SUBCASE("zero residual at the initial point") {
    auto res = [](const Eigen::VectorXd& p) -> Eigen::VectorXd { return Eigen::VectorXd::Constant(2, p[0] - 2.0); };
    const auto r = bounded_least_squares(res, lo, hi, Eigen::VectorXd::Constant(1, 2.0));
    CHECK(r.params[0] == 2.0);
    CHECK(r.objective == 0.0);
  }
  SUBCASE("interior vertex of a quadratic residual") {
    // residuals (p - 1, 2 (p - 4)): minimum of (p-1)^2 + 4 (p-4)^2 at p = 17/5
    auto res = [](const Eigen::VectorXd& p) -> Eigen::VectorXd {
      Eigen::VectorXd r(2);
      r << p[0] - 1.0, 2.0 * (p[0] - 4.0);
      return r;
    };
    const auto r = bounded_least_squares(res, lo, hi, Eigen::VectorXd::Constant(1, -7.0));
    CHECK(r.params[0] == doctest::Approx(17.0 / 5).epsilon(1e-8));
  }
  SUBCASE("optimum outside the box clamps to the best boundary point") {
    auto res = [](const Eigen::VectorXd& p) -> Eigen::VectorXd {
      Eigen::VectorXd r(2);
      r << p[0] * p[0] - 30.0, p[0] - 6.0;
      return r;
    };
    const Eigen::VectorXd l = Eigen::VectorXd::Constant(1, 0.0), h = Eigen::VectorXd::Constant(1, 2.5);
    double best = 0, best_v = 1e300;
    for (int k = 0; k <= 25000; ++k) {
      const double p = 2.5 * k / 25000;
      const double v = std::pow(p * p - 30, 2) + std::pow(p - 6, 2);
      if (v < best_v) best_v = v, best = p;
    }
    const auto r = bounded_least_squares(res, l, h, Eigen::VectorXd::Constant(1, 0.5));
    CHECK(r.params[0] == doctest::Approx(best).epsilon(1e-4));
    CHECK(r.params[0] <= 2.5);
  }
  SUBCASE("never worse than the start and always feasible") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      const double a = U(rng), b = U(rng);
      auto res = [&](const Eigen::VectorXd& p) -> Eigen::VectorXd {
        Eigen::VectorXd r(3);
        r << std::sin(3 * p[0]) - a, p[1] * p[0] - b, std::exp(p[1]) - 1.5;
        return r;
      };
      const Eigen::Vector2d l(-1, -1), h(1, 1);
      const Eigen::Vector2d init(U(rng), U(rng));
      const auto r = bounded_least_squares(res, l, h, init);
      CHECK(r.objective <= res(init).squaredNorm() + 1e-15);
      CHECK(((r.params.array() >= l.array()) && (r.params.array() <= h.array())).all());
      const auto again = bounded_least_squares(res, l, h, init);
      CHECK(again.params == r.params);
    }
  }
  SUBCASE("non-finite residual at the start") {
    auto res = [](const Eigen::VectorXd&) -> Eigen::VectorXd { return Eigen::VectorXd::Constant(1, NAN); };
    CHECK_THROWS_AS(bounded_least_squares(res, lo, hi, Eigen::VectorXd::Zero(1)), FitFailure);
  }
}
