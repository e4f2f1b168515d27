#include "mlio/meta_opt.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mlio/errors.hpp"

namespace mlio {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::VectorXd sanitize(Eigen::VectorXd values) {
  for (auto& v : values)
    if (std::isnan(v)) v = kNegInf;
  return values;
}

void check_box(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  if (lower.size() != upper.size() || lower.size() == 0)
    throw InvalidConfig("box bounds must be non-empty and of equal size");
  if ((upper.array() < lower.array()).any()) throw InvalidConfig("box bounds are not ordered");
}

}  // namespace

Eigen::Index argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& values) {
  Eigen::Index best = -1;
  double best_value = kNegInf;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (best < 0 || v > best_value) {
      if (best < 0 && std::isnan(v)) continue;
      best = i;
      best_value = v;
    }
  }
  return best < 0 ? 0 : best;
}

MaximizeResult ga_maximize(const BatchObjective& objective, const GaConfig& cfg) {
  check_box(cfg.lower, cfg.upper);
  if (cfg.population < 4) throw InvalidConfig("GA population must be at least 4");
  if (cfg.generations < 0) throw InvalidConfig("GA generations must be non-negative");

  const Eigen::Index dim = cfg.lower.size();
  const Eigen::Index pop_size = cfg.population;
  const Eigen::VectorXd width = cfg.upper - cfg.lower;

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> blend(-0.5, 1.5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<Eigen::Index> pick(0, pop_size - 1);

  auto clamp_col = [&](auto&& col) {
    col = col.cwiseMax(cfg.lower).cwiseMin(cfg.upper);
  };

  Eigen::MatrixXd pop(dim, pop_size);
  Eigen::Index seeded = 0;
  for (; seeded < std::min<Eigen::Index>(cfg.warm_start.cols(), pop_size); ++seeded) {
    if (cfg.warm_start.rows() != dim) throw InvalidConfig("GA warm start has wrong dimension");
    pop.col(seeded) = cfg.warm_start.col(seeded);
    clamp_col(pop.col(seeded));
  }
  for (Eigen::Index i = seeded; i < pop_size; ++i)
    for (Eigen::Index d = 0; d < dim; ++d) pop(d, i) = cfg.lower[d] + unit(rng) * width[d];

  Eigen::VectorXd fitness = sanitize(objective(pop));
  Eigen::Index elite = argmax_lowest(fitness);
  MaximizeResult best{pop.col(elite), fitness[elite], -1};

  auto tournament = [&]() {
    Eigen::Index winner = pick(rng);
    for (int k = 1; k < 3; ++k) {
      const Eigen::Index challenger = pick(rng);
      if (fitness[challenger] > fitness[winner]) winner = challenger;
    }
    return winner;
  };

  Eigen::MatrixXd next(dim, pop_size);
  for (int gen = 0; gen < cfg.generations; ++gen) {
    const double decay = 1.0 - static_cast<double>(gen) / cfg.generations;
    const Eigen::VectorXd sigma =
        (cfg.mutation_scale * std::max(decay, 0.01)) * width;

    next.col(0) = pop.col(elite);
    for (Eigen::Index i = 1; i < pop_size; ++i) {
      const Eigen::Index a = tournament();
      const Eigen::Index b = tournament();
      for (Eigen::Index d = 0; d < dim; ++d) {
        double gene = pop(d, a) + blend(rng) * (pop(d, b) - pop(d, a));
        if (unit(rng) < cfg.mutation_rate) gene += sigma[d] * gauss(rng);
        next(d, i) = gene;
      }
      clamp_col(next.col(i));
    }

    const double elite_value = fitness[elite];
    Eigen::VectorXd child_fitness =
        sanitize(objective(next.rightCols(pop_size - 1)));
    fitness[0] = elite_value;
    fitness.tail(pop_size - 1) = child_fitness;
    pop.swap(next);

    elite = argmax_lowest(fitness);
    if (fitness[elite] > best.value) {
      best.point = pop.col(elite);
      best.value = fitness[elite];
    }
  }
  return best;
}

MaximizeResult pool_argmax(const BatchObjective& objective, const Eigen::MatrixXd& pool,
                           Eigen::Index chunk) {
  if (pool.cols() == 0) throw EmptyPool("pool_argmax called with an empty pool");
  chunk = std::max<Eigen::Index>(chunk, 1);
  MaximizeResult best;
  for (Eigen::Index start = 0; start < pool.cols(); start += chunk) {
    const Eigen::Index n = std::min(chunk, pool.cols() - start);
    const Eigen::VectorXd values = sanitize(objective(pool.middleCols(start, n)));
    for (Eigen::Index i = 0; i < n; ++i) {
      if (best.index < 0 || values[i] > best.value) {
        best.index = start + i;
        best.value = values[i];
      }
    }
  }
  best.point = pool.col(best.index);
  return best;
}

LeastSquaresResult bounded_least_squares(const ResidualFunction& residual,
                                         const Eigen::VectorXd& lower,
                                         const Eigen::VectorXd& upper,
                                         const Eigen::VectorXd& init,
                                         const LeastSquaresOptions& options) {
  check_box(lower, upper);
  if (init.size() != lower.size()) throw DimensionMismatch("initial guess has wrong size");

  const Eigen::Index n = init.size();
  auto project = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return x.cwiseMax(lower).cwiseMin(upper);
  };

  LeastSquaresResult out;
  out.params = project(init);
  Eigen::VectorXd r = residual(out.params);
  if (!r.allFinite()) throw FitFailure("residual is not finite at the initial guess");
  out.objective = r.squaredNorm();
  if (out.objective == 0.0) return out;

  auto jacobian = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& rx) {
    Eigen::MatrixXd jac(rx.size(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
      double step = 1e-7 * std::max(1.0, std::abs(x[j]));
      Eigen::VectorXd xp = x;
      if (x[j] + step > upper[j]) step = -step;
      xp[j] += step;
      if (xp[j] < lower[j]) {
        jac.col(j).setZero();
        continue;
      }
      const Eigen::VectorXd rp = residual(xp);
      jac.col(j) = rp.allFinite() ? Eigen::VectorXd((rp - rx) / step)
                                  : Eigen::VectorXd::Zero(rx.size());
    }
    return jac;
  };

  double damping = -1.0;
  for (int it = 0; it < options.max_iterations; ++it) {
    out.iterations = it + 1;
    const Eigen::MatrixXd jac = jacobian(out.params, r);
    const Eigen::VectorXd grad = jac.transpose() * r;
    const Eigen::MatrixXd normal = jac.transpose() * jac;

    const Eigen::VectorXd pg = out.params - project(out.params - grad);
    if (pg.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance) break;

    // Variables pinned at a bound by the gradient stay fixed this iteration.
    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < n; ++j) {
      const bool at_lower = out.params[j] <= lower[j] && grad[j] > 0.0;
      const bool at_upper = out.params[j] >= upper[j] && grad[j] < 0.0;
      if (!at_lower && !at_upper) free.push_back(j);
    }
    if (free.empty()) break;

    const auto nf = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd h(nf, nf);
    Eigen::VectorXd g(nf), diag(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      g[a] = grad[free[a]];
      diag[a] = std::max(normal(free[a], free[a]), 1e-12);
      for (Eigen::Index b = 0; b < nf; ++b) h(a, b) = normal(free[a], free[b]);
    }
    if (damping < 0.0) damping = 1e-3 * diag.maxCoeff();

    bool accepted = false;
    bool converged = false;
    while (damping < 1e32) {
      Eigen::MatrixXd lhs = h;
      lhs.diagonal() += damping * diag;
      const Eigen::VectorXd delta = lhs.ldlt().solve(-g);
      Eigen::VectorXd candidate = out.params;
      for (Eigen::Index a = 0; a < nf; ++a) candidate[free[a]] += delta[a];
      candidate = project(candidate);

      const double step_norm = (candidate - out.params).norm();
      if (step_norm <= options.step_tolerance * (out.params.norm() + options.step_tolerance)) {
        converged = true;
        break;
      }
      const Eigen::VectorXd rc = residual(candidate);
      const double fc = rc.allFinite() ? rc.squaredNorm()
                                       : std::numeric_limits<double>::infinity();
      if (fc < out.objective) {
        const double improvement = out.objective - fc;
        out.params = candidate;
        r = rc;
        out.objective = fc;
        damping = std::max(damping / 3.0, 1e-15);
        accepted = true;
        if (improvement <= options.function_tolerance * std::max(fc, 1e-300)) converged = true;
        break;
      }
      damping *= 4.0;
    }
    if (!accepted || converged || out.objective == 0.0) break;
  }
  return out;
}

}  // namespace mlio
