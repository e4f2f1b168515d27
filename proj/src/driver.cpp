#include "mlio/driver.hpp"

#include <cmath>
#include <fstream>

#include "mlio/errors.hpp"

namespace mlio {

namespace {

int ceil_count(double x) { return static_cast<int>(std::ceil(x - 1e-9)); }

bool grid_mode(const DecomposedSurrogate& s, const MlioProblem& problem) {
  return problem.candidates && s.candidates_ptr() == problem.candidates && problem.design_grid.size() &&
         problem.candidates->size() == problem.design_grid.cols() * problem.parameter_samples.cols();
}

Eigen::VectorXd reduce_columns(UqKind kind, const Eigen::MatrixXd& m) {
  Eigen::VectorXd out(m.cols());
  for (Eigen::Index i = 0; i < m.cols(); ++i) out[i] = uq_reduce(kind, m.col(i));
  return out;
}

Eigen::MatrixXd subset_for(const Eigen::VectorXd& u, const Eigen::MatrixXd& params) {
  Eigen::MatrixXd X(u.size() + params.rows(), params.cols());
  X.topRows(u.size()) = u.replicate(1, params.cols());
  X.bottomRows(params.rows()) = params;
  return X;
}

}  // namespace

Eigen::MatrixXd joint_grid(const Eigen::MatrixXd& designs, const Eigen::MatrixXd& parameters) {
  const Eigen::Index nu = designs.cols(), np = parameters.cols();
  Eigen::MatrixXd X(designs.rows() + parameters.rows(), nu * np);
  for (Eigen::Index i = 0; i < nu; ++i) X.middleCols(i * np, np) = subset_for(designs.col(i), parameters);
  return X;
}

int initialization_size(int dim, int setting, int n_free, double v_ratio) {
  return 1 + setting * dim + n_free + ceil_count(setting * v_ratio) +
         ceil_count(setting * (dim - 1) * v_ratio) + ceil_count(n_free * v_ratio);
}

InitialPlan build_initialization(const MlioProblem& problem, int setting, const TrainerConfig& cfg) {
  if (setting != 1 && setting != 2) throw InvalidConfig("setting must be 1 or 2");
  if (problem.initial_sets.size() < 2) throw InsufficientInit("at least two initial [u, p] sets are needed");
  const int dim = problem.dim();
  for (const auto& x : problem.initial_sets)
    if (x.size() != dim) throw DimensionMismatch("initial set has wrong dimension");
  if (problem.candidates && problem.candidates->dim() != dim)
    throw DimensionMismatch("candidate pool has wrong dimension");

  InitialPlan plan;
  plan.reference = problem.initial_sets.front();
  DecomposedSurrogate scratch(plan.reference, 0.0);
  if (problem.candidates) scratch.attach_candidates(problem.candidates);
  auto add = [&](const Eigen::VectorXd& x, Layer layer, int axis, bool validation) {
    try {
      scratch.add_sample(Sample{x, 0.0, layer, axis, validation});
    } catch (const InternalConsistency& e) {
      throw InsufficientInit(std::string("initial layout: ") + e.what());
    }
    plan.points.push_back(PlannedSample{x, layer, axis, validation});
  };

  for (int d = 0; d < dim; ++d) {
    const double r = plan.reference[d];
    double lo = 0.0, hi = 1.0;
    if (problem.candidates) {
      const auto& vals = problem.candidates->axis_values(d);
      lo = vals.front();
      hi = vals.back();
      if (setting == 2 && vals.size() > 2) {
        if (lo == r) lo = vals[1];
        if (hi == r) hi = vals[vals.size() - 2];
      }
    }
    std::vector<double> edges;
    if (setting == 1) edges.push_back(std::abs(hi - r) > std::abs(lo - r) ? hi : lo);
    else edges = {lo, hi};
    const Layer layer = d == 0 ? Layer::symmetric : Layer::separable;
    for (double t : edges) add(scratch.axis_point(d, t), layer, d, false);
  }
  for (std::size_t k = 1; k < problem.initial_sets.size(); ++k)
    add(problem.initial_sets[k], Layer::free, -1, false);

  SearchContext sctx;
  sctx.candidates = problem.candidates;
  sctx.ga_population = cfg.ga_population;
  sctx.ga_generations = cfg.ga_generations;
  sctx.n_ss_max = cfg.n_ss_max;
  sctx.seed = problem.seed;
  const int n_free = static_cast<int>(problem.initial_sets.size()) - 1;
  const std::array<std::pair<Layer, int>, 3> quota = {
      std::pair{Layer::symmetric, ceil_count(setting * cfg.v_ratio)},
      std::pair{Layer::separable, ceil_count(setting * (dim - 1) * cfg.v_ratio)},
      std::pair{Layer::free, ceil_count(n_free * cfg.v_ratio)}};
  for (const auto& [layer, count] : quota)
    for (int k = 0; k < count; ++k) {
      SearchResult v;
      try {
        v = next_validation(scratch, layer, sctx);
      } catch (const CapReached& e) {
        throw InsufficientInit(std::string("initial validation: ") + e.what());
      }
      add(v.x, layer, layer == Layer::free ? -1 : v.axis, true);
    }
  return plan;
}

DesignChoice design_greedy(const DecomposedSurrogate& s, const MlioProblem& problem) {
  const Eigen::MatrixXd& params = problem.parameter_samples;
  if (params.cols() == 0) throw NoCandidates("no parameter samples");
  if (params.rows() != problem.parameter_dim) throw DimensionMismatch("parameter samples have wrong dimension");
  const Eigen::Index np = params.cols();
  DesignChoice out;

  if (problem.design_grid.size()) {
    const Eigen::Index nu = problem.design_grid.cols();
    if (nu == 0) throw NoCandidates("empty design grid");
    const Eigen::VectorXd mean = grid_mode(s, problem)
                                     ? s.candidate_means()
                                     : s.mean_full(joint_grid(problem.design_grid, params));
    const Eigen::VectorXd uq =
        reduce_columns(problem.uq, Eigen::Map<const Eigen::MatrixXd>(mean.data(), np, nu));
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < nu; ++i)
      if (uq[i] < uq[best]) best = i;
    out.index = best;
    out.u = problem.design_grid.col(best);
    out.uq_estimate = uq[best];
  } else {
    auto objective = [&](const Eigen::MatrixXd& U) {
      Eigen::MatrixXd X(problem.dim(), U.cols() * np);
      for (Eigen::Index i = 0; i < U.cols(); ++i) X.middleCols(i * np, np) = subset_for(U.col(i), params);
      const Eigen::VectorXd mean = s.mean_full(X);
      return (-reduce_columns(problem.uq, Eigen::Map<const Eigen::MatrixXd>(mean.data(), np, U.cols())))
          .eval();
    };
    GaConfig ga;
    ga.lower = Eigen::VectorXd::Zero(problem.design_dim);
    ga.upper = Eigen::VectorXd::Ones(problem.design_dim);
    ga.seed = problem.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(s.n_total());
    const auto r = ga_maximize(objective, ga);
    out.u = r.point;
    out.uq_estimate = -r.value;
  }
  out.subset = subset_for(out.u, params);
  return out;
}

MlioResult run_mlio(const MlioProblem& problem, const TrainerConfig& cfg, int setting, const MlioHook& hook) {
  if (!problem.cost) throw InvalidConfig("problem has no cost function");
  if (problem.design_grid.size() && problem.design_grid.rows() != problem.design_dim)
    throw DimensionMismatch("design grid has wrong dimension");
  if (problem.candidates && problem.design_grid.size()) {
    const Eigen::MatrixXd joint = joint_grid(problem.design_grid, problem.parameter_samples);
    if (joint.cols() != problem.candidates->size() || joint != problem.candidates->points())
      throw InvalidConfig("candidate pool must be the joint design x parameter grid");
  }
  const InitialPlan init = build_initialization(problem, setting, cfg);
  if (init.size() > cfg.n_tot_max) throw InsufficientInit("budget is smaller than the initial layout");

  DesignChoice last;
  int last_n = -1;
  auto choice_for = [&](const DecomposedSurrogate& s) -> const DesignChoice& {
    if (last_n != s.n_total()) {
      last = design_greedy(s, problem);
      last_n = s.n_total();
    }
    return last;
  };

  TrainingContext ctx;
  ctx.candidates = problem.candidates;
  ctx.greedy = [&](const DecomposedSurrogate& s) { return choice_for(s).subset; };
  if (hook)
    ctx.hook = [&](const DecomposedSurrogate& s, const TrainerState& st) { return hook(s, st, choice_for(s)); };

  TrainingResult tr = run_training(problem.cost, cfg, init, ctx);
  MlioResult out;
  out.optimum = choice_for(tr.surrogate);
  out.surrogate = std::move(tr.surrogate);
  out.state = std::move(tr.state);
  return out;
}

nlohmann::json result_summary(const MlioResult& r) {
  const auto& s = r.surrogate;
  nlohmann::json j;
  j["u_opt"] = std::vector<double>(r.optimum.u.data(), r.optimum.u.data() + r.optimum.u.size());
  j["u_index"] = r.optimum.index;
  j["uq_estimate"] = r.optimum.uq_estimate;
  j["termination"] = std::string(to_string(r.state.termination));
  j["iterations"] = r.state.iter;
  j["n_tot"] = s.n_total();
  j["n_validation"] = s.n_validation_total();
  j["n_train"] = {{"symmetric", s.n_train(Layer::symmetric)},
                  {"separable", s.n_train(Layer::separable)},
                  {"free", s.n_train(Layer::free)}};
  j["greedy_count"] = r.state.greedy_count;
  j["greedy_fallbacks"] = r.state.greedy_fallbacks;
  auto finite = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json ev = nlohmann::json::array(), ec = nlohmann::json::array();
  for (int k = 0; k < 3; ++k) {
    ev.push_back(finite(r.state.errors.val[k]));
    ec.push_back(finite(r.state.errors.ci[k]));
  }
  j["eps_val"] = ev;
  j["eps_ci"] = ec;
  return j;
}

void write_result_bundle(const MlioResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_surrogate(result.surrogate, dir / "surrogate.json");
  std::ofstream ledger(dir / "ledger.csv");
  write_ledger_csv(ledger, result.state.ledger, result.surrogate.dim());
  std::ofstream summary(dir / "summary.json");
  summary << result_summary(result).dump(1) << '\n';
  if (!ledger || !summary) throw FormatError("cannot write result bundle in " + dir.string());
}

}  // namespace mlio
