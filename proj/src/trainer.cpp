#include "mlio/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mlio/errors.hpp"
#include "mlio/kriging.hpp"

namespace mlio {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr Eigen::Index kPruneChunk = 256;

int slot(Layer l) { return static_cast<int>(l) - 1; }

std::string location_of(const Eigen::VectorXd& x) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? "," : "") << x[i];
  os << ')';
  return os.str();
}

std::vector<char> evaluated_mask(const DecomposedSurrogate& s, const CandidateSet& c) {
  std::vector<char> mask(c.size(), 0);
  auto mark = [&](const Eigen::VectorXd& x) {
    const Eigen::Index i = c.find(x);
    if (i >= 0) mask[i] = 1;
  };
  mark(s.x_ref());
  for (const Sample& smp : s.samples()) mark(smp.x);
  return mask;
}

GaConfig box_config(const SearchContext& ctx, int dim, std::uint64_t salt) {
  GaConfig cfg;
  cfg.population = ctx.ga_population;
  cfg.generations = ctx.ga_generations;
  cfg.lower = Eigen::VectorXd::Zero(dim);
  cfg.upper = Eigen::VectorXd::Ones(dim);
  cfg.seed = ctx.seed * 0x9E3779B97F4A7C15ull + salt;
  return cfg;
}

// Unused coordinates of dimension d that an axis sample may take.
std::vector<double> open_axis_values(const DecomposedSurrogate& s, int d, const SearchContext& ctx) {
  const auto taken = s.axis_coordinates(d, true);
  std::vector<double> out;
  for (double t : ctx.candidates->axis_values(d))
    if (std::find(taken.begin(), taken.end(), t) == taken.end() && !s.contains(s.axis_point(d, t)))
      out.push_back(t);
  return out;
}

bool better(double v, Eigen::Index i, double best, Eigen::Index best_i) {
  return v > best || (v == best && best_i >= 0 && i < best_i);
}

SearchResult explore_axis(const DecomposedSurrogate& s, Layer layer, const SearchContext& ctx) {
  const int first = layer == Layer::symmetric ? 0 : 1;
  const int last = layer == Layer::symmetric ? 1 : s.dim();
  SearchResult best;
  best.variance = kNegInf;
  for (int d = first; d < last; ++d) {
    if (axis_capped(s, d, ctx)) continue;
    double t_best = 0.0, v_best = kNegInf;
    if (ctx.candidates) {
      const auto open = open_axis_values(s, d, ctx);
      if (open.empty()) continue;
      const Eigen::VectorXd t = Eigen::Map<const Eigen::VectorXd>(open.data(), open.size());
      const Eigen::VectorXd var = s.axis_variance(d, t);
      const Eigen::Index k = argmax_lowest(var);
      t_best = t[k];
      v_best = var[k];
    } else {
      const auto taken = s.axis_coordinates(d, true);
      auto objective = [&](const Eigen::MatrixXd& X) {
        Eigen::VectorXd var = s.axis_variance(d, X.row(0).transpose());
        for (Eigen::Index q = 0; q < X.cols(); ++q)
          if (std::find(taken.begin(), taken.end(), X(0, q)) != taken.end() ||
              s.contains(s.axis_point(d, X(0, q))))
            var[q] = kNegInf;
        return var;
      };
      const auto r = ga_maximize(objective, box_config(ctx, 1, 16 * static_cast<std::uint64_t>(d) + 1));
      t_best = r.point[0];
      v_best = r.value;
    }
    if (v_best > best.variance) {
      best.x = s.axis_point(d, t_best);
      best.axis = d;
      best.variance = v_best;
    }
  }
  if (best.axis < 0 || !std::isfinite(best.variance)) throw CapReached("no admissible axis sample left");
  return best;
}

bool spherical_valid(const VariogramFit& fit, int dim) {
  return fit.kind == VariogramKind::exponential || fit.kind == VariogramKind::gaussian ||
         (fit.kind == VariogramKind::spherical && dim <= 3);
}

// Exact argmax of the layer-3 variance over unevaluated candidates. Ordinary
// Kriging variance never exceeds 2 gamma(distance to the nearest
// observation) (all weight on that observation), so candidates are visited by
// decreasing bound and the scan stops once no bound can beat the best value.
SearchResult explore_free_pool(const DecomposedSurrogate& s, const SearchContext& ctx) {
  const CandidateSet& c = *ctx.candidates;
  const auto mask = evaluated_mask(s, c);
  std::vector<Eigen::Index> open;
  open.reserve(c.size());
  for (Eigen::Index i = 0; i < c.size(); ++i)
    if (!mask[i]) open.push_back(i);
  if (open.empty()) throw CapReached("every candidate is evaluated");

  const bool cached = s.candidates_ptr() == ctx.candidates;
  const auto& sys = s.free_model().system;
  Eigen::VectorXd bound;
  if (cached && spherical_valid(sys.fit(), s.dim())) {
    const Eigen::ArrayXd g = eval_model_array(sys.fit(), s.candidate_nearest_union().array());
    bound = (2.0 * g * (1.0 + 1e-9) + sys.variance_tolerance()).matrix();
    std::stable_sort(open.begin(), open.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return bound[a] > bound[b]; });
  }

  double best = kNegInf;
  Eigen::Index best_i = -1;
  std::size_t pos = 0;
  std::vector<Eigen::Index> chunk;
  while (pos < open.size()) {
    if (bound.size() && bound[open[pos]] < best) break;
    chunk.clear();
    while (pos < open.size() && static_cast<Eigen::Index>(chunk.size()) < kPruneChunk) {
      if (!bound.size() || bound[open[pos]] >= best) chunk.push_back(open[pos]);
      ++pos;
    }
    Eigen::VectorXd var;
    if (cached) {
      var = s.candidate_variances(chunk);
    } else {
      Eigen::MatrixXd X(s.dim(), chunk.size());
      for (std::size_t k = 0; k < chunk.size(); ++k) X.col(k) = c.points().col(chunk[k]);
      var = s.variance_full(X);
    }
    for (std::size_t k = 0; k < chunk.size(); ++k)
      if (best_i < 0 || better(var[k], chunk[k], best, best_i)) {
        best = var[k];
        best_i = chunk[k];
      }
  }
  SearchResult r;
  r.x = c.points().col(best_i);
  r.variance = best;
  return r;
}

SearchResult explore_free_box(const DecomposedSurrogate& s, const SearchContext& ctx) {
  auto objective = [&](const Eigen::MatrixXd& X) {
    Eigen::VectorXd var = s.variance_full(X);
    for (Eigen::Index q = 0; q < X.cols(); ++q)
      if (s.contains(X.col(q))) var[q] = kNegInf;
    return var;
  };
  const auto r = ga_maximize(objective, box_config(ctx, s.dim(), 3));
  if (!std::isfinite(r.value)) throw CapReached("GA found no unevaluated point");
  SearchResult out;
  out.x = r.point;
  out.variance = r.value;
  return out;
}

SearchResult validate_axis(const DecomposedSurrogate& s, Layer layer, const SearchContext& ctx) {
  const int first = layer == Layer::symmetric ? 0 : 1;
  const int last = layer == Layer::symmetric ? 1 : s.dim();
  SearchResult best;
  best.variance = kNegInf;
  for (int d = first; d < last; ++d) {
    if (axis_capped(s, d, ctx)) continue;
    const auto taken = s.axis_coordinates(d, true);
    auto nearest = [&](double t) {
      double m = std::numeric_limits<double>::infinity();
      for (double u : taken) m = std::min(m, std::abs(t - u));
      return m;
    };
    double t_best = 0.0, v_best = kNegInf;
    if (ctx.candidates) {
      for (double t : open_axis_values(s, d, ctx)) {
        const double v = nearest(t);
        if (v > v_best) {
          v_best = v;
          t_best = t;
        }
      }
      if (!std::isfinite(v_best)) continue;
    } else {
      t_best = maximin_1d(taken);
      v_best = nearest(t_best);
      if (!(v_best > 0.0) || s.contains(s.axis_point(d, t_best))) continue;
    }
    if (v_best > best.variance) {
      best.x = s.axis_point(d, t_best);
      best.axis = d;
      best.variance = v_best;
    }
  }
  if (best.axis < 0) throw CapReached("no admissible axis validation point left");
  return best;
}

Eigen::MatrixXd evaluated_points(const DecomposedSurrogate& s, bool validation_only) {
  std::vector<const Eigen::VectorXd*> pts;
  if (!validation_only) pts.push_back(&s.x_ref());
  for (const Sample& smp : s.samples())
    if (!validation_only || smp.validation) pts.push_back(&smp.x);
  Eigen::MatrixXd X(s.dim(), pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) X.col(k) = *pts[k];
  return X;
}

SearchResult validate_free(const DecomposedSurrogate& s, const SearchContext& ctx) {
  SearchResult r;
  if (ctx.candidates) {
    const CandidateSet& c = *ctx.candidates;
    Eigen::VectorXd nn;
    Eigen::MatrixXd others;
    if (s.candidates_ptr() == ctx.candidates) {
      nn = s.candidate_nearest_union();
      others = evaluated_points(s, true);
    } else {
      nn = Eigen::VectorXd::Constant(c.size(), std::numeric_limits<double>::infinity());
      others = evaluated_points(s, false);
    }
    for (Eigen::Index k = 0; k < others.cols(); ++k) nn = nn.cwiseMin(distances_to(c, others.col(k)));
    const auto mask = evaluated_mask(s, c);
    for (Eigen::Index i = 0; i < c.size(); ++i)
      if (mask[i]) nn[i] = kNegInf;
    const Eigen::Index k = argmax_lowest(nn);
    if (!std::isfinite(nn[k])) throw CapReached("every candidate is evaluated");
    r.x = c.points().col(k);
    r.variance = nn[k];
    return r;
  }
  const Eigen::MatrixXd P = evaluated_points(s, false);
  auto objective = [&](const Eigen::MatrixXd& X) {
    return pairwise_distances(P, X).colwise().minCoeff().transpose().eval();
  };
  const auto best = ga_maximize(objective, box_config(ctx, s.dim(), 5));
  if (!(best.value > 0.0)) throw CapReached("GA found no unevaluated point");
  r.x = best.point;
  r.variance = best.value;
  return r;
}

}  // namespace

void TrainerConfig::validate() const {
  if (!(v_ratio > 0.0 && v_ratio <= 1.0)) throw InvalidConfig("v_ratio must lie in (0, 1]");
  if (!(g_ratio >= 0.0)) throw InvalidConfig("g_ratio must be non-negative");
  if (!(tau_val > 0.0) || !(tau_ci > 0.0)) throw InvalidConfig("thresholds must be positive");
  if (n_tot_max < 1 || n_ss_max < 1) throw InvalidConfig("budgets must be positive");
  if (v_min < 0) throw InvalidConfig("v_min must be non-negative");
  if (ga_population < 4 || ga_generations < 1) throw InvalidConfig("GA needs population >= 4");
  if (n_windows < 1) throw InvalidConfig("n_windows must be positive");
}

int TrainerConfig::validation_period() const {
  return static_cast<int>(std::ceil(1.0 / v_ratio - 1e-12));
}

std::string_view to_string(SampleKind k) {
  switch (k) {
    case SampleKind::train:
      return "train";
    case SampleKind::val:
      return "val";
    case SampleKind::greedy:
      return "greedy";
  }
  return "?";
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::running:
      return "running";
    case Termination::quality_met:
      return "quality_met";
    case Termination::budget_exhausted:
      return "budget_exhausted";
    case Termination::stopped:
      return "stopped";
  }
  return "?";
}

bool axis_capped(const DecomposedSurrogate& s, int d, const SearchContext& ctx) {
  if (s.n_train_axis(d) + s.n_validation_axis(d) >= ctx.n_ss_max) return true;
  return ctx.candidates && open_axis_values(s, d, ctx).empty();
}

bool layer_capped(const DecomposedSurrogate& s, Layer layer, const SearchContext& ctx) {
  switch (layer) {
    case Layer::symmetric:
      return axis_capped(s, 0, ctx);
    case Layer::separable:
      for (int d = 1; d < s.dim(); ++d)
        if (!axis_capped(s, d, ctx)) return false;
      return true;
    case Layer::free:
      if (!ctx.candidates) return false;
      {
        const auto mask = evaluated_mask(s, *ctx.candidates);
        return std::all_of(mask.begin(), mask.end(), [](char m) { return m != 0; });
      }
    case Layer::reference:
      break;
  }
  return true;
}

SearchResult next_exploration(const DecomposedSurrogate& s, Layer layer, const SearchContext& ctx) {
  if (!s.trained(layer)) throw NotTrained("layer is not trained");
  if (layer == Layer::symmetric || layer == Layer::separable) return explore_axis(s, layer, ctx);
  if (layer != Layer::free) throw InternalConsistency("the reference layer has no exploration");
  return ctx.candidates ? explore_free_pool(s, ctx) : explore_free_box(s, ctx);
}

SearchResult next_validation(const DecomposedSurrogate& s, Layer layer, const SearchContext& ctx) {
  if (layer == Layer::symmetric || layer == Layer::separable) return validate_axis(s, layer, ctx);
  if (layer != Layer::free) throw InternalConsistency("the reference layer has no validation");
  return validate_free(s, ctx);
}

double maximin_1d(std::vector<double> taken) {
  if (taken.empty()) return 0.0;
  std::sort(taken.begin(), taken.end());
  std::vector<double> cand{0.0};
  for (std::size_t k = 1; k < taken.size(); ++k) cand.push_back(0.5 * (taken[k - 1] + taken[k]));
  cand.push_back(1.0);
  double best_t = 0.0, best_v = -1.0;
  for (double t : cand) {
    double v = std::numeric_limits<double>::infinity();
    for (double u : taken) v = std::min(v, std::abs(t - u));
    if (v > best_v) {
      best_v = v;
      best_t = t;
    }
  }
  return best_t;
}

double ci_error(double max_variance, double range) {
  const double half = ci95_factor() * std::sqrt(std::max(max_variance, 0.0));
  return range > 0.0 ? half / range : half;
}

LayerErrors compute_errors(const DecomposedSurrogate& s, const std::array<double, 3>& ci) {
  LayerErrors e;
  e.ci = ci;
  for (Layer l : {Layer::symmetric, Layer::separable, Layer::free})
    if (s.trained(l)) e.val[slot(l)] = s.validation_error(l);
  if (s.dim() == 1) e.val[1] = 0.0;
  return e;
}

SearchResult greedy_step(const DecomposedSurrogate& s, const GreedyOperator& g) {
  if (!g) throw EmptySubset("no greedy operator");
  const Eigen::MatrixXd X = g(s);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index q = 0; q < X.cols(); ++q)
    if (!s.contains(X.col(q))) keep.push_back(q);
  if (keep.empty()) throw EmptySubset("greedy subset has no unevaluated point");
  Eigen::MatrixXd Y(X.rows(), keep.size());
  for (std::size_t k = 0; k < keep.size(); ++k) Y.col(k) = X.col(keep[k]);
  const Eigen::VectorXd var = s.variance_full(Y);
  const Eigen::Index k = argmax_lowest(var);
  SearchResult r;
  r.x = Y.col(k);
  r.variance = var[k];
  return r;
}

TrainingResult run_training(const BlackBox& f, const TrainerConfig& cfg, const InitialPlan& init,
                            const TrainingContext& ctx) {
  cfg.validate();
  const int dim = static_cast<int>(init.reference.size());
  if (dim < 1) throw DimensionMismatch("empty reference point");
  if (init.size() > cfg.n_tot_max) throw InsufficientInit("budget is smaller than the initial layout");
  const int v_min = cfg.v_min > 0 ? cfg.v_min : dim;

  SearchContext sctx;
  sctx.candidates = ctx.candidates;
  sctx.ga_population = cfg.ga_population;
  sctx.ga_generations = cfg.ga_generations;
  sctx.n_ss_max = cfg.n_ss_max;

  auto evaluate = [&](const Eigen::VectorXd& x) {
    double z;
    try {
      z = f(x);
    } catch (const BlackBoxFailure&) {
      throw;
    } catch (const std::exception& e) {
      throw BlackBoxFailure(e.what(), location_of(x));
    }
    if (!std::isfinite(z)) throw BlackBoxFailure("non-finite response", location_of(x));
    return z;
  };

  TrainingResult out;
  TrainerState& st = out.state;
  SurrogateOptions opts;
  opts.n_windows = cfg.n_windows;
  out.surrogate = DecomposedSurrogate(init.reference, evaluate(init.reference), opts);
  DecomposedSurrogate& s = out.surrogate;
  if (ctx.candidates) s.attach_candidates(ctx.candidates);

  auto record = [&](Layer layer, SampleKind kind, const Eigen::VectorXd& x, double z) {
    LedgerEntry e;
    e.iter = st.iter;
    e.layer = layer;
    e.kind = kind;
    e.x = x;
    e.value = z;
    e.n_tot = s.n_total();
    st.ledger.push_back(std::move(e));
  };
  record(Layer::reference, SampleKind::train, s.x_ref(), s.z_ref());
  for (const PlannedSample& p : init.points) {
    const double z = evaluate(p.x);
    s.add_sample(Sample{p.x, z, p.layer, p.axis, p.validation});
    record(p.layer, p.validation ? SampleKind::val : SampleKind::train, p.x, z);
  }
  s.retrain_all();

  std::array<double, 3> ci{};
  auto refresh_ci = [&](Layer l) {
    sctx.seed = cfg.seed + 0x100000001B3ull * (4ull * st.iter + static_cast<std::uint64_t>(l));
    try {
      ci[slot(l)] = ci_error(next_exploration(s, l, sctx).variance, s.value_range(l));
    } catch (const CapReached&) {
      ci[slot(l)] = 0.0;
    }
  };
  auto finish_iteration = [&](std::size_t first_entry) {
    st.errors = compute_errors(s, ci);
    st.history.push_back(st.errors);
    for (std::size_t k = first_entry; k < st.ledger.size(); ++k) st.ledger[k].errors = st.errors;
    return ctx.hook && ctx.hook(s, st);
  };
  auto met = [&](Layer l) {
    return st.errors.val[slot(l)] <= cfg.tau_val && st.errors.ci[slot(l)] <= cfg.tau_ci;
  };
  auto all_met = [&] { return met(Layer::symmetric) && met(Layer::separable) && met(Layer::free); };
  auto train_count = [&](Layer l) { return s.n_train(l); };

  for (Layer l : {Layer::symmetric, Layer::separable, Layer::free}) refresh_ci(l);
  if (dim == 1) ci[1] = 0.0;
  if (finish_iteration(0)) {
    st.termination = Termination::stopped;
    return out;
  }

  const int period = cfg.validation_period();
  while (true) {
    if (all_met() && s.n_validation_total() >= v_min) {
      for (Layer l : {Layer::symmetric, Layer::separable, Layer::free}) refresh_ci(l);
      if (dim == 1) ci[1] = 0.0;
      st.errors = compute_errors(s, ci);
      if (all_met()) {
        st.termination = Termination::quality_met;
        break;
      }
    }
    if (s.n_total() >= cfg.n_tot_max) {
      st.termination = Termination::budget_exhausted;
      break;
    }
    ++st.iter;
    sctx.seed = cfg.seed + 0x100000001B3ull * (4ull * st.iter);
    const std::size_t first_entry = st.ledger.size();

    Layer chosen = Layer::reference;
    for (int k = 0; k < 3; ++k) {
      const Layer l = static_cast<Layer>((slot(st.cursor) + k) % 3 + 1);
      if (!met(l) && !layer_capped(s, l, sctx)) {
        chosen = l;
        break;
      }
    }
    int lowest_dirty = 4;
    auto place_validation = [&](Layer l) {
      if (s.n_total() >= cfg.n_tot_max) return;
      try {
        const SearchResult v = next_validation(s, l, sctx);
        const double z = evaluate(v.x);
        s.add_sample(Sample{v.x, z, l, v.axis, true});
        record(l, SampleKind::val, v.x, z);
        lowest_dirty = std::min(lowest_dirty, static_cast<int>(l));
      } catch (const CapReached&) {
      }
    };

    if (chosen == Layer::reference) {
      if (!all_met() && !layer_capped(s, Layer::free, sctx)) {
        chosen = Layer::free;
      } else if (all_met()) {
        place_validation(Layer::free);
        if (lowest_dirty == 4) {
          st.termination = Termination::budget_exhausted;
          break;
        }
      } else {
        st.termination = Termination::budget_exhausted;
        break;
      }
    }

    if (chosen != Layer::reference) {
      SearchResult next;
      SampleKind kind = SampleKind::train;
      const int n_free = train_count(Layer::free);
      const bool greedy_turn = chosen == Layer::free && ctx.greedy && cfg.g_ratio > 0.0 &&
                               n_free > st.greedy_count &&
                               double(st.greedy_count) / double(n_free - st.greedy_count) < cfg.g_ratio;
      bool have = false;
      if (greedy_turn) {
        try {
          next = greedy_step(s, ctx.greedy);
          kind = SampleKind::greedy;
          have = true;
        } catch (const EmptySubset&) {
          ++st.greedy_fallbacks;
        }
      }
      if (!have) {
        next = next_exploration(s, chosen, sctx);
        ci[slot(chosen)] = ci_error(next.variance, s.value_range(chosen));
      }
      const double z = evaluate(next.x);
      s.add_sample(Sample{next.x, z, chosen, chosen == Layer::free ? -1 : next.axis, false});
      record(chosen, kind, next.x, z);
      if (kind == SampleKind::greedy) ++st.greedy_count;
      lowest_dirty = static_cast<int>(chosen);
      if (train_count(chosen) % period == 0) place_validation(chosen);
      st.cursor = static_cast<Layer>(slot(chosen) == 2 ? 1 : static_cast<int>(chosen) + 1);
    }

    for (int l = lowest_dirty; l <= 3; ++l) s.retrain(static_cast<Layer>(l));
    if (finish_iteration(first_entry)) {
      st.termination = Termination::stopped;
      break;
    }
  }
  return out;
}

void write_ledger_csv(std::ostream& os, const std::vector<LedgerEntry>& ledger, int dim) {
  os << "iter,layer,kind";
  for (int d = 1; d <= dim; ++d) os << ",x" << d;
  os << ",value,eps_val_sym,eps_val_sep,eps_val_free,eps_ci_sym,eps_ci_sep,eps_ci_free,n_tot\n";
  const auto old = os.precision(17);
  for (const LedgerEntry& e : ledger) {
    os << e.iter << ',' << static_cast<int>(e.layer) << ',' << to_string(e.kind);
    for (Eigen::Index d = 0; d < e.x.size(); ++d) os << ',' << e.x[d];
    os << ',' << e.value;
    for (double v : e.errors.val) os << ',' << v;
    for (double v : e.errors.ci) os << ',' << v;
    os << ',' << e.n_tot << '\n';
  }
  os.precision(old);
}

}  // namespace mlio
