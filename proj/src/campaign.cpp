#include "mlio/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "mlio/errors.hpp"

namespace mlio {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "mlio 0.1.0";

std::string run_name(FunctionId id, int dim, UqKind uq, int rep) {
  std::ostringstream os;
  os << to_string(id) << "_D" << dim << '_' << to_string(uq) << "_r" << rep;
  return os.str();
}

std::string pool_name(FunctionId id, int dim, std::uint64_t seed, int n_u, int n_p) {
  std::ostringstream os;
  os << to_string(id) << "_D" << dim << "_s" << seed << '_' << n_u << 'x' << n_p;
  return os.str();
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json trainer_json(const TrainerConfig& t) {
  return {{"v_ratio", t.v_ratio},       {"g_ratio", t.g_ratio},
          {"tau_val", t.tau_val},       {"tau_ci", t.tau_ci},
          {"n_ss_max", t.n_ss_max},     {"v_min", t.v_min},
          {"ga_population", t.ga_population}, {"ga_generations", t.ga_generations},
          {"n_windows", t.n_windows}};
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<TracePoint>& trace) {
  std::ofstream os(path);
  os << std::setprecision(17) << "n_tot,ia,so\n";
  for (const auto& t : trace) os << t.n_tot << ',' << t.ia << ',' << t.so << '\n';
}

ReferencePool obtain_pool(const TestProblem& prob, std::uint64_t seed, const CampaignConfig& cfg) {
  if (cfg.pool_cache.empty()) return build_reference_pool(prob, cfg.n_u, cfg.n_p, seed);
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  const auto stem = cfg.pool_cache / pool_name(prob.id, prob.dim, seed, cfg.n_u, cfg.n_p);
  auto csv = stem;
  csv += ".csv";
  if (std::filesystem::exists(csv)) return read_reference_pool(stem);
  std::filesystem::create_directories(cfg.pool_cache);
  ReferencePool pool = build_reference_pool(prob, cfg.n_u, cfg.n_p, seed);
  write_reference_pool(pool, stem);
  return pool;
}

struct Group {
  FunctionId function;
  int dim;
  UqKind uq;
  std::vector<const RunRecord*> runs;
};

std::vector<Group> groups_of(const CampaignSummary& summary) {
  std::vector<Group> groups;
  for (FunctionId id : summary.config.functions)
    for (int dim : summary.config.dims)
      for (UqKind uq : summary.config.uq) {
        Group g{id, dim, uq, {}};
        for (const auto& r : summary.runs)
          if (r.ok && r.function == id && r.dim == dim && r.uq == uq) g.runs.push_back(&r);
        if (!g.runs.empty()) groups.push_back(std::move(g));
      }
  return groups;
}

constexpr std::array<std::pair<const char*, double>, 5> kQuantiles = {
    std::pair{"min", 0.0}, std::pair{"q25", 0.25}, std::pair{"median", 0.5}, std::pair{"q75", 0.75},
    std::pair{"max", 1.0}};

}  // namespace

void CampaignConfig::validate() const {
  if (functions.empty()) throw InvalidConfig("no functions selected");
  if (dims.empty()) throw InvalidConfig("no dimensions selected");
  for (int d : dims)
    if (d < 2 || d % 2) throw InvalidConfig("D must be even and at least 2");
  if (repetitions < 1) throw InvalidConfig("repetitions must be at least 1");
  if (n_u < 2 || n_p < 1) throw InvalidConfig("reference pool needs n_u >= 2 and n_p >= 1");
  if (uq.empty()) throw InvalidConfig("no UQ operator selected");
  if (setting != 1 && setting != 2) throw InvalidConfig("setting must be 1 or 2");
  if (jobs < 1) throw InvalidConfig("jobs must be at least 1");
  trainer.validate();
}

json to_json(const CampaignConfig& cfg) {
  json j;
  json fns = json::array(), uq = json::array();
  for (auto id : cfg.functions) fns.push_back(std::string(to_string(id)));
  for (auto k : cfg.uq) uq.push_back(std::string(to_string(k)));
  j["functions"] = fns;
  j["dims"] = cfg.dims;
  j["repetitions"] = cfg.repetitions;
  j["n_u"] = cfg.n_u;
  j["n_p"] = cfg.n_p;
  j["uq"] = uq;
  j["setting"] = cfg.setting;
  j["seed"] = cfg.seed;
  j["budget"] = cfg.trainer.n_tot_max;
  j["trainer"] = trainer_json(cfg.trainer);
  j["out"] = cfg.out.string();
  j["pool_cache"] = cfg.pool_cache.string();
  j["jobs"] = cfg.jobs;
  return j;
}

CampaignConfig campaign_from_json(const json& j) {
  static const std::vector<std::string> known = {"functions", "dims", "repetitions", "n_u", "n_p", "uq",
                                                 "setting", "seed", "budget", "trainer", "out",
                                                 "pool_cache", "jobs"};
  static const std::vector<std::string> known_trainer = {"v_ratio", "g_ratio", "tau_val", "tau_ci",
                                                         "n_ss_max", "v_min", "ga_population",
                                                         "ga_generations", "n_windows"};
  if (!j.is_object()) throw InvalidConfig("campaign config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw InvalidConfig("unknown campaign key '" + key + "'");
  CampaignConfig cfg;
  try {
    if (j.contains("functions")) {
      cfg.functions.clear();
      for (const auto& f : j["functions"]) cfg.functions.push_back(function_id_from_string(f.get<std::string>()));
    }
    if (j.contains("uq")) {
      cfg.uq.clear();
      for (const auto& u : j["uq"]) cfg.uq.push_back(uq_kind_from_string(u.get<std::string>()));
    }
    if (j.contains("dims")) cfg.dims = j["dims"].get<std::vector<int>>();
    cfg.repetitions = j.value("repetitions", cfg.repetitions);
    cfg.n_u = j.value("n_u", cfg.n_u);
    cfg.n_p = j.value("n_p", cfg.n_p);
    cfg.setting = j.value("setting", cfg.setting);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.trainer.n_tot_max = j.value("budget", cfg.trainer.n_tot_max);
    cfg.out = j.value("out", cfg.out.string());
    cfg.pool_cache = j.value("pool_cache", cfg.pool_cache.string());
    cfg.jobs = j.value("jobs", cfg.jobs);
    if (j.contains("trainer")) {
      const json& t = j["trainer"];
      for (const auto& [key, _] : t.items())
        if (std::find(known_trainer.begin(), known_trainer.end(), key) == known_trainer.end())
          throw InvalidConfig("unknown trainer key '" + key + "'");
      TrainerConfig& tc = cfg.trainer;
      tc.v_ratio = t.value("v_ratio", tc.v_ratio);
      tc.g_ratio = t.value("g_ratio", tc.g_ratio);
      tc.tau_val = t.value("tau_val", tc.tau_val);
      tc.tau_ci = t.value("tau_ci", tc.tau_ci);
      tc.n_ss_max = t.value("n_ss_max", tc.n_ss_max);
      tc.v_min = t.value("v_min", tc.v_min);
      tc.ga_population = t.value("ga_population", tc.ga_population);
      tc.ga_generations = t.value("ga_generations", tc.ga_generations);
      tc.n_windows = t.value("n_windows", tc.n_windows);
    }
  } catch (const json::exception& e) {
    throw InvalidConfig(std::string("campaign config: ") + e.what());
  }
  return cfg;
}

double trace_value_at(const std::vector<TracePoint>& trace, int samples, bool so) {
  double v = 1.0;
  for (const auto& t : trace) {
    if (t.n_tot > samples) break;
    v = so ? t.so : t.ia;
  }
  return v;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidConfig("quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * double(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - double(lo)) * (values[hi] - values[lo]);
}

int CampaignSummary::failures() const {
  return static_cast<int>(std::count_if(runs.begin(), runs.end(), [](const RunRecord& r) { return !r.ok; }));
}

MlioProblem make_benchmark_problem(const TestProblem& prob, const ReferencePool& pool, UqKind uq,
                                   std::uint64_t seed) {
  MlioProblem p;
  p.cost = [prob](const Eigen::VectorXd& x) { return evaluate_normalized(prob, x); };
  p.design_dim = prob.design_dim();
  p.parameter_dim = prob.parameter_dim();
  p.uq = uq;
  p.design_grid = pool.u_points;
  p.parameter_samples = pool.p_points;
  p.candidates = std::make_shared<const CandidateSet>(pool.joint_points());
  p.seed = seed;

  const Eigen::MatrixXd& pts = p.candidates->points();
  Eigen::Index ref = 0;
  (pts.colwise() - Eigen::VectorXd::Constant(pts.rows(), 0.5)).colwise().squaredNorm().minCoeff(&ref);
  std::mt19937_64 rng(seed ^ 0xA5A5A5A5DEADBEEFull);
  std::uniform_int_distribution<Eigen::Index> pick(0, pts.cols() - 1);
  auto off_axis = [&](Eigen::Index k) { return (pts.col(k).array() != pts.col(ref).array()).count() >= 2; };
  Eigen::Index other = pick(rng);
  while (!off_axis(other)) other = pick(rng);
  p.initial_sets = {pts.col(ref), pts.col(other)};
  return p;
}

RunRecord run_benchmark(FunctionId id, int dim, int repetition, UqKind uq, const CampaignConfig& cfg,
                        const ReferencePool& pool, MlioResult* result,
                        const std::function<bool(const std::vector<TracePoint>&)>& stop) {
  RunRecord rec;
  rec.function = id;
  rec.dim = dim;
  rec.repetition = repetition;
  rec.uq = uq;
  rec.seed = cfg.seed + static_cast<std::uint64_t>(repetition);
  rec.name = run_name(id, dim, uq, repetition);

  const auto start = std::chrono::steady_clock::now();
  const TestProblem prob = make_problem(id, dim, rec.seed);
  const MlioProblem problem = make_benchmark_problem(prob, pool, uq, rec.seed);
  TrainerConfig tc = cfg.trainer;
  tc.seed = rec.seed;
  auto hook = [&](const DecomposedSurrogate& s, const TrainerState&, const DesignChoice& choice) {
    const Metrics m = compute_metrics(pool, uq, choice.index, choice.uq_estimate);
    rec.trace.push_back(TracePoint{s.n_total(), m.ia, m.so});
    return stop && stop(rec.trace);
  };
  MlioResult r = run_mlio(problem, tc, cfg.setting, hook);
  rec.final = compute_metrics(pool, uq, r.optimum.index, r.optimum.uq_estimate);
  rec.n_tot = r.surrogate.n_total();
  rec.ok = true;
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (result) *result = std::move(r);
  return rec;
}

CampaignSummary run_campaign(const CampaignConfig& cfg) {
  cfg.validate();
  CampaignSummary summary;
  summary.config = cfg;
  for (FunctionId id : cfg.functions)
    for (int dim : cfg.dims)
      for (int rep = 0; rep < cfg.repetitions; ++rep)
        for (UqKind uq : cfg.uq) {
          RunRecord r;
          r.function = id;
          r.dim = dim;
          r.repetition = rep;
          r.uq = uq;
          r.seed = cfg.seed + static_cast<std::uint64_t>(rep);
          r.name = run_name(id, dim, uq, rep);
          summary.runs.push_back(r);
        }

  const auto runs_dir = cfg.out / "runs";
  std::filesystem::create_directories(runs_dir);
  {
    std::ofstream os(cfg.out / "config.json");
    os << to_json(cfg).dump(1) << '\n';
  }

  auto execute = [&](RunRecord& slot) {
    const auto dir = runs_dir / slot.name;
    std::filesystem::create_directories(dir);
    json run_cfg = to_json(cfg);
    run_cfg.erase("out");
    run_cfg.erase("jobs");
    run_cfg["function"] = std::string(to_string(slot.function));
    run_cfg["D"] = slot.dim;
    run_cfg["repetition"] = slot.repetition;
    run_cfg["uq_kind"] = std::string(to_string(slot.uq));
    run_cfg["run_seed"] = slot.seed;
    std::vector<std::string> files = {"config.json", "summary.json"};
    json summary_json;
    try {
      const TestProblem prob = make_problem(slot.function, slot.dim, slot.seed);
      run_cfg["translation"] = vec_json(prob.translation);
      const ReferencePool pool = obtain_pool(prob, slot.seed, cfg);
      MlioResult result;
      slot = run_benchmark(slot.function, slot.dim, slot.repetition, slot.uq, cfg, pool, &result);
      write_result_bundle(result, dir);
      write_trace_csv(dir / "trace.csv", slot.trace);
      summary_json = result_summary(result);
      summary_json["ia"] = slot.final.ia;
      summary_json["so"] = slot.final.so;
      summary_json["uq_true"] = pool.uq_true(result.optimum.index, slot.uq);
      files = {"config.json", "ledger.csv", "trace.csv", "surrogate.json", "summary.json"};
    } catch (const std::exception& e) {
      slot.ok = false;
      slot.error = e.what();
      summary_json = {{"error", slot.error}};
    }
    std::ofstream(dir / "config.json") << run_cfg.dump(1) << '\n';
    std::ofstream(dir / "summary.json") << summary_json.dump(1) << '\n';
    json manifest = {{"run", slot.name}, {"files", json::object()}};
    for (const auto& f : files) manifest["files"][f] = sha256_file(dir / f);
    std::ofstream(dir / "manifest.json") << manifest.dump(1) << '\n';
  };

  const auto t0 = std::chrono::steady_clock::now();
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < summary.runs.size(); k = next++) execute(summary.runs[k]);
  };
  const int n_threads = std::min<int>(cfg.jobs, static_cast<int>(summary.runs.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  {
    std::ofstream os(cfg.out / "aggregate.csv");
    emit_aggregate(os, summary);
  }
  {
    std::ofstream os(cfg.out / "convergence.csv");
    emit_convergence(os, summary);
  }
  json manifest;
  manifest["version"] = kVersion;
  manifest["config"] = to_json(cfg);
  manifest["wall_seconds"] = wall;
  manifest["failures"] = summary.failures();
  json runs = json::array();
  for (const auto& r : summary.runs) {
    json e = {{"name", r.name}, {"function", std::string(to_string(r.function))}, {"D", r.dim},
              {"repetition", r.repetition}, {"uq", std::string(to_string(r.uq))}, {"seed", r.seed},
              {"ok", r.ok}, {"seconds", r.seconds}};
    if (r.ok) {
      e["n_tot"] = r.n_tot;
      e["ia"] = r.final.ia;
      e["so"] = r.final.so;
    } else {
      e["error"] = r.error;
    }
    runs.push_back(e);
  }
  manifest["runs"] = runs;
  manifest["files"] = {{"aggregate.csv", sha256_file(cfg.out / "aggregate.csv")},
                       {"convergence.csv", sha256_file(cfg.out / "convergence.csv")},
                       {"config.json", sha256_file(cfg.out / "config.json")}};
  std::ofstream(cfg.out / "manifest.json") << manifest.dump(1) << '\n';
  return summary;
}

void emit_convergence(std::ostream& os, const CampaignSummary& summary) {
  os << "samples,metric,uq,function,D,quantile,value\n";
  const auto old = os.precision(17);
  const int budget = summary.config.trainer.n_tot_max;
  for (const Group& g : groups_of(summary))
    for (bool so : {false, true})
      for (int n = 1; n <= budget; ++n) {
        std::vector<double> v;
        for (const RunRecord* r : g.runs) v.push_back(trace_value_at(r->trace, n, so));
        for (const auto& [label, q] : kQuantiles)
          os << n << ',' << (so ? "SO" : "IA") << ',' << to_string(g.uq) << ',' << to_string(g.function) << ','
             << g.dim << ',' << label << ',' << quantile(v, q) << '\n';
      }
  os.precision(old);
}

void emit_aggregate(std::ostream& os, const CampaignSummary& summary) {
  os << "function,D,uq,metric,n_runs,min,q25,median,q75,max\n";
  const auto old = os.precision(17);
  for (const Group& g : groups_of(summary))
    for (bool so : {false, true}) {
      std::vector<double> v;
      for (const RunRecord* r : g.runs) v.push_back(so ? r->final.so : r->final.ia);
      os << to_string(g.function) << ',' << g.dim << ',' << to_string(g.uq) << ',' << (so ? "SO" : "IA") << ','
         << v.size();
      for (const auto& [label, q] : kQuantiles) os << ',' << quantile(v, q);
      os << '\n';
    }
  os.precision(old);
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof buf);
    if (is.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(is.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

}  // namespace mlio
