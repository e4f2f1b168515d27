#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mlio/campaign.hpp"
#include "mlio/errors.hpp"

namespace {

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-level informed optimization with decomposed Kriging"};
  app.require_subcommand(1);

  auto* campaign = app.add_subcommand("campaign", "run a benchmark campaign");
  std::string config_path, functions, dims, uq, ref_size, out, pool_cache;
  int reps = 0, budget = 0, setting = 0, jobs = 0;
  double g_ratio = -1.0;
  std::uint64_t seed = 0;
  campaign->add_option("--config", config_path, "campaign JSON file")->check(CLI::ExistingFile);
  campaign->add_option("--functions", functions, "comma list, e.g. Step,Ackley");
  campaign->add_option("--dims", dims, "comma list of even D values");
  campaign->add_option("--reps", reps, "repetitions");
  campaign->add_option("--budget", budget, "total sample budget per run");
  campaign->add_option("--ref-size", ref_size, "reference pool size: N or NUxNP");
  campaign->add_option("--uq", uq, "robust,stochastic");
  campaign->add_option("--setting", setting, "initialization setting (1 or 2)");
  auto* seed_opt = campaign->add_option("--seed", seed, "campaign seed");
  campaign->add_option("--g-ratio", g_ratio, "greedy-to-exploration ratio");
  campaign->add_option("--out", out, "output directory");
  campaign->add_option("--pool-cache", pool_cache, "directory for reusable reference pools");
  campaign->add_option("--jobs", jobs, "parallel runs");

  auto* pool = app.add_subcommand("export-pool", "build a reference pool and write it to disk");
  std::string fn = "Step", stem;
  int dim = 2, n_u = 100, n_p = 100;
  std::uint64_t pool_seed = 0;
  pool->add_option("--function", fn, "test function");
  pool->add_option("--dim", dim, "total dimension D");
  pool->add_option("--seed", pool_seed, "translation seed");
  pool->add_option("--n-u", n_u, "design points");
  pool->add_option("--n-p", n_p, "parameter points");
  pool->add_option("--out", stem, "output stem (writes <stem>.csv and <stem>.json)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*campaign) {
      mlio::CampaignConfig cfg;
      if (!config_path.empty()) {
        std::ifstream is(config_path);
        nlohmann::json j;
        try {
          is >> j;
        } catch (const nlohmann::json::exception& e) {
          throw mlio::InvalidConfig(std::string("cannot parse ") + config_path + ": " + e.what());
        }
        cfg = mlio::campaign_from_json(j);
      }
      if (!functions.empty()) {
        cfg.functions.clear();
        for (const auto& f : split(functions)) cfg.functions.push_back(mlio::function_id_from_string(f));
      }
      if (!dims.empty()) {
        cfg.dims.clear();
        for (const auto& d : split(dims)) cfg.dims.push_back(std::stoi(d));
      }
      if (!uq.empty()) {
        cfg.uq.clear();
        for (const auto& u : split(uq)) cfg.uq.push_back(mlio::uq_kind_from_string(u));
      }
      if (!ref_size.empty()) {
        const auto x = ref_size.find('x');
        cfg.n_u = std::stoi(ref_size.substr(0, x));
        cfg.n_p = x == std::string::npos ? cfg.n_u : std::stoi(ref_size.substr(x + 1));
      }
      if (reps > 0) cfg.repetitions = reps;
      if (budget > 0) cfg.trainer.n_tot_max = budget;
      if (setting > 0) cfg.setting = setting;
      if (*seed_opt) cfg.seed = seed;
      if (g_ratio >= 0.0) cfg.trainer.g_ratio = g_ratio;
      if (!out.empty()) cfg.out = out;
      if (!pool_cache.empty()) cfg.pool_cache = pool_cache;
      if (jobs > 0) cfg.jobs = jobs;

      const auto summary = mlio::run_campaign(cfg);
      for (const auto& r : summary.runs) {
        std::cout << r.name << ' ';
        if (r.ok) std::cout << "n_tot=" << r.n_tot << " IA=" << r.final.ia << " SO=" << r.final.so << '\n';
        else std::cout << "FAILED: " << r.error << '\n';
      }
      std::cout << "results in " << cfg.out.string() << '\n';
      return summary.failures() ? 2 : 0;
    }
    if (*pool) {
      const auto prob = mlio::make_problem(mlio::function_id_from_string(fn), dim, pool_seed);
      const auto p = mlio::build_reference_pool(prob, n_u, n_p, pool_seed);
      mlio::write_reference_pool(p, stem);
      std::cout << "wrote " << stem << ".csv and " << stem << ".json\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
