#include <fstream>

#include "mlio/decomposed.hpp"
#include "mlio/errors.hpp"

namespace mlio {

namespace {

constexpr const char* kFormat = "mlio-surrogate";
constexpr int kVersion = 1;

using nlohmann::json;

json fit_to_json(const VariogramFit& f) {
  return {{"kind", std::string(to_string(f.kind))}, {"range", f.range}, {"sill", f.sill},
          {"nugget", f.nugget}, {"scale", f.scale}, {"sse", f.sse}, {"fallback", f.fallback}};
}

VariogramFit fit_from_json(const json& j) {
  VariogramFit f;
  f.kind = variogram_kind_from_string(j.at("kind").get<std::string>());
  f.range = j.at("range").get<double>();
  f.sill = j.at("sill").get<double>();
  f.nugget = j.at("nugget").get<double>();
  f.scale = j.at("scale").get<double>();
  f.sse = j.value("sse", 0.0);
  f.fallback = j.value("fallback", false);
  return f;
}

json warm_to_json(const VariogramWarmStart& w) {
  json out = json::array();
  for (const auto& f : w) out.push_back(f ? fit_to_json(*f) : json(nullptr));
  return out;
}

VariogramWarmStart warm_from_json(const json& j) {
  VariogramWarmStart w;
  for (std::size_t k = 0; k < w.size() && k < j.size(); ++k)
    if (!j[k].is_null()) w[k] = fit_from_json(j[k]);
  return w;
}

json model_to_json(const SubModel& m) {
  if (!m.trained) return nullptr;
  return {{"fit", fit_to_json(m.fit)}, {"warm_start", warm_to_json(m.warm)},
          {"nugget_guard", m.system.nugget_guard()}};
}

bool model_from_json(const json& j, SubModel& m) {
  if (j.is_null()) return false;
  m.fit = fit_from_json(j.at("fit"));
  m.warm = warm_from_json(j.at("warm_start"));
  return true;
}

std::vector<double> to_vec(const Eigen::VectorXd& x) { return {x.data(), x.data() + x.size()}; }

Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Variant variant_from_string(const std::string& s) {
  if (s == "delta") return Variant::delta;
  if (s == "direct") return Variant::direct;
  throw FormatError("unknown variant '" + s + "'");
}

}  // namespace

json DecomposedSurrogate::to_json() const {
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["dim"] = dim();
  j["reference"] = {{"x", to_vec(x_ref_)}, {"z", z_ref_}};
  j["options"] = {{"n_windows", opts_.n_windows}};
  json samples = json::array();
  for (const Sample& s : samples_)
    samples.push_back({{"x", to_vec(s.x)}, {"z", s.z}, {"layer", int(s.layer)}, {"axis", s.axis},
                       {"validation", s.validation}});
  j["samples"] = std::move(samples);

  json sep = json::array();
  for (int d = 1; d < dim(); ++d) sep.push_back({model_to_json(sep_[d][0]), model_to_json(sep_[d][1])});
  j["models"] = {{"symmetric", model_to_json(sym_)},
                 {"separable", std::move(sep)},
                 {"free", {model_to_json(free_[0]), model_to_json(free_[1])}}};
  j["active"] = {{"separable", std::string(to_string(sep_active_))},
                 {"free", std::string(to_string(free_active_))}};
  auto err = [](const std::array<double, 2>& e) {
    json out = json::array();
    for (double v : e) out.push_back(std::isfinite(v) ? json(v) : json(nullptr));
    return out;
  };
  j["validation_errors"] = {{"symmetric", err(sym_error_)}, {"separable", err(sep_error_)},
                            {"free", err(free_error_)}};
  return j;
}

DecomposedSurrogate DecomposedSurrogate::from_json(const json& j,
                                                   std::shared_ptr<const CandidateSet> candidates) {
  try {
    if (j.at("format").get<std::string>() != kFormat) throw FormatError("not a surrogate file");
    if (j.at("version").get<int>() != kVersion) throw FormatError("unsupported surrogate version");
    SurrogateOptions opts;
    opts.n_windows = j.at("options").at("n_windows").get<int>();
    DecomposedSurrogate s(from_vec(j.at("reference").at("x").get<std::vector<double>>()),
                          j.at("reference").at("z").get<double>(), opts);
    if (s.dim() != j.at("dim").get<int>()) throw FormatError("reference and dim disagree");
    for (const json& e : j.at("samples")) {
      Sample smp;
      smp.x = from_vec(e.at("x").get<std::vector<double>>());
      smp.z = e.at("z").get<double>();
      smp.layer = static_cast<Layer>(e.at("layer").get<int>());
      smp.axis = e.at("axis").get<int>();
      smp.validation = e.at("validation").get<bool>();
      s.add_sample(std::move(smp));
    }
    if (candidates) s.attach_candidates(std::move(candidates));

    const json& models = j.at("models");
    if (model_from_json(models.at("symmetric"), s.sym_)) s.train_symmetric(false);
    const json& sep = models.at("separable");
    if (static_cast<int>(sep.size()) != s.dim() - 1) throw FormatError("wrong number of separable models");
    bool sep_ok = true;
    for (int d = 1; d < s.dim(); ++d)
      for (int v = 0; v < 2; ++v) sep_ok = model_from_json(sep[d - 1][v], s.sep_[d][v]) && sep_ok;
    if (sep_ok && s.sym_.trained) s.train_separable(false);
    s.sep_active_ = variant_from_string(j.at("active").at("separable").get<std::string>());
    const json& fr = models.at("free");
    const bool free_ok = model_from_json(fr.at(0), s.free_[0]) && model_from_json(fr.at(1), s.free_[1]);
    if (free_ok && s.trained(Layer::separable)) s.train_free(false);
    s.free_active_ = variant_from_string(j.at("active").at("free").get<std::string>());
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed surrogate: ") + e.what());
  }
}

void save_surrogate(const DecomposedSurrogate& s, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path.string());
  os << s.to_json().dump(1) << '\n';
}

DecomposedSurrogate load_surrogate(const std::filesystem::path& path,
                                   std::shared_ptr<const CandidateSet> candidates) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot read " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed surrogate: ") + e.what());
  }
  return DecomposedSurrogate::from_json(j, std::move(candidates));
}

}  // namespace mlio
