#pragma once

// Scenario configuration: a JSON document describing the model, the
// covariance, the kernel and all solver settings. Unknown keys are rejected.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twocurve/design.hpp"
#include "twocurve/error.hpp"
#include "twocurve/kernel.hpp"
#include "twocurve/model.hpp"
#include "twocurve/simulate.hpp"

namespace twocurve {

using json = nlohmann::json;

struct BasisSpec {
  std::string name;                ///< catalog name, or the group label for explicit terms
  std::vector<std::string> terms;  ///< empty for catalog entries

  CurveBasis build() const { return terms.empty() ? catalog::by_name(name) : CurveBasis::parse(name, terms); }
};

struct ModelSpec {
  Structure structure = Structure::separate;
  BasisSpec group1, group2, shared;
  BasisSpec row1, row2;
};

struct KernelSpec {
  std::string type = "brownian";  ///< brownian | scaled_brownian | ornstein_uhlenbeck | triangular
  double parameter = 1.0;         ///< c or lambda
  std::string u, v;               ///< triangular terms
};

struct ReferenceValues {
  std::optional<double> uniform_phi_inf;
  std::optional<double> optimal_phi_inf;
  std::optional<std::vector<double>> optimal_design;
};

struct ScenarioConfig {
  std::string name = "scenario";
  Interval interval{1.0, 10.0};
  ModelSpec model;
  double sigma1 = 1.0, sigma2 = 1.0, rho = 0.0;
  KernelSpec kernel;
  std::size_t n = 4;
  CriterionConfig criterion;
  PsoConfig pso;
  bool pso_seed_set = false;
  std::uint64_t seed = 20200101;
  std::optional<std::vector<double>> theta;
  double alpha = 0.05;
  std::optional<std::vector<double>> design;
  BandStudyConfig bands;
  ReferenceValues reference;

  GroupCovariance covariance() const { return GroupCovariance(sigma1, sigma2, rho); }
  CompositeModel build_model() const;
  std::optional<TriangularKernel> build_kernel() const;
  ComparisonProblem problem() const { return ComparisonProblem(build_model(), covariance(), build_kernel()); }
  Vec theta_or_ones(std::size_t p) const;
  void set_seed(std::uint64_t s);
  json to_json() const;
};

namespace detail {

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw config_error(where + ": expected an object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw config_error(where + "." + key + ": unknown key (allowed: " + list + ")");
    }
}

inline double get_number(const json& j, const std::string& where) {
  if (!j.is_number()) throw config_error(where + ": expected a number");
  return j.get<double>();
}

inline std::size_t get_count(const json& j, const std::string& where) {
  if (!j.is_number_integer() || j.get<long long>() < 0) throw config_error(where + ": expected a nonnegative integer");
  return j.get<std::size_t>();
}

inline std::uint64_t get_seed(const json& j, const std::string& where) {
  if (!j.is_number_integer() || j.get<long long>() < 0) throw config_error(where + ": expected a nonnegative integer");
  return j.get<std::uint64_t>();
}

inline std::vector<double> get_numbers(const json& j, const std::string& where) {
  if (!j.is_array()) throw config_error(where + ": expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_number(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

inline BasisSpec get_basis(const json& j, const std::string& where, const std::string& label) {
  BasisSpec spec;
  if (j.is_string()) {
    spec.name = j.get<std::string>();
    try {
      catalog::by_name(spec.name);
    } catch (const config_error& e) {
      throw config_error(where + ": " + e.what());
    }
    return spec;
  }
  if (!j.is_array()) throw config_error(where + ": expected a catalog name or an array of basis terms");
  spec.name = label;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_string()) throw config_error(where + "[" + std::to_string(i) + "]: expected a string");
    spec.terms.push_back(j[i].get<std::string>());
  }
  try {
    spec.build();
  } catch (const config_error& e) {
    throw config_error(where + ": " + e.what());
  }
  return spec;
}

inline json basis_json(const BasisSpec& b) {
  if (b.terms.empty()) return b.name.empty() ? json::array() : json(b.name);
  return json(b.terms);
}

}  // namespace detail

inline ScenarioConfig parse_scenario(const json& j) {
  using namespace detail;
  reject_unknown(j, {"name", "interval", "model", "sigma", "kernel", "n", "criterion", "pso", "seed", "theta", "alpha",
                     "design", "bands", "reference"},
                 "config");
  ScenarioConfig c;
  if (j.contains("name")) {
    if (!j["name"].is_string()) throw config_error("config.name: expected a string");
    c.name = j["name"].get<std::string>();
  }
  if (j.contains("interval")) {
    const auto iv = get_numbers(j["interval"], "config.interval");
    if (iv.size() != 2) throw config_error("config.interval: expected [a, b]");
    c.interval = Interval{iv[0], iv[1]};
    try {
      validate_interval(c.interval);
    } catch (const config_error& e) {
      throw config_error(std::string("config.interval: ") + e.what());
    }
  }

  if (!j.contains("model")) throw config_error("config.model: required");
  {
    const json& m = j["model"];
    reject_unknown(m, {"structure", "group1", "group2", "shared", "rows"}, "config.model");
    std::string s = "separate";
    if (m.contains("structure")) {
      if (!m["structure"].is_string()) throw config_error("config.model.structure: expected a string");
      s = m["structure"].get<std::string>();
    }
    if (s == "separate" || s == "shared") {
      c.model.structure = s == "separate" ? Structure::separate : Structure::shared;
      if (!m.contains("group1") || !m.contains("group2"))
        throw config_error("config.model: group1 and group2 are required for structure '" + s + "'");
      if (m.contains("rows")) throw config_error("config.model.rows: only valid for structure 'general'");
      c.model.group1 = get_basis(m["group1"], "config.model.group1", "group1");
      c.model.group2 = get_basis(m["group2"], "config.model.group2", "group2");
      if (s == "shared") {
        if (!m.contains("shared")) throw config_error("config.model.shared: required for structure 'shared'");
        c.model.shared = get_basis(m["shared"], "config.model.shared", "shared");
      } else if (m.contains("shared")) {
        throw config_error("config.model.shared: only valid for structure 'shared'");
      }
    } else if (s == "general") {
      c.model.structure = Structure::general;
      if (!m.contains("rows") || !m["rows"].is_array() || m["rows"].size() != 2)
        throw config_error("config.model.rows: expected two arrays of functions");
      c.model.row1 = get_basis(m["rows"][0], "config.model.rows[0]", "row1");
      c.model.row2 = get_basis(m["rows"][1], "config.model.rows[1]", "row2");
    } else {
      throw config_error("config.model.structure: expected separate, shared or general (got '" + s + "')");
    }
  }

  if (j.contains("sigma")) {
    const json& s = j["sigma"];
    reject_unknown(s, {"sigma1", "sigma2", "rho"}, "config.sigma");
    if (s.contains("sigma1")) c.sigma1 = get_number(s["sigma1"], "config.sigma.sigma1");
    if (s.contains("sigma2")) c.sigma2 = get_number(s["sigma2"], "config.sigma.sigma2");
    if (s.contains("rho")) c.rho = get_number(s["rho"], "config.sigma.rho");
    try {
      c.covariance();
    } catch (const config_error& e) {
      throw config_error(std::string("config.sigma: ") + e.what());
    }
  }

  if (j.contains("kernel")) {
    const json& k = j["kernel"];
    if (k.is_string()) {
      if (k.get<std::string>() != "brownian")
        throw config_error("config.kernel: expected \"brownian\" or an object naming a kernel");
    } else {
      reject_unknown(k, {"scaled_brownian", "ornstein_uhlenbeck", "triangular"}, "config.kernel");
      if (k.size() != 1) throw config_error("config.kernel: name exactly one kernel");
      const auto& [type, body] = *k.items().begin();
      c.kernel.type = type;
      const std::string where = "config.kernel." + type;
      if (type == "scaled_brownian") {
        reject_unknown(body, {"c"}, where);
        if (!body.contains("c")) throw config_error(where + ".c: required");
        c.kernel.parameter = get_number(body["c"], where + ".c");
      } else if (type == "ornstein_uhlenbeck") {
        reject_unknown(body, {"lambda"}, where);
        if (!body.contains("lambda")) throw config_error(where + ".lambda: required");
        c.kernel.parameter = get_number(body["lambda"], where + ".lambda");
      } else {
        reject_unknown(body, {"u", "v"}, where);
        if (!body.contains("u") || !body.contains("v") || !body["u"].is_string() || !body["v"].is_string())
          throw config_error(where + ": u and v must be basis-term strings");
        c.kernel.u = body["u"].get<std::string>();
        c.kernel.v = body["v"].get<std::string>();
      }
      try {
        c.build_kernel();
      } catch (const config_error& e) {
        throw config_error(where + ": " + e.what());
      }
    }
  }

  if (j.contains("n")) {
    c.n = get_count(j["n"], "config.n");
    if (c.n < 2) throw config_error("config.n: must be at least 2");
  }

  if (j.contains("criterion")) {
    const json& cr = j["criterion"];
    reject_unknown(cr, {"p", "grid_size", "refine"}, "config.criterion");
    if (cr.contains("p")) {
      if (cr["p"].is_string()) {
        if (cr["p"].get<std::string>() != "inf") throw config_error("config.criterion.p: expected a number or \"inf\"");
        c.criterion.p_norm = std::numeric_limits<double>::infinity();
      } else {
        c.criterion.p_norm = get_number(cr["p"], "config.criterion.p");
      }
    }
    if (cr.contains("grid_size")) c.criterion.grid_size = get_count(cr["grid_size"], "config.criterion.grid_size");
    if (cr.contains("refine")) {
      if (!cr["refine"].is_boolean()) throw config_error("config.criterion.refine: expected true or false");
      c.criterion.refine = cr["refine"].get<bool>();
    }
    try {
      c.criterion.validate();
    } catch (const config_error& e) {
      throw config_error(std::string("config.") + e.what());
    }
  }

  if (j.contains("seed")) c.seed = get_seed(j["seed"], "config.seed");
  c.pso.seed = c.seed;
  if (j.contains("pso")) {
    const json& p = j["pso"];
    reject_unknown(p, {"swarm", "iters", "inertia", "c1", "c2", "seed", "restarts"}, "config.pso");
    if (p.contains("swarm")) c.pso.swarm = get_count(p["swarm"], "config.pso.swarm");
    if (p.contains("iters")) c.pso.iters = get_count(p["iters"], "config.pso.iters");
    if (p.contains("inertia")) c.pso.inertia = get_number(p["inertia"], "config.pso.inertia");
    if (p.contains("c1")) c.pso.c1 = get_number(p["c1"], "config.pso.c1");
    if (p.contains("c2")) c.pso.c2 = get_number(p["c2"], "config.pso.c2");
    if (p.contains("restarts")) c.pso.restarts = get_count(p["restarts"], "config.pso.restarts");
    if (p.contains("seed")) {
      c.pso.seed = get_seed(p["seed"], "config.pso.seed");
      c.pso_seed_set = true;
    }
    try {
      c.pso.validate();
    } catch (const config_error& e) {
      throw config_error(std::string("config.") + e.what());
    }
  }

  if (j.contains("theta")) c.theta = get_numbers(j["theta"], "config.theta");
  if (j.contains("alpha")) {
    c.alpha = get_number(j["alpha"], "config.alpha");
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw config_error("config.alpha: must lie in (0, 1)");
  }
  c.bands.alpha = c.alpha;
  if (j.contains("design")) {
    c.design = get_numbers(j["design"], "config.design");
    try {
      Design d(*c.design);
      const double tol = 1e-9 * std::max(1.0, std::abs(c.interval.b));
      if (std::abs(d.front() - c.interval.a) > tol || std::abs(d.back() - c.interval.b) > tol)
        throw config_error("design must start at a and end at b");
    } catch (const config_error& e) {
      throw config_error(std::string("config.design: ") + e.what());
    }
  }
  if (j.contains("bands")) {
    const json& b = j["bands"];
    reject_unknown(b, {"runs", "grid", "mc_draws"}, "config.bands");
    if (b.contains("runs")) c.bands.runs = get_count(b["runs"], "config.bands.runs");
    if (b.contains("grid")) c.bands.grid = get_count(b["grid"], "config.bands.grid");
    if (b.contains("mc_draws")) c.bands.mc_draws = get_count(b["mc_draws"], "config.bands.mc_draws");
    if (c.bands.runs < 1) throw config_error("config.bands.runs: must be at least 1");
    if (c.bands.grid < 2) throw config_error("config.bands.grid: must be at least 2");
    if (c.bands.mc_draws < 1000) throw config_error("config.bands.mc_draws: must be at least 1000");
  }
  c.bands.seed = c.seed;
  if (j.contains("reference")) {
    const json& r = j["reference"];
    reject_unknown(r, {"uniform_phi_inf", "optimal_phi_inf", "optimal_design"}, "config.reference");
    if (r.contains("uniform_phi_inf"))
      c.reference.uniform_phi_inf = get_number(r["uniform_phi_inf"], "config.reference.uniform_phi_inf");
    if (r.contains("optimal_phi_inf"))
      c.reference.optimal_phi_inf = get_number(r["optimal_phi_inf"], "config.reference.optimal_phi_inf");
    if (r.contains("optimal_design"))
      c.reference.optimal_design = get_numbers(r["optimal_design"], "config.reference.optimal_design");
  }

  try {
    const CompositeModel model = c.build_model();
    if (c.theta && c.theta->size() != model.p())
      throw config_error("config.theta: has " + std::to_string(c.theta->size()) + " entries, model has p = " +
                         std::to_string(model.p()));
  } catch (const config_error& e) {
    const std::string msg = e.what();
    throw config_error(msg.rfind("config.", 0) == 0 ? msg : "config.model: " + msg);
  }
  return c;
}

inline ScenarioConfig parse_scenario_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  return parse_scenario(j);
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_scenario_text(ss.str());
  } catch (const config_error& e) {
    throw config_error(path + ": " + e.what());
  }
}

inline CompositeModel ScenarioConfig::build_model() const {
  switch (model.structure) {
    case Structure::separate:
      return build_separate(model.group1.build(), model.group2.build(), interval);
    case Structure::shared:
      return build_shared(model.shared.build(), model.group1.build(), model.group2.build(), interval);
    case Structure::general:
      break;
  }
  return build_general(model.row1.build(), model.row2.build(), interval);
}

inline std::optional<TriangularKernel> ScenarioConfig::build_kernel() const {
  if (kernel.type == "brownian") return std::nullopt;
  if (kernel.type == "scaled_brownian") return TriangularKernel::scaled_brownian(kernel.parameter);
  if (kernel.type == "ornstein_uhlenbeck") return TriangularKernel::ornstein_uhlenbeck(kernel.parameter);
  return TriangularKernel::from_terms(BasisTerm::parse(kernel.u), BasisTerm::parse(kernel.v));
}

inline Vec ScenarioConfig::theta_or_ones(std::size_t p) const {
  if (!theta) return Vec::Ones(static_cast<Eigen::Index>(p));
  return Eigen::Map<const Vec>(theta->data(), static_cast<Eigen::Index>(theta->size()));
}

inline void ScenarioConfig::set_seed(std::uint64_t s) {
  seed = s;
  pso.seed = s;
  pso_seed_set = false;
  bands.seed = s;
}

/// Normalized form with every default filled in.
inline json ScenarioConfig::to_json() const {
  json j;
  j["name"] = name;
  j["interval"] = {interval.a, interval.b};
  json m;
  switch (model.structure) {
    case Structure::separate:
      m["structure"] = "separate";
      break;
    case Structure::shared:
      m["structure"] = "shared";
      m["shared"] = detail::basis_json(model.shared);
      break;
    case Structure::general:
      m["structure"] = "general";
      m["rows"] = {detail::basis_json(model.row1), detail::basis_json(model.row2)};
      break;
  }
  if (model.structure != Structure::general) {
    m["group1"] = detail::basis_json(model.group1);
    m["group2"] = detail::basis_json(model.group2);
  }
  j["model"] = m;
  j["sigma"] = {{"sigma1", sigma1}, {"sigma2", sigma2}, {"rho", rho}};
  if (kernel.type == "brownian")
    j["kernel"] = "brownian";
  else if (kernel.type == "scaled_brownian")
    j["kernel"] = {{"scaled_brownian", {{"c", kernel.parameter}}}};
  else if (kernel.type == "ornstein_uhlenbeck")
    j["kernel"] = {{"ornstein_uhlenbeck", {{"lambda", kernel.parameter}}}};
  else
    j["kernel"] = {{"triangular", {{"u", kernel.u}, {"v", kernel.v}}}};
  j["n"] = n;
  j["criterion"] = {{"p", std::isfinite(criterion.p_norm) ? json(criterion.p_norm) : json("inf")},
                    {"grid_size", criterion.grid_size},
                    {"refine", criterion.refine}};
  j["pso"] = {{"swarm", pso.swarm}, {"iters", pso.iters},       {"inertia", pso.inertia}, {"c1", pso.c1},
              {"c2", pso.c2},       {"restarts", pso.restarts}, {"seed", pso.seed}};
  j["seed"] = seed;
  if (theta) j["theta"] = *theta;
  j["alpha"] = alpha;
  if (design) j["design"] = *design;
  j["bands"] = {{"runs", bands.runs}, {"grid", bands.grid}, {"mc_draws", bands.mc_draws}};
  json r = json::object();
  if (reference.uniform_phi_inf) r["uniform_phi_inf"] = *reference.uniform_phi_inf;
  if (reference.optimal_phi_inf) r["optimal_phi_inf"] = *reference.optimal_phi_inf;
  if (reference.optimal_design) r["optimal_design"] = *reference.optimal_design;
  if (!r.empty()) j["reference"] = r;
  return j;
}

}  // namespace twocurve
