#pragma once

// Scenario orchestration behind the command-line tool.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twocurve/blue.hpp"
#include "twocurve/config.hpp"
#include "twocurve/design.hpp"
#include "twocurve/discrete.hpp"
#include "twocurve/io.hpp"
#include "twocurve/simulate.hpp"

namespace twocurve {

enum class OutputFormat { csv, json };

struct RunOptions {
  std::string out_dir = ".";
  OutputFormat format = OutputFormat::csv;
  std::size_t threads = 1;
  std::optional<std::uint64_t> seed;
  std::ostream* log = nullptr;
};

struct RunReport {
  std::vector<std::string> files;
  bool all_pass = true;
};

inline constexpr const char* kCriticalValueNote =
    "parametric Gaussian simulation from the closed-form estimator covariance";

namespace detail {

inline void apply_overrides(ScenarioConfig& cfg, const RunOptions& opt) {
  if (opt.seed) cfg.set_seed(*opt.seed);
  cfg.bands.threads = opt.threads;
}

inline std::string output_path(const RunOptions& opt, const std::string& file) {
  std::filesystem::create_directories(opt.out_dir);
  return (std::filesystem::path(opt.out_dir) / file).string();
}

inline std::vector<std::string> numbers(const std::vector<double>& v) {
  std::vector<std::string> out;
  for (double x : v) out.push_back(format_number(x));
  return out;
}

inline std::vector<std::string> point_columns(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i <= n; ++i) out.push_back("t" + std::to_string(i));
  return out;
}

inline nlohmann::json estimator_json(const DiscreteEstimator& est) {
  nlohmann::json w = nlohmann::json::array();
  for (const auto& phi : est.weights.phis) w.push_back(matrix_json(phi));
  return {{"design", est.design.points()},
          {"weights", w},
          {"weights_pseudoinverse", est.weights.pseudoinverse},
          {"estimator_cov", matrix_json(est.cov)}};
}

inline Design chosen_or_uniform(const ScenarioConfig& cfg) {
  if (cfg.design) return Design(*cfg.design);
  return uniform_design(cfg.interval.a, cfg.interval.b, cfg.n);
}

inline void say(const RunOptions& opt, const std::string& line) {
  if (opt.log) *opt.log << line << "\n";
}

}  // namespace detail

/// Optimizes the design and writes it with the uniform-design comparison,
/// weights and covariance matrices.
inline RunReport run_optimize(ScenarioConfig cfg, const RunOptions& opt) {
  detail::apply_overrides(cfg, opt);
  const ComparisonProblem problem = cfg.problem();
  const CriterionEvaluator eval(problem, cfg.criterion);
  const OptimizationResult best = optimize_design(eval, cfg.n, cfg.pso, opt.threads);
  const Design uniform = uniform_design(cfg.interval.a, cfg.interval.b, cfg.n);
  const double uniform_phi = eval.phi(uniform);
  const DiscreteEstimator est_opt = problem.estimator(best.design);
  const DiscreteEstimator est_uni = problem.estimator(uniform);

  nlohmann::json gap = nlohmann::json::object();
  if (problem.model().structure() != Structure::general) {
    for (int g : {1, 2}) {
      const Mat lg = loewner_gap(problem.brownian_model(), problem.covariance(), g);
      gap["group" + std::to_string(g)] = {{"frobenius", lg.norm()}, {"min_eigenvalue", min_eigenvalue(lg)}};
    }
  }

  const Metadata meta = base_metadata(cfg.seed, cfg.to_json());
  RunReport report;
  const std::string criterion_name = std::isfinite(cfg.criterion.p_norm) ? "phi_p" : "phi_inf";
  nlohmann::json body = {{"scenario", cfg.name},
                         {"rho", cfg.rho},
                         {"criterion", criterion_name},
                         {"optimal", detail::estimator_json(est_opt)},
                         {"optimal_value", best.value},
                         {"restart_values", best.restart_values},
                         {"evaluations", best.evaluations},
                         {"uniform", detail::estimator_json(est_uni)},
                         {"uniform_value", uniform_phi},
                         {"blue_cov", matrix_json(problem.blue_covariance())},
                         {"loewner_gap", gap}};
  if (opt.format == OutputFormat::json) {
    const std::string path = detail::output_path(opt, "optimize.json");
    write_file(path, with_metadata(meta, body).dump(2) + "\n");
    report.files.push_back(path);
  } else {
    Table t;
    t.metadata = meta;
    t.header = {"scenario", "rho"};
    for (auto& c : detail::point_columns(cfg.n)) t.header.push_back(c);
    t.header.push_back(criterion_name);
    t.header.push_back("uniform_" + criterion_name);
    std::vector<std::string> row{cfg.name, format_number(cfg.rho)};
    for (auto& x : detail::numbers(best.design.points())) row.push_back(x);
    row.push_back(format_number(best.value));
    row.push_back(format_number(uniform_phi));
    t.add_row(row);
    const std::string path = detail::output_path(opt, "optimize.csv");
    write_file(path, to_csv(t));
    const std::string mpath = detail::output_path(opt, "optimize_matrices.json");
    write_file(mpath, with_metadata(meta, body).dump(2) + "\n");
    report.files = {path, mpath};
  }
  std::string pts;
  for (double x : best.design.points()) pts += (pts.empty() ? "" : ", ") + format_number(x);
  detail::say(opt, cfg.name + ": design (" + pts + "), " + criterion_name + " = " + format_number(best.value) +
                       ", uniform = " + format_number(uniform_phi));
  return report;
}

/// Criterion, estimator covariance and weights for the configured design
/// (uniform when none is given).
inline RunReport run_evaluate(ScenarioConfig cfg, const RunOptions& opt) {
  detail::apply_overrides(cfg, opt);
  const ComparisonProblem problem = cfg.problem();
  const CriterionEvaluator eval(problem, cfg.criterion);
  const Design design = detail::chosen_or_uniform(cfg);
  require_pinned(design, problem.model());
  const DiscreteEstimator est = problem.estimator(design);
  const double value = eval.phi_from_cov(est.cov);
  const std::string criterion_name = std::isfinite(cfg.criterion.p_norm) ? "phi_p" : "phi_inf";
  const Metadata meta = base_metadata(cfg.seed, cfg.to_json());
  RunReport report;
  if (opt.format == OutputFormat::json) {
    nlohmann::json body = {{"scenario", cfg.name},
                           {"rho", cfg.rho},
                           {"criterion", criterion_name},
                           {"value", value},
                           {"estimator", detail::estimator_json(est)},
                           {"blue_cov", matrix_json(problem.blue_covariance())},
                           {"unbiasedness_residual",
                            unbiasedness_residual(problem.brownian_model(), problem.covariance(), est.design,
                                                  est.weights, est.info)}};
    const std::string path = detail::output_path(opt, "evaluate.json");
    write_file(path, with_metadata(meta, body).dump(2) + "\n");
    report.files.push_back(path);
  } else {
    Table t;
    t.metadata = meta;
    t.header = {"scenario", "rho"};
    for (auto& c : detail::point_columns(design.size())) t.header.push_back(c);
    t.header.push_back(criterion_name);
    std::vector<std::string> row{cfg.name, format_number(cfg.rho)};
    for (auto& x : detail::numbers(design.points())) row.push_back(x);
    row.push_back(format_number(value));
    t.add_row(row);
    const std::string path = detail::output_path(opt, "evaluate.csv");
    write_file(path, to_csv(t));
    report.files.push_back(path);
  }
  detail::say(opt, cfg.name + ": " + criterion_name + " = " + format_number(value));
  return report;
}

/// Averaged confidence bands under the optimal and the uniform design.
inline RunReport run_bands(ScenarioConfig cfg, const RunOptions& opt) {
  detail::apply_overrides(cfg, opt);
  const ComparisonProblem problem = cfg.problem();
  const Vec theta = cfg.theta_or_ones(problem.model().p());
  Design optimal = cfg.design ? Design(*cfg.design) : Design({cfg.interval.a, cfg.interval.b});
  if (!cfg.design) {
    const CriterionEvaluator eval(problem, cfg.criterion);
    optimal = optimize_design(eval, cfg.n, cfg.pso, opt.threads).design;
  }
  const Design uniform = uniform_design(cfg.interval.a, cfg.interval.b, optimal.size());

  RunReport report;
  nlohmann::json combined = nlohmann::json::object();
  for (const auto& [label, design] : {std::pair<std::string, Design>{"optimal", optimal}, {"uniform", uniform}}) {
    const BandStudy s = band_study(problem, design, theta, cfg.bands);
    Metadata meta = base_metadata(cfg.seed, cfg.to_json());
    meta.emplace_back("design_label", label);
    std::string pts;
    for (double x : design.points()) pts += (pts.empty() ? "" : " ") + format_number(x);
    meta.emplace_back("design", pts);
    meta.emplace_back("D", format_number(s.D));
    meta.emplace_back("alpha", format_number(cfg.bands.alpha));
    meta.emplace_back("runs", std::to_string(s.runs));
    meta.emplace_back("mean_max_width", format_number(s.mean_max_width));
    meta.emplace_back("critical_value_method", kCriticalValueNote);
    if (opt.format == OutputFormat::json) {
      combined[label] = {{"design", design.points()},
                         {"D", s.D},
                         {"mean_max_width", s.mean_max_width},
                         {"t", s.grid},
                         {"truth", s.truth},
                         {"h", s.h},
                         {"estimate", s.mean_estimate},
                         {"lower", s.mean_lower},
                         {"upper", s.mean_upper}};
    } else {
      Table t;
      t.metadata = meta;
      t.header = {"t", "truth", "h", "estimate", "lower", "upper"};
      for (std::size_t k = 0; k < s.grid.size(); ++k)
        t.add_row({format_number(s.grid[k]), format_number(s.truth[k]), format_number(s.h[k]),
                   format_number(s.mean_estimate[k]), format_number(s.mean_lower[k]),
                   format_number(s.mean_upper[k])});
      const std::string path = detail::output_path(opt, "bands_" + label + ".csv");
      write_file(path, to_csv(t));
      report.files.push_back(path);
    }
    detail::say(opt, cfg.name + " " + label + ": D = " + format_number(s.D) +
                         ", mean max width = " + format_number(s.mean_max_width));
  }
  if (opt.format == OutputFormat::json) {
    Metadata meta = base_metadata(cfg.seed, cfg.to_json());
    meta.emplace_back("alpha", format_number(cfg.bands.alpha));
    meta.emplace_back("critical_value_method", kCriticalValueNote);
    const std::string path = detail::output_path(opt, "bands.json");
    write_file(path, with_metadata(meta, combined).dump(2) + "\n");
    report.files.push_back(path);
  }
  return report;
}

inline constexpr double kUniformTolerance = 0.01;
inline constexpr double kOptimalFactor = 1.05;
inline constexpr double kPointTolerance = 0.15;

/// Runs every scenario file in `config_dir` and compares with its reference values.
inline RunReport run_reproduce_tables(const std::string& config_dir, const RunOptions& opt) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(config_dir)) throw config_error("config directory '" + config_dir + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(config_dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw config_error("config directory '" + config_dir + "' contains no scenario files");

  Table t;
  nlohmann::json configs = nlohmann::json::array();
  t.header = {"scenario",        "rho",        "uniform_reference", "uniform_computed", "uniform_rel_dev",
              "uniform_pass",    "optimal_reference", "optimal_computed", "optimal_ratio", "optimal_pass",
              "design",          "reference_design",  "max_point_dev",    "points_within_tol"};
  RunReport report;
  std::uint64_t seed = 0;
  for (const auto& f : files) {
    ScenarioConfig cfg = load_scenario(f.string());
    detail::apply_overrides(cfg, opt);
    seed = cfg.seed;
    configs.push_back(cfg.to_json());
    if (!cfg.reference.uniform_phi_inf || !cfg.reference.optimal_phi_inf)
      throw config_error(f.string() + ": config.reference needs uniform_phi_inf and optimal_phi_inf");
    const CriterionEvaluator eval(cfg.problem(), cfg.criterion);
    const double uni = eval.phi(uniform_design(cfg.interval.a, cfg.interval.b, cfg.n));
    const OptimizationResult best = optimize_design(eval, cfg.n, cfg.pso, opt.threads);
    const double uref = *cfg.reference.uniform_phi_inf, oref = *cfg.reference.optimal_phi_inf;
    const double rel = std::abs(uni - uref) / uref, ratio = best.value / oref;
    const bool upass = rel <= kUniformTolerance, opass = ratio <= kOptimalFactor;
    report.all_pass = report.all_pass && upass && opass;
    std::string pts, refpts, dev = "", within = "";
    for (double x : best.design.points()) pts += (pts.empty() ? "" : " ") + format_number(x);
    if (cfg.reference.optimal_design && cfg.reference.optimal_design->size() == best.design.size()) {
      double d = 0.0;
      for (std::size_t i = 0; i < best.design.size(); ++i) {
        refpts += (i ? " " : "") + format_number((*cfg.reference.optimal_design)[i]);
        d = std::max(d, std::abs(best.design[i] - (*cfg.reference.optimal_design)[i]));
      }
      dev = format_number(d);
      within = d <= kPointTolerance ? "yes" : "no";
    }
    t.add_row({cfg.name, format_number(cfg.rho), format_number(uref), format_number(uni), format_number(rel),
               upass ? "pass" : "fail", format_number(oref), format_number(best.value), format_number(ratio),
               opass ? "pass" : "fail", pts, refpts, dev, within});
    detail::say(opt, cfg.name + ": uniform " + format_number(uni) + " (ref " + format_number(uref) + ", " +
                         (upass ? "pass" : "fail") + "), optimal " + format_number(best.value) + " (ref " +
                         format_number(oref) + ", " + (opass ? "pass" : "fail") + ")");
  }
  t.metadata = base_metadata(seed, configs);
  t.metadata.emplace_back("uniform_tolerance", format_number(kUniformTolerance));
  t.metadata.emplace_back("optimal_factor", format_number(kOptimalFactor));
  t.metadata.emplace_back("point_tolerance", format_number(kPointTolerance) + " (informational)");
  if (opt.format == OutputFormat::json) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows) {
      nlohmann::json o;
      for (std::size_t i = 0; i < t.header.size(); ++i) o[t.header[i]] = r[i];
      rows.push_back(o);
    }
    const std::string path = detail::output_path(opt, "tables.json");
    write_file(path, with_metadata(t.metadata, {{"scenarios", rows}}).dump(2) + "\n");
    report.files.push_back(path);
  } else {
    const std::string path = detail::output_path(opt, "tables.csv");
    write_file(path, to_csv(t));
    report.files.push_back(path);
  }
  return report;
}

}  // namespace twocurve
