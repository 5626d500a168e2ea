#pragma once

// Command-line front end. run_cli is the whole program; tools/scanvar.cpp
// only forwards argv and the standard streams.
//
// Exit codes: 0 success, 1 validation failure, 2 assertion failure,
// 3 I/O, parse or usage error.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "scanvar/errors.hpp"
#include "scanvar/model_io.hpp"
#include "scanvar/ordering.hpp"
#include "scanvar/simulate.hpp"
#include "scanvar/variance.hpp"

namespace scanvar {

enum exit_code : int { exit_ok = 0, exit_validation = 1, exit_assertion = 2, exit_io = 3 };

namespace cli {

inline const std::vector<double> default_lambdas{0.1, 0.3, 0.5, 0.7, 0.9, 0.99};

struct Options {
  std::string model;
  std::string model_b;
  std::vector<double> lambdas;
  std::string method = "resolvent";
  int series_terms = default_series_terms;
  double tol = tau_num;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> replicas;
  std::string out;
};

class io_failure : public error {
public:
  using error::error;
};

inline Method parse_method(const std::string& s) {
  if (s == "resolvent") return Method::resolvent;
  if (s == "series") return Method::series;
  throw config_error("--method must be resolvent or series, got \"" + s + "\"");
}

inline std::vector<double> lambda_grid(const Options& o, const ModelFile& m) {
  std::vector<double> g = !o.lambdas.empty() ? o.lambdas : !m.lambda_grid.empty() ? m.lambda_grid : default_lambdas;
  for (double l : g)
    if (!(l >= 0.0 && l < 1.0)) throw config_error("--lambda value " + detail::fmt(l) + " outside [0, 1)");
  return g;
}

inline std::string yes_no(bool b) { return b ? "true" : "false"; }

// Lambda column: the literal 1 for limit rows.
inline std::string lambda_cell(double l, Method m) { return m == Method::limit ? "1" : csv_number(l); }

inline void emit(const Options& o, const std::string& csv, std::ostream& out) {
  if (o.out.empty()) {
    out << csv;
    return;
  }
  std::ofstream f(o.out, std::ios::binary | std::ios::trunc);
  if (!f) throw io_failure("cannot open output file " + o.out);
  f << csv;
  if (!f) throw io_failure("failed writing " + o.out);
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw io_failure("cannot open output file " + p.string());
  f << text;
  if (!f) throw io_failure("failed writing " + p.string());
}

inline ModelFile require_model(const std::string& path, const char* flag) {
  if (path.empty()) throw config_error(std::string(flag) + " is required");
  return load_model(path);
}

// ---- validate -------------------------------------------------------------

inline int cmd_validate(const Options& o, std::ostream& out) {
  const ModelFile m = require_model(o.model, "--model");
  const auto& fam = m.family;
  std::vector<Matrix> raw;
  for (const auto& k : fam.kernels()) raw.push_back(k.matrix());
  const auto rep = validate_family(fam.pi().weights(), raw, tau_stoch, tau_rev);
  out << "model " << o.model << ": n=" << fam.n() << " k=" << fam.k() << "\n";
  out << "pi sum deviation " << csv_number(rep.pi_sum_deviation) << ", min pi " << csv_number(rep.min_pi) << "\n";
  for (const auto& d : rep.kernels)
    out << "kernel " << d.index << ": max row-sum deviation " << csv_number(d.max_row_sum_deviation)
        << " (tolerance " << csv_number(tau_stoch) << "), detailed-balance relative residual "
        << csv_number(d.detailed_balance_relative) << " (tolerance " << csv_number(tau_rev) << ")\n";
  const auto summ = summability_check(fam, m.f);
  out << "cycle contraction " << csv_number(summ.cycle_contraction) << ", absolutely summable "
      << yes_no(summ.absolutely_summable) << "\n";
  out << "valid\n";
  return exit_ok;
}

// ---- compare --------------------------------------------------------------

inline std::string compare_csv(const ModelFile& m, std::span<const double> lambdas, Method method, int terms,
                               double tol, std::vector<std::string>& failures) {
  const auto& fam = m.family;
  std::vector<VarianceReport> rows;
  for (double l : lambdas) rows.push_back(variance_report(fam, m.f, l, method, terms));
  if (summability_check(fam, m.f).absolutely_summable) {
    VarianceReport v;
    v.lambda = 1.0;
    v.method = Method::limit;
    v.var_strat = var_limit(fam, m.f, Scheme::strat);
    v.var_rand = var_limit(fam, m.f, Scheme::rand);
    v.gap = v.var_rand - v.var_strat;
    v.gap_lower_bound = fam.k() == 2 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
    rows.push_back(v);
  }
  std::string csv = "lambda,var_strat,var_rand,gap,gap_lower_bound,method\n";
  for (const auto& r : rows) {
    csv += csv_row({lambda_cell(r.lambda, r.method), csv_number(r.var_strat), csv_number(r.var_rand),
                    csv_number(r.gap), csv_number(r.gap_lower_bound), to_string(r.method)});
    if (fam.k() != 2) continue; // the ordering is only asserted for two kernels
    const double t = tol + r.truncation_bound;
    const std::string at = "lambda=" + lambda_cell(r.lambda, r.method);
    if (!(r.gap >= -t))
      failures.push_back("two-kernel ordering var_rand >= var_strat fails at " + at + ": gap " + csv_number(r.gap) +
                         " < -" + csv_number(t));
    if (!std::isnan(r.gap_lower_bound) && !(r.gap >= r.gap_lower_bound - t))
      failures.push_back("gap lower bound fails at " + at + ": gap " + csv_number(r.gap) + " < bound " +
                         csv_number(r.gap_lower_bound) + " - " + csv_number(t));
    if (!std::isnan(r.gap_lower_bound) && !(r.gap_lower_bound >= -1e-12))
      failures.push_back("gap lower bound is negative at " + at + ": " + csv_number(r.gap_lower_bound) +
                         " < -1e-12");
  }
  return csv;
}

inline int report_failures(const std::vector<std::string>& failures, std::ostream& err) {
  for (const auto& f : failures) err << "assertion failed: " << f << "\n";
  return failures.empty() ? exit_ok : exit_assertion;
}

inline int cmd_compare(const Options& o, std::ostream& out, std::ostream& err) {
  const ModelFile m = require_model(o.model, "--model");
  std::vector<std::string> failures;
  const auto grid = lambda_grid(o, m);
  const std::string csv = compare_csv(m, grid, parse_method(o.method), o.series_terms, o.tol, failures);
  emit(o, csv, out);
  return report_failures(failures, err);
}

// ---- peskun ---------------------------------------------------------------

inline int cmd_peskun(const Options& o, std::ostream& out, std::ostream& err) {
  const ModelFile a = require_model(o.model, "--model");
  const ModelFile b = require_model(o.model_b, "--model-b");
  const auto grid = lambda_grid(o, a);
  const Method method = parse_method(o.method);
  const auto rep = check_peskun_theorem(a.family, b.family, a.f, grid, method, o.series_terms);
  std::string csv = "lambda,var_strat_a,var_strat_b,gap,ordering_holds,method\n";
  std::vector<std::string> failures;
  for (const auto& r : rep.rows) {
    const bool holds = r.gap >= -o.tol || r.ordering_holds;
    csv += csv_row({lambda_cell(r.lambda, r.method), csv_number(r.var_strat_a), csv_number(r.var_strat_b),
                    csv_number(r.gap), yes_no(holds), to_string(r.method)});
    if (rep.precondition_met && !holds)
      failures.push_back("Peskun-type ordering var_strat(a) <= var_strat(b) fails at lambda=" +
                         lambda_cell(r.lambda, r.method) + ": gap " + csv_number(r.gap) + " < -" +
                         csv_number(o.tol));
  }
  emit(o, csv, out);
  if (!rep.precondition_met)
    err << "note: model a does not dominate model b (min eigenvalue of the symmetrized kernel difference "
        << csv_number(rep.comparison.min_dirichlet_gap_eigenvalue) << " < -" << csv_number(tau_eig)
        << "); rows are a comparison only\n";
  return report_failures(failures, err);
}

// ---- limit ----------------------------------------------------------------

inline int cmd_limit(const Options& o, std::ostream& out, std::ostream& err) {
  const ModelFile m = require_model(o.model, "--model");
  const auto& fam = m.family;
  const auto summ = summability_check(fam, m.f);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::string csv = "scheme,var_limit,cycle_contraction,absolutely_summable\n";
  double strat = nan;
  if (summ.absolutely_summable)
    strat = var_limit(fam, m.f, Scheme::strat);
  else
    err << "note: cycle contraction " << csv_number(summ.cycle_contraction)
        << " >= 1; the deterministic-scan limit is undefined\n";
  csv += csv_row({"strat", csv_number(strat), csv_number(summ.cycle_contraction), yes_no(summ.absolutely_summable)});
  const double rand_radius = detail::centered_spectral_radius(random_scan(fam).matrix(), fam.pi());
  const bool rand_ok = rand_radius < 1.0 - tau_num;
  double rand = nan;
  if (rand_ok)
    rand = var_limit(fam, m.f, Scheme::rand);
  else
    err << "note: random-scan kernel has centered spectral radius " << csv_number(rand_radius)
        << "; the random-scan limit is undefined\n";
  csv += csv_row({"rand", csv_number(rand), csv_number(rand_radius), yes_no(rand_ok)});
  emit(o, csv, out);
  return exit_ok;
}

// ---- simulate -------------------------------------------------------------

inline int cmd_simulate(const Options& o, std::ostream& out, std::ostream& err) {
  const ModelFile m = require_model(o.model, "--model");
  SimulationConfig cfg = m.simulation.value_or(SimulationConfig{4096, 200, 1, SimScheme::strat, 0});
  if (!m.simulation) {
    cfg.steps = 4096;
    cfg.replicas = 200;
  }
  if (o.steps) cfg.steps = *o.steps;
  if (o.replicas) cfg.replicas = *o.replicas;
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  if (cfg.replicas < 2) throw config_error("--replicas must be at least 2 for a variance estimate");

  const unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  std::string csv = "scheme,steps,replicas,estimate,standard_error,exact_finite_M,z_score\n";
  std::vector<std::string> failures;
  std::uint64_t stream = 0;
  for (SimScheme s : {SimScheme::rand, SimScheme::strat, SimScheme::embedded}) {
    const auto est = estimate_variance(m.family, m.f, cfg.steps, cfg.replicas, derive_seed(cfg.seed, stream++), s,
                                       threads);
    const double exact =
        finite_M_variance_exact(m.family, m.f, cfg.steps, s == SimScheme::rand ? Scheme::rand : Scheme::strat);
    const double diff = est.point - exact;
    const double z = est.standard_error > 0.0 ? diff / est.standard_error
                     : std::abs(diff) <= tau_num * std::max(1.0, std::abs(exact))
                         ? 0.0
                         : std::numeric_limits<double>::infinity();
    csv += csv_row({to_string(s), std::to_string(cfg.steps), std::to_string(cfg.replicas), csv_number(est.point),
                    csv_number(est.standard_error), csv_number(exact), csv_number(z)});
    if (!(std::abs(z) <= 4.0))
      failures.push_back(std::string("Monte Carlo estimate for ") + to_string(s) + " is " + csv_number(z) +
                         " standard errors from the exact finite-M variance (limit 4)");
  }
  emit(o, csv, out);
  return report_failures(failures, err);
}

// ---- demo -----------------------------------------------------------------

/// Two-state example with closed-form variances.
inline ModelFile demo_model() {
  Matrix a(2, 2), b(2, 2);
  a << 0.9, 0.1, 0.1, 0.9;
  b << 0.6, 0.4, 0.4, 0.6;
  KernelFamily fam(Dist::uniform(2), {Kernel(a), Kernel(b)});
  Vector f(2);
  f << 1.0, -1.0;
  return ModelFile{fam.space(), fam, f, default_lambdas, std::nullopt};
}

inline int cmd_demo(const Options& o, std::ostream& out, std::ostream& err) {
  const std::filesystem::path dir = o.out.empty() ? std::filesystem::path(".") : std::filesystem::path(o.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_failure("cannot create output directory " + dir.string() + ": " + ec.message());
  const ModelFile m = demo_model();
  const auto grid = !o.lambdas.empty() ? o.lambdas : default_lambdas;
  const auto model_path = dir / "e1_model.json";
  write_file(model_path, model_to_json(m.family, m.f, grid));

  // Run compare on the file just written so the demo exercises the loader.
  const ModelFile loaded = load_model(model_path.string());
  std::vector<std::string> failures;
  const std::string csv =
      compare_csv(loaded, lambda_grid(o, loaded), parse_method(o.method), o.series_terms, o.tol, failures);
  const auto csv_path = dir / "e1_compare.csv";
  write_file(csv_path, csv);
  out << "wrote " << model_path.string() << "\n" << "wrote " << csv_path.string() << "\n";
  return report_failures(failures, err);
}

} // namespace cli

/// Parse argv, run one subcommand and return its exit code. Normal output
/// goes to `out`, diagnostics to `err`.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  cli::Options o;
  CLI::App app{"Exact and simulated variances of random-scan and deterministic-scan MCMC", "scanvar"};
  app.require_subcommand(1);

  auto add_model = [&](CLI::App* s) { s->add_option("--model", o.model, "Model JSON file"); };
  auto add_numeric = [&](CLI::App* s) {
    s->add_option("--lambda", o.lambdas, "Comma-separated discount factors in [0, 1)")->delimiter(',');
    s->add_option("--method", o.method, "resolvent or series")->capture_default_str();
    s->add_option("--series-terms", o.series_terms, "Terms kept by the series method")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    s->add_option("--tol", o.tol, "Tolerance for asserted inequalities")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    s->add_option("--out", o.out, "Write the CSV to this file instead of stdout");
  };

  auto* validate = app.add_subcommand("validate", "Check a model and print diagnostics");
  add_model(validate);

  auto* compare = app.add_subcommand("compare", "Random vs deterministic scan over a lambda sweep");
  add_model(compare);
  add_numeric(compare);

  auto* peskun = app.add_subcommand("peskun", "Deterministic-scan comparison of two two-kernel models");
  add_model(peskun);
  peskun->add_option("--model-b", o.model_b, "Second model JSON file");
  add_numeric(peskun);

  auto* limit = app.add_subcommand("limit", "Asymptotic variances and the summability check");
  add_model(limit);
  limit->add_option("--out", o.out, "Write the CSV to this file instead of stdout");

  auto* simulate_cmd = app.add_subcommand("simulate", "Monte Carlo estimates against exact finite-M variances");
  add_model(simulate_cmd);
  simulate_cmd->add_option("--seed", o.seed, "Master seed");
  simulate_cmd->add_option("--steps", o.steps, "Path length M")->check(CLI::PositiveNumber);
  simulate_cmd->add_option("--replicas", o.replicas, "Replicas R")->check(CLI::PositiveNumber);
  simulate_cmd->add_option("--out", o.out, "Write the CSV to this file instead of stdout");

  auto* demo = app.add_subcommand("demo", "Write the two-state example and its compare CSV");
  add_numeric(demo);
  demo->get_option("--out")->description("Output directory (default .)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return exit_io;
  }

  try {
    if (*validate) return cli::cmd_validate(o, out);
    if (*compare) return cli::cmd_compare(o, out, err);
    if (*peskun) return cli::cmd_peskun(o, out, err);
    if (*limit) return cli::cmd_limit(o, out, err);
    if (*simulate_cmd) return cli::cmd_simulate(o, out, err);
    if (*demo) return cli::cmd_demo(o, out, err);
  } catch (const parse_error& e) {
    err << "parse error: " << e.what() << "\n";
    return exit_io;
  } catch (const cli::io_failure& e) {
    err << "I/O error: " << e.what() << "\n";
    return exit_io;
  } catch (const config_error& e) {
    err << "usage error: " << e.what() << "\n";
    return exit_io;
  } catch (const error& e) {
    err << "validation error: " << e.what() << "\n";
    return exit_validation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_io;
  }
  return exit_io;
}

} // namespace scanvar
