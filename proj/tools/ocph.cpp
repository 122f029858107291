// ocph: fit, evaluate, sample and test one cut-point phase-type models.
//
// Exit codes: 0 success, 2 input error, 3 fit did not converge (best model still
// written), 4 numeric failure.

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ocph/ocph.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNotConverged = 3;
constexpr int kExitNumeric = 4;

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[64];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

std::string fmt(double v) { return ocph::format_double(v); }

struct FitOptions {
  std::string data;
  std::string kind = "ocp-erlang";
  std::string phases = "auto";
  std::string out;
  int phase_min = 1;
  int phase_max = 30;
  int a_grid = 49;
  int multistarts = 3;
  int bootstrap = 500;
  double level = 0.95;
  std::uint64_t seed = 1;
  int max_iterations = 500;
  bool no_timestamp = false;
};

ocph::FitConfig make_config(const FitOptions& o) {
  ocph::FitConfig c;
  c.phase_min = o.phase_min;
  c.phase_max = o.phase_max;
  c.cutpoint_grid_size = o.a_grid;
  c.multistarts = o.multistarts;
  c.bootstrap_reps = o.bootstrap;
  c.confidence_level = o.level;
  c.seed = o.seed;
  c.max_iterations = o.max_iterations;
  if (o.phases != "auto") {
    int n = 0;
    try {
      std::size_t used = 0;
      n = std::stoi(o.phases, &used);
      if (used != o.phases.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ocph::invalid_input("--phases must be 'auto' or a positive integer");
    }
    c.phase_min = c.phase_max = n;
  }
  c.validate();
  return c;
}

int cmd_fit(const FitOptions& o) {
  const auto data = ocph::read_samples(o.data);
  const auto config = make_config(o);
  if (o.kind != "ocp-erlang" && o.kind != "ph-erlang")
    throw ocph::invalid_input("--kind must be ph-erlang or ocp-erlang for fitting");

  ocph::FitResult fit = o.kind == "ph-erlang" ? ocph::select_phases_erlang(data, config)
                                              : ocph::select_phases(data, config);
  std::string ci_line = "not applicable";
  if (std::holds_alternative<ocph::OcpErlangSpec>(fit.model)) {
    const auto ci = ocph::bootstrap_ci_cutpoint(data, fit, config);
    fit.cutpoint_ci = ci.interval;
    fit.flags.insert(fit.flags.end(), ci.flags.begin(), ci.flags.end());
    ci_line = ci.interval ? "[" + fmt(ci.interval->lower) + ", " + fmt(ci.interval->upper) + "]"
                          : "skipped";
  }

  const auto model = ocph::to_model_file(fit.model);
  ocph::write_text_file(o.out, ocph::serialize_model(model));

  std::ostringstream r;
  r << "# ocph fit report\n";
  if (!o.no_timestamp) r << "# generated " << timestamp() << "\n";
  r << "kind: " << ocph::kind_name(model) << "\n";
  r << "observations: " << data.size() << "\n";
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ocph::ErlangSpec>) {
          r << "phases: " << s.phases << "\nlambda: " << fmt(s.rate) << "\n";
        } else {
          r << "phases: " << s.phases << "\ncut_point: " << fmt(s.cut_point)
            << "\nlambda1: " << fmt(s.rate1) << "\nlambda2: " << fmt(s.rate2) << "\n";
        }
      },
      fit.model);
  r << "log_likelihood: " << fmt(fit.log_likelihood) << "\n";
  r << "converged: " << (fit.converged ? "yes" : "no") << "\n";
  r << "evaluations: " << fit.evaluations << "\n";
  r << "cut_point_ci (level " << fmt(config.confidence_level) << ", parametric bootstrap B="
    << config.bootstrap_reps << "): " << ci_line << "\n";
  for (const auto& f : fit.flags) r << "flag: " << f << "\n";
  r << "phase_trace:\n";
  for (const auto& t : fit.trace) r << "  n=" << t.phases << " loglik=" << fmt(t.log_likelihood) << "\n";
  r << "model_file: " << o.out << "\n";
  std::cout << r.str();
  return fit.converged ? kExitOk : kExitNotConverged;
}

struct EvalOptions {
  std::string model;
  std::vector<double> x;
  std::vector<std::string> measures{"pdf", "cdf", "reliability", "hazard", "cum_hazard"};
};

double measure_at(const ocph::Distribution& d, const std::string& m, double x) {
  return std::visit(
      [&](const auto& rep) -> double {
        if (m == "pdf") return ocph::pdf(rep, x);
        if (m == "cdf") return ocph::cdf(rep, x);
        if (m == "reliability") return ocph::reliability(rep, x);
        if (m == "hazard") return ocph::hazard(rep, x);
        if (m == "cum_hazard") return ocph::cum_hazard(rep, x);
        throw ocph::invalid_input("unknown measure '" + m + "'");
      },
      d);
}

double summary_of(const ocph::Distribution& d, const std::string& m) {
  return std::visit(
      [&](const auto& rep) -> double {
        if (m == "mean") return ocph::mean(rep);
        if (m == "sd") return ocph::sd(rep);
        throw ocph::invalid_input("unknown measure '" + m + "'");
      },
      d);
}

int cmd_eval(const EvalOptions& o) {
  const auto dist = ocph::to_distribution(ocph::read_model(o.model));
  std::ostringstream out;
  for (const auto& m : o.measures) {
    if (m == "mean" || m == "sd") {
      out << m << " " << fmt(summary_of(dist, m)) << "\n";
      continue;
    }
    if (o.x.empty()) throw ocph::invalid_input("measure '" + m + "' needs --x");
    for (double x : o.x) {
      if (!(x >= 0.0)) throw ocph::domain_error("x must be nonnegative");
      out << m << "(" << fmt(x) << ") " << fmt(measure_at(dist, m, x)) << "\n";
    }
  }
  std::cout << out.str();
  return kExitOk;
}

struct CurvesOptions {
  std::string model;
  std::string data;
  std::string out;
  std::optional<double> xmin;
  std::optional<double> xmax;
  int points = 512;
};

int cmd_curves(const CurvesOptions& o) {
  const auto dist = ocph::to_distribution(ocph::read_model(o.model));
  std::optional<ocph::Dataset> data;
  if (!o.data.empty()) data = ocph::read_samples(o.data);
  const double xmin = o.xmin.value_or(0.0);
  const double xmax = o.xmax ? *o.xmax
                             : std::visit([](const auto& rep) { return ocph::quantile(rep, 0.9999); }, dist);
  const auto rows = ocph::curves(dist, xmin, xmax, o.points, data ? &*data : nullptr);
  ocph::write_text_file(o.out, ocph::curves_csv(rows));
  return kExitOk;
}

struct SampleOptions {
  std::string model;
  std::string out;
  std::size_t count = 1000;
  std::uint64_t seed = 1;
};

int cmd_sample(const SampleOptions& o) {
  const auto dist = ocph::to_distribution(ocph::read_model(o.model));
  if (o.count < 1) throw ocph::invalid_input("--count must be >= 1");
  const auto data = std::visit([&](const auto& rep) { return ocph::sample(rep, o.count, o.seed); }, dist);
  std::string text;
  for (double v : data.values()) text += fmt(v) + "\n";
  ocph::write_text_file(o.out, text);
  return kExitOk;
}

struct GofOptions {
  std::string model;
  std::string data;
  int bootstrap = 99;
  std::uint64_t seed = 1;
  int a_grid = 49;
  int multistarts = 3;
};

int cmd_gof(const GofOptions& o) {
  const auto model = ocph::read_model(o.model);
  const auto data = ocph::read_samples(o.data);
  const auto dist = ocph::to_distribution(model);
  std::ostringstream out;
  if (o.bootstrap < 99) {
    std::cerr << "warning: B < 99; printing the statistic without a p-value\n";
    const double a2 = std::visit(
        [&](const auto& rep) { return ocph::anderson_darling(data, [&](double x) { return ocph::cdf(rep, x); }); },
        dist);
    out << "a_squared " << fmt(a2) << "\np_value none\nbootstrap_reps " << o.bootstrap << "\n";
    std::cout << out.str();
    return kExitOk;
  }
  ocph::GofReport report;
  std::string method;
  if (model.index() <= 1) {
    ocph::FitConfig config;
    config.bootstrap_reps = o.bootstrap;
    config.seed = o.seed;
    config.cutpoint_grid_size = o.a_grid;
    config.multistarts = o.multistarts;
    const ocph::FittedModel fitted = model.index() == 0
                                         ? ocph::FittedModel(std::get<ocph::ErlangSpec>(model))
                                         : ocph::FittedModel(std::get<ocph::OcpErlangSpec>(model));
    report = ocph::ad_pvalue_bootstrap(data, fitted, config);
    method = "parametric bootstrap, refit per replicate";
  } else {
    report = std::visit([&](const auto& rep) { return ocph::ad_pvalue_simple(data, rep, o.bootstrap, o.seed); },
                        dist);
    method = "parametric bootstrap, model treated as fully specified";
  }
  out << "a_squared " << fmt(report.a_squared) << "\n";
  out << "p_value " << fmt(report.p_value) << "\n";
  out << "bootstrap_reps " << report.bootstrap_reps << "\n";
  out << "failed_replicates " << report.failures << "\n";
  out << "method " << method << "\n";
  std::cout << out.str();
  return kExitOk;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ocph::invalid_input*>(&e)) return kExitInput;
  if (dynamic_cast<const ocph::numeric_error*>(&e)) return kExitNumeric;
  return kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"One cut-point phase-type distributions: fit, evaluate, sample, test"};
  app.require_subcommand(1);

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit an Erlang or cut-point Erlang model to samples");
  fit_cmd->add_option("--data", fit.data, "Sample file (one value per line)")->required();
  fit_cmd->add_option("--kind", fit.kind, "ph-erlang or ocp-erlang")->capture_default_str();
  fit_cmd->add_option("--phases", fit.phases, "'auto' or a fixed phase count")->capture_default_str();
  fit_cmd->add_option("--phase-min", fit.phase_min, "Smallest phase count tried by auto")->capture_default_str();
  fit_cmd->add_option("--phase-max", fit.phase_max, "Largest phase count tried by auto")->capture_default_str();
  fit_cmd->add_option("--a-grid", fit.a_grid, "Number of quantile cut-point candidates")->capture_default_str();
  fit_cmd->add_option("--multistarts", fit.multistarts, "Rate starts per cut-point candidate")->capture_default_str();
  fit_cmd->add_option("--bootstrap", fit.bootstrap, "Bootstrap replicates for the cut-point interval (0 skips)")
      ->capture_default_str();
  fit_cmd->add_option("--level", fit.level, "Confidence level")->capture_default_str();
  fit_cmd->add_option("--seed", fit.seed, "Master seed")->capture_default_str();
  fit_cmd->add_option("--max-iterations", fit.max_iterations, "Optimizer iteration cap")->capture_default_str();
  fit_cmd->add_option("--out", fit.out, "Model file to write")->required();
  fit_cmd->add_flag("--no-timestamp", fit.no_timestamp, "Omit the timestamp from the report");

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate model measures");
  eval_cmd->add_option("--model", ev.model, "Model file")->required();
  eval_cmd->add_option("--x", ev.x, "Evaluation point(s)");
  eval_cmd->add_option("--measure", ev.measures, "pdf, cdf, reliability, hazard, cum_hazard, mean, sd")
      ->delimiter(',');

  CurvesOptions cv;
  auto* curves_cmd = app.add_subcommand("curves", "Write a table of model (and empirical) curves");
  curves_cmd->add_option("--model", cv.model, "Model file")->required();
  curves_cmd->add_option("--data", cv.data, "Optional sample file for empirical columns");
  curves_cmd->add_option("--xmin", cv.xmin, "Grid start (default 0)");
  curves_cmd->add_option("--xmax", cv.xmax, "Grid end (default: the 0.9999 quantile)");
  curves_cmd->add_option("--points", cv.points, "Grid size")->capture_default_str();
  curves_cmd->add_option("--out", cv.out, "CSV file to write")->required();

  SampleOptions sm;
  auto* sample_cmd = app.add_subcommand("sample", "Simulate observations from a model");
  sample_cmd->add_option("--model", sm.model, "Model file")->required();
  sample_cmd->add_option("--count", sm.count, "Number of values")->capture_default_str();
  sample_cmd->add_option("--seed", sm.seed, "Seed")->capture_default_str();
  sample_cmd->add_option("--out", sm.out, "Output file")->required();

  GofOptions gf;
  auto* gof_cmd = app.add_subcommand("gof", "Anderson-Darling test with bootstrap p-value");
  gof_cmd->add_option("--model", gf.model, "Model file")->required();
  gof_cmd->add_option("--data", gf.data, "Sample file")->required();
  gof_cmd->add_option("--bootstrap", gf.bootstrap, "Bootstrap replicates B")->capture_default_str();
  gof_cmd->add_option("--seed", gf.seed, "Master seed")->capture_default_str();
  gof_cmd->add_option("--a-grid", gf.a_grid, "Cut-point candidates used by replicate refits")->capture_default_str();
  gof_cmd->add_option("--multistarts", gf.multistarts, "Rate starts used by replicate refits")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*fit_cmd) return cmd_fit(fit);
    if (*eval_cmd) return cmd_eval(ev);
    if (*curves_cmd) return cmd_curves(cv);
    if (*sample_cmd) return cmd_sample(sm);
    if (*gof_cmd) return cmd_gof(gf);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitInput;
}
