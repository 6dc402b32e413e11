#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cace/csv.hpp"
#include "cace/errors.hpp"
#include "cace/estimation.hpp"
#include "cace/families.hpp"
#include "cace/li.hpp"
#include "cace/parallel.hpp"
#include "cace/simulation.hpp"

namespace {

using cace::format_double;

std::string fmt_or_na(double v) { return std::isfinite(v) ? format_double(v) : "NA"; }

std::string iso_now() {
  char buf[32];
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw cace::config_error("cannot open output file: " + path);
  return out;
}

// ---- simulate ----

struct SimulateArgs {
  std::string scenario;
  double delta = 0.0;
  bool has_delta = false;
  long n = 1000;
  std::uint64_t seed = 0;
  std::string out = "records.csv";
};

cace::Scenario resolve_scenario(const std::string& name, bool has_delta, double delta) {
  if (name == "odn_delta") {
    if (!has_delta)
      throw cace::config_error("scenario odn_delta needs --delta");
    return cace::odn_delta_scenario(delta);
  }
  if (has_delta)
    throw cace::config_error("--delta only applies to the odn_delta scenario");
  return cace::find_scenario(name);
}

void cmd_simulate(const SimulateArgs& args) {
  const cace::Scenario sc = resolve_scenario(args.scenario, args.has_delta, args.delta);
  const cace::GeneratedData data = cace::generate(sc, args.n, args.seed);
  cace::write_records_csv_file(args.out, data.records);

  nlohmann::json meta;
  meta["scenario"] = sc.name;
  if (args.has_delta) meta["delta"] = args.delta;
  meta["n"] = args.n;
  meta["seed"] = args.seed;
  meta["truth"]["cace"] = sc.true_cace();
  meta["truth"]["xi"] = sc.alpha.xi;
  meta["truth"]["omega_a"] = sc.alpha.omega_a;
  meta["truth"]["omega_n"] = sc.alpha.omega_n;
  meta["fit_family"] = cace::family_name(sc.fit_family);
  meta["created"] = iso_now();
  auto side = open_out(args.out + ".meta.json");
  side << meta.dump(2) << "\n";
  std::cout << "wrote " << args.n << " records to " << args.out << "\n";
}

// ---- fit ----

struct FitArgs {
  std::string input;
  std::string family = "homo_normal";
  std::string method = "odn";
  int bootstrap = 1000;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out = ".";
  double level_wide = 0.95, level_narrow = 0.90;
};

struct ReportRow {
  std::string method;
  std::string family;
  double estimate = 0, se = 0;
  double ci95_lo = 0, ci95_hi = 0, ci90_lo = 0, ci90_hi = 0;
  int boot_used = 0, boot_failures = 0;
};

void cmd_fit(const FitArgs& args) {
  if (args.bootstrap < 100)
    throw cace::parameter_error("bootstrap replicate count must be at least 100");
  if (!(args.level_wide > 0 && args.level_wide < 1) ||
      !(args.level_narrow > 0 && args.level_narrow < 1))
    throw cace::config_error("confidence levels must lie in (0,1)");

  const std::vector<cace::ObservedRecord> records = cace::read_records_csv_file(args.input);

  struct Job {
    bool li;
    std::string family;
  };
  std::vector<Job> jobs;
  if (args.method == "odn") {
    jobs.push_back({false, args.family});
  } else if (args.method == "li") {
    jobs.push_back({true, "homo_normal"});
  } else if (args.method == "both") {
    jobs.push_back({false, "homo_normal"});
    jobs.push_back({false, "hetero_normal"});
    jobs.push_back({true, "homo_normal"});
  } else {
    throw cace::config_error("unknown method '" + args.method + "' (known: odn, li, both)");
  }

  std::vector<ReportRow> rows;
  for (size_t j = 0; j < jobs.size(); ++j) {
    cace::BootstrapOptions boot;
    boot.replicates = args.bootstrap;
    boot.seed = cace::RngStream::combine(args.seed, j);  // independent per row
    boot.threads = args.threads;
    boot.level_wide = args.level_wide;
    boot.level_narrow = args.level_narrow;

    ReportRow row;
    if (jobs[j].li) {
      cace::LiOptions opts;
      opts.seed = args.seed;
      const cace::LiFitResult r = cace::li_fit_with_bootstrap(records, opts, boot);
      row.method = "LI";
      row.family = "homo_normal";
      row.estimate = r.fit.cace;
      const auto& b = *r.bootstrap;
      row.se = b.standard_error;
      row.ci95_lo = b.ci95_lo;
      row.ci95_hi = b.ci95_hi;
      row.ci90_lo = b.ci90_lo;
      row.ci90_hi = b.ci90_hi;
      row.boot_used = b.replicates_used;
      row.boot_failures = b.failures;
    } else {
      const cace::OutcomeFamily& fam = cace::get_family(jobs[j].family);
      cace::SecondStageOptions opts;
      opts.seed = args.seed;
      const cace::FitResult r = cace::fit_cace_with_bootstrap(records, fam, opts, boot);
      row.method = "ODN";
      row.family = jobs[j].family;
      row.estimate = r.cace;
      const auto& b = *r.bootstrap;
      row.se = b.standard_error;
      row.ci95_lo = b.ci95_lo;
      row.ci95_hi = b.ci95_hi;
      row.ci90_lo = b.ci90_lo;
      row.ci90_hi = b.ci90_hi;
      row.boot_used = b.replicates_used;
      row.boot_failures = b.failures;
    }
    rows.push_back(row);
  }

  auto csv = open_out(args.out + "/fit_report.csv");
  csv << "method,family,estimate,std_error,ci95_lo,ci95_hi,ci90_lo,ci90_hi,"
         "bootstrap_used,bootstrap_failures\n";
  for (const auto& r : rows)
    csv << r.method << ',' << r.family << ',' << format_double(r.estimate) << ','
        << format_double(r.se) << ',' << format_double(r.ci95_lo) << ','
        << format_double(r.ci95_hi) << ',' << format_double(r.ci90_lo) << ','
        << format_double(r.ci90_hi) << ',' << r.boot_used << ',' << r.boot_failures << '\n';

  auto txt = open_out(args.out + "/fit_report.txt");
  char line[256];
  std::snprintf(line, sizeof(line), "%-18s %10s %8s %20s %20s\n", "Method", "Estimate", "S.E.",
                "95% CI", "90% CI");
  txt << line;
  for (const auto& r : rows) {
    char ci95[32], ci90[32];
    std::snprintf(ci95, sizeof(ci95), "[%.2f, %.2f]", r.ci95_lo, r.ci95_hi);
    std::snprintf(ci90, sizeof(ci90), "[%.2f, %.2f]", r.ci90_lo, r.ci90_hi);
    const std::string label = r.method == "LI" ? "LI" : "ODN(" + r.family + ")";
    std::snprintf(line, sizeof(line), "%-18s %10.2f %8.2f %20s %20s\n", label.c_str(),
                  r.estimate, r.se, ci95, ci90);
    txt << line;
  }
  for (const auto& r : rows)
    std::cout << r.method << "(" << r.family << "): " << r.estimate << " SE " << r.se << "\n";
}

// ---- study ----

struct StudyArgs {
  std::string scenario;
  double delta = 0.0;
  bool has_delta = false;
  std::string method = "both";
  long n = 2000;
  int reps = 1000;
  int bootstrap = 200;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out = "study.csv";
};

void write_study_header(std::ostream& out) {
  out << "scenario,n,method,bias,std_dev,cp95,ci95_lo,ci95_hi,failures\n";
}

void write_study_row(std::ostream& out, const cace::StudyReport& r) {
  const double failure_fraction =
      r.reps_requested > 0 ? static_cast<double>(r.failures) / r.reps_requested : 0.0;
  out << r.scenario << ',' << r.n << ',' << cace::method_name(r.method) << ','
      << fmt_or_na(r.bias) << ',' << fmt_or_na(r.std_dev) << ',' << fmt_or_na(r.cp95) << ','
      << fmt_or_na(r.ci95_lo_mean) << ',' << fmt_or_na(r.ci95_hi_mean) << ','
      << format_double(failure_fraction) << '\n';
}

void cmd_study(const StudyArgs& args) {
  const cace::Scenario sc = resolve_scenario(args.scenario, args.has_delta, args.delta);

  std::vector<cace::Method> methods;
  if (args.method == "both") {
    methods = {cace::Method::odn, cace::Method::li};
  } else {
    methods = {cace::parse_method(args.method)};
  }

  cace::StudyOptions opts;
  opts.n = args.n;
  opts.reps = args.reps;
  opts.bootstrap_replicates = args.bootstrap;
  opts.seed = args.seed;
  opts.threads = args.threads;

  auto out = open_out(args.out);
  write_study_header(out);
  for (const auto m : methods) {
    const cace::StudyReport r = cace::monte_carlo(sc, m, opts);
    write_study_row(out, r);
    std::cout << sc.name << " " << cace::method_name(m) << ": bias " << fmt_or_na(r.bias)
              << ", sd " << fmt_or_na(r.std_dev) << ", cp95 " << fmt_or_na(r.cp95)
              << ", failures " << r.failures << "/" << r.reps_requested << "\n";
  }
}

// ---- sweep ----

struct SweepArgs {
  std::vector<double> deltas;
  long n = 4000;
  int reps = 500;
  int bootstrap = 200;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out = "sweep.csv";
};

void cmd_sweep(const SweepArgs& args) {
  if (args.deltas.empty()) throw cace::config_error("sweep needs at least one --delta value");
  for (double d : args.deltas)
    if (!(d > 0.0 && d <= 0.45))
      throw cace::config_error("delta " + std::to_string(d) + " outside (0, 0.45]");

  cace::StudyOptions opts;
  opts.n = args.n;
  opts.reps = args.reps;
  opts.bootstrap_replicates = args.bootstrap;
  opts.threads = args.threads;

  auto out = open_out(args.out);
  out << "delta,method,bias,cp95\n";
  for (double d : args.deltas) {
    const cace::Scenario sc = cace::odn_delta_scenario(d);
    for (const auto m : {cace::Method::odn, cace::Method::li}) {
      cace::StudyOptions o = opts;
      // one seed per (delta, method) grid point, derived from the base seed
      o.seed = cace::RngStream::combine(cace::RngStream::combine(args.seed, m == cace::Method::odn ? 1 : 2),
                                        static_cast<std::uint64_t>(d * 1e6));
      const cace::StudyReport r = cace::monte_carlo(sc, m, o);
      out << format_double(d) << ',' << cace::method_name(m) << ',' << fmt_or_na(r.bias) << ','
          << fmt_or_na(r.cp95) << '\n';
      std::cout << "delta " << d << " " << cace::method_name(m) << ": bias " << fmt_or_na(r.bias)
                << ", cp95 " << fmt_or_na(r.cp95) << "\n";
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Complier average causal effect estimation for randomized trials with "
               "noncompliance and outcome-dependent nonignorable missing outcomes"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from a key=value file");
  app.fallthrough();

  SimulateArgs sim;
  FitArgs fit;
  StudyArgs study;
  SweepArgs sweep;

  auto* sim_cmd = app.add_subcommand("simulate", "generate a dataset from a named scenario");
  sim_cmd->add_option("--scenario", sim.scenario, "scenario name (see docs)")->required();
  auto* sim_delta = sim_cmd->add_option("--delta", sim.delta, "step depth for odn_delta");
  sim_cmd->add_option("--n", sim.n, "sample size")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--seed", sim.seed, "random seed");
  sim_cmd->add_option("--out", sim.out, "output CSV path");

  auto* fit_cmd = app.add_subcommand("fit", "fit the estimators to a dataset");
  fit_cmd->add_option("--input", fit.input, "input CSV (z,d,y,r)")->required();
  fit_cmd->add_option("--family", fit.family,
                      "outcome family: homo_normal | hetero_normal | exponential | gamma | "
                      "lognormal");
  fit_cmd->add_option("--method", fit.method, "odn | li | both");
  fit_cmd->add_option("--bootstrap", fit.bootstrap, "bootstrap replicates (>= 100)");
  fit_cmd->add_option("--seed", fit.seed, "random seed");
  fit_cmd->add_option("--threads", fit.threads, "worker threads");
  fit_cmd->add_option("--out", fit.out, "output directory");
  fit_cmd->add_option("--ci-wide", fit.level_wide, "wider interval level");
  fit_cmd->add_option("--ci-narrow", fit.level_narrow, "narrower interval level");

  auto* study_cmd = app.add_subcommand("study", "Monte-Carlo bias/coverage study");
  study_cmd->add_option("--scenario", study.scenario, "scenario name")->required();
  auto* study_delta = study_cmd->add_option("--delta", study.delta, "step depth for odn_delta");
  study_cmd->add_option("--method", study.method, "odn | li | both");
  study_cmd->add_option("--n", study.n, "sample size per replicate")->check(CLI::PositiveNumber);
  study_cmd->add_option("--reps", study.reps, "replicates")->check(CLI::PositiveNumber);
  study_cmd->add_option("--bootstrap", study.bootstrap, "bootstrap replicates per fit");
  study_cmd->add_option("--seed", study.seed, "random seed");
  study_cmd->add_option("--threads", study.threads, "worker threads");
  study_cmd->add_option("--out", study.out, "output CSV path");

  auto* sweep_cmd = app.add_subcommand("sweep", "sensitivity sweep over the step depth delta");
  sweep_cmd->add_option("--delta", sweep.deltas, "delta grid (repeatable)")->expected(-1);
  sweep_cmd->add_option("--n", sweep.n, "sample size per replicate")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--reps", sweep.reps, "replicates per grid point")
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--bootstrap", sweep.bootstrap, "bootstrap replicates per fit");
  sweep_cmd->add_option("--seed", sweep.seed, "random seed");
  sweep_cmd->add_option("--threads", sweep.threads, "worker threads");
  sweep_cmd->add_option("--out", sweep.out, "output CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim_cmd->parsed()) {
      sim.has_delta = sim_delta->count() > 0;
      cmd_simulate(sim);
    } else if (fit_cmd->parsed()) {
      cmd_fit(fit);
    } else if (study_cmd->parsed()) {
      study.has_delta = study_delta->count() > 0;
      cmd_study(study);
    } else if (sweep_cmd->parsed()) {
      cmd_sweep(sweep);
    }
  } catch (const cace::insufficient_data_error& e) {
    std::cerr << "error (insufficient data): " << e.what() << "\n";
    return 3;
  } catch (const cace::numerical_error& e) {
    std::cerr << "error (numerical): " << e.what() << "\n";
    return 4;
  } catch (const cace::data_format_error& e) {
    std::cerr << "error (input format): " << e.what() << "\n";
    return 2;
  } catch (const cace::config_error& e) {
    std::cerr << "error (configuration): " << e.what() << "\n";
    return 2;
  } catch (const cace::parameter_error& e) {
    std::cerr << "error (parameters): " << e.what() << "\n";
    return 2;
  } catch (const cace::domain_error& e) {
    std::cerr << "error (domain): " << e.what() << "\n";
    return 2;
  } catch (const cace::unsupported_family_error& e) {
    std::cerr << "error (unsupported family): " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
