// lre: simulate multisite trials, estimate local relative effectiveness,
// run the Monte Carlo study, and summarize results.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lre/csv.hpp"
#include "lre/eb.hpp"
#include "lre/harness.hpp"
#include "lre/lmm.hpp"
#include "lre/metrics.hpp"
#include "lre/simgen.hpp"
#include "lre/strategies.hpp"
#include "lre/trial_data.hpp"
#include "lre/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lre;

namespace {

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

std::pair<long, long> parse_range(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    throw CLI::ValidationError("--n-range", "expected LO:HI, got " + text);
  }
  try {
    const long lo = std::stol(text.substr(0, colon));
    const long hi = std::stol(text.substr(colon + 1));
    if (lo < 1 || hi < lo) {
      throw CLI::ValidationError("--n-range", "needs 1 <= LO <= HI");
    }
    return {lo, hi};
  } catch (const CLI::ValidationError&) {
    throw;
  } catch (const std::exception&) {
    throw CLI::ValidationError("--n-range", "expected LO:HI, got " + text);
  }
}

std::string resolve_out_dir(const std::string& flag_value,
                            const std::string& fallback = "") {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("LRE_OUT_DIR"); env && *env) return env;
  if (!fallback.empty()) return fallback;
  throw std::runtime_error("no output directory: pass --out or set LRE_OUT_DIR");
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json base_provenance(const std::string& subcommand,
                     const std::string& invocation) {
  json j;
  j["tool"] = "lre";
  j["version"] = kVersion;
  j["subcommand"] = subcommand;
  j["invocation"] = invocation;
  return j;
}

// ---------------------------------------------------------------- simulate

void write_truth_csv(const fs::path& path, const SyntheticTruth& truth) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "site,theta,delta,site_itt,mu_x1,mu_x2,mu_u1,mu_u2,mu_y0,n,"
         "true_tier,sigma\n";
  for (size_t j = 0; j < truth.theta.size(); ++j) {
    out << 's' << (j + 1) << ',' << format_double(truth.theta[j]) << ','
        << format_double(truth.delta[j]) << ','
        << format_double(truth.site_itt[j]) << ','
        << format_double(truth.mu_x1[j]) << ','
        << format_double(truth.mu_x2[j]) << ','
        << format_double(truth.mu_u1[j]) << ','
        << format_double(truth.mu_u2[j]) << ','
        << format_double(truth.mu_y0[j]) << ',' << truth.n[j] << ','
        << (truth.true_tier.empty() ? std::string()
                                    : std::to_string(truth.true_tier[j]))
        << ',' << format_double(truth.sigma) << '\n';
  }
}

SyntheticTruth read_truth_csv(const std::string& path) {
  const auto table = read_csv_table(path);
  if (table.empty()) throw ParseError(path + ": empty truth file");
  const std::vector<std::string> expect = {
      "site", "theta", "mu_x1", "mu_x2", "mu_u1", "mu_u2", "sigma"};
  std::map<std::string, size_t> col;
  for (size_t i = 0; i < table[0].size(); ++i) col[table[0][i]] = i;
  for (const auto& name : expect) {
    if (!col.count(name)) {
      throw SchemaError(path + ": truth file is missing column " + name);
    }
  }
  SyntheticTruth truth;
  for (size_t r = 1; r < table.size(); ++r) {
    const auto& row = table[r];
    const long line = static_cast<long>(r + 1);
    truth.theta.push_back(parse_double(row[col["theta"]], line));
    truth.mu_x1.push_back(parse_double(row[col["mu_x1"]], line));
    truth.mu_x2.push_back(parse_double(row[col["mu_x2"]], line));
    truth.mu_u1.push_back(parse_double(row[col["mu_u1"]], line));
    truth.mu_u2.push_back(parse_double(row[col["mu_u2"]], line));
    truth.sigma = parse_double(row[col["sigma"]], line);
  }
  return truth;
}

struct SimulateArgs {
  int scenario = 1;
  long J = 100;
  std::string n_range = "30:170";
  double psi_std = 0.1;
  std::uint64_t seed = 1;
  double treat_prob = 0.5;
  bool consistency_variant = false;
  std::string out;
};

int run_simulate(const SimulateArgs& a, const std::string& invocation) {
  const std::string out_dir = resolve_out_dir(a.out);
  fs::create_directories(out_dir);
  GeneratorConfig cfg;
  cfg.scenario = a.scenario;
  cfg.J = static_cast<int>(a.J);
  std::tie(cfg.n_low, cfg.n_high) = parse_range(a.n_range);
  cfg.psi_std = a.psi_std;
  cfg.seed = a.seed;
  cfg.treat_prob = a.treat_prob;
  cfg.consistency_variant = a.consistency_variant;
  cfg.validate();

  const GeneratedTrial trial = generate(cfg);
  const fs::path dir(out_dir);
  write_csv(trial.dataset, (dir / "data.csv").string(),
            (dir / "sites.csv").string());
  write_truth_csv(dir / "truth.csv", trial.truth);

  json j = base_provenance("simulate", invocation);
  j["config"] = {{"scenario", cfg.scenario},
                 {"J", cfg.J},
                 {"n_low", cfg.n_low},
                 {"n_high", cfg.n_high},
                 {"psi_std", cfg.psi_std},
                 {"seed", cfg.seed},
                 {"treat_prob", cfg.treat_prob},
                 {"consistency_variant", cfg.consistency_variant}};
  j["sigma"] = trial.truth.sigma;
  j["assignment_redraws"] = trial.assignment_redraws;
  j["outputs"] = {"data.csv", "sites.csv", "truth.csv"};
  write_json(dir / "provenance.json", j);
  std::cout << "wrote " << (dir / "data.csv").string() << ", sites.csv, "
            << "truth.csv (" << trial.dataset.records().size() << " records, "
            << trial.dataset.num_sites() << " sites)\n";
  return 0;
}

// --------------------------------------------------------------------- fit

struct FitArgs {
  std::string data, sites, truth, out;
  std::string strategy = "twostep";
};

json fit_json(const RandomSlopeFit& f) {
  json j;
  j["beta0"] = std::vector<double>(f.beta0.data(), f.beta0.data() + f.beta0.size());
  j["beta1"] = std::vector<double>(f.beta1.data(), f.beta1.data() + f.beta1.size());
  j["T"] = {{f.T(0, 0), f.T(0, 1)}, {f.T(1, 0), f.T(1, 1)}};
  j["sigma0_sq"] = f.sigma0_sq;
  j["sigma1_sq"] = f.sigma1_sq;
  j["loglik"] = f.loglik;
  j["converged"] = f.converged;
  j["iterations"] = f.iterations;
  j["boundary"] = f.boundary;
  return j;
}

json fit_json(const RandomInterceptFit& f) {
  json j;
  j["alpha"] = std::vector<double>(f.alpha.data(), f.alpha.data() + f.alpha.size());
  j["omega00"] = f.omega00;
  j["sigma0_sq"] = f.sigma0_sq;
  j["loglik"] = f.loglik;
  j["converged"] = f.converged;
  j["iterations"] = f.iterations;
  j["boundary"] = f.boundary_omega00;
  return j;
}

int run_fit(const FitArgs& a, const std::string& invocation) {
  const std::string out_dir = resolve_out_dir(a.out);
  fs::create_directories(out_dir);
  const auto strategy = parse_strategy(a.strategy);
  if (!strategy) {
    throw std::runtime_error("unknown strategy '" + a.strategy +
                             "'; expected one of " + [] {
                               std::string s;
                               for (auto id : all_strategies()) {
                                 if (!s.empty()) s += ", ";
                                 s += strategy_name(id);
                               }
                               return s;
                             }());
  }
  if (strategy_needs_truth(*strategy) && a.truth.empty()) {
    throw std::runtime_error(a.strategy +
                             std::string(" needs --truth (simulation truth "
                                         "file from `lre simulate`)"));
  }
  if (!strategy_needs_truth(*strategy) && !a.truth.empty()) {
    throw std::runtime_error("--truth is only accepted with me_adj_x_u");
  }

  const LoadResult loaded = load_csv(a.data, a.sites);
  if (!loaded.rejected_rows.empty()) {
    std::cerr << "note: rejected " << loaded.rejected_rows.size()
              << " row(s) with missing y or z\n";
  }
  const TrialDataset& data = loaded.dataset;

  SyntheticTruth truth;
  if (strategy_needs_truth(*strategy)) {
    truth = read_truth_csv(a.truth);
    if (static_cast<int>(truth.mu_u1.size()) != data.num_sites()) {
      throw std::runtime_error("truth file has " +
                               std::to_string(truth.mu_u1.size()) +
                               " sites, dataset has " +
                               std::to_string(data.num_sites()));
    }
  }

  const StrategyResult res = estimate_lre(
      *strategy, data, strategy_needs_truth(*strategy) ? &truth : nullptr);
  if (!res.warning.empty()) std::cerr << "warning: " << res.warning << '\n';

  std::vector<int> tiers;
  if (data.num_sites() >= 3) tiers = classify_tiers(res.points());

  const fs::path dir(out_dir);
  {
    std::ofstream out(dir / "lre.csv");
    if (!out) throw std::runtime_error("cannot write lre.csv");
    out << "site,strategy,point,post_var,tier\n";
    for (size_t j = 0; j < res.estimates.size(); ++j) {
      const auto& e = res.estimates[j];
      out << e.site_id << ',' << strategy_name(e.strategy) << ','
          << format_double(e.point) << ','
          << (e.has_post_var ? format_double(e.post_var) : std::string())
          << ',' << (tiers.empty() ? std::string() : std::to_string(tiers[j]))
          << '\n';
    }
  }
  if (*strategy == StrategyId::twostep) {
    std::ofstream out(dir / "eb.csv");
    if (!out) throw std::runtime_error("cannot write eb.csv");
    out << "site,eta0_star,eta0_postvar,v1_star,v1_postvar,lambda11\n";
    for (size_t j = 0; j < res.estimates.size(); ++j) {
      out << res.estimates[j].site_id << ','
          << format_double(res.eb0[j].eta0_star) << ','
          << format_double(res.eb0[j].post_var) << ','
          << format_double(res.eb[j].v1_star) << ','
          << format_double(res.eb[j].post_var) << ','
          << format_double(res.eb[j].lambda(1, 1)) << '\n';
    }
  }

  const ScalingUnit unit = scaling_unit(data);
  json model;
  model["strategy"] = strategy_name(*strategy);
  model["converged"] = res.converged;
  model["warning"] = res.warning;
  model["scaling_unit"] = unit.value;
  model["singleton_control_sites"] = unit.singleton_control_sites;
  model["clamped_posterior_variances"] = res.clamped_post_vars;
  model["itt_adj_fallback_sites"] = res.fallback_sites;
  if (res.slope_fit) model["effect_model"] = fit_json(*res.slope_fit);
  if (res.intercept_fit) model["control_model"] = fit_json(*res.intercept_fit);
  write_json(dir / "model.json", model);

  json j = base_provenance("fit", invocation);
  j["inputs"] = {{"data", a.data}, {"sites", a.sites}, {"truth", a.truth}};
  j["strategy"] = strategy_name(*strategy);
  j["sites"] = data.num_sites();
  j["records"] = data.records().size();
  j["rejected_rows"] = loaded.rejected_rows;
  j["converged"] = res.converged;
  j["outputs"] = *strategy == StrategyId::twostep
                     ? json::array({"lre.csv", "eb.csv", "model.json"})
                     : json::array({"lre.csv", "model.json"});
  write_json(dir / "provenance.json", j);
  std::cout << "wrote " << (dir / "lre.csv").string() << " ("
            << res.estimates.size() << " sites)\n";
  return 0;
}

// ------------------------------------------------------------------- study

struct StudyArgs {
  std::vector<int> scenarios;
  std::vector<double> psi;
  std::vector<long> J;
  std::vector<std::string> n_ranges;
  std::vector<std::string> strategies;
  int replications = 500;
  std::uint64_t seed = 1;
  int jobs = 1;
  bool per_site = false;
  bool resume = false;
  std::string out;
  // consistency-grid mode
  bool consistency_grid = false;
  std::vector<long> n_bar;
  int datasets_per_cell = 1;
  long max_individuals = 200000000;
};

int run_study_cmd(const StudyArgs& a, const std::string& invocation) {
  const std::string out_dir = resolve_out_dir(a.out);
  fs::create_directories(out_dir);
  const auto log = [](const std::string& line) {
    std::cerr << line << '\n';
  };

  if (a.consistency_grid) {
    if (!a.n_ranges.empty()) {
      throw std::runtime_error("--consistency-grid uses --n-bar, not --n-range");
    }
    ConsistencyGridConfig cfg;
    if (!a.J.empty()) cfg.J_values = a.J;
    if (!a.n_bar.empty()) cfg.n_values = a.n_bar;
    if (!a.psi.empty()) cfg.psi_grid = a.psi;
    if (!a.scenarios.empty()) {
      if (a.scenarios.size() != 1) {
        throw std::runtime_error("--consistency-grid takes one --scenario");
      }
      cfg.scenario = a.scenarios[0];
    }
    cfg.datasets_per_cell = a.datasets_per_cell;
    cfg.master_seed = a.seed;
    cfg.max_individuals = a.max_individuals;
    const auto cells = run_consistency_grid(cfg, log);
    const fs::path dir(out_dir);
    write_consistency_csv((dir / "consistency.csv").string(), cells);
    json j = base_provenance("study", invocation);
    j["mode"] = "consistency-grid";
    j["config"] = {{"J", cfg.J_values},
                   {"n_bar", cfg.n_values},
                   {"psi_grid", cfg.psi_grid},
                   {"scenario", cfg.scenario},
                   {"datasets_per_cell", cfg.datasets_per_cell},
                   {"master_seed", cfg.master_seed},
                   {"max_individuals", cfg.max_individuals}};
    json cj = json::array();
    for (const auto& c : cells) {
      cj.push_back({{"J", c.J},
                    {"n_bar", c.n_bar},
                    {"psi_std", c.psi_std},
                    {"skipped", c.skipped},
                    {"note", c.note},
                    {"wall_seconds", c.wall_seconds}});
    }
    j["cells"] = cj;
    write_json(dir / "consistency_provenance.json", j);
    std::cout << "wrote " << (dir / "consistency.csv").string() << '\n';
    return 0;
  }

  if (!a.n_bar.empty()) {
    throw std::runtime_error("--n-bar requires --consistency-grid");
  }
  StudyConfig cfg;
  if (!a.scenarios.empty()) cfg.scenarios = a.scenarios;
  if (!a.psi.empty()) cfg.psi_grid = a.psi;
  if (!a.J.empty() || !a.n_ranges.empty()) {
    if (a.J.size() != a.n_ranges.size()) {
      throw std::runtime_error(
          "--J and --n-range must be given the same number of times");
    }
    cfg.size_settings.clear();
    for (size_t i = 0; i < a.J.size(); ++i) {
      const auto [lo, hi] = parse_range(a.n_ranges[i]);
      cfg.size_settings.push_back({a.J[i], lo, hi});
    }
  }
  if (!a.strategies.empty()) {
    cfg.strategies.clear();
    for (const auto& name : a.strategies) {
      const auto s = parse_strategy(name);
      if (!s) throw std::runtime_error("unknown strategy '" + name + "'");
      cfg.strategies.push_back(*s);
    }
  }
  cfg.replications = a.replications;
  cfg.master_seed = a.seed;
  cfg.jobs = a.jobs;
  cfg.per_site = a.per_site;
  cfg.resume = a.resume;
  cfg.out_dir = out_dir;

  const StudySummary summary = run_study(cfg, log);
  write_provenance_json((fs::path(out_dir) / "provenance.json").string(),
                        summary, invocation);
  std::cout << "wrote " << (fs::path(out_dir) / "summary.csv").string() << " ("
            << summary.cells.size() << " cells)\n";
  return 0;
}

// ------------------------------------------------------------------ report

struct ReportArgs {
  std::string summary;
  std::string out;
};

int run_report(const ReportArgs& a, const std::string& invocation) {
  const auto table = read_csv_table(a.summary);
  if (table.size() < 2) {
    throw std::runtime_error(a.summary + ": no summary rows");
  }
  const std::vector<std::string> expect = {
      "scenario",       "psi_std",  "J",
      "n_low",          "n_high",   "strategy",
      "mean_bias",      "sd_bias",  "avg_emp_var",
      "variance_ratio", "avg_rmse", "rmse_reduction",
      "sce_rate",       "mce_rate", "replications"};
  if (table[0] != expect) {
    throw std::runtime_error(a.summary + ": unexpected summary.csv header");
  }

  std::ostringstream rep;
  rep << "Strategy comparison by cell (bias and RMSE in scaling units)\n";
  std::string cell_id;
  for (size_t r = 1; r < table.size(); ++r) {
    const auto& row = table[r];
    const std::string id = "scenario " + row[0] + "  psi_std " + row[1] +
                           "  J " + row[2] + "  n [" + row[3] + ", " + row[4] +
                           "]  replications " + row[14];
    if (id != cell_id) {
      cell_id = id;
      rep << '\n' << id << '\n';
      rep << "  strategy     mean_bias   sd_bias  avg_rmse  rmse_red  "
             "var_ratio  sce_rate  mce_rate\n";
    }
    auto num = [&](size_t i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%9.4f",
                    parse_double(row[i], static_cast<long>(r + 1)));
      return std::string(buf);
    };
    char name[32];
    std::snprintf(name, sizeof name, "%-12s", row[5].c_str());
    rep << "  " << name << ' ' << num(6) << ' ' << num(7) << ' ' << num(10)
        << ' ' << num(11) << ' ' << num(9) << ' ' << num(12) << ' ' << num(13)
        << '\n';
  }
  std::cout << rep.str();

  const std::string out_dir =
      resolve_out_dir(a.out, fs::path(a.summary).parent_path().string().empty()
                                 ? "."
                                 : fs::path(a.summary).parent_path().string());
  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "report.txt");
    if (!out) throw std::runtime_error("cannot write report.txt");
    out << rep.str();
  }
  json j = base_provenance("report", invocation);
  j["input"] = a.summary;
  j["rows"] = table.size() - 1;
  j["outputs"] = {"report.txt"};
  write_json(fs::path(out_dir) / "report_provenance.json", j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local relative effectiveness for multisite randomized trials"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read defaults from an INI file "
                                 "(section per subcommand)");
  app.set_version_flag("--version", kVersion);
  const std::string invocation = join_args(argc, argv);

  SimulateArgs sim;
  auto* csim = app.add_subcommand("simulate",
                                  "Generate a synthetic multisite trial");
  csim->add_option("--scenario", sim.scenario, "1 or 2")
      ->check(CLI::Range(1, 2));
  csim->add_option("--J", sim.J, "number of sites");
  csim->add_option("--n-range", sim.n_range, "site size range LO:HI");
  csim->add_option("--psi-std,--psi", sim.psi_std,
                   "between-site effect SD in scaling units");
  csim->add_option("--seed", sim.seed, "generator seed");
  csim->add_option("--treat-prob", sim.treat_prob,
                   "treatment assignment probability");
  csim->add_flag("--consistency-variant", sim.consistency_variant,
                 "unit error variances (estimator-consistency protocol)");
  csim->add_option("--out", sim.out, "output directory (or LRE_OUT_DIR)");

  FitArgs fit;
  auto* cfit = app.add_subcommand("fit",
                                  "Estimate per-site effects on a dataset");
  cfit->add_option("--data", fit.data, "individual records CSV")->required();
  cfit->add_option("--sites", fit.sites, "site covariates CSV")->required();
  cfit->add_option("--strategy", fit.strategy, "estimation strategy");
  cfit->add_option("--truth", fit.truth,
                   "simulation truth CSV (me_adj_x_u only)");
  cfit->add_option("--out", fit.out, "output directory (or LRE_OUT_DIR)");

  StudyArgs study;
  auto* cstudy = app.add_subcommand("study", "Run the Monte Carlo study");
  cstudy->add_option("--scenario", study.scenarios, "scenarios to include");
  cstudy->add_option("--psi-std,--psi", study.psi, "psi grid values");
  cstudy->add_option("--J", study.J, "sites per size setting (repeatable)");
  cstudy->add_option("--n-range", study.n_ranges,
                     "size range LO:HI per --J (repeatable)");
  cstudy->add_option("--strategy", study.strategies,
                     "strategies to include (default: all)");
  cstudy->add_option("--replications", study.replications,
                     "replications per cell");
  cstudy->add_option("--seed", study.seed, "master seed");
  cstudy->add_option("--jobs", study.jobs, "worker threads");
  cstudy->add_flag("--per-site", study.per_site,
                   "also write per_site.csv (raw estimates)");
  cstudy->add_flag("--resume", study.resume,
                   "reuse completed cell checkpoints");
  cstudy->add_flag("--consistency-grid", study.consistency_grid,
                   "run the single-dataset estimator-consistency grid");
  cstudy->add_option("--n-bar", study.n_bar,
                     "per-site size for --consistency-grid (repeatable)");
  cstudy->add_option("--datasets-per-cell", study.datasets_per_cell,
                     "datasets per consistency cell");
  cstudy->add_option("--max-individuals", study.max_individuals,
                     "skip consistency cells larger than this");
  cstudy->add_option("--out", study.out, "output directory (or LRE_OUT_DIR)");

  ReportArgs report;
  auto* creport = app.add_subcommand("report",
                                     "Summarize a study's summary.csv");
  creport->add_option("--summary", report.summary, "summary.csv path")
      ->required();
  creport->add_option("--out", report.out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (csim->parsed()) return run_simulate(sim, invocation);
    if (cfit->parsed()) return run_fit(fit, invocation);
    if (cstudy->parsed()) return run_study_cmd(study, invocation);
    if (creport->parsed()) return run_report(report, invocation);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
