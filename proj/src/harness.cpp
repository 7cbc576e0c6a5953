#include "lre/harness.hpp"

#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "lre/csv.hpp"
#include "lre/version.hpp"

namespace lre {

namespace fs = std::filesystem;
using nlohmann::json;

void StudyConfig::validate() const {
  if (scenarios.empty() || psi_grid.empty() || size_settings.empty() ||
      strategies.empty()) {
    throw std::invalid_argument("study grids must be nonempty");
  }
  for (int s : scenarios) {
    if (s != 1 && s != 2) {
      throw std::invalid_argument("scenario must be 1 or 2");
    }
  }
  for (double psi : psi_grid) {
    if (!(psi >= 0.0) || !(psi <= 0.35)) {
      throw std::invalid_argument("psi_std must lie in [0, 0.35]");
    }
  }
  for (const auto& sz : size_settings) {
    if (sz.J < 6 || sz.n_low < 1 || sz.n_high < sz.n_low) {
      throw std::invalid_argument("size setting needs J >= 6 and "
                                  "1 <= n_low <= n_high");
    }
  }
  if (replications < 1) throw std::invalid_argument("replications must be >= 1");
  if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
}

std::string CellKey::label() const {
  std::ostringstream os;
  os << 's' << scenario << "_psi" << format_double(psi_std) << "_J" << size.J
     << "_n" << size.n_low << '-' << size.n_high;
  return os.str();
}

std::uint64_t cell_seed(std::uint64_t master_seed, const CellKey& key) {
  std::uint64_t h =
      derive_seed(master_seed, 11, static_cast<std::uint64_t>(key.scenario));
  h = derive_seed(h, 12, std::bit_cast<std::uint64_t>(key.psi_std));
  h = derive_seed(h, 13, static_cast<std::uint64_t>(key.size.J));
  h = derive_seed(h, 14,
                  static_cast<std::uint64_t>(key.size.n_low) * 1000003ull +
                      static_cast<std::uint64_t>(key.size.n_high));
  return h;
}

namespace {

std::string strategy_list(const std::vector<StrategyId>& strategies) {
  std::string s;
  for (size_t i = 0; i < strategies.size(); ++i) {
    if (i) s += ',';
    s += strategy_name(strategies[i]);
  }
  return s;
}

constexpr const char* kSummaryHeader =
    "strategy,mean_bias,sd_bias,avg_emp_var,variance_ratio,avg_rmse,"
    "rmse_reduction,sce_rate,mce_rate,replications";

std::string summary_row(const CellSummary& row) {
  std::ostringstream os;
  os << row.strategy << ',' << format_double(row.mean_bias) << ','
     << format_double(row.sd_bias) << ',' << format_double(row.avg_emp_var)
     << ',' << format_double(row.variance_ratio) << ','
     << format_double(row.avg_rmse) << ',' << format_double(row.rmse_reduction)
     << ',' << format_double(row.sce_rate) << ','
     << format_double(row.mce_rate) << ',' << row.replications;
  return os.str();
}

std::string checkpoint_fingerprint(const StudyConfig& config,
                                   const CellKey& key, std::uint64_t seed) {
  std::ostringstream os;
  os << "# cell " << key.label() << " seed " << seed << " reps "
     << config.replications << " master " << config.master_seed
     << " strategies " << strategy_list(config.strategies);
  return os.str();
}

std::string checkpoint_path(const StudyConfig& config, const CellKey& key) {
  return (fs::path(config.out_dir) / "cells" / (key.label() + ".csv"))
      .string();
}

void write_checkpoint(const StudyConfig& config, const CellResult& cell) {
  const fs::path dir = fs::path(config.out_dir) / "cells";
  fs::create_directories(dir);
  const std::string path = checkpoint_path(config, cell.key);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out << checkpoint_fingerprint(config, cell.key, cell.seed) << '\n'
        << kSummaryHeader << '\n';
    for (const auto& row : cell.rows) out << summary_row(row) << '\n';
    out << "# meta wall_seconds=" << format_double(cell.wall_seconds)
        << " nonconverged=" << cell.nonconverged_reps
        << " flagged=" << (cell.flagged ? 1 : 0)
        << " redraws=" << cell.assignment_redraws
        << " clamped=" << cell.clamped_post_vars
        << " fallbacks=" << cell.fallback_sites << '\n'
        << "# complete\n";
  }
  fs::rename(tmp, path);
}

// A finished checkpoint must match the current configuration exactly; a
// file with a completion marker that does not parse or does not match is a
// hard error naming the cell. A file without the marker (interrupted run)
// is recomputed.
bool try_load_checkpoint(const StudyConfig& config, const CellKey& key,
                         std::uint64_t seed, CellResult& cell) {
  const std::string path = checkpoint_path(config, key);
  std::ifstream in(path);
  if (!in) return false;
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.empty() || lines.back() != "# complete") return false;
  auto corrupt = [&](const std::string& why) {
    throw std::runtime_error("checkpoint for cell " + key.label() + " at " +
                             path + " is unusable: " + why);
  };
  if (lines[0] != checkpoint_fingerprint(config, key, seed)) {
    corrupt("it was produced with different settings");
  }
  if (lines.size() != config.strategies.size() + 4 ||
      lines[1] != kSummaryHeader) {
    corrupt("unexpected layout");
  }
  cell.rows.clear();
  for (size_t i = 0; i < config.strategies.size(); ++i) {
    const auto f = split_csv_line(lines[2 + i]);
    if (f.size() != 10 || f[0] != strategy_name(config.strategies[i])) {
      corrupt("row for strategy " +
              std::string(strategy_name(config.strategies[i])) +
              " is missing or out of order");
    }
    CellSummary row;
    row.strategy = f[0];
    try {
      row.mean_bias = std::stod(f[1]);
      row.sd_bias = std::stod(f[2]);
      row.avg_emp_var = std::stod(f[3]);
      row.variance_ratio = std::stod(f[4]);
      row.avg_rmse = std::stod(f[5]);
      row.rmse_reduction = std::stod(f[6]);
      row.sce_rate = std::stod(f[7]);
      row.mce_rate = std::stod(f[8]);
      row.replications = std::stol(f[9]);
    } catch (const std::exception&) {
      corrupt("unparseable numeric field");
    }
    cell.rows.push_back(std::move(row));
  }
  const std::string& meta = lines[lines.size() - 2];
  long flagged = 0;
  if (std::sscanf(meta.c_str(),
                  "# meta wall_seconds=%lf nonconverged=%ld flagged=%ld "
                  "redraws=%ld clamped=%ld fallbacks=%ld",
                  &cell.wall_seconds, &cell.nonconverged_reps, &flagged,
                  &cell.assignment_redraws, &cell.clamped_post_vars,
                  &cell.fallback_sites) != 6) {
    corrupt("unparseable meta line");
  }
  cell.flagged = flagged != 0;
  cell.key = key;
  cell.seed = seed;
  cell.from_checkpoint = true;
  return true;
}

struct RepSlot {
  std::vector<VectorXd> points;  // one vector per strategy
  bool nonconverged = false;
  long redraws = 0;
  long clamped = 0;
  long fallbacks = 0;
};

CellResult run_cell(const StudyConfig& config, const CellKey& key,
                    std::ofstream* per_site_out, const LogFn& log) {
  const auto t0 = std::chrono::steady_clock::now();
  CellResult cell;
  cell.key = key;
  cell.seed = cell_seed(config.master_seed, key);

  GeneratorConfig gcfg;
  gcfg.scenario = key.scenario;
  gcfg.J = static_cast<int>(key.size.J);
  gcfg.n_low = key.size.n_low;
  gcfg.n_high = key.size.n_high;
  gcfg.psi_std = key.psi_std;
  gcfg.seed = cell.seed;
  gcfg.validate();
  const SyntheticTruth truth = draw_truth(gcfg, cell.seed);

  const int R = config.replications;
  const size_t S = config.strategies.size();
  std::vector<RepSlot> slots(static_cast<size_t>(R));

  std::atomic<int> next{0};
  std::atomic<int> done{0};
  std::mutex err_mut;
  std::string first_error;
  std::mutex log_mut;

  auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= R) return;
      try {
        RepSlot& slot = slots[static_cast<size_t>(r)];
        slot.points.resize(S);
        const std::uint64_t rep_seed =
            derive_seed(cell.seed, 3, static_cast<std::uint64_t>(r));
        const DatasetDraw draw = draw_dataset(gcfg, truth, rep_seed);
        slot.redraws = draw.assignment_redraws;
        const auto stats = summarize_sites(draw.dataset);
        const MatrixXd phi = draw.dataset.site_covariate_matrix();
        for (size_t si = 0; si < S; ++si) {
          const StrategyId s = config.strategies[si];
          const StrategyResult res =
              strategy_needs_records(s)
                  ? estimate_lre(s, draw.dataset)
                  : estimate_lre(s, stats, phi,
                                 strategy_needs_truth(s) ? &truth : nullptr);
          slot.points[si] = res.points();
          if (!res.converged) slot.nonconverged = true;
          slot.clamped += res.clamped_post_vars;
          slot.fallbacks += res.fallback_sites;
        }
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(err_mut);
        if (first_error.empty()) {
          first_error = "cell " + key.label() + " replication " +
                        std::to_string(r) + ": " + e.what();
        }
        return;
      }
      const int d = done.fetch_add(1) + 1;
      if (log && d % std::max(1, R / 4) == 0 && d < R) {
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          t0)
                .count();
        if (elapsed > 120.0) {
          std::lock_guard<std::mutex> lk(log_mut);
          log("  " + key.label() + ": " + std::to_string(d) + "/" +
              std::to_string(R) + " replications");
        }
      }
    }
  };

  const int nthreads = std::min(config.jobs, R);
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(nthreads));
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (!first_error.empty()) throw std::runtime_error(first_error);

  // Fixed-order reduction: replication index then strategy order.
  const long J = key.size.J;
  const VectorXd theta =
      Eigen::Map<const VectorXd>(truth.theta.data(), J);
  for (const auto& slot : slots) {
    if (slot.nonconverged) ++cell.nonconverged_reps;
    cell.assignment_redraws += slot.redraws;
    cell.clamped_post_vars += slot.clamped;
    cell.fallback_sites += slot.fallbacks;
  }
  cell.flagged = cell.nonconverged_reps * 20 > R;  // above 5%

  long naive_idx = -1;
  for (size_t si = 0; si < S; ++si) {
    if (config.strategies[si] == StrategyId::itt) naive_idx = static_cast<long>(si);
  }
  std::vector<CellSummary> rows(S);
  for (size_t si = 0; si < S; ++si) {
    MatrixXd est(R, J);
    for (int r = 0; r < R; ++r) {
      est.row(r) = slots[static_cast<size_t>(r)].points[si].transpose();
    }
    rows[si] = summarize_cell(strategy_name(config.strategies[si]), est, theta,
                              truth.true_tier, truth.sigma);
  }
  if (naive_idx >= 0) {
    const CellSummary naive = rows[static_cast<size_t>(naive_idx)];
    for (auto& row : rows) finalize_ratios(row, naive);
  }
  cell.rows = std::move(rows);

  if (per_site_out) {
    for (size_t si = 0; si < S; ++si) {
      for (int r = 0; r < R; ++r) {
        const VectorXd& pts = slots[static_cast<size_t>(r)].points[si];
        for (long j = 0; j < J; ++j) {
          *per_site_out << key.scenario << ',' << format_double(key.psi_std)
                        << ',' << key.size.J << ',' << key.size.n_low << ','
                        << key.size.n_high << ','
                        << strategy_name(config.strategies[si]) << ',' << r
                        << ",s" << (j + 1) << ',' << format_double(pts[j])
                        << ','
                        << format_double(truth.theta[static_cast<size_t>(j)])
                        << '\n';
        }
      }
    }
  }

  cell.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return cell;
}

}  // namespace

StudySummary run_study(const StudyConfig& config, const LogFn& log) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  StudySummary summary;
  summary.config = config;

  std::ofstream per_site_file;
  std::ofstream* per_site_out = nullptr;
  if (!config.out_dir.empty()) {
    fs::create_directories(config.out_dir);
    if (config.per_site) {
      per_site_file.open(fs::path(config.out_dir) / "per_site.csv");
      if (!per_site_file) {
        throw std::runtime_error("cannot write per_site.csv in " +
                                 config.out_dir);
      }
      per_site_file << "scenario,psi_std,J,n_low,n_high,strategy,replication,"
                       "site,point,theta\n";
      per_site_out = &per_site_file;
    }
  }

  for (int scenario : config.scenarios) {
    for (double psi : config.psi_grid) {
      for (const auto& size : config.size_settings) {
        const CellKey key{scenario, psi, size};
        CellResult cell;
        const std::uint64_t seed = cell_seed(config.master_seed, key);
        const bool loaded =
            config.resume && !config.out_dir.empty() &&
            try_load_checkpoint(config, key, seed, cell);
        if (!loaded) {
          cell = run_cell(config, key, per_site_out, log);
          if (!config.out_dir.empty()) write_checkpoint(config, cell);
        }
        if (log) {
          std::ostringstream os;
          os << key.label() << (cell.from_checkpoint ? " (checkpoint)" : "")
             << " done in " << format_double(cell.wall_seconds) << "s";
          if (cell.flagged) {
            os << " [warning: " << cell.nonconverged_reps
               << " non-convergent replications]";
          }
          log(os.str());
        }
        summary.cells.push_back(std::move(cell));
      }
    }
  }
  summary.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  if (!config.out_dir.empty()) {
    write_summary_csv((fs::path(config.out_dir) / "summary.csv").string(),
                      summary);
  }
  return summary;
}

void write_summary_csv(const std::string& path, const StudySummary& summary) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "scenario,psi_std,J,n_low,n_high," << kSummaryHeader << '\n';
  for (const auto& cell : summary.cells) {
    for (const auto& row : cell.rows) {
      out << cell.key.scenario << ',' << format_double(cell.key.psi_std) << ','
          << cell.key.size.J << ',' << cell.key.size.n_low << ','
          << cell.key.size.n_high << ',' << summary_row(row) << '\n';
    }
  }
}

void write_provenance_json(const std::string& path,
                           const StudySummary& summary,
                           const std::string& invocation) {
  const StudyConfig& c = summary.config;
  json j;
  j["tool"] = "lre";
  j["version"] = kVersion;
  j["invocation"] = invocation;
  j["truth_policy"] = "site-level truth drawn once per cell";
  j["config"]["scenarios"] = c.scenarios;
  j["config"]["psi_grid"] = c.psi_grid;
  json sizes = json::array();
  for (const auto& s : c.size_settings) {
    sizes.push_back({{"J", s.J}, {"n_low", s.n_low}, {"n_high", s.n_high}});
  }
  j["config"]["size_settings"] = sizes;
  j["config"]["replications"] = c.replications;
  std::vector<std::string> strat;
  for (StrategyId s : c.strategies) strat.emplace_back(strategy_name(s));
  j["config"]["strategies"] = strat;
  j["config"]["master_seed"] = c.master_seed;
  j["config"]["jobs"] = c.jobs;
  j["config"]["per_site"] = c.per_site;
  j["config"]["resume"] = c.resume;
  j["wall_seconds"] = summary.wall_seconds;
  json cells = json::array();
  for (const auto& cell : summary.cells) {
    cells.push_back({{"cell", cell.key.label()},
                     {"seed", cell.seed},
                     {"wall_seconds", cell.wall_seconds},
                     {"nonconverged_replications", cell.nonconverged_reps},
                     {"flagged_nonconvergence", cell.flagged},
                     {"assignment_redraws", cell.assignment_redraws},
                     {"clamped_posterior_variances", cell.clamped_post_vars},
                     {"itt_adj_fallback_sites", cell.fallback_sites},
                     {"from_checkpoint", cell.from_checkpoint}});
  }
  j["cells"] = cells;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

void ConsistencyGridConfig::validate() const {
  if (J_values.empty() || n_values.empty() || psi_grid.empty()) {
    throw std::invalid_argument("grid dimensions must be nonempty");
  }
  if (scenario != 1 && scenario != 2) {
    throw std::invalid_argument("scenario must be 1 or 2");
  }
  for (long J : J_values) {
    if (J < 6) throw std::invalid_argument("J must be >= 6");
  }
  for (long n : n_values) {
    if (n < 2) throw std::invalid_argument("n must be >= 2");
  }
  for (double psi : psi_grid) {
    if (!(psi >= 0.0) || !(psi <= 0.35)) {
      throw std::invalid_argument("psi_std must lie in [0, 0.35]");
    }
  }
  if (datasets_per_cell < 1) {
    throw std::invalid_argument("datasets_per_cell must be >= 1");
  }
}

std::vector<ConsistencyCell> run_consistency_grid(
    const ConsistencyGridConfig& config, const LogFn& log) {
  config.validate();
  std::vector<ConsistencyCell> cells;
  for (long J : config.J_values) {
    for (long n : config.n_values) {
      for (double psi : config.psi_grid) {
        const auto t0 = std::chrono::steady_clock::now();
        ConsistencyCell cell;
        cell.J = J;
        cell.n_bar = n;
        cell.psi_std = psi;
        if (J * n > config.max_individuals) {
          cell.skipped = true;
          cell.note = "skipped; would draw " + std::to_string(J * n) +
                      " individuals per dataset";
          cells.push_back(std::move(cell));
          continue;
        }
        std::uint64_t h = derive_seed(config.master_seed, 21,
                                      static_cast<std::uint64_t>(J));
        h = derive_seed(h, 22, static_cast<std::uint64_t>(n));
        h = derive_seed(h, 23, std::bit_cast<std::uint64_t>(psi));

        GeneratorConfig gcfg;
        gcfg.scenario = config.scenario;
        gcfg.J = static_cast<int>(J);
        gcfg.n_low = n;
        gcfg.n_high = n;
        gcfg.psi_std = psi;
        gcfg.seed = h;
        gcfg.consistency_variant = true;
        gcfg.validate();
        const SyntheticTruth truth = draw_truth(gcfg, h);
        MatrixXd phi(J, 2);
        for (long j = 0; j < J; ++j) {
          phi(j, 0) = truth.mu_x1[static_cast<size_t>(j)];
          phi(j, 1) = truth.mu_x2[static_cast<size_t>(j)];
        }

        double avg_abs = 0.0, sd = 0.0;
        for (int ds = 0; ds < config.datasets_per_cell; ++ds) {
          const std::uint64_t rep_seed =
              derive_seed(h, 3, static_cast<std::uint64_t>(ds));
          const StatsDraw draw = draw_dataset_stats(gcfg, truth, rep_seed);
          const StrategyResult res =
              estimate_lre(StrategyId::twostep, draw.stats, phi);
          if (!res.converged && cell.note.empty()) {
            cell.note = "non-convergent fit";
          }
          VectorXd bias(J);
          for (long j = 0; j < J; ++j) {
            bias[j] = (res.estimates[static_cast<size_t>(j)].point -
                       truth.theta[static_cast<size_t>(j)]) /
                      truth.sigma;
          }
          avg_abs += bias.cwiseAbs().mean();
          const double mean = bias.mean();
          sd += std::sqrt((bias.array() - mean).square().sum() /
                          static_cast<double>(J - 1));
        }
        cell.datasets = config.datasets_per_cell;
        cell.avg_abs_bias = avg_abs / config.datasets_per_cell;
        cell.sd_bias = sd / config.datasets_per_cell;
        cell.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          t0)
                .count();
        if (log) {
          log("consistency J=" + std::to_string(J) + " n=" + std::to_string(n) +
              " psi=" + format_double(psi) + " done in " +
              format_double(cell.wall_seconds) + "s");
        }
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

void write_consistency_csv(const std::string& path,
                           const std::vector<ConsistencyCell>& cells) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "J,n_bar,psi_std,avg_abs_bias,sd_bias,datasets,skipped,note\n";
  for (const auto& c : cells) {
    out << c.J << ',' << c.n_bar << ',' << format_double(c.psi_std) << ','
        << format_double(c.avg_abs_bias) << ',' << format_double(c.sd_bias)
        << ',' << c.datasets << ',' << (c.skipped ? 1 : 0) << ',' << c.note
        << '\n';
  }
}

}  // namespace lre
