#pragma once
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lre/eb.hpp"
#include "lre/lmm.hpp"
#include "lre/simgen.hpp"
#include "lre/trial_data.hpp"
#include "lre/types.hpp"

namespace lre {

// Candidate estimation strategies for the local (per-site) relative
// effectiveness theta_j.
//
//   itt          raw mean difference ybar1 - ybar0 per site
//   itt_adj      per-site OLS of y on (1, z, x), coefficient on z
//   me           mixed model, intercept-only design
//   me_adj_x     mixed model with site covariate main effects and their
//                treatment interactions
//   me_adj_x_y0  me_adj_x plus the raw control mean as a regressor
//                (deliberately noisy: kept as the errors-in-variables foil)
//   twostep      step 1 shrinks the control means to eta0*; step 2 uses
//                eta0* as a regressor and reports the EB slope deviation
//   me_adj_x_u   infeasible benchmark adjusting the true unobserved site
//                means; requires simulation truth
//
// Mixed strategies center their estimates to mean zero across sites; the
// two raw strategies do not.
enum class StrategyId {
  itt,
  itt_adj,
  me,
  me_adj_x,
  me_adj_x_y0,
  twostep,
  me_adj_x_u,
};

const char* strategy_name(StrategyId s);
std::optional<StrategyId> parse_strategy(const std::string& name);
std::vector<StrategyId> all_strategies();
bool strategy_needs_truth(StrategyId s);    // me_adj_x_u only
bool strategy_needs_records(StrategyId s);  // itt_adj only
bool strategy_is_centered(StrategyId s);    // the five mixed strategies

struct LreEstimate {
  std::string site_id;
  double point = 0.0;
  double post_var = 0.0;  // meaningful only when has_post_var
  bool has_post_var = false;
  StrategyId strategy = StrategyId::itt;
};

struct StrategyResult {
  StrategyId strategy = StrategyId::itt;
  std::vector<LreEstimate> estimates;  // one per site, site order
  bool converged = true;
  std::string warning;     // set when converged is false or fallbacks occur
  int fallback_sites = 0;  // itt_adj sites with a rank-deficient design
  int clamped_post_vars = 0;
  // Fit details for mixed strategies (shared to keep copies cheap).
  std::shared_ptr<const RandomSlopeFit> slope_fit;
  std::shared_ptr<const RandomInterceptFit> intercept_fit;  // twostep step 1
  std::vector<EbSlope> eb;         // per site, mixed strategies
  std::vector<EbIntercept> eb0;    // per site, twostep step 1
  VectorXd points() const;
};

// truth must be present exactly when the strategy requires it. The
// record-level overload serves every strategy; the sufficient-statistic
// overload serves all but itt_adj.
StrategyResult estimate_lre(StrategyId strategy, const TrialDataset& data,
                            const SyntheticTruth* truth = nullptr);
StrategyResult estimate_lre(StrategyId strategy,
                            const std::vector<SiteSufficientStats>& stats,
                            const MatrixXd& site_covariates,
                            const SyntheticTruth* truth = nullptr);

// Exhaustive finite-population check of the identification argument: sites
// that agree exactly on (phi_x, distribution of Y(0)) form a matched group,
// and the site effect is recovered as the site ITT minus the group mean ITT.
// Distributions compare exactly, entry by entry, in listed order.
struct OracleSite {
  VectorXd phi_x;
  std::vector<std::pair<double, double>> y0_dist;  // (value, probability)
  double site_itt = 0.0;
  double theta = 0.0;
};

struct OracleWorld {
  std::vector<OracleSite> sites;
};

// Returns per-site residual (recovered effect minus constructed theta_j);
// all zeros exactly when each matched group's site ITT decomposes as a
// group-level shift plus theta. Throws std::invalid_argument when a matched
// group's thetas do not sum to zero or a distribution is not a pmf.
std::vector<double> oracle_identification_check(const OracleWorld& world);

}  // namespace lre
