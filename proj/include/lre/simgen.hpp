#pragma once
#include <cstdint>
#include <vector>

#include "lre/rng.hpp"
#include "lre/trial_data.hpp"

namespace lre {

// Synthetic multisite-trial generator. The draw protocol is part of the
// external interface; datasets are reproducible bit-for-bit from the seed.
//
// Stream layout (all streams are mt19937_64 seeded via derive_seed):
//   truth stream   derive_seed(seed, 0, 0): per site j in order —
//                  mu_x1, mu_x2, mu_u1, mu_u2 (4 normals), n_j (uniform
//                  integer), theta_j (1 normal, drawn even when psi_std=0).
//   individuals    derive_seed(rep_seed, 1, j): per individual i in order —
//                  X1, X2, U1, U2, eps_y, eps_delta (6 normals).
//   assignment     derive_seed(rep_seed, 2, j): n_j Bernoulli draws; a site
//                  left with an empty arm redraws its whole assignment
//                  vector (the redraw count is reported).
struct GeneratorConfig {
  int scenario = 1;  // 1: comparability given (X, Y(0)) holds; 2: violated
  int J = 100;
  long n_low = 30;
  long n_high = 170;
  double psi_std = 0.1;  // between-site SD of theta as a fraction of sigma
  std::uint64_t seed = 1;
  double treat_prob = 0.5;
  bool consistency_variant = false;  // unit error variances in Y(0), delta

  void validate() const;
  double sigma() const;        // expected average within-site control-arm SD
  double y0_error_var() const { return consistency_variant ? 1.0 : 3000.0; }
  double delta_error_var() const { return consistency_variant ? 1.0 : 4.0; }
};

struct SyntheticTruth {
  std::vector<double> theta;    // true LRE, outcome units
  std::vector<double> delta;    // site-level effect before individual terms
  std::vector<double> site_itt; // true site ITT effect E[Y(1)-Y(0) | site]
  std::vector<double> mu_x1, mu_x2, mu_u1, mu_u2;
  std::vector<double> mu_y0;    // true site mean of Y(0)
  std::vector<long> n;          // site sizes, fixed with the truth
  std::vector<int> true_tier;   // 30/40/30 split on theta ranks
  double sigma = 0.0;
};

SyntheticTruth draw_truth(const GeneratorConfig& config, std::uint64_t seed);

struct DatasetDraw {
  TrialDataset dataset;
  long assignment_redraws = 0;
};

// Individual records carry observed covariates (X1, X2); site covariates are
// the true means (mu_x1, mu_x2). Site ids are "s1".."sJ" in truth order.
DatasetDraw draw_dataset(const GeneratorConfig& config,
                         const SyntheticTruth& truth, std::uint64_t rep_seed);

// Streaming variant: same draw sequence as draw_dataset, collapsed on the
// fly to per-site sufficient statistics (identical accumulation order, so
// results match summarize_sites(draw_dataset(...)) bitwise).
struct StatsDraw {
  std::vector<SiteSufficientStats> stats;
  long assignment_redraws = 0;
};

StatsDraw draw_dataset_stats(const GeneratorConfig& config,
                             const SyntheticTruth& truth,
                             std::uint64_t rep_seed);

struct GeneratedTrial {
  TrialDataset dataset;
  SyntheticTruth truth;
  long assignment_redraws = 0;
};

GeneratedTrial generate(const GeneratorConfig& config);

// Identical protocol with unit error variances on Y(0) and the individual
// effect, for the estimator-consistency grid.
GeneratedTrial generate_consistency_variant(GeneratorConfig config);

}  // namespace lre
