#include "lre/simgen.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "lre/metrics.hpp"

namespace lre {

void GeneratorConfig::validate() const {
  if (scenario != 1 && scenario != 2) {
    throw std::invalid_argument("scenario must be 1 or 2");
  }
  if (J < 2) throw std::invalid_argument("J must be >= 2");
  if (n_low < 1 || n_low > n_high) {
    throw std::invalid_argument("need 1 <= n_low <= n_high");
  }
  if (psi_std < 0.0) throw std::invalid_argument("psi_std must be >= 0");
  if (treat_prob <= 0.0 || treat_prob >= 1.0) {
    throw std::invalid_argument("treat_prob must be in (0, 1)");
  }
}

double GeneratorConfig::sigma() const {
  // Within-site variance of Y(0): individual coefficients squared plus the
  // error variance (site-level terms shift means only).
  const double coef = scenario == 1
                          ? 120.0 * 120.0 + 100.0 * 100.0 + 60.0 * 60.0 +
                                50.0 * 50.0
                          : 120.0 * 120.0 + 100.0 * 100.0 + 78.0 * 78.0;
  return std::sqrt(coef + y0_error_var());
}

SyntheticTruth draw_truth(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();
  SyntheticTruth t;
  const int J = config.J;
  t.sigma = config.sigma();
  const double psi = config.psi_std * t.sigma;
  const double mu_sd = std::sqrt(0.1);

  t.theta.resize(J);
  t.delta.resize(J);
  t.site_itt.resize(J);
  t.mu_x1.resize(J);
  t.mu_x2.resize(J);
  t.mu_u1.resize(J);
  t.mu_u2.resize(J);
  t.mu_y0.resize(J);
  t.n.resize(J);

  Rng rng(derive_seed(seed, 0, 0));
  for (int j = 0; j < J; ++j) {
    t.mu_x1[j] = mu_sd * rng.normal();
    t.mu_x2[j] = mu_sd * rng.normal();
    t.mu_u1[j] = mu_sd * rng.normal();
    t.mu_u2[j] = mu_sd * rng.normal();
    t.n[j] = rng.uniform_int(config.n_low, config.n_high);
    t.theta[j] = psi * rng.normal();

    t.delta[j] = 13.0 - 70.0 * t.mu_x1[j] + 70.0 * t.mu_x2[j] -
                 80.0 * t.mu_u1[j] + 90.0 * t.mu_u2[j] + t.theta[j];
    t.site_itt[j] = t.delta[j] + 4.0 * t.mu_x1[j] + 2.5 * t.mu_x2[j] -
                    2.0 * t.mu_u1[j] - 1.5 * t.mu_u2[j];
    t.mu_y0[j] =
        config.scenario == 1
            ? 197.0 + 140.0 * t.mu_x1[j] - 130.0 * t.mu_x2[j] +
                  80.0 * t.mu_u1[j] - 70.0 * t.mu_u2[j]
            : 197.0 + 140.0 * t.mu_x1[j] - 130.0 * t.mu_x2[j] +
                  106.0 * t.mu_u1[j];
  }
  if (J >= 3) t.true_tier = classify_tiers(t.theta);
  return t;
}

namespace {

// Draws one site's records or sufficient statistics; the two consumers share
// this routine so their draw sequences cannot diverge.
template <class EmitRecord>
long draw_site(const GeneratorConfig& config, const SyntheticTruth& truth,
               std::uint64_t rep_seed, int j, EmitRecord&& emit) {
  const long n = truth.n[j];
  std::vector<int> z(n);
  long redraws = 0;
  Rng assign_rng(derive_seed(rep_seed, 2, static_cast<std::uint64_t>(j)));
  for (;;) {
    long n1 = 0;
    for (long i = 0; i < n; ++i) {
      z[i] = assign_rng.bernoulli(config.treat_prob) ? 1 : 0;
      n1 += z[i];
    }
    if (n1 > 0 && n1 < n) break;
    ++redraws;
  }

  const double y0_err_sd = std::sqrt(config.y0_error_var());
  const double d_err_sd = std::sqrt(config.delta_error_var());
  Rng rng(derive_seed(rep_seed, 1, static_cast<std::uint64_t>(j)));
  for (long i = 0; i < n; ++i) {
    const double x1 = truth.mu_x1[j] + rng.normal();
    const double x2 = truth.mu_x2[j] + rng.normal();
    const double u1 = truth.mu_u1[j] + rng.normal();
    const double u2 = truth.mu_u2[j] + rng.normal();
    const double eps_y = y0_err_sd * rng.normal();
    const double eps_d = d_err_sd * rng.normal();

    const double y0 =
        config.scenario == 1
            ? 197.0 + 120.0 * x1 - 100.0 * x2 + 60.0 * u1 - 50.0 * u2 +
                  20.0 * truth.mu_x1[j] - 30.0 * truth.mu_x2[j] +
                  20.0 * truth.mu_u1[j] - 20.0 * truth.mu_u2[j] + eps_y
            : 197.0 + 120.0 * x1 - 100.0 * x2 + 78.0 * u1 +
                  20.0 * truth.mu_x1[j] - 30.0 * truth.mu_x2[j] +
                  28.0 * truth.mu_u1[j] + eps_y;
    const double delta_ij = truth.delta[j] + 4.0 * x1 + 2.5 * x2 - 2.0 * u1 -
                            1.5 * u2 + eps_d;
    const double y = z[i] == 1 ? y0 + delta_ij : y0;
    emit(z[i], y, x1, x2);
  }
  return redraws;
}

std::string site_label(int j) { return "s" + std::to_string(j + 1); }

}  // namespace

DatasetDraw draw_dataset(const GeneratorConfig& config,
                         const SyntheticTruth& truth, std::uint64_t rep_seed) {
  config.validate();
  const int J = config.J;
  long total = 0;
  for (int j = 0; j < J; ++j) total += truth.n[j];

  std::vector<IndividualRecord> records;
  records.reserve(total);
  std::vector<SiteCovariates> covs(J);
  long redraws = 0;
  for (int j = 0; j < J; ++j) {
    covs[j].site_id = site_label(j);
    covs[j].phi_x = {truth.mu_x1[j], truth.mu_x2[j]};
    redraws += draw_site(config, truth, rep_seed, j,
                         [&](int z, double y, double x1, double x2) {
                           records.push_back(IndividualRecord{
                               covs[j].site_id, z, y, {x1, x2}});
                         });
  }
  return DatasetDraw{
      TrialDataset::create(std::move(records), std::move(covs)), redraws};
}

StatsDraw draw_dataset_stats(const GeneratorConfig& config,
                             const SyntheticTruth& truth,
                             std::uint64_t rep_seed) {
  config.validate();
  const int J = config.J;
  StatsDraw out;
  out.stats.resize(J);
  for (int j = 0; j < J; ++j) {
    ArmAccumulator a0, a1;
    out.assignment_redraws +=
        draw_site(config, truth, rep_seed, j,
                  [&](int z, double y, double, double) {
                    (z == 0 ? a0 : a1).add(y);
                  });
    auto& st = out.stats[j];
    st.site_id = site_label(j);
    st.n0 = a0.n;
    st.n1 = a1.n;
    st.ybar0 = a0.mean;
    st.ybar1 = a1.mean;
    st.ss0 = a0.ss;
    st.ss1 = a1.ss;
  }
  return out;
}

GeneratedTrial generate(const GeneratorConfig& config) {
  SyntheticTruth truth = draw_truth(config, config.seed);
  DatasetDraw d = draw_dataset(config, truth, config.seed);
  return GeneratedTrial{std::move(d.dataset), std::move(truth),
                        d.assignment_redraws};
}

GeneratedTrial generate_consistency_variant(GeneratorConfig config) {
  config.consistency_variant = true;
  return generate(config);
}

}  // namespace lre
