#include "lre/trial_data.hpp"

#include <cmath>

namespace lre {

TrialDataset TrialDataset::create(std::vector<IndividualRecord> records,
                                  std::vector<SiteCovariates> site_covariates) {
  TrialDataset d;
  if (site_covariates.size() < 2) {
    throw ValidationError("dataset needs at least 2 sites, got " +
                          std::to_string(site_covariates.size()));
  }
  d.phi_dim_ = static_cast<int>(site_covariates.front().phi_x.size());
  for (std::size_t j = 0; j < site_covariates.size(); ++j) {
    const auto& sc = site_covariates[j];
    if (static_cast<int>(sc.phi_x.size()) != d.phi_dim_) {
      throw SchemaError("site covariate length mismatch at site '" +
                        sc.site_id + "'");
    }
    for (double v : sc.phi_x) {
      if (!std::isfinite(v)) {
        throw ValidationError("non-finite site covariate at site '" +
                              sc.site_id + "'");
      }
    }
    if (!d.site_index_.emplace(sc.site_id, static_cast<int>(j)).second) {
      throw ValidationError("duplicate site id '" + sc.site_id +
                            "' in site covariates");
    }
  }

  d.x_dim_ = records.empty() ? 0 : static_cast<int>(records.front().x.size());
  std::vector<long> n0(site_covariates.size(), 0), n1(site_covariates.size(), 0);
  for (const auto& r : records) {
    if (r.z != 0 && r.z != 1) {
      throw ValidationError("treatment indicator must be 0 or 1 at site '" +
                            r.site_id + "'");
    }
    if (!std::isfinite(r.y)) {
      throw ValidationError("non-finite outcome at site '" + r.site_id + "'");
    }
    if (static_cast<int>(r.x.size()) != d.x_dim_) {
      throw SchemaError("individual covariate length mismatch at site '" +
                        r.site_id + "'");
    }
    for (double v : r.x) {
      if (!std::isfinite(v)) {
        throw ValidationError("non-finite covariate at site '" + r.site_id +
                              "'");
      }
    }
    auto it = d.site_index_.find(r.site_id);
    if (it == d.site_index_.end()) {
      throw ValidationError("record references unknown site '" + r.site_id +
                            "'");
    }
    (r.z == 0 ? n0 : n1)[it->second] += 1;
  }
  for (std::size_t j = 0; j < site_covariates.size(); ++j) {
    if (n0[j] < 1 || n1[j] < 1) {
      throw ValidationError("site '" + site_covariates[j].site_id +
                            "' is missing " +
                            (n0[j] < 1 ? std::string("a control")
                                       : std::string("a treated")) +
                            " arm");
    }
  }

  d.records_ = std::move(records);
  d.site_covariates_ = std::move(site_covariates);
  return d;
}

int TrialDataset::site_index(const std::string& site_id) const {
  auto it = site_index_.find(site_id);
  if (it == site_index_.end()) {
    throw ValidationError("unknown site '" + site_id + "'");
  }
  return it->second;
}

MatrixXd TrialDataset::site_covariate_matrix() const {
  MatrixXd phi(num_sites(), phi_dim_);
  for (int j = 0; j < num_sites(); ++j) {
    for (int k = 0; k < phi_dim_; ++k) {
      phi(j, k) = site_covariates_[j].phi_x[k];
    }
  }
  return phi;
}

std::vector<SiteSufficientStats> summarize_sites(const TrialDataset& dataset) {
  const int J = dataset.num_sites();
  std::vector<ArmAccumulator> a0(J), a1(J);
  for (const auto& r : dataset.records()) {
    const int j = dataset.site_index(r.site_id);
    (r.z == 0 ? a0[j] : a1[j]).add(r.y);
  }
  std::vector<SiteSufficientStats> out(J);
  for (int j = 0; j < J; ++j) {
    out[j].site_id = dataset.site_id(j);
    out[j].n0 = a0[j].n;
    out[j].n1 = a1[j].n;
    out[j].ybar0 = a0[j].mean;
    out[j].ybar1 = a1[j].mean;
    out[j].ss0 = a0[j].ss;
    out[j].ss1 = a1[j].ss;
  }
  return out;
}

MatrixXd site_x_means(const TrialDataset& dataset) {
  const int J = dataset.num_sites();
  const int k = dataset.num_individual_covariates();
  MatrixXd sums = MatrixXd::Zero(J, k);
  VectorXd counts = VectorXd::Zero(J);
  for (const auto& r : dataset.records()) {
    const int j = dataset.site_index(r.site_id);
    for (int c = 0; c < k; ++c) sums(j, c) += r.x[c];
    counts(j) += 1.0;
  }
  for (int j = 0; j < J; ++j) sums.row(j) /= counts(j);
  return sums;
}

ScalingUnit scaling_unit(const std::vector<SiteSufficientStats>& stats) {
  ScalingUnit s;
  double total = 0.0;
  for (const auto& st : stats) {
    if (st.n0 <= 1) {
      s.singleton_control_sites.push_back(st.site_id);
    } else {
      total += std::sqrt(st.ss0 / static_cast<double>(st.n0 - 1));
    }
  }
  s.value = stats.empty() ? 0.0 : total / static_cast<double>(stats.size());
  return s;
}

ScalingUnit scaling_unit(const TrialDataset& dataset) {
  return scaling_unit(summarize_sites(dataset));
}

}  // namespace lre
