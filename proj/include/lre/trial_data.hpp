#pragma once
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lre/types.hpp"

namespace lre {

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IndividualRecord {
  std::string site_id;
  int z = 0;  // treatment indicator, 0 or 1
  double y = 0.0;
  std::vector<double> x;  // individual-level covariates, same length dataset-wide
};

struct SiteCovariates {
  std::string site_id;
  std::vector<double> phi_x;  // site-level covariates, same length across sites
};

// Immutable after construction; `create` enforces the dataset invariants:
// z in {0,1}, finite y, uniform covariate lengths, every record's site known,
// every site with ≥1 control and ≥1 treated record, J ≥ 2. Site indices are
// contiguous 0..J-1 in site-covariate order.
class TrialDataset {
 public:
  static TrialDataset create(std::vector<IndividualRecord> records,
                             std::vector<SiteCovariates> site_covariates);

  int num_sites() const { return static_cast<int>(site_covariates_.size()); }
  int num_individual_covariates() const { return x_dim_; }
  int num_site_covariates() const { return phi_dim_; }
  const std::vector<IndividualRecord>& records() const { return records_; }
  const std::vector<SiteCovariates>& site_covariates() const {
    return site_covariates_;
  }
  int site_index(const std::string& site_id) const;
  const std::string& site_id(int index) const {
    return site_covariates_[index].site_id;
  }

  // J x m matrix of site-level covariates, row = site index.
  MatrixXd site_covariate_matrix() const;

 private:
  TrialDataset() = default;
  std::vector<IndividualRecord> records_;
  std::vector<SiteCovariates> site_covariates_;
  std::map<std::string, int> site_index_;
  int x_dim_ = 0;
  int phi_dim_ = 0;
};

struct SiteSufficientStats {
  std::string site_id;
  long n0 = 0;
  long n1 = 0;
  double ybar0 = 0.0;
  double ybar1 = 0.0;
  double ss0 = 0.0;  // within-arm sum of squared deviations
  double ss1 = 0.0;
};

// One entry per site, in site-index order; means and sums of squares are
// accumulated with Welford updates in record order.
std::vector<SiteSufficientStats> summarize_sites(const TrialDataset& dataset);

// Per-site sample means of the individual-level covariates (J x k), row =
// site index; complements the site covariates for robustness experiments.
MatrixXd site_x_means(const TrialDataset& dataset);

struct ScalingUnit {
  double value = 0.0;  // average across sites of within-site control-arm SD
  std::vector<std::string> singleton_control_sites;  // n0 = 1, contribute SD 0
};

ScalingUnit scaling_unit(const TrialDataset& dataset);
ScalingUnit scaling_unit(const std::vector<SiteSufficientStats>& stats);

// Single-arm Welford accumulator; shared by the record path and the
// streaming generator so both produce bitwise-identical statistics.
struct ArmAccumulator {
  long n = 0;
  double mean = 0.0;
  double ss = 0.0;
  void add(double y) {
    n += 1;
    const double d = y - mean;
    mean += d / static_cast<double>(n);
    ss += d * (y - mean);
  }
};

}  // namespace lre
