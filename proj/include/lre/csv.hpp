#pragma once
#include <string>
#include <vector>

#include "lre/trial_data.hpp"

namespace lre {

// Column-name schema for the individual-level CSV. Empty x_cols means
// "every column other than site/z/y, in file order".
struct CsvSchema {
  std::string site = "site";
  std::string z = "z";
  std::string y = "y";
  std::vector<std::string> x_cols;
};

struct LoadResult {
  TrialDataset dataset;
  std::vector<long> rejected_rows;  // 1-based line numbers with missing y or z
};

// Individual CSV: `site,z,y[,x1,...,xk]`; site CSV: `site,phi1,...,phim`.
// UTF-8, comma-delimited, `.` decimal point, header row required.
// Rows with an empty y or z field are rejected and reported by line number;
// any other malformed content raises ParseError with its line number.
LoadResult load_csv(const std::string& data_path,
                    const std::string& site_covariate_path,
                    const CsvSchema& schema = CsvSchema{});

void write_csv(const TrialDataset& dataset, const std::string& data_path,
               const std::string& site_covariate_path);

// Minimal CSV plumbing shared by the loaders and report/summary writers.
std::vector<std::string> split_csv_line(const std::string& line);
std::vector<std::vector<std::string>> read_csv_table(const std::string& path);
double parse_double(const std::string& field, long line_no);
std::string format_double(double v);  // shortest round-trip-exact form

}  // namespace lre
