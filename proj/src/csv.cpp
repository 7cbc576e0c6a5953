#include "lre/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>

namespace lre {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::vector<std::string>> read_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() && in.peek() == EOF) break;  // trailing newline
    rows.push_back(split_csv_line(line));
  }
  if (rows.empty()) throw ParseError("'" + path + "' is empty");
  return rows;
}

double parse_double(const std::string& field, long line_no) {
  double v = 0.0;
  const char* b = field.data();
  const char* e = b + field.size();
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) {
    throw ParseError("line " + std::to_string(line_no) +
                     ": cannot parse number '" + field + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    double back = 0.0;
    auto res = std::from_chars(buf, buf + std::char_traits<char>::length(buf), back);
    if (res.ec == std::errc() && back == v) break;
  }
  return buf;
}

namespace {

long find_column(const std::vector<std::string>& header, const std::string& name,
                 const std::string& path) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw SchemaError("'" + path + "' has no column '" + name + "'");
  }
  return it - header.begin();
}

}  // namespace

LoadResult load_csv(const std::string& data_path,
                    const std::string& site_covariate_path,
                    const CsvSchema& schema) {
  // The site-covariate file has the fixed layout `site,phi1,...`; the schema
  // renames columns of the individual-level file only.
  const auto site_rows = read_csv_table(site_covariate_path);
  const auto& site_header = site_rows.front();
  const long site_col = find_column(site_header, "site", site_covariate_path);
  std::vector<SiteCovariates> site_covs;
  for (std::size_t i = 1; i < site_rows.size(); ++i) {
    const auto& row = site_rows[i];
    if (row.size() != site_header.size()) {
      throw ParseError("line " + std::to_string(i + 1) + " of '" +
                       site_covariate_path + "': expected " +
                       std::to_string(site_header.size()) + " fields, got " +
                       std::to_string(row.size()));
    }
    SiteCovariates sc;
    sc.site_id = row[site_col];
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (static_cast<long>(c) == site_col) continue;
      sc.phi_x.push_back(parse_double(row[c], static_cast<long>(i + 1)));
    }
    site_covs.push_back(std::move(sc));
  }

  const auto rows = read_csv_table(data_path);
  const auto& header = rows.front();
  const long c_site = find_column(header, schema.site, data_path);
  const long c_z = find_column(header, schema.z, data_path);
  const long c_y = find_column(header, schema.y, data_path);
  std::vector<long> x_cols;
  if (schema.x_cols.empty()) {
    for (long c = 0; c < static_cast<long>(header.size()); ++c) {
      if (c != c_site && c != c_z && c != c_y) x_cols.push_back(c);
    }
  } else {
    for (const auto& name : schema.x_cols) {
      x_cols.push_back(find_column(header, name, data_path));
    }
  }

  std::vector<long> rejected_rows;
  std::vector<IndividualRecord> records;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const long line_no = static_cast<long>(i + 1);
    const auto& row = rows[i];
    if (row.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + " of '" + data_path +
                       "': expected " + std::to_string(header.size()) +
                       " fields, got " + std::to_string(row.size()));
    }
    if (row[c_z].empty() || row[c_y].empty()) {
      rejected_rows.push_back(line_no);
      continue;
    }
    IndividualRecord r;
    r.site_id = row[c_site];
    const double zv = parse_double(row[c_z], line_no);
    if (zv != 0.0 && zv != 1.0) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": treatment indicator must be 0 or 1, got '" +
                       row[c_z] + "'");
    }
    r.z = static_cast<int>(zv);
    r.y = parse_double(row[c_y], line_no);
    for (long c : x_cols) {
      if (row[c].empty()) {
        throw ParseError("line " + std::to_string(line_no) +
                         ": missing covariate value");
      }
      r.x.push_back(parse_double(row[c], line_no));
    }
    records.push_back(std::move(r));
  }

  return LoadResult{
      TrialDataset::create(std::move(records), std::move(site_covs)),
      std::move(rejected_rows)};
}

void write_csv(const TrialDataset& dataset, const std::string& data_path,
               const std::string& site_covariate_path) {
  {
    std::ofstream out(data_path);
    if (!out) throw ParseError("cannot write '" + data_path + "'");
    out << "site,z,y";
    for (int k = 0; k < dataset.num_individual_covariates(); ++k) {
      out << ",x" << (k + 1);
    }
    out << "\n";
    for (const auto& r : dataset.records()) {
      out << r.site_id << ',' << r.z << ',' << format_double(r.y);
      for (double v : r.x) out << ',' << format_double(v);
      out << "\n";
    }
  }
  {
    std::ofstream out(site_covariate_path);
    if (!out) throw ParseError("cannot write '" + site_covariate_path + "'");
    out << "site";
    for (int k = 0; k < dataset.num_site_covariates(); ++k) {
      out << ",phi" << (k + 1);
    }
    out << "\n";
    for (const auto& sc : dataset.site_covariates()) {
      out << sc.site_id;
      for (double v : sc.phi_x) out << ',' << format_double(v);
      out << "\n";
    }
  }
}

}  // namespace lre
