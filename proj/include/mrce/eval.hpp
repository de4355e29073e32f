#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mrce/types.hpp"

namespace mrce::eval {

/// Normalized squared error ||ref - est||_F^2 / ||ref||_F^2.
double nse(const CMat& ref, const CMat& est);
double nse(const CVec& ref, const CVec& est);

/// Empirical CDF: sorted (value, fraction) with fraction = rank/n.
std::vector<std::pair<double, double>> cdf_points(std::vector<double> values);

double median(std::vector<double> values);

struct MethodSummary {
  int count = 0;
  double mean = 0.0;
  double median = 0.0;
  double std_dev = 0.0;
  double mean_db = 0.0;  // 10 log10(mean)
};

/// Per-sample NSE values keyed by method name.
struct NseReport {
  std::map<std::string, std::vector<double>> per_sample;

  MethodSummary summary(const std::string& method) const;
};

/// Writes nse_per_sample.csv, cdf_<method>.csv and summary.json into dir.
/// Byte-stable for identical reports.
void export_report(const NseReport& report, const std::string& dir);

}  // namespace mrce::eval
