#include "mrce/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace mrce::eval {
namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double nse(const CMat& ref, const CMat& est) {
  const double denom = ref.squaredNorm();
  if (!(denom > 0.0)) throw NumericalError("nse: zero reference");
  return (ref - est).squaredNorm() / denom;
}

double nse(const CVec& ref, const CVec& est) {
  const double denom = ref.squaredNorm();
  if (!(denom > 0.0)) throw NumericalError("nse: zero reference");
  return (ref - est).squaredNorm() / denom;
}

std::vector<std::pair<double, double>> cdf_points(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  std::vector<std::pair<double, double>> points;
  points.reserve(values.size());
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    points.emplace_back(values[i], static_cast<double>(i + 1) / n);
  return points;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median: empty value list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

MethodSummary NseReport::summary(const std::string& method) const {
  const auto it = per_sample.find(method);
  if (it == per_sample.end() || it->second.empty())
    throw ConfigError("summary: unknown or empty method " + method);
  const auto& v = it->second;
  MethodSummary s;
  s.count = static_cast<int>(v.size());
  for (double x : v) s.mean += x;
  s.mean /= s.count;
  s.median = eval::median(v);
  double acc = 0.0;
  for (double x : v) acc += (x - s.mean) * (x - s.mean);
  s.std_dev = s.count > 1 ? std::sqrt(acc / (s.count - 1)) : 0.0;
  s.mean_db = 10.0 * std::log10(s.mean);
  return s;
}

void export_report(const NseReport& report, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create report directory: " + dir);

  std::size_t rows = 0;
  for (const auto& [name, values] : report.per_sample) rows = std::max(rows, values.size());
  for (const auto& [name, values] : report.per_sample)
    if (values.size() != rows)
      throw ConfigError("export_report: method " + name + " has a different sample count");

  {
    const std::string path = dir + "/nse_per_sample.csv";
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "sample";
    for (const auto& [name, values] : report.per_sample) os << "," << name;
    os << "\n";
    for (std::size_t i = 0; i < rows; ++i) {
      os << i;
      for (const auto& [name, values] : report.per_sample) os << "," << fmt(values[i]);
      os << "\n";
    }
  }

  for (const auto& [name, values] : report.per_sample) {
    const std::string path = dir + "/cdf_" + name + ".csv";
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "value,fraction\n";
    for (const auto& [v, f] : cdf_points(values)) os << fmt(v) << "," << fmt(f) << "\n";
  }

  {
    nlohmann::ordered_json j;
    for (const auto& [name, values] : report.per_sample) {
      const MethodSummary s = report.summary(name);
      j["methods"][name] = {{"count", s.count},
                            {"mean", s.mean},
                            {"median", s.median},
                            {"std", s.std_dev},
                            {"mean_db", s.mean_db}};
    }
    const std::string path = dir + "/summary.json";
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << j.dump(2) << "\n";
  }
}

}  // namespace mrce::eval
