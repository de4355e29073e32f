#include "mrce/dataset_io.hpp"

#include <cstring>
#include <fstream>

namespace mrce::chan {
namespace {

constexpr char kMagic[5] = {'M', 'R', 'C', 'E', '1'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw std::runtime_error("dataset file truncated");
  return v;
}

}  // namespace

void write_dataset(const std::string& path, const DatasetHeader& header,
                   const std::vector<Sample>& samples) {
  if (static_cast<std::int64_t>(samples.size()) != header.num_samples)
    throw ConfigError("write_dataset: sample count does not match header");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  put(os, header.num_antennas);
  put(os, header.num_subcarriers);
  put(os, header.num_paths);
  put(os, header.num_samples);
  put(os, header.seed);
  put(os, header.frf_offset);
  for (const auto& s : samples) {
    if (s.params.num_paths() != header.num_paths ||
        s.channel.rows() != header.num_antennas || s.channel.cols() != header.num_subcarriers)
      throw ConfigError("write_dataset: sample shape does not match header");
    for (const auto& c : s.params.components) {
      put(os, c.delay_tap);
      put(os, c.amp.real());
      put(os, c.amp.imag());
      put(os, c.doa_rad);
    }
    for (Eigen::Index r = 0; r < s.channel.rows(); ++r)
      for (Eigen::Index col = 0; col < s.channel.cols(); ++col) {
        put(os, s.channel(r, col).real());
        put(os, s.channel(r, col).imag());
      }
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset: " + path);
  char magic[5];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a channel dataset file: " + path);
  Dataset ds;
  ds.header.num_antennas = get<std::int32_t>(is);
  ds.header.num_subcarriers = get<std::int32_t>(is);
  ds.header.num_paths = get<std::int32_t>(is);
  ds.header.num_samples = get<std::int64_t>(is);
  ds.header.seed = get<std::uint64_t>(is);
  ds.header.frf_offset = get<std::int32_t>(is);
  if (ds.header.num_antennas < 1 || ds.header.num_subcarriers < 1 || ds.header.num_paths < 1 ||
      ds.header.num_samples < 0 || (ds.header.frf_offset != 0 && ds.header.frf_offset != 1))
    throw std::runtime_error("dataset header is corrupt: " + path);
  ds.samples.resize(ds.header.num_samples);
  for (auto& s : ds.samples) {
    s.params.components.resize(ds.header.num_paths);
    for (auto& c : s.params.components) {
      c.delay_tap = get<double>(is);
      const double re = get<double>(is);
      const double im = get<double>(is);
      c.amp = cd(re, im);
      c.doa_rad = get<double>(is);
    }
    s.channel.resize(ds.header.num_antennas, ds.header.num_subcarriers);
    for (Eigen::Index r = 0; r < s.channel.rows(); ++r)
      for (Eigen::Index col = 0; col < s.channel.cols(); ++col) {
        const double re = get<double>(is);
        const double im = get<double>(is);
        s.channel(r, col) = cd(re, im);
      }
  }
  return ds;
}

}  // namespace mrce::chan
