#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrce/types.hpp"

namespace mrce::chan {

/// On-disk dataset header. Delays are stored in fractional tap units;
/// frf_offset records which row parity holds the full-resolution chains.
struct DatasetHeader {
  std::int32_t num_antennas = 0;
  std::int32_t num_subcarriers = 0;
  std::int32_t num_paths = 0;
  std::int64_t num_samples = 0;
  std::uint64_t seed = 0;
  std::int32_t frf_offset = kDefaultFrfOffset;
};

struct Dataset {
  DatasetHeader header;
  std::vector<Sample> samples;
};

void write_dataset(const std::string& path, const DatasetHeader& header,
                   const std::vector<Sample>& samples);
Dataset read_dataset(const std::string& path);

inline DatasetHeader header_for(const DatasetSpec& spec) {
  return {spec.num_antennas, spec.num_subcarriers, spec.num_paths,
          spec.num_samples, spec.rng_seed,         spec.frf_offset};
}

}  // namespace mrce::chan
