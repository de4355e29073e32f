#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace mrce {

using cd = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

/// Thrown for invalid configuration or violated preconditions (CLI exit code 2).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a computation degenerates (NaN divergence, rank loss; CLI exit code 3).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Uniform linear array: antenna count and element spacing in carrier wavelengths.
struct ArrayGeometry {
  int num_antennas = 0;
  double spacing_wl = 0.5;

  void validate() const {
    if (num_antennas < 1) throw ConfigError("ArrayGeometry: need at least one antenna");
    if (!(spacing_wl > 0)) throw ConfigError("ArrayGeometry: spacing must be positive");
  }
};

/// One propagation path. Delay is in fractional subcarrier-tap units; the
/// physical-seconds mapping lives in DatasetSpec (tau_max_s <-> tau_max_taps).
struct MultipathComponent {
  double delay_tap = 0.0;
  cd amp{0.0, 0.0};
  double doa_rad = 0.0;
};

struct MultipathParams {
  std::vector<MultipathComponent> components;

  int num_paths() const { return static_cast<int>(components.size()); }
};

enum class ChannelKind { Desired, Constrained, Expanded, NoisyExpanded, Generated };

/// Complex channel matrix, antennas x subcarriers.
struct ChannelMatrix {
  CMat entries;
  ChannelKind kind = ChannelKind::Desired;

  int rows() const { return static_cast<int>(entries.rows()); }
  int cols() const { return static_cast<int>(entries.cols()); }
};

/// Row parity holding the full-resolution chains. 1 means 0-based odd rows
/// {1,3,...} are measured and even rows are the constrained (zeroed) ones,
/// matching a 1-based "even antennas are full resolution" numbering.
inline constexpr int kDefaultFrfOffset = 1;

struct DatasetSpec {
  int num_samples = 0;
  int num_paths = 0;       // L, multipath components per sample
  int num_antennas = 8;    // M
  int num_subcarriers = 1200;
  double spacing_wl = 0.5;
  double tau_max_s = 163e-9;
  double tau_max_taps = 24.0;  // tau_max_s maps onto this many delay taps
  double doa_min_rad = 0.0;
  double doa_max_rad = 0.785398163397448279;  // pi/4
  double snr_db = 20.0;
  double rayleigh_scale = 0.70710678118654752;  // unit mean-square |amp|
  std::uint64_t rng_seed = 0;
  int frf_offset = kDefaultFrfOffset;

  void validate() const;

  ArrayGeometry geometry() const { return {num_antennas, spacing_wl}; }
  double taps_per_second() const { return tau_max_taps / tau_max_s; }
};

struct Sample {
  MultipathParams params;
  CMat channel;  // desired H, [M x N_sub]
};

}  // namespace mrce
