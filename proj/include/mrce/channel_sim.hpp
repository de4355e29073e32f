#pragma once

#include <random>
#include <vector>

#include "mrce/types.hpp"

namespace mrce::chan {

/// ULA steering vector, element m = e^{j m mu} with mu = 2*pi*spacing*cos(theta).
CVec steering_vector(double theta_rad, double spacing_wl, int num_antennas);

/// Per-subcarrier response h(n) = sum_i amp_i e^{-j 2 pi n tau_i / N_sub} a(theta_i),
/// n 0-based, delays in fractional tap units.
CVec channel_subcarrier(const MultipathParams& params, int n, const ArrayGeometry& geom,
                        int num_subcarriers);

/// Full channel matrix [M x N_sub], column n = channel_subcarrier(n).
ChannelMatrix full_channel(const MultipathParams& params, const ArrayGeometry& geom,
                           int num_subcarriers);

/// Rows {offset, offset+2, ...} of a full matrix (the full-resolution chains).
CMat subsample_rows(const CMat& full, int frf_offset);

/// Half-array measurement: full-resolution rows of the full channel plus AWGN at
/// snr_db. `geom_constrained` describes the half array (M' = M/2, d' = 2d); the
/// underlying full array is reconstructed from it.
ChannelMatrix constrained_channel(const MultipathParams& params,
                                  const ArrayGeometry& geom_constrained, int num_subcarriers,
                                  double snr_db, std::mt19937_64& rng,
                                  int frf_offset = kDefaultFrfOffset);

/// Zero-expansion: measured rows back at their array positions, others zero.
ChannelMatrix expand_zero_rows(const CMat& constrained, int frf_offset = kDefaultFrfOffset);

/// H + Z, per-entry circular complex Gaussian with variance mean|H|^2 / 10^(snr/10).
ChannelMatrix add_awgn(const ChannelMatrix& h, double snr_db, std::mt19937_64& rng);
CMat add_awgn(const CMat& h, double snr_db, std::mt19937_64& rng);

/// Draw one sample's multipath parameters: delays U[0, tau_max_taps] pairwise
/// distinct, |amp| Rayleigh with uniform phase, DoA U[doa_min, doa_max].
MultipathParams draw_params(const DatasetSpec& spec, std::mt19937_64& rng);

/// Deterministic dataset: sample i uses the RNG stream derive_seed(seed, i).
std::vector<Sample> sample_dataset(const DatasetSpec& spec);

}  // namespace mrce::chan
