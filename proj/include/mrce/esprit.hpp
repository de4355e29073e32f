#pragma once

#include <numbers>
#include <utility>
#include <vector>

#include "mrce/types.hpp"

namespace mrce::esprit {

/// Dense 3-way array, index (i,j,k) at i + d1*(j + d2*k) (mode 1 fastest).
template <typename Scalar>
struct Tensor3T {
  std::vector<Scalar> data;
  int d1 = 0, d2 = 0, d3 = 0;

  Tensor3T() = default;
  Tensor3T(int a, int b, int c) : data(static_cast<std::size_t>(a) * b * c), d1(a), d2(b), d3(c) {}

  Scalar& at(int i, int j, int k) { return data[i + static_cast<std::size_t>(d1) * (j + static_cast<std::size_t>(d2) * k)]; }
  const Scalar& at(int i, int j, int k) const { return data[i + static_cast<std::size_t>(d1) * (j + static_cast<std::size_t>(d2) * k)]; }
};

using Tensor3c = Tensor3T<cd>;
using Tensor3r = Tensor3T<double>;

/// Spatially/spectrally smoothed snapshots: slice s holds columns
/// [s*stride, s*stride + n_freq) of the half-array measurement.
struct SmoothedTensor {
  Tensor3c data;  // [M' x n_freq x n_snapshots]
  int n_freq = 0;
  int n_snapshots = 0;
  int stride = 0;
};

SmoothedTensor build_smoothed_tensor(const CMat& h_c, int n_freq, int stride);

/// Forward-backward extended, left-Pi-real transformed tensor. Exact inputs
/// give an exactly real result; imag_residual reports the discarded part.
struct RealTensor {
  Tensor3r data;  // [M' x n_freq x 2*n_snapshots]
  double imag_residual = 0.0;
};

RealTensor unitary_transform(const SmoothedTensor& t);

enum class SubspaceMethod { HOSVD, MatrixSVD };

/// Dominant L-dimensional joint signal subspace of the real tensor; rows are
/// flattened (spatial, frequency) with the spatial index fastest.
Eigen::MatrixXd signal_subspace(const Tensor3r& t, int num_sources, SubspaceMethod method);

/// Least-squares solutions of the real shift-invariance equations in both
/// modes; eigenvalues are tan(mu/2) / tan(nu/2) of the sources.
struct ShiftInvariance {
  Eigen::MatrixXd psi_spatial;
  Eigen::MatrixXd psi_freq;
  double residual = 0.0;
};

ShiftInvariance shift_invariance_solve(const Eigen::MatrixXd& basis, int dim_spatial,
                                       int dim_freq);

/// Eigendecomposition of psi_spatial + j*psi_freq pairs the two frequency
/// sets automatically; returns (mu, nu) sorted by nu.
std::vector<std::pair<double, double>> joint_pairing(const Eigen::MatrixXd& psi_spatial,
                                                     const Eigen::MatrixXd& psi_freq);

struct AngleDelay {
  double theta_rad = 0.0;
  double delay_tap = 0.0;
};

/// Map spatial/frequency harmonics to physical parameters. The spatial
/// frequency of the half array (spacing > lambda/2) is aliased; the branch is
/// chosen so theta lands in the DoA prior.
AngleDelay params_from_freqs(double mu, double nu, double spacing_wl, int n_sub,
                             double doa_min_rad = 0.0,
                             double doa_max_rad = std::numbers::pi / 4);

/// Least-squares amplitudes on the measured-row steering/delay basis; the
/// result is in full-array convention (row offset phase included).
CVec amplitudes_ls(const CMat& h_c, const std::vector<AngleDelay>& paths,
                   const ArrayGeometry& full_geom, int frf_offset);

struct EspritEstimate {
  std::vector<MultipathComponent> triplets;
  double residual = 0.0;
};

struct EspritConfig {
  // Delay accuracy is limited by the window aperture (~n_sub/n_freq taps of
  // Rayleigh resolution), so the window must stay a large fraction of the band.
  int n_freq = 256;
  int stride = 128;
  SubspaceMethod method = SubspaceMethod::HOSVD;
  double doa_min_rad = 0.0;
  double doa_max_rad = std::numbers::pi / 4;
};

/// Full parametric baseline: smoothing, unitary transform, subspace,
/// invariance equations, pairing, physical mapping, amplitude fit.
EspritEstimate estimate_channel(const CMat& h_c, int num_paths, const EspritConfig& cfg,
                                double full_spacing_wl = 0.5, int frf_offset = kDefaultFrfOffset);

/// Evaluate the estimated triplets on the full array.
ChannelMatrix reconstruct_channel(const EspritEstimate& est, const ArrayGeometry& full_geom,
                                  int n_sub);

}  // namespace mrce::esprit
