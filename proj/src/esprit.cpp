#include "mrce/esprit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "mrce/channel_sim.hpp"

namespace mrce::esprit {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

using Eigen::MatrixXd;
using Eigen::VectorXd;
using CMap = Eigen::Map<const Eigen::MatrixXcd>;
using RMap = Eigen::Map<const Eigen::MatrixXd>;

Tensor3c mode1_product(const Tensor3c& t, const CMat& a) {
  Tensor3c out(static_cast<int>(a.rows()), t.d2, t.d3);
  CMap in(t.data.data(), t.d1, static_cast<Eigen::Index>(t.d2) * t.d3);
  Eigen::Map<Eigen::MatrixXcd> o(out.data.data(), a.rows(),
                                 static_cast<Eigen::Index>(t.d2) * t.d3);
  o.noalias() = a * in;
  return out;
}

Tensor3c mode2_product(const Tensor3c& t, const CMat& a) {
  Tensor3c out(t.d1, static_cast<int>(a.rows()), t.d3);
  const Eigen::Index slice = static_cast<Eigen::Index>(t.d1) * t.d2;
  const Eigen::Index oslice = static_cast<Eigen::Index>(t.d1) * a.rows();
  for (int k = 0; k < t.d3; ++k) {
    CMap in(t.data.data() + k * slice, t.d1, t.d2);
    Eigen::Map<Eigen::MatrixXcd> o(out.data.data() + k * oslice, t.d1, a.rows());
    o.noalias() = in * a.transpose();
  }
  return out;
}

Tensor3c mode3_product(const Tensor3c& t, const CMat& a) {
  Tensor3c out(t.d1, t.d2, static_cast<int>(a.rows()));
  CMap in(t.data.data(), static_cast<Eigen::Index>(t.d1) * t.d2, t.d3);
  Eigen::Map<Eigen::MatrixXcd> o(out.data.data(), static_cast<Eigen::Index>(t.d1) * t.d2,
                                 a.rows());
  o.noalias() = in * a.transpose();
  return out;
}

/// Left-Pi-real unitary matrix: Pi * conj(Q) = Q.
CMat left_pi_real_q(int p) {
  const int k = p / 2;
  CMat q = CMat::Zero(p, p);
  const double s = 1.0 / std::numbers::sqrt2;
  const cd j(0.0, 1.0);
  for (int i = 0; i < k; ++i) {
    const int top = i, bot = p - 1 - i;  // exchange block pairs row p-1-i with column i
    const int left = i, right = p - k + i;
    q(top, left) = s;
    q(top, right) = j * s;
    q(bot, left) = s;
    q(bot, right) = -j * s;
  }
  if (p % 2 == 1) q(k, k) = 1.0;
  return q;
}

MatrixXd kron(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      out.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = a(r, c) * b;
  return out;
}

/// Real selection pair: K1 = 2 Re(Q_{p-1}^H J2 Q_p), K2 = 2 Im(...), with J2
/// the last-(p-1)-rows selector. Eigenvalues of the induced invariance are
/// tan(mu/2).
void selection_pair(int p, MatrixXd& k1, MatrixXd& k2) {
  const CMat qp = left_pi_real_q(p);
  const CMat qsub = left_pi_real_q(p - 1);
  CMat j2 = CMat::Zero(p - 1, p);
  j2.rightCols(p - 1).setIdentity();
  const CMat m = qsub.adjoint() * j2 * qp;
  k1 = 2.0 * m.real();
  k2 = 2.0 * m.imag();
}

MatrixXd thin_u(const MatrixXd& m, int rank) {
  Eigen::BDCSVD<MatrixXd> svd(m, Eigen::ComputeThinU);
  return svd.matrixU().leftCols(rank);
}

}  // namespace

SmoothedTensor build_smoothed_tensor(const CMat& h_c, int n_freq, int stride) {
  const int n_sub = static_cast<int>(h_c.cols());
  const int m = static_cast<int>(h_c.rows());
  if (n_freq < 2 || n_freq > n_sub)
    throw ConfigError("build_smoothed_tensor: n_freq must lie in [2, n_sub]");
  if (stride < 1) throw ConfigError("build_smoothed_tensor: stride must be >= 1");
  const int n_snap = (n_sub - n_freq) / stride + 1;
  SmoothedTensor t;
  t.data = Tensor3c(m, n_freq, n_snap);
  t.n_freq = n_freq;
  t.n_snapshots = n_snap;
  t.stride = stride;
  for (int s = 0; s < n_snap; ++s)
    for (int f = 0; f < n_freq; ++f)
      for (int i = 0; i < m; ++i) t.data.at(i, f, s) = h_c(i, s * stride + f);
  return t;
}

RealTensor unitary_transform(const SmoothedTensor& t) {
  const Tensor3c& x = t.data;
  const int d1 = x.d1, d2 = x.d2, d3 = x.d3;
  Tensor3c z(d1, d2, 2 * d3);
  for (int k = 0; k < d3; ++k)
    for (int j = 0; j < d2; ++j)
      for (int i = 0; i < d1; ++i) {
        z.at(i, j, k) = x.at(i, j, k);
        z.at(i, j, d3 + k) = std::conj(x.at(d1 - 1 - i, d2 - 1 - j, d3 - 1 - k));
      }
  const CMat q1h = left_pi_real_q(d1).adjoint();
  const CMat q2h = left_pi_real_q(d2).adjoint();
  const CMat q3h = left_pi_real_q(2 * d3).adjoint();
  const Tensor3c transformed = mode3_product(mode2_product(mode1_product(z, q1h), q2h), q3h);

  RealTensor out;
  out.data = Tensor3r(d1, d2, 2 * d3);
  double imag_sq = 0.0, total_sq = 0.0;
  for (std::size_t idx = 0; idx < transformed.data.size(); ++idx) {
    const cd v = transformed.data[idx];
    out.data.data[idx] = v.real();
    imag_sq += v.imag() * v.imag();
    total_sq += std::norm(v);
  }
  out.imag_residual = total_sq > 0.0 ? std::sqrt(imag_sq / total_sq) : 0.0;
  return out;
}

Eigen::MatrixXd signal_subspace(const Tensor3r& t, int num_sources, SubspaceMethod method) {
  const int d1 = t.d1, d2 = t.d2, d3 = t.d3;
  const Eigen::Index joint = static_cast<Eigen::Index>(d1) * d2;
  if (num_sources < 1) throw ConfigError("signal_subspace: need at least one source");
  if (num_sources > d3 || num_sources > joint)
    throw ConfigError("signal_subspace: source count exceeds the smoothed tensor capacity");

  RMap b(t.data.data(), joint, d3);  // transposed mode-3 unfolding
  Eigen::BDCSVD<MatrixXd> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (method == SubspaceMethod::MatrixSVD) return svd.matrixU().leftCols(num_sources);

  const int r1 = std::min(num_sources, d1);
  const int r2 = std::min(num_sources, d2);
  RMap unfold1(t.data.data(), d1, static_cast<Eigen::Index>(d2) * d3);
  MatrixXd unfold2(d2, static_cast<Eigen::Index>(d1) * d3);
  for (int k = 0; k < d3; ++k)
    for (int i = 0; i < d1; ++i)
      for (int j = 0; j < d2; ++j)
        unfold2(j, i + static_cast<Eigen::Index>(d1) * k) = t.at(i, j, k);
  const MatrixXd u1 = thin_u(unfold1, r1);
  const MatrixXd u2 = thin_u(unfold2, r2);
  const MatrixXd u3 = svd.matrixV().leftCols(num_sources);

  const MatrixXd w = kron(u2, u1);  // spatial index fastest
  const MatrixXd projected = w * (w.transpose() * (b * u3));
  Eigen::HouseholderQR<MatrixXd> qr(projected);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(joint, num_sources);
  return q;
}

ShiftInvariance shift_invariance_solve(const Eigen::MatrixXd& basis, int dim_spatial,
                                       int dim_freq) {
  if (basis.rows() != static_cast<Eigen::Index>(dim_spatial) * dim_freq)
    throw ConfigError("shift_invariance_solve: basis rows do not match mode dims");
  MatrixXd k1s, k2s, k1f, k2f;
  selection_pair(dim_spatial, k1s, k2s);
  selection_pair(dim_freq, k1f, k2f);
  const MatrixXd eye_s = MatrixXd::Identity(dim_spatial, dim_spatial);
  const MatrixXd eye_f = MatrixXd::Identity(dim_freq, dim_freq);

  ShiftInvariance out;
  double worst = 0.0;
  auto solve_mode = [&](const MatrixXd& lift1, const MatrixXd& lift2) {
    const MatrixXd a = lift1 * basis;
    const MatrixXd rhs = lift2 * basis;
    Eigen::BDCSVD<MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) < 1e-12 * sv(0)) {
      std::ostringstream msg;
      msg << "shift_invariance_solve: rank-deficient system, condition "
          << sv(0) / std::max(sv(sv.size() - 1), 1e-300);
      throw NumericalError(msg.str());
    }
    const MatrixXd psi = svd.solve(rhs);
    worst = std::max(worst, (a * psi - rhs).norm());
    return psi;
  };
  out.psi_spatial = solve_mode(kron(eye_f, k1s), kron(eye_f, k2s));
  out.psi_freq = solve_mode(kron(k1f, eye_s), kron(k2f, eye_s));
  out.residual = worst;
  return out;
}

std::vector<std::pair<double, double>> joint_pairing(const Eigen::MatrixXd& psi_spatial,
                                                     const Eigen::MatrixXd& psi_freq) {
  const CMat joint = psi_spatial.cast<cd>() + cd(0.0, 1.0) * psi_freq.cast<cd>();
  std::vector<std::pair<double, double>> pairs;
  Eigen::ComplexEigenSolver<CMat> eig(joint, false);
  if (eig.info() == Eigen::Success) {
    for (Eigen::Index i = 0; i < joint.rows(); ++i) {
      const cd lambda = eig.eigenvalues()(i);
      pairs.emplace_back(2.0 * std::atan(lambda.real()), 2.0 * std::atan(lambda.imag()));
    }
  } else {
    // Sequential diagonalization fallback: eigenbasis of the spatial operator,
    // frequency eigenvalues read off the projected diagonal.
    Eigen::EigenSolver<MatrixXd> es(psi_spatial);
    if (es.info() != Eigen::Success)
      throw NumericalError("joint_pairing: eigendecomposition failed in both paths");
    const MatrixXd v = es.pseudoEigenvectors();
    const MatrixXd dmu = es.pseudoEigenvalueMatrix();
    const MatrixXd dnu = v.partialPivLu().solve(psi_freq * v);
    for (Eigen::Index i = 0; i < v.cols(); ++i)
      pairs.emplace_back(2.0 * std::atan(dmu(i, i)), 2.0 * std::atan(dnu(i, i)));
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  return pairs;
}

AngleDelay params_from_freqs(double mu, double nu, double spacing_wl, int n_sub,
                             double doa_min_rad, double doa_max_rad) {
  AngleDelay out;
  out.delay_tap = -nu * n_sub / kTwoPi;
  const double cos_hi = std::cos(doa_min_rad);
  const double cos_lo = std::cos(doa_max_rad);
  const double denom = kTwoPi * spacing_wl;
  double best_c = 0.0, best_dist = std::numeric_limits<double>::infinity();
  for (int k = -3; k <= 3; ++k) {
    const double c = (mu + kTwoPi * k) / denom;
    const double dist = c < cos_lo ? cos_lo - c : (c > cos_hi ? c - cos_hi : 0.0);
    if (dist < best_dist) {
      best_dist = dist;
      best_c = c;
    }
  }
  constexpr double kBranchSlack = 0.05;  // tolerated out-of-prior distance (cos units)
  if (best_dist > kBranchSlack) {
    std::ostringstream msg;
    msg << "params_from_freqs: no aliasing branch lands in the DoA prior (mu=" << mu
        << ", nearest cos candidates " << best_c << " vs [" << cos_lo << ", " << cos_hi << "])";
    throw NumericalError(msg.str());
  }
  const double c = std::clamp(best_c, cos_lo, cos_hi);
  out.theta_rad = std::acos(std::clamp(c, -1.0, 1.0));
  return out;
}

CVec amplitudes_ls(const CMat& h_c, const std::vector<AngleDelay>& paths,
                   const ArrayGeometry& full_geom, int frf_offset) {
  const int rows = static_cast<int>(h_c.rows());
  const int n_sub = static_cast<int>(h_c.cols());
  const int l = static_cast<int>(paths.size());
  if (l < 1) throw ConfigError("amplitudes_ls: no paths");
  if (frf_offset != 0 && frf_offset != 1) throw ConfigError("amplitudes_ls: bad frf_offset");
  CMat basis(static_cast<Eigen::Index>(rows) * n_sub, l);
  for (int i = 0; i < l; ++i) {
    const double mu = kTwoPi * full_geom.spacing_wl * std::cos(paths[i].theta_rad);
    const double nu = -kTwoPi * paths[i].delay_tap / n_sub;
    for (int n = 0; n < n_sub; ++n) {
      const cd ramp = std::polar(1.0, nu * n);
      for (int r = 0; r < rows; ++r)
        basis(r + static_cast<Eigen::Index>(rows) * n, i) =
            std::polar(1.0, mu * (2 * r + frf_offset)) * ramp;
    }
  }
  const Eigen::Map<const CVec> target(h_c.data(), h_c.size());
  Eigen::BDCSVD<CMat> svd(basis, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) < 1e-12 * sv(0)) {
    std::ostringstream msg;
    msg << "amplitudes_ls: model matrix ill-conditioned, condition "
        << sv(0) / std::max(sv(sv.size() - 1), 1e-300);
    throw NumericalError(msg.str());
  }
  return svd.solve(CVec(target));
}

EspritEstimate estimate_channel(const CMat& h_c, int num_paths, const EspritConfig& cfg,
                                double full_spacing_wl, int frf_offset) {
  const SmoothedTensor t = build_smoothed_tensor(h_c, cfg.n_freq, cfg.stride);
  const RealTensor real = unitary_transform(t);
  const MatrixXd basis = signal_subspace(real.data, num_paths, cfg.method);
  const ShiftInvariance inv =
      shift_invariance_solve(basis, static_cast<int>(h_c.rows()), cfg.n_freq);
  const auto pairs = joint_pairing(inv.psi_spatial, inv.psi_freq);

  const double half_spacing = 2.0 * full_spacing_wl;
  std::vector<AngleDelay> angle_delays;
  angle_delays.reserve(pairs.size());
  for (const auto& [mu, nu] : pairs)
    angle_delays.push_back(params_from_freqs(mu, nu, half_spacing,
                                             static_cast<int>(h_c.cols()), cfg.doa_min_rad,
                                             cfg.doa_max_rad));

  const ArrayGeometry full_geom{2 * static_cast<int>(h_c.rows()), full_spacing_wl};
  const CVec amps = amplitudes_ls(h_c, angle_delays, full_geom, frf_offset);

  EspritEstimate est;
  est.triplets.resize(angle_delays.size());
  for (std::size_t i = 0; i < angle_delays.size(); ++i)
    est.triplets[i] = {angle_delays[i].delay_tap, amps[static_cast<Eigen::Index>(i)],
                       angle_delays[i].theta_rad};
  const CMat recon_c =
      chan::subsample_rows(reconstruct_channel(est, full_geom, static_cast<int>(h_c.cols())).entries,
                           frf_offset);
  est.residual = (recon_c - h_c).norm() / h_c.norm();
  return est;
}

ChannelMatrix reconstruct_channel(const EspritEstimate& est, const ArrayGeometry& full_geom,
                                  int n_sub) {
  MultipathParams p;
  p.components = est.triplets;
  ChannelMatrix m = chan::full_channel(p, full_geom, n_sub);
  m.kind = ChannelKind::Generated;
  return m;
}

}  // namespace mrce::esprit
