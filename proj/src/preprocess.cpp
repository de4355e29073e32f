#include "mrce/preprocess.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "mrce/fft.hpp"
#include "mrce/rng.hpp"

namespace mrce::dsp {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double sign_pos_zero(double v) { return v >= 0.0 ? 1.0 : -1.0; }

}  // namespace

Stacked stack_reim(const CMat& h) { return {h.real(), h.imag()}; }

CMat unstack_reim(const Stacked& s) {
  if (s.re.rows() != s.im.rows() || s.re.cols() != s.im.cols())
    throw ConfigError("unstack_reim: slice shapes differ");
  CMat h(s.re.rows(), s.re.cols());
  h.real() = s.re;
  h.imag() = s.im;
  return h;
}

StackedChannel normalize_scale(const CMat& h) {
  return normalize_scale(h, std::sqrt(static_cast<double>(h.rows() * h.cols())));
}

StackedChannel normalize_scale(const CMat& h, double scale_factor) {
  const double norm = h.norm();
  if (!(norm > 0.0)) throw NumericalError("normalize_scale: zero matrix");
  const CMat scaled = h * (scale_factor / norm);
  return {stack_reim(scaled), {norm, scale_factor}};
}

CMat denormalize(const StackedChannel& s) {
  return unstack_reim(s.data) * (s.scale.frobenius_norm / s.scale.scale_factor);
}

CMat fft_rows(const CMat& h) {
  CMat out(h.rows(), h.cols());
  for (Eigen::Index r = 0; r < h.rows(); ++r)
    out.row(r) = fft_unitary(h.row(r).transpose()).transpose();
  return out;
}

CMat ifft_rows(const CMat& h) {
  CMat out(h.rows(), h.cols());
  for (Eigen::Index r = 0; r < h.rows(); ++r)
    out.row(r) = ifft_unitary(h.row(r).transpose()).transpose();
  return out;
}

ProfiledCIR profile(const CVec& cir_row, int oversample, int window, int window_offset,
                    CirSource source) {
  const int n = static_cast<int>(cir_row.size());
  if (oversample < 1) throw ConfigError("profile: oversample factor must be >= 1");
  const int total = oversample * n;
  if (window < 1 || window > total)
    throw ConfigError("profile: window must lie in [1, oversample * length]");
  CVec spectrum = fft_unitary(cir_row);
  CVec padded = CVec::Zero(total);
  padded.head(n) = spectrum;
  const CVec oversampled = ifft_unitary(padded) * std::sqrt(static_cast<double>(oversample));
  CVec taps(window);
  for (int k = 0; k < window; ++k) {
    const int idx = ((window_offset + k) % total + total) % total;
    taps[k] = oversampled[idx];
  }
  return {std::move(taps), source, window_offset, oversample};
}

MixingSequence gen_sequence(int length, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  CVec s(length);
  for (int k = 0; k < length; ++k) s[k] = std::polar(1.0, kTwoPi * u01(rng));
  return {std::move(s), seed};
}

ProfiledCIR apply_sequence(const ProfiledCIR& p, const MixingSequence& seq) {
  if (p.taps.size() != seq.s.size())
    throw ConfigError("apply_sequence: sequence length does not match tap count");
  const CVec mixed = ifft_unitary(fft_unitary(p.taps).cwiseProduct(seq.s));
  return {mixed, p.source, p.window_offset, p.oversample_factor};
}

CVec quantize_1bit(const CVec& x) {
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  CVec q(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k)
    q[k] = cd(sign_pos_zero(x[k].real()) * inv_sqrt2, sign_pos_zero(x[k].imag()) * inv_sqrt2);
  return q;
}

RVec phase_of(const CVec& x) {
  RVec p(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (x[k].real() == 0.0 && x[k].imag() == 0.0) {
      p[k] = 0.0;
      continue;
    }
    double a = std::arg(x[k]);
    if (a <= -std::numbers::pi) a = std::numbers::pi;
    p[k] = a;
  }
  return p;
}

CVec combine_mag_phase(const RVec& mag, const RVec& phase) {
  if (mag.size() != phase.size()) throw ConfigError("combine_mag_phase: length mismatch");
  CVec x(mag.size());
  for (Eigen::Index k = 0; k < mag.size(); ++k) x[k] = std::polar(mag[k], phase[k]);
  return x;
}

std::vector<AntennaChains> build_antenna_chains(const CMat& h_generated, const CMat& h_true,
                                                const CMat& noise,
                                                const LstmPreprocessConfig& cfg) {
  if (h_generated.rows() != h_true.rows() || h_generated.cols() != h_true.cols() ||
      noise.rows() != h_true.rows() || noise.cols() != h_true.cols())
    throw ConfigError("build_antenna_chains: matrix shapes differ");
  const MixingSequence seq = gen_sequence(cfg.window, cfg.sequence_seed);
  const CMat h_noisy = h_true + noise;
  std::vector<AntennaChains> out;
  out.reserve(h_true.rows());
  for (Eigen::Index m = 0; m < h_true.rows(); ++m) {
    auto chain = [&](const CVec& freq_row, CirSource source) {
      const CVec cir = ifft_unitary(freq_row);
      return apply_sequence(profile(cir, cfg.oversample, cfg.window, cfg.window_offset, source),
                            seq);
    };
    AntennaChains ac;
    ac.generated = chain(h_generated.row(m).transpose(), CirSource::Generated);
    ac.noisy = chain(h_noisy.row(m).transpose(), CirSource::NoisyMeasurement);
    ac.truth = chain(h_true.row(m).transpose(), CirSource::Truth);
    ac.quantized = quantize_1bit(ac.noisy.taps);
    out.push_back(std::move(ac));
  }
  return out;
}

std::vector<PhaseSequence> build_lstm_inputs(const CMat& h_generated, const CMat& h_true,
                                             const CMat& noise, const LstmPreprocessConfig& cfg) {
  const std::vector<AntennaChains> chains = build_antenna_chains(h_generated, h_true, noise, cfg);
  std::vector<PhaseSequence> out;
  out.reserve(chains.size());
  for (const AntennaChains& ac : chains) {
    PhaseSequence ps;
    ps.i1 = phase_of(ac.generated.taps);
    ps.i2 = phase_of(ac.quantized);
    ps.label = phase_of(cfg.noisy_labels ? ac.noisy.taps : ac.truth.taps);
    out.push_back(std::move(ps));
  }
  return out;
}

}  // namespace mrce::dsp
