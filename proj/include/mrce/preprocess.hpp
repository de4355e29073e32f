#pragma once

#include <cstdint>
#include <vector>

#include "mrce/types.hpp"

namespace mrce::dsp {

/// Real view of a complex matrix: slice 0 = Re, slice 1 = Im.
struct Stacked {
  Eigen::MatrixXd re;
  Eigen::MatrixXd im;
};

/// Bookkeeping to undo normalize_scale exactly.
struct ScaleRecord {
  double frobenius_norm = 0.0;
  double scale_factor = 1.0;
};

struct StackedChannel {
  Stacked data;
  ScaleRecord scale;
};

enum class CirSource { Truth, NoisyMeasurement, Generated, Quantized };

/// Windowed, oversampled channel impulse response (length-K tap vector).
struct ProfiledCIR {
  CVec taps;
  CirSource source = CirSource::Truth;
  int window_offset = 0;
  int oversample_factor = 1;
};

/// Receiver-known unit-modulus frequency-domain mixing sequence.
struct MixingSequence {
  CVec s;
  std::uint64_t seed = 0;
};

Stacked stack_reim(const CMat& h);
CMat unstack_reim(const Stacked& s);

/// Frobenius-normalize then multiply by scale_factor (default sqrt(M*N),
/// which makes the entry RMS exactly 1). Throws on a zero matrix.
StackedChannel normalize_scale(const CMat& h);
StackedChannel normalize_scale(const CMat& h, double scale_factor);
CMat denormalize(const StackedChannel& s);

/// Unitary DFT per antenna row (frequency <-> delay domain).
CMat fft_rows(const CMat& h);
CMat ifft_rows(const CMat& h);

/// Oversample a CIR by zero-padding its spectrum, then keep `window` taps
/// starting at `window_offset` (circular). Scaling keeps original samples
/// exact: tap[oversample*m] = cir[m] when the window covers that index.
ProfiledCIR profile(const CVec& cir_row, int oversample, int window, int window_offset = 0,
                    CirSource source = CirSource::Truth);

MixingSequence gen_sequence(int length, std::uint64_t seed);

/// Mix in the frequency domain: IDFT(DFT(taps) .* s). Energy-preserving.
ProfiledCIR apply_sequence(const ProfiledCIR& p, const MixingSequence& seq);

/// One-bit I/Q: (sign(Re) + j sign(Im)) / sqrt(2), sign(+-0) = +1.
CVec quantize_1bit(const CVec& x);

/// Element phases in (-pi, pi]; phase of exact 0 is defined as 0.
RVec phase_of(const CVec& x);
CVec combine_mag_phase(const RVec& mag, const RVec& phase);

/// One per-antenna training sequence: cGAN-phase input, one-bit-phase input,
/// and the target phase, each `window` steps long.
struct PhaseSequence {
  RVec i1;
  RVec i2;
  RVec label;
};

struct LstmPreprocessConfig {
  int oversample = 4;
  int window = 128;
  int window_offset = 0;
  std::uint64_t sequence_seed = 0;
  bool noisy_labels = false;  // label from the noisy chain instead of the clean one
};

/// One antenna row pushed through every measurement-chain variant: the
/// profiled + mixed taps of the clean channel, the noisy measurement, and
/// the generator estimate, plus the one-bit quantization of the noisy taps.
struct AntennaChains {
  ProfiledCIR truth;
  ProfiledCIR noisy;
  ProfiledCIR generated;
  CVec quantized;
};

/// Per-antenna chains for a whole sample: each row of the three matrices is
/// inverse-transformed, profiled, and mixed with the shared sequence.
std::vector<AntennaChains> build_antenna_chains(const CMat& h_generated, const CMat& h_true,
                                                const CMat& noise,
                                                const LstmPreprocessConfig& cfg);

/// Per-antenna chains: profile + mix the generated, noisy, and clean CIRs,
/// one-bit quantize the noisy chain, and emit (phase inputs, phase label).
std::vector<PhaseSequence> build_lstm_inputs(const CMat& h_generated, const CMat& h_true,
                                             const CMat& noise, const LstmPreprocessConfig& cfg);

}  // namespace mrce::dsp
