#pragma once

#include "mrce/types.hpp"

namespace mrce::dsp {

/// Unitary DFT (1/sqrt(N) both directions) so Parseval holds exactly.
/// Plans are cached per length behind an internal mutex.
CVec fft_unitary(const CVec& x);
CVec ifft_unitary(const CVec& x);

}  // namespace mrce::dsp
