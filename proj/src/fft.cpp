#include "mrce/fft.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include <fftw3.h>

namespace mrce::dsp {
namespace {

struct PlanPair {
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;
  fftw_complex* buf = nullptr;
  int n = 0;
};

std::mutex g_mutex;
std::map<int, PlanPair>& plan_cache() {
  static std::map<int, PlanPair> cache;
  return cache;
}

PlanPair& plan_for(int n) {
  auto& cache = plan_cache();
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  PlanPair p;
  p.n = n;
  p.buf = fftw_alloc_complex(static_cast<size_t>(n));
  p.fwd = fftw_plan_dft_1d(n, p.buf, p.buf, FFTW_FORWARD, FFTW_ESTIMATE);
  p.bwd = fftw_plan_dft_1d(n, p.buf, p.buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  return cache.emplace(n, p).first->second;
}

CVec run(const CVec& x, bool forward) {
  const int n = static_cast<int>(x.size());
  if (n == 0) return x;
  std::lock_guard<std::mutex> lock(g_mutex);
  PlanPair& p = plan_for(n);
  for (int i = 0; i < n; ++i) {
    p.buf[i][0] = x[i].real();
    p.buf[i][1] = x[i].imag();
  }
  fftw_execute(forward ? p.fwd : p.bwd);
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));
  CVec y(n);
  for (int i = 0; i < n; ++i) y[i] = cd(p.buf[i][0] * norm, p.buf[i][1] * norm);
  return y;
}

}  // namespace

CVec fft_unitary(const CVec& x) { return run(x, true); }
CVec ifft_unitary(const CVec& x) { return run(x, false); }

}  // namespace mrce::dsp
