#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "mrce/nn.hpp"

namespace gradcheck {

// Central-difference check of reverse-mode gradients through an arbitrary
// stateful forward. The loss is a fixed random projection of the output,
// so one backward pass yields every gradient at once.
//
//   fwd        re-runs the full forward pass and returns the output
//   bwd        runs backward from the given cotangent; must leave gradients
//              of every tensor in `wrt` in their .g fields (zeroed first)
//   wrt        tensors to differentiate with respect to (params and/or input)
//
// Returns the maximum relative error, with a small-denominator floor so that
// near-zero gradients compare absolutely.
inline double max_rel_error(const std::function<mrce::nn::Tensor64()>& fwd,
                            const std::function<void(const mrce::nn::Tensor64&)>& bwd,
                            const std::vector<mrce::nn::Tensor64*>& wrt, std::mt19937_64& rng,
                            double eps = 1e-3) {
  using mrce::nn::Tensor64;
  const Tensor64 y0 = fwd();
  Tensor64 r(y0.shape);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (double& x : r.v) x = gauss(rng);

  for (Tensor64* p : wrt) {
    p->ensure_grad();
    p->zero_grad();
  }
  bwd(r);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(wrt.size());
  for (Tensor64* p : wrt) analytic.push_back(p->g);

  auto project = [&](const Tensor64& t) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.v.size(); ++i) s += t.v[i] * r.v[i];
    return s;
  };

  double worst = 0.0;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    Tensor64& p = *wrt[k];
    for (std::size_t i = 0; i < p.v.size(); ++i) {
      const double keep = p.v[i];
      p.v[i] = keep + eps;
      const double up = project(fwd());
      p.v[i] = keep - eps;
      const double down = project(fwd());
      p.v[i] = keep;
      const double numeric = (up - down) / (2.0 * eps);
      const double exact = analytic[k][i];
      const double scale = std::max({std::abs(numeric), std::abs(exact), 1e-2});
      worst = std::max(worst, std::abs(numeric - exact) / scale);
    }
  }
  return worst;
}

inline mrce::nn::Tensor64 random_tensor(std::vector<int> shape, std::mt19937_64& rng,
                                        double sigma = 1.0) {
  return mrce::nn::init_normal<double>(std::move(shape), 0.0, sigma, rng);
}

}  // namespace gradcheck
