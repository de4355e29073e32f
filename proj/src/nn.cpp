#include "mrce/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace mrce::nn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

struct ConvGeom {
  int n, h, w, c;
  int kh, kw, sh, sw;
  int ph0, pw0;
  int oh, ow;

  std::int64_t positions() const { return static_cast<std::int64_t>(n) * oh * ow; }
  int patch_cols() const { return kh * kw * c; }
};

// Patch rows for flat output positions [p0, p0+rows); out-of-range taps are zero.
template <typename T>
void im2col(const ConvGeom& g, const T* x, std::int64_t p0, int rows, RowMat<T>& patches) {
  for (int r = 0; r < rows; ++r) {
    const std::int64_t p = p0 + r;
    const int j = static_cast<int>(p % g.ow);
    const int i = static_cast<int>((p / g.ow) % g.oh);
    const int n = static_cast<int>(p / (static_cast<std::int64_t>(g.ow) * g.oh));
    const T* sample = x + static_cast<std::int64_t>(n) * g.h * g.w * g.c;
    T* row = patches.data() + static_cast<std::int64_t>(r) * g.patch_cols();
    for (int kr = 0; kr < g.kh; ++kr) {
      const int src_h = i * g.sh - g.ph0 + kr;
      for (int kc = 0; kc < g.kw; ++kc) {
        const int src_w = j * g.sw - g.pw0 + kc;
        T* dst = row + (static_cast<std::int64_t>(kr) * g.kw + kc) * g.c;
        if (src_h >= 0 && src_h < g.h && src_w >= 0 && src_w < g.w) {
          const T* src = sample + (static_cast<std::int64_t>(src_h) * g.w + src_w) * g.c;
          std::memcpy(dst, src, sizeof(T) * static_cast<std::size_t>(g.c));
        } else {
          std::fill(dst, dst + g.c, T(0));
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add patch rows back onto the input grid.
template <typename T>
void col2im_add(const ConvGeom& g, const RowMat<T>& patches, std::int64_t p0, int rows, T* dx) {
  for (int r = 0; r < rows; ++r) {
    const std::int64_t p = p0 + r;
    const int j = static_cast<int>(p % g.ow);
    const int i = static_cast<int>((p / g.ow) % g.oh);
    const int n = static_cast<int>(p / (static_cast<std::int64_t>(g.ow) * g.oh));
    T* sample = dx + static_cast<std::int64_t>(n) * g.h * g.w * g.c;
    const T* row = patches.data() + static_cast<std::int64_t>(r) * g.patch_cols();
    for (int kr = 0; kr < g.kh; ++kr) {
      const int src_h = i * g.sh - g.ph0 + kr;
      if (src_h < 0 || src_h >= g.h) continue;
      for (int kc = 0; kc < g.kw; ++kc) {
        const int src_w = j * g.sw - g.pw0 + kc;
        if (src_w < 0 || src_w >= g.w) continue;
        T* dst = sample + (static_cast<std::int64_t>(src_h) * g.w + src_w) * g.c;
        const T* src = row + (static_cast<std::int64_t>(kr) * g.kw + kc) * g.c;
        for (int ch = 0; ch < g.c; ++ch) dst[ch] += src[ch];
      }
    }
  }
}

// Bound the materialized patch matrix to ~16 MB per strip.
template <typename T, typename F>
void for_each_strip(std::int64_t total_rows, int cols, F&& fn) {
  const std::int64_t budget = (16ll << 20) / (static_cast<std::int64_t>(cols) * sizeof(T));
  const std::int64_t strip = std::clamp<std::int64_t>(budget, 1, std::max<std::int64_t>(total_rows, 1));
  for (std::int64_t p0 = 0; p0 < total_rows; p0 += strip)
    fn(p0, static_cast<int>(std::min<std::int64_t>(strip, total_rows - p0)));
}

void require_rank4(const std::vector<int>& shape, const char* who) {
  if (shape.size() != 4) throw ConfigError(std::string(who) + ": expected a 4-d tensor");
}

}  // namespace

AxisPlan plan_axis(int in, int kernel, int stride, Padding pad) {
  if (in < 1 || kernel < 1 || stride < 1)
    throw ConfigError("convolution geometry must be positive");
  if (pad == Padding::Valid) {
    if (in < kernel) throw ConfigError("valid padding needs input at least kernel-sized");
    return {(in - kernel) / stride + 1, 0};
  }
  const int out = (in + stride - 1) / stride;
  const int total = std::max((out - 1) * stride + kernel - in, 0);
  return {out, (total + 1) / 2};
}

template <typename T>
Conv2D<T>::Conv2D(int in_ch, int out_ch, int kh, int kw, int sh, int sw, Padding pad,
                  std::mt19937_64& rng, T init_sigma)
    : in_ch_(in_ch), out_ch_(out_ch), kh_(kh), kw_(kw), sh_(sh), sw_(sw), pad_(pad) {
  if (in_ch < 1 || out_ch < 1 || kh < 1 || kw < 1 || sh < 1 || sw < 1)
    throw ConfigError("Conv2D: channels, kernel, and stride must be positive");
  w = init_normal<T>({kh, kw, in_ch, out_ch}, T(0), init_sigma, rng);
  b = Tensor<T>({out_ch});
}

template <typename T>
Tensor<T> Conv2D<T>::forward(const Tensor<T>& x, bool) {
  require_rank4(x.shape, "Conv2D");
  if (x.dim(3) != in_ch_) throw ConfigError("Conv2D: input channel mismatch");
  const AxisPlan ah = plan_axis(x.dim(1), kh_, sh_, pad_);
  const AxisPlan aw = plan_axis(x.dim(2), kw_, sw_, pad_);
  const ConvGeom g{x.dim(0), x.dim(1), x.dim(2), in_ch_, kh_, kw_, sh_, sw_,
                   ah.pad_begin, aw.pad_begin, ah.out, aw.out};
  x_ = x;

  Tensor<T> y({g.n, g.oh, g.ow, out_ch_});
  CMapMat<T> wm(w.v.data(), g.patch_cols(), out_ch_);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(b.v.data(), out_ch_);
  MapMat<T> ym(y.v.data(), g.positions(), out_ch_);
  RowMat<T> patches;
  for_each_strip<T>(g.positions(), g.patch_cols(), [&](std::int64_t p0, int rows) {
    patches.resize(rows, g.patch_cols());
    im2col(g, x.v.data(), p0, rows, patches);
    ym.middleRows(p0, rows).noalias() = patches * wm;
    ym.middleRows(p0, rows).rowwise() += bias.transpose();
  });
  return y;
}

template <typename T>
Tensor<T> Conv2D<T>::backward(const Tensor<T>& dy) {
  require_rank4(dy.shape, "Conv2D");
  const AxisPlan ah = plan_axis(x_.dim(1), kh_, sh_, pad_);
  const AxisPlan aw = plan_axis(x_.dim(2), kw_, sw_, pad_);
  const ConvGeom g{x_.dim(0), x_.dim(1), x_.dim(2), in_ch_, kh_, kw_, sh_, sw_,
                   ah.pad_begin, aw.pad_begin, ah.out, aw.out};
  if (dy.shape != std::vector<int>{g.n, g.oh, g.ow, out_ch_})
    throw ConfigError("Conv2D: cotangent shape mismatch");

  w.ensure_grad();
  b.ensure_grad();
  CMapMat<T> dym(dy.v.data(), g.positions(), out_ch_);
  MapMat<T> wgrad(w.g.data(), g.patch_cols(), out_ch_);
  // Row-by-row accumulation keeps the summation order independent of the
  // buffer's alignment, so repeated runs produce bit-identical gradients.
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> bgrad(b.g.data(), out_ch_);
  for (Eigen::Index r = 0; r < dym.rows(); ++r) bgrad += dym.row(r).transpose();

  Tensor<T> dx(x_.shape);
  CMapMat<T> wm(w.v.data(), g.patch_cols(), out_ch_);
  RowMat<T> patches, dpatches;
  for_each_strip<T>(g.positions(), g.patch_cols(), [&](std::int64_t p0, int rows) {
    patches.resize(rows, g.patch_cols());
    im2col(g, x_.v.data(), p0, rows, patches);
    wgrad.noalias() += patches.transpose() * dym.middleRows(p0, rows);
    dpatches.resize(rows, g.patch_cols());
    dpatches.noalias() = dym.middleRows(p0, rows) * wm.transpose();
    col2im_add(g, dpatches, p0, rows, dx.v.data());
  });
  return dx;
}

template <typename T>
Conv2DTranspose<T>::Conv2DTranspose(int in_ch, int out_ch, int kh, int kw, int sh, int sw,
                                    int out_h, int out_w, std::mt19937_64& rng, T init_sigma)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      kh_(kh),
      kw_(kw),
      sh_(sh),
      sw_(sw),
      out_h_(out_h),
      out_w_(out_w) {
  if (in_ch < 1 || out_ch < 1 || kh < 1 || kw < 1 || sh < 1 || sw < 1)
    throw ConfigError("Conv2DTranspose: channels, kernel, and stride must be positive");
  if (out_h < 1 || out_w < 1) throw ConfigError("Conv2DTranspose: output shape must be positive");
  w = init_normal<T>({kh, kw, out_ch, in_ch}, T(0), init_sigma, rng);
  b = Tensor<T>({out_ch});
}

template <typename T>
Tensor<T> Conv2DTranspose<T>::forward(const Tensor<T>& x, bool) {
  require_rank4(x.shape, "Conv2DTranspose");
  if (x.dim(3) != in_ch_) throw ConfigError("Conv2DTranspose: input channel mismatch");
  const AxisPlan ah = plan_axis(out_h_, kh_, sh_, Padding::Same);
  const AxisPlan aw = plan_axis(out_w_, kw_, sw_, Padding::Same);
  if (ah.out != x.dim(1) || aw.out != x.dim(2))
    throw ConfigError("Conv2DTranspose: input spatial shape does not divide to the target");
  const ConvGeom g{x.dim(0), out_h_, out_w_, out_ch_, kh_, kw_, sh_, sw_,
                   ah.pad_begin, aw.pad_begin, x.dim(1), x.dim(2)};
  x_ = x;

  Tensor<T> y({g.n, out_h_, out_w_, out_ch_});
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(y.v.size()); ++p)
    y.v[p] = b.v[p % out_ch_];
  CMapMat<T> wm(w.v.data(), g.patch_cols(), in_ch_);
  CMapMat<T> xm(x.v.data(), g.positions(), in_ch_);
  RowMat<T> dpatches;
  for_each_strip<T>(g.positions(), g.patch_cols(), [&](std::int64_t p0, int rows) {
    dpatches.resize(rows, g.patch_cols());
    dpatches.noalias() = xm.middleRows(p0, rows) * wm.transpose();
    col2im_add(g, dpatches, p0, rows, y.v.data());
  });
  return y;
}

template <typename T>
Tensor<T> Conv2DTranspose<T>::backward(const Tensor<T>& dy) {
  require_rank4(dy.shape, "Conv2DTranspose");
  if (dy.shape != std::vector<int>{x_.dim(0), out_h_, out_w_, out_ch_})
    throw ConfigError("Conv2DTranspose: cotangent shape mismatch");
  const AxisPlan ah = plan_axis(out_h_, kh_, sh_, Padding::Same);
  const AxisPlan aw = plan_axis(out_w_, kw_, sw_, Padding::Same);
  const ConvGeom g{x_.dim(0), out_h_, out_w_, out_ch_, kh_, kw_, sh_, sw_,
                   ah.pad_begin, aw.pad_begin, x_.dim(1), x_.dim(2)};

  w.ensure_grad();
  b.ensure_grad();
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(dy.v.size()); ++p)
    b.g[p % out_ch_] += dy.v[p];

  Tensor<T> dx(x_.shape);
  CMapMat<T> wm(w.v.data(), g.patch_cols(), in_ch_);
  MapMat<T> wgrad(w.g.data(), g.patch_cols(), in_ch_);
  CMapMat<T> xm(x_.v.data(), g.positions(), in_ch_);
  MapMat<T> dxm(dx.v.data(), g.positions(), in_ch_);
  RowMat<T> patches;
  for_each_strip<T>(g.positions(), g.patch_cols(), [&](std::int64_t p0, int rows) {
    patches.resize(rows, g.patch_cols());
    im2col(g, dy.v.data(), p0, rows, patches);
    wgrad.noalias() += patches.transpose() * xm.middleRows(p0, rows);
    dxm.middleRows(p0, rows).noalias() = patches * wm;
  });
  return dx;
}

template <typename T>
BatchNorm<T>::BatchNorm(int channels, T momentum, T eps)
    : channels_(channels), momentum_(momentum), eps_(eps) {
  if (channels < 1) throw ConfigError("BatchNorm: channels must be positive");
  if (!(momentum >= T(0) && momentum < T(1))) throw ConfigError("BatchNorm: momentum in [0,1)");
  gamma = Tensor<T>({channels});
  std::fill(gamma.v.begin(), gamma.v.end(), T(1));
  beta = Tensor<T>({channels});
  running_mean = Tensor<T>({channels});
  running_var = Tensor<T>({channels});
  std::fill(running_var.v.begin(), running_var.v.end(), T(1));
}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x, bool training) {
  if (x.rank() < 2 || x.dim(x.rank() - 1) != channels_)
    throw ConfigError("BatchNorm: trailing dimension must match channels");
  const std::int64_t m = x.size() / channels_;
  Tensor<T> y(x.shape);
  xhat_ = Tensor<T>(x.shape);
  inv_std_.assign(channels_, T(0));

  std::vector<T> mean(channels_, T(0)), var(channels_, T(0));
  if (training) {
    if (x.dim(0) < 2) throw ConfigError("BatchNorm: training needs batch of at least 2");
    for (std::int64_t p = 0; p < x.size(); ++p) mean[p % channels_] += x.v[p];
    for (int c = 0; c < channels_; ++c) mean[c] /= static_cast<T>(m);
    for (std::int64_t p = 0; p < x.size(); ++p) {
      const T d = x.v[p] - mean[p % channels_];
      var[p % channels_] += d * d;
    }
    for (int c = 0; c < channels_; ++c) var[c] /= static_cast<T>(m);
    for (int c = 0; c < channels_; ++c) {
      running_mean.v[c] = momentum_ * running_mean.v[c] + (T(1) - momentum_) * mean[c];
      running_var.v[c] = momentum_ * running_var.v[c] + (T(1) - momentum_) * var[c];
    }
  } else {
    mean = running_mean.v;
    var = running_var.v;
  }
  for (int c = 0; c < channels_; ++c) inv_std_[c] = T(1) / std::sqrt(var[c] + eps_);
  for (std::int64_t p = 0; p < x.size(); ++p) {
    const int c = static_cast<int>(p % channels_);
    xhat_.v[p] = (x.v[p] - mean[c]) * inv_std_[c];
    y.v[p] = gamma.v[c] * xhat_.v[p] + beta.v[c];
  }
  last_training_ = training;
  return y;
}

template <typename T>
Tensor<T> BatchNorm<T>::backward(const Tensor<T>& dy) {
  if (dy.shape != xhat_.shape) throw ConfigError("BatchNorm: cotangent shape mismatch");
  const std::int64_t m = dy.size() / channels_;
  gamma.ensure_grad();
  beta.ensure_grad();

  std::vector<T> sum_dy(channels_, T(0)), sum_dy_xhat(channels_, T(0));
  for (std::int64_t p = 0; p < dy.size(); ++p) {
    const int c = static_cast<int>(p % channels_);
    sum_dy[c] += dy.v[p];
    sum_dy_xhat[c] += dy.v[p] * xhat_.v[p];
  }
  for (int c = 0; c < channels_; ++c) {
    beta.g[c] += sum_dy[c];
    gamma.g[c] += sum_dy_xhat[c];
  }

  Tensor<T> dx(dy.shape);
  if (last_training_) {
    for (std::int64_t p = 0; p < dy.size(); ++p) {
      const int c = static_cast<int>(p % channels_);
      dx.v[p] = gamma.v[c] * inv_std_[c] / static_cast<T>(m) *
                (static_cast<T>(m) * dy.v[p] - sum_dy[c] - xhat_.v[p] * sum_dy_xhat[c]);
    }
  } else {
    for (std::int64_t p = 0; p < dy.size(); ++p) {
      const int c = static_cast<int>(p % channels_);
      dx.v[p] = gamma.v[c] * inv_std_[c] * dy.v[p];
    }
  }
  return dx;
}

template <typename T>
Tensor<T> Activation<T>::forward(const Tensor<T>& x, bool) {
  Tensor<T> y(x.shape);
  switch (kind_) {
    case Act::Linear:
      y.v = x.v;
      cache_ = y;
      break;
    case Act::ReLU:
      for (std::size_t i = 0; i < x.v.size(); ++i) y.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
      cache_ = x;
      break;
    case Act::LeakyReLU:
      for (std::size_t i = 0; i < x.v.size(); ++i)
        y.v[i] = x.v[i] > T(0) ? x.v[i] : slope_ * x.v[i];
      cache_ = x;
      break;
    case Act::Tanh:
      for (std::size_t i = 0; i < x.v.size(); ++i) y.v[i] = std::tanh(x.v[i]);
      cache_ = y;
      break;
    case Act::Sigmoid:
      for (std::size_t i = 0; i < x.v.size(); ++i) y.v[i] = T(1) / (T(1) + std::exp(-x.v[i]));
      cache_ = y;
      break;
  }
  return y;
}

template <typename T>
Tensor<T> Activation<T>::backward(const Tensor<T>& dy) {
  if (dy.shape != cache_.shape) throw ConfigError("Activation: cotangent shape mismatch");
  Tensor<T> dx(dy.shape);
  switch (kind_) {
    case Act::Linear:
      dx.v = dy.v;
      break;
    case Act::ReLU:
      for (std::size_t i = 0; i < dy.v.size(); ++i)
        dx.v[i] = cache_.v[i] > T(0) ? dy.v[i] : T(0);
      break;
    case Act::LeakyReLU:
      for (std::size_t i = 0; i < dy.v.size(); ++i)
        dx.v[i] = cache_.v[i] > T(0) ? dy.v[i] : slope_ * dy.v[i];
      break;
    case Act::Tanh:
      for (std::size_t i = 0; i < dy.v.size(); ++i)
        dx.v[i] = dy.v[i] * (T(1) - cache_.v[i] * cache_.v[i]);
      break;
    case Act::Sigmoid:
      for (std::size_t i = 0; i < dy.v.size(); ++i)
        dx.v[i] = dy.v[i] * cache_.v[i] * (T(1) - cache_.v[i]);
      break;
  }
  return dx;
}

template <typename T>
Dropout<T>::Dropout(T rate, std::uint64_t seed) : rate_(rate), rng_(seed) {
  if (!(rate >= T(0) && rate < T(1))) throw ConfigError("Dropout: rate must be in [0,1)");
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, bool training) {
  if (!training || rate_ == T(0)) {
    mask_.clear();
    return x;
  }
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const T scale = T(1) / (T(1) - rate_);
  mask_.assign(x.v.size(), T(0));
  Tensor<T> y(x.shape);
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    if (u01(rng_) >= static_cast<double>(rate_)) {
      mask_[i] = scale;
      y.v[i] = x.v[i] * scale;
    }
  }
  return y;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& dy) {
  if (mask_.empty()) return dy;
  if (dy.v.size() != mask_.size()) throw ConfigError("Dropout: cotangent shape mismatch");
  Tensor<T> dx(dy.shape);
  for (std::size_t i = 0; i < dy.v.size(); ++i) dx.v[i] = dy.v[i] * mask_[i];
  return dx;
}

template <typename T>
Dense<T>::Dense(int in_features, int out_features, std::mt19937_64& rng, T init_sigma)
    : in_f_(in_features), out_f_(out_features) {
  if (in_features < 1 || out_features < 1) throw ConfigError("Dense: features must be positive");
  w = init_normal<T>({in_features, out_features}, T(0), init_sigma, rng);
  b = Tensor<T>({out_features});
}

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& x, bool) {
  if (x.rank() != 2 || x.dim(1) != in_f_) throw ConfigError("Dense: expected [batch, in] input");
  x_ = x;
  Tensor<T> y({x.dim(0), out_f_});
  CMapMat<T> xm(x.v.data(), x.dim(0), in_f_);
  CMapMat<T> wm(w.v.data(), in_f_, out_f_);
  MapMat<T> ym(y.v.data(), x.dim(0), out_f_);
  ym.noalias() = xm * wm;
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(b.v.data(), out_f_);
  ym.rowwise() += bias.transpose();
  return y;
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& dy) {
  if (dy.shape != std::vector<int>{x_.dim(0), out_f_})
    throw ConfigError("Dense: cotangent shape mismatch");
  w.ensure_grad();
  b.ensure_grad();
  CMapMat<T> xm(x_.v.data(), x_.dim(0), in_f_);
  CMapMat<T> dym(dy.v.data(), x_.dim(0), out_f_);
  MapMat<T> wgrad(w.g.data(), in_f_, out_f_);
  wgrad.noalias() += xm.transpose() * dym;
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> bgrad(b.g.data(), out_f_);
  for (Eigen::Index r = 0; r < dym.rows(); ++r) bgrad += dym.row(r).transpose();

  Tensor<T> dx(x_.shape);
  MapMat<T> dxm(dx.v.data(), x_.dim(0), in_f_);
  CMapMat<T> wm(w.v.data(), in_f_, out_f_);
  dxm.noalias() = dym * wm.transpose();
  return dx;
}

template <typename T>
Tensor<T> ZeroPad2D<T>::forward(const Tensor<T>& x, bool) {
  require_rank4(x.shape, "ZeroPad2D");
  in_shape_ = x.shape;
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor<T> y({n, h + 2 * pad_, w + 2 * pad_, c});
  for (int s = 0; s < n; ++s)
    for (int i = 0; i < h; ++i) {
      const T* src = x.v.data() + ((static_cast<std::int64_t>(s) * h + i) * w) * c;
      T* dst = y.v.data() +
               ((static_cast<std::int64_t>(s) * (h + 2 * pad_) + i + pad_) * (w + 2 * pad_) + pad_) * c;
      std::memcpy(dst, src, sizeof(T) * static_cast<std::size_t>(w) * c);
    }
  return y;
}

template <typename T>
Tensor<T> ZeroPad2D<T>::backward(const Tensor<T>& dy) {
  require_rank4(dy.shape, "ZeroPad2D");
  const int n = in_shape_[0], h = in_shape_[1], w = in_shape_[2], c = in_shape_[3];
  if (dy.shape != std::vector<int>{n, h + 2 * pad_, w + 2 * pad_, c})
    throw ConfigError("ZeroPad2D: cotangent shape mismatch");
  Tensor<T> dx(in_shape_);
  for (int s = 0; s < n; ++s)
    for (int i = 0; i < h; ++i) {
      const T* src = dy.v.data() +
                     ((static_cast<std::int64_t>(s) * (h + 2 * pad_) + i + pad_) * (w + 2 * pad_) + pad_) * c;
      T* dst = dx.v.data() + ((static_cast<std::int64_t>(s) * h + i) * w) * c;
      std::memcpy(dst, src, sizeof(T) * static_cast<std::size_t>(w) * c);
    }
  return dx;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != b.rank() || a.rank() < 2) throw ConfigError("concat: rank mismatch");
  for (int i = 0; i + 1 < a.rank(); ++i)
    if (a.dim(i) != b.dim(i)) throw ConfigError("concat: leading dimensions differ");
  const int ca = a.dim(a.rank() - 1), cb = b.dim(b.rank() - 1);
  std::vector<int> shape = a.shape;
  shape.back() = ca + cb;
  Tensor<T> y(std::move(shape));
  const std::int64_t rows = a.size() / ca;
  for (std::int64_t r = 0; r < rows; ++r) {
    std::memcpy(y.v.data() + r * (ca + cb), a.v.data() + r * ca,
                sizeof(T) * static_cast<std::size_t>(ca));
    std::memcpy(y.v.data() + r * (ca + cb) + ca, b.v.data() + r * cb,
                sizeof(T) * static_cast<std::size_t>(cb));
  }
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& dy, int ca, int cb) {
  if (dy.dim(dy.rank() - 1) != ca + cb) throw ConfigError("split: channel sum mismatch");
  std::vector<int> sa = dy.shape, sb = dy.shape;
  sa.back() = ca;
  sb.back() = cb;
  Tensor<T> a(std::move(sa)), b(std::move(sb));
  const std::int64_t rows = dy.size() / (ca + cb);
  for (std::int64_t r = 0; r < rows; ++r) {
    std::memcpy(a.v.data() + r * ca, dy.v.data() + r * (ca + cb),
                sizeof(T) * static_cast<std::size_t>(ca));
    std::memcpy(b.v.data() + r * cb, dy.v.data() + r * (ca + cb) + ca,
                sizeof(T) * static_cast<std::size_t>(cb));
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>*> params, T lr, T beta1, T beta2, T eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (Tensor<T>* p : params_) {
    p->ensure_grad();
    m_.emplace_back(p->v.size(), T(0));
    v_.emplace_back(p->v.size(), T(0));
  }
}

template <typename T>
void Adam<T>::step() {
  ++step_;
  const T c1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1_), step_));
  const T c2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2_), step_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor<T>& p = *params_[k];
    for (std::size_t i = 0; i < p.v.size(); ++i) {
      const T grad = p.g[i];
      m_[k][i] = beta1_ * m_[k][i] + (T(1) - beta1_) * grad;
      v_[k][i] = beta2_ * v_[k][i] + (T(1) - beta2_) * grad * grad;
      p.v[i] -= lr_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (Tensor<T>* p : params_) p->zero_grad();
}

namespace {
constexpr char kCheckpointMagic[5] = {'M', 'R', 'C', 'P', '1'};

void write_u32(std::ostream& os, std::uint32_t x) {
  os.write(reinterpret_cast<const char*>(&x), sizeof(x));
}
std::uint32_t read_u32(std::istream& is) {
  std::uint32_t x = 0;
  is.read(reinterpret_cast<char*>(&x), sizeof(x));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return x;
}
}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const NamedParams<T>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("checkpoint: cannot open for writing: " + path);
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    if (!all_finite(*t)) throw NumericalError("checkpoint: non-finite parameter " + name);
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t->shape.size()));
    for (int d : t->shape) {
      const std::int32_t d32 = d;
      os.write(reinterpret_cast<const char*>(&d32), sizeof(d32));
    }
    for (T x : t->v) {
      const float f = static_cast<float>(x);
      os.write(reinterpret_cast<const char*>(&f), sizeof(f));
    }
  }
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

template <typename T>
void load_checkpoint(const std::string& path, const NamedParams<T>& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("checkpoint: cannot open: " + path);
  char magic[sizeof(kCheckpointMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("checkpoint: bad magic: " + path);

  std::map<std::string, Tensor<T>*> wanted;
  for (const auto& [name, t] : params) {
    if (!wanted.emplace(name, t).second)
      throw ConfigError("checkpoint: duplicate parameter name " + name);
  }
  const std::uint32_t count = read_u32(is);
  if (count != params.size()) throw ConfigError("checkpoint: parameter count mismatch");
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t ndim = read_u32(is);
    std::vector<int> shape(ndim);
    for (std::uint32_t i = 0; i < ndim; ++i) {
      std::int32_t d = 0;
      is.read(reinterpret_cast<char*>(&d), sizeof(d));
      shape[i] = d;
    }
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    auto it = wanted.find(name);
    if (it == wanted.end()) throw ConfigError("checkpoint: unexpected parameter " + name);
    Tensor<T>& t = *it->second;
    if (t.shape != shape) throw ConfigError("checkpoint: shape mismatch for " + name);
    for (T& x : t.v) {
      float f = 0;
      is.read(reinterpret_cast<char*>(&f), sizeof(f));
      x = static_cast<T>(f);
    }
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    wanted.erase(it);
  }
  if (!wanted.empty()) throw ConfigError("checkpoint: missing parameter " + wanted.begin()->first);
}

template class Conv2D<float>;
template class Conv2D<double>;
template class Conv2DTranspose<float>;
template class Conv2DTranspose<double>;
template class BatchNorm<float>;
template class BatchNorm<double>;
template class Activation<float>;
template class Activation<double>;
template class Dropout<float>;
template class Dropout<double>;
template class Dense<float>;
template class Dense<double>;
template class ZeroPad2D<float>;
template class ZeroPad2D<double>;
template class Adam<float>;
template class Adam<double>;

template Tensor<float> concat_channels(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> concat_channels(const Tensor<double>&, const Tensor<double>&);
template std::pair<Tensor<float>, Tensor<float>> split_channels(const Tensor<float>&, int, int);
template std::pair<Tensor<double>, Tensor<double>> split_channels(const Tensor<double>&, int, int);
template void save_checkpoint(const std::string&, const NamedParams<float>&);
template void save_checkpoint(const std::string&, const NamedParams<double>&);
template void load_checkpoint(const std::string&, const NamedParams<float>&);
template void load_checkpoint(const std::string&, const NamedParams<double>&);

}  // namespace mrce::nn
