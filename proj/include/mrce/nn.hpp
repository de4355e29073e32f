#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mrce/types.hpp"

namespace mrce::nn {

inline std::int64_t numel(const std::vector<int>& shape) {
  if (shape.empty()) throw ConfigError("tensor shape must have at least one dimension");
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ConfigError("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

/// Dense value array in [batch, height, width, channels] order for 4-d data;
/// lower-rank tensors use the same contiguous row-major convention.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> v;
  std::vector<T> g;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(numel(shape), T(0)) {}

  std::int64_t size() const { return static_cast<std::int64_t>(v.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  void ensure_grad() {
    if (g.size() != v.size()) g.assign(v.size(), T(0));
  }
  void zero_grad() {
    if (!g.empty()) std::fill(g.begin(), g.end(), T(0));
  }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T x : t.v)
    if (!std::isfinite(x)) return false;
  return true;
}

/// Gaussian-filled tensor; the layer initialization the training recipe asks for.
template <typename T>
Tensor<T> init_normal(std::vector<int> shape, T mean, T sigma, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> gauss(static_cast<double>(mean), static_cast<double>(sigma));
  for (T& x : t.v) x = static_cast<T>(gauss(rng));
  return t;
}

enum class Padding { Same, Valid };
enum class Act { Linear, ReLU, LeakyReLU, Tanh, Sigmoid };

/// Output length and leading pad of a strided window over `in` elements.
/// Same-padding splits the zeros symmetrically, tie to the leading side.
struct AxisPlan {
  int out = 0;
  int pad_begin = 0;
};
AxisPlan plan_axis(int in, int kernel, int stride, Padding pad);

template <typename T>
struct Layer {
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, bool training) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
  virtual std::vector<Tensor<T>*> params() { return {}; }
};

template <typename T>
class Conv2D final : public Layer<T> {
 public:
  Conv2D(int in_ch, int out_ch, int kh, int kw, int sh, int sw, Padding pad,
         std::mt19937_64& rng, T init_sigma = T(0.2));

  Tensor<T> forward(const Tensor<T>& x, bool training) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  std::vector<Tensor<T>*> params() override { return {&w, &b}; }

  Tensor<T> w;  // [kh, kw, in_ch, out_ch]
  Tensor<T> b;  // [out_ch]

 private:
  int in_ch_, out_ch_, kh_, kw_, sh_, sw_;
  Padding pad_;
  Tensor<T> x_;
};

/// Adjoint of a strided convolution, with its own weights. The target spatial
/// shape is explicit because ceil-division strides do not invert uniquely.
template <typename T>
class Conv2DTranspose final : public Layer<T> {
 public:
  Conv2DTranspose(int in_ch, int out_ch, int kh, int kw, int sh, int sw, int out_h, int out_w,
                  std::mt19937_64& rng, T init_sigma = T(0.2));

  Tensor<T> forward(const Tensor<T>& x, bool training) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  std::vector<Tensor<T>*> params() override { return {&w, &b}; }

  Tensor<T> w;  // [kh, kw, out_ch, in_ch]: stored in the underlying conv direction
  Tensor<T> b;  // [out_ch]

 private:
  int in_ch_, out_ch_, kh_, kw_, sh_, sw_, out_h_, out_w_;
  Tensor<T> x_;
};

template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  explicit BatchNorm(int channels, T momentum = T(0.9), T eps = T(1e-5));

  Tensor<T> forward(const Tensor<T>& x, bool training) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  std::vector<Tensor<T>*> params() override { return {&gamma, &beta}; }

  Tensor<T> gamma, beta;
  Tensor<T> running_mean, running_var;

 private:
  int channels_;
  T momentum_, eps_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
  bool last_training_ = true;
};

template <typename T>
class Activation final : public Layer<T> {
 public:
  explicit Activation(Act kind, T slope = T(0.3)) : kind_(kind), slope_(slope) {}

  Tensor<T> forward(const Tensor<T>& x, bool training) override;
  Tensor<T> backward(const Tensor<T>& dy) override;

 private:
  Act kind_;
  T slope_;
  Tensor<T> cache_;
};

/// Inverted dropout: training scales kept units by 1/(1-rate); inference is identity.
template <typename T>
class Dropout final : public Layer<T> {
 public:
  Dropout(T rate, std::uint64_t seed);

  Tensor<T> forward(const Tensor<T>& x, bool training) override;
  Tensor<T> backward(const Tensor<T>& dy) override;

 private:
  T rate_;
  std::mt19937_64 rng_;
  std::vector<T> mask_;
};

template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(int in_features, int out_features, std::mt19937_64& rng, T init_sigma = T(0.2));

  Tensor<T> forward(const Tensor<T>& x, bool training) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  std::vector<Tensor<T>*> params() override { return {&w, &b}; }

  Tensor<T> w;  // [in, out]
  Tensor<T> b;  // [out]

 private:
  int in_f_, out_f_;
  Tensor<T> x_;
};

template <typename T>
class ZeroPad2D final : public Layer<T> {
 public:
  explicit ZeroPad2D(int pad) : pad_(pad) {
    if (pad < 0) throw ConfigError("ZeroPad2D: negative padding");
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) override;
  Tensor<T> backward(const Tensor<T>& dy) override;

 private:
  int pad_ = 0;
  std::vector<int> in_shape_;
};

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& dy, int ca, int cb);

template <typename T>
class Sequential {
 public:
  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    Tensor<T> cur = x;
    for (auto& l : layers_) cur = l->forward(cur, training);
    return cur;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> cur = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
    return cur;
  }
  std::vector<Tensor<T>*> params() {
    std::vector<Tensor<T>*> out;
    for (auto& l : layers_)
      for (Tensor<T>* p : l->params()) out.push_back(p);
    return out;
  }
  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>*> params, T lr, T beta1 = T(0.9), T beta2 = T(0.999),
       T eps = T(1e-8));

  void step();
  void zero_grad();
  long step_count() const { return step_; }

 private:
  std::vector<Tensor<T>*> params_;
  std::vector<std::vector<T>> m_, v_;
  T lr_, beta1_, beta2_, eps_;
  long step_ = 0;
};

template <typename T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>*>>;

/// Checkpoint envelope: magic, count, then {name, shape, float32 values} per
/// parameter. Reload is bit-exact for float32 parameters.
template <typename T>
void save_checkpoint(const std::string& path, const NamedParams<T>& params);

template <typename T>
void load_checkpoint(const std::string& path, const NamedParams<T>& params);

}  // namespace mrce::nn
