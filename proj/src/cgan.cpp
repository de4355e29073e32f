#include "mrce/cgan.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>
#include <random>
#include <utility>

#include "mrce/eval.hpp"
#include "mrce/preprocess.hpp"
#include "mrce/rng.hpp"

namespace mrce::gan {
namespace {

constexpr int kStages = 7;

struct StageSpec {
  int filters;
  int sh;  // stride along antennas
  int sw;  // stride along subcarriers
};

constexpr StageSpec kDown[kStages] = {{32, 1, 1}, {64, 2, 2},  {64, 2, 2}, {64, 2, 2},
                                      {64, 1, 5}, {64, 1, 5},  {128, 1, 6}};

struct DiscSpec {
  int filters;
  int sw;
};

constexpr DiscSpec kDisc[5] = {{64, 1}, {128, 5}, {128, 5}, {128, 3}, {128, 2}};

void validate_geometry(const GanTrainConfig& cfg) {
  if (cfg.in_h < 1 || cfg.in_w < 1) throw ConfigError("GanTrainConfig: input dims must be positive");
  if (cfg.filter_len < 1) throw ConfigError("GanTrainConfig: filter length must be positive");
  if (cfg.beta < 0.0) throw ConfigError("GanTrainConfig: beta must be nonnegative");
  if (!(cfg.dropout_rate >= 0.0f && cfg.dropout_rate < 1.0f))
    throw ConfigError("GanTrainConfig: dropout rate must be in [0, 1)");
  if (cfg.up4_filters < 1) throw ConfigError("GanTrainConfig: upsample filter count must be positive");
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void add_into(nn::Tensor32& acc, const nn::Tensor32& inc) {
  for (std::size_t i = 0; i < acc.v.size(); ++i) acc.v[i] += inc.v[i];
}

/// [1, h, w, 2] tensor from a real/imag stack.
nn::Tensor32 to_tensor(const dsp::Stacked& s) {
  const int h = static_cast<int>(s.re.rows());
  const int w = static_cast<int>(s.re.cols());
  nn::Tensor32 t({1, h, w, 2});
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      t.v[static_cast<std::size_t>((r * w + c) * 2)] = static_cast<float>(s.re(r, c));
      t.v[static_cast<std::size_t>((r * w + c) * 2 + 1)] = static_cast<float>(s.im(r, c));
    }
  return t;
}

dsp::Stacked from_tensor(const nn::Tensor32& t, int sample) {
  const int h = t.dim(1), w = t.dim(2);
  dsp::Stacked s{Eigen::MatrixXd(h, w), Eigen::MatrixXd(h, w)};
  const std::size_t base = static_cast<std::size_t>(sample) * h * w * 2;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      s.re(r, c) = t.v[base + static_cast<std::size_t>((r * w + c) * 2)];
      s.im(r, c) = t.v[base + static_cast<std::size_t>((r * w + c) * 2 + 1)];
    }
  return s;
}

nn::Tensor32 gather_batch(const std::vector<nn::Tensor32>& pool, const std::vector<int>& order,
                          int start, int count) {
  const int h = pool[0].dim(1), w = pool[0].dim(2), ch = pool[0].dim(3);
  nn::Tensor32 out({count, h, w, ch});
  const std::size_t stride = static_cast<std::size_t>(h) * w * ch;
  for (int i = 0; i < count; ++i)
    std::memcpy(out.v.data() + static_cast<std::size_t>(i) * stride,
                pool[static_cast<std::size_t>(order[static_cast<std::size_t>(start + i)])].v.data(),
                stride * sizeof(float));
  return out;
}

/// Uniformly spread per-sample logit cotangents over each patch grid.
nn::Tensor32 spread_logit_grad(const std::vector<int>& shape, const std::vector<double>& ds) {
  nn::Tensor32 g(shape);
  const std::size_t per = g.v.size() / ds.size();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const float val = static_cast<float>(ds[i] / static_cast<double>(per));
    std::fill(g.v.begin() + static_cast<std::ptrdiff_t>(i * per),
              g.v.begin() + static_cast<std::ptrdiff_t>((i + 1) * per), val);
  }
  return g;
}

}  // namespace

GeneratorNet::GeneratorNet(const GanTrainConfig& cfg) : cfg_(cfg) {
  validate_geometry(cfg);
  std::mt19937_64 rng(derive_seed(cfg.seed, 11));
  const int up_filters[kStages] = {128, 64, 64, cfg.up4_filters, 128, 64, 32};

  int h = cfg.in_h, w = cfg.in_w, in_ch = 2;
  std::vector<std::pair<int, int>> spatial{{h, w}};
  for (int j = 0; j < kStages; ++j) {
    const StageSpec& s = kDown[j];
    if (h % s.sh != 0 || w % s.sw != 0)
      throw ConfigError("GeneratorNet: input dims do not divide the stride chain");
    DownStage d;
    d.conv = std::make_unique<nn::Conv2D<float>>(in_ch, s.filters, cfg.filter_len, cfg.filter_len,
                                                 s.sh, s.sw, nn::Padding::Same, rng);
    if (j > 0) d.bn = std::make_unique<nn::BatchNorm<float>>(s.filters);
    d.act = std::make_unique<nn::Activation<float>>(nn::Act::LeakyReLU, cfg.leaky_slope);
    down_.push_back(std::move(d));
    h /= s.sh;
    w /= s.sw;
    spatial.emplace_back(h, w);
    in_ch = s.filters;
  }
  for (int k = 0; k < kStages; ++k) {
    const StageSpec& m = kDown[kStages - 1 - k];  // mirrored stride source
    const auto [th, tw] = spatial[static_cast<std::size_t>(kStages - 1 - k)];
    UpStage u;
    u.deconv = std::make_unique<nn::Conv2DTranspose<float>>(
        in_ch, up_filters[k], cfg.filter_len, cfg.filter_len, m.sh, m.sw, th, tw, rng);
    u.bn = std::make_unique<nn::BatchNorm<float>>(up_filters[k]);
    if (k < 3) u.drop = std::make_unique<nn::Dropout<float>>(cfg.dropout_rate,
                                                             derive_seed(cfg.seed, 21 + k));
    u.act = std::make_unique<nn::Activation<float>>(nn::Act::ReLU);
    up_.push_back(std::move(u));
    in_ch = up_filters[k];
    if (cfg.use_skips && k < kStages - 1) in_ch += kDown[kStages - 2 - k].filters;
  }
  head_ = std::make_unique<nn::Conv2D<float>>(in_ch, 2, cfg.filter_len, cfg.filter_len, 1, 1,
                                              nn::Padding::Same, rng);
  head_act_ = std::make_unique<nn::Activation<float>>(nn::Act::Tanh);
  down_out_.resize(kStages);
  up_out_channels_.assign(up_filters, up_filters + kStages);
}

nn::Tensor32 GeneratorNet::forward(const nn::Tensor32& x, bool training, bool sample_noise) {
  trace_.clear();
  trace_.push_back(x.shape);
  nn::Tensor32 cur = x;
  for (int j = 0; j < kStages; ++j) {
    cur = down_[static_cast<std::size_t>(j)].conv->forward(cur, training);
    if (down_[static_cast<std::size_t>(j)].bn)
      cur = down_[static_cast<std::size_t>(j)].bn->forward(cur, training);
    cur = down_[static_cast<std::size_t>(j)].act->forward(cur, training);
    down_out_[static_cast<std::size_t>(j)] = cur;
    trace_.push_back(cur.shape);
  }
  const bool drop_on = training || sample_noise;
  for (int k = 0; k < kStages; ++k) {
    UpStage& u = up_[static_cast<std::size_t>(k)];
    cur = u.deconv->forward(cur, training);
    cur = u.bn->forward(cur, training);
    if (u.drop) cur = u.drop->forward(cur, drop_on);
    cur = u.act->forward(cur, training);
    trace_.push_back(cur.shape);
    if (cfg_.use_skips && k < kStages - 1)
      cur = nn::concat_channels(cur, down_out_[static_cast<std::size_t>(kStages - 2 - k)]);
  }
  cur = head_->forward(cur, training);
  cur = head_act_->forward(cur, training);
  trace_.push_back(cur.shape);
  return cur;
}

nn::Tensor32 GeneratorNet::backward(const nn::Tensor32& dy) {
  nn::Tensor32 d = head_act_->backward(dy);
  d = head_->backward(d);
  std::vector<nn::Tensor32> skip_grad(kStages);
  for (int k = kStages - 1; k >= 0; --k) {
    if (cfg_.use_skips && k < kStages - 1) {
      const int partner = kStages - 2 - k;
      auto [dmain, dskip] =
          nn::split_channels(d, up_out_channels_[static_cast<std::size_t>(k)], kDown[partner].filters);
      d = std::move(dmain);
      skip_grad[static_cast<std::size_t>(partner)] = std::move(dskip);
    }
    UpStage& u = up_[static_cast<std::size_t>(k)];
    d = u.act->backward(d);
    if (u.drop) d = u.drop->backward(d);
    d = u.bn->backward(d);
    d = u.deconv->backward(d);
  }
  for (int j = kStages - 1; j >= 0; --j) {
    if (skip_grad[static_cast<std::size_t>(j)].size() > 0)
      add_into(d, skip_grad[static_cast<std::size_t>(j)]);
    DownStage& s = down_[static_cast<std::size_t>(j)];
    d = s.act->backward(d);
    if (s.bn) d = s.bn->backward(d);
    d = s.conv->backward(d);
  }
  return d;
}

std::vector<nn::Tensor32*> GeneratorNet::params() {
  std::vector<nn::Tensor32*> out;
  for (auto& s : down_) {
    out.push_back(&s.conv->w);
    out.push_back(&s.conv->b);
    if (s.bn) {
      out.push_back(&s.bn->gamma);
      out.push_back(&s.bn->beta);
    }
  }
  for (auto& u : up_) {
    out.push_back(&u.deconv->w);
    out.push_back(&u.deconv->b);
    out.push_back(&u.bn->gamma);
    out.push_back(&u.bn->beta);
  }
  out.push_back(&head_->w);
  out.push_back(&head_->b);
  return out;
}

nn::NamedParams<float> GeneratorNet::named_params(const std::string& prefix) {
  nn::NamedParams<float> out;
  auto bn_entries = [&out](const std::string& base, nn::BatchNorm<float>& bn) {
    out.emplace_back(base + ".gamma", &bn.gamma);
    out.emplace_back(base + ".beta", &bn.beta);
    out.emplace_back(base + ".running_mean", &bn.running_mean);
    out.emplace_back(base + ".running_var", &bn.running_var);
  };
  for (int j = 0; j < kStages; ++j) {
    const std::string base = prefix + ".down" + std::to_string(j + 1);
    DownStage& s = down_[static_cast<std::size_t>(j)];
    out.emplace_back(base + ".conv.w", &s.conv->w);
    out.emplace_back(base + ".conv.b", &s.conv->b);
    if (s.bn) bn_entries(base + ".bn", *s.bn);
  }
  for (int k = 0; k < kStages; ++k) {
    const std::string base = prefix + ".up" + std::to_string(k + 1);
    UpStage& u = up_[static_cast<std::size_t>(k)];
    out.emplace_back(base + ".deconv.w", &u.deconv->w);
    out.emplace_back(base + ".deconv.b", &u.deconv->b);
    bn_entries(base + ".bn", *u.bn);
  }
  out.emplace_back(prefix + ".head.w", &head_->w);
  out.emplace_back(prefix + ".head.b", &head_->b);
  return out;
}

std::int64_t GeneratorNet::param_count() {
  std::int64_t n = 0;
  for (nn::Tensor32* p : params()) n += p->size();
  return n;
}

PatchDiscriminator::PatchDiscriminator(const GanTrainConfig& cfg) : cfg_(cfg) {
  validate_geometry(cfg);
  std::mt19937_64 rng(derive_seed(cfg.seed, 12));
  int in_ch = 4, w = cfg.in_w;
  for (int j = 0; j < 5; ++j) {
    const DiscSpec& s = kDisc[j];
    if (w % s.sw != 0)
      throw ConfigError("PatchDiscriminator: input width does not divide the stride chain");
    Stage st;
    st.conv = std::make_unique<nn::Conv2D<float>>(in_ch, s.filters, cfg.filter_len, cfg.filter_len,
                                                  1, s.sw, nn::Padding::Same, rng);
    if (j > 0) st.bn = std::make_unique<nn::BatchNorm<float>>(s.filters);
    st.act = std::make_unique<nn::Activation<float>>(nn::Act::LeakyReLU, cfg.leaky_slope);
    stages_.push_back(std::move(st));
    w /= s.sw;
    in_ch = s.filters;
  }
  Stage tail1;
  tail1.pad = std::make_unique<nn::ZeroPad2D<float>>(1);
  tail1.conv = std::make_unique<nn::Conv2D<float>>(in_ch, 256, cfg.filter_len, cfg.filter_len, 1, 1,
                                                   nn::Padding::Valid, rng);
  tail1.bn = std::make_unique<nn::BatchNorm<float>>(256);
  tail1.act = std::make_unique<nn::Activation<float>>(nn::Act::LeakyReLU, cfg.leaky_slope);
  stages_.push_back(std::move(tail1));
  Stage tail2;
  tail2.pad = std::make_unique<nn::ZeroPad2D<float>>(1);
  tail2.conv = std::make_unique<nn::Conv2D<float>>(256, 1, cfg.filter_len, cfg.filter_len, 1, 1,
                                                   nn::Padding::Valid, rng);
  stages_.push_back(std::move(tail2));
}

nn::Tensor32 PatchDiscriminator::forward(const nn::Tensor32& x, bool training) {
  trace_.clear();
  trace_.push_back(x.shape);
  nn::Tensor32 cur = x;
  for (Stage& st : stages_) {
    if (st.pad) {
      cur = st.pad->forward(cur, training);
      trace_.push_back(cur.shape);
    }
    cur = st.conv->forward(cur, training);
    if (st.bn) cur = st.bn->forward(cur, training);
    if (st.act) cur = st.act->forward(cur, training);
    trace_.push_back(cur.shape);
  }
  return cur;
}

nn::Tensor32 PatchDiscriminator::backward(const nn::Tensor32& dy) {
  nn::Tensor32 d = dy;
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) {
    if (it->act) d = it->act->backward(d);
    if (it->bn) d = it->bn->backward(d);
    d = it->conv->backward(d);
    if (it->pad) d = it->pad->backward(d);
  }
  return d;
}

std::vector<nn::Tensor32*> PatchDiscriminator::params() {
  std::vector<nn::Tensor32*> out;
  for (Stage& st : stages_) {
    out.push_back(&st.conv->w);
    out.push_back(&st.conv->b);
    if (st.bn) {
      out.push_back(&st.bn->gamma);
      out.push_back(&st.bn->beta);
    }
  }
  return out;
}

nn::NamedParams<float> PatchDiscriminator::named_params(const std::string& prefix) {
  nn::NamedParams<float> out;
  for (std::size_t j = 0; j < stages_.size(); ++j) {
    const std::string base = prefix + ".stage" + std::to_string(j + 1);
    Stage& st = stages_[j];
    out.emplace_back(base + ".conv.w", &st.conv->w);
    out.emplace_back(base + ".conv.b", &st.conv->b);
    if (st.bn) {
      out.emplace_back(base + ".bn.gamma", &st.bn->gamma);
      out.emplace_back(base + ".bn.beta", &st.bn->beta);
      out.emplace_back(base + ".bn.running_mean", &st.bn->running_mean);
      out.emplace_back(base + ".bn.running_var", &st.bn->running_var);
    }
  }
  return out;
}

std::int64_t PatchDiscriminator::param_count() {
  std::int64_t n = 0;
  for (nn::Tensor32* p : params()) n += p->size();
  return n;
}

GeneratorNet build_generator(const GanTrainConfig& cfg) { return GeneratorNet(cfg); }

PatchDiscriminator build_discriminator(const GanTrainConfig& cfg) { return PatchDiscriminator(cfg); }

std::vector<double> patch_mean_logits(const nn::Tensor32& patches) {
  if (patches.rank() < 2) throw ConfigError("patch_mean_logits: batched tensor required");
  const int b = patches.dim(0);
  const std::size_t per = patches.v.size() / static_cast<std::size_t>(b);
  std::vector<double> s(static_cast<std::size_t>(b), 0.0);
  for (int i = 0; i < b; ++i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < per; ++p) acc += patches.v[static_cast<std::size_t>(i) * per + p];
    s[static_cast<std::size_t>(i)] = acc / static_cast<double>(per);
  }
  return s;
}

GanLosses cgan_losses(const nn::Tensor32& d_real, const nn::Tensor32& d_fake,
                      const nn::Tensor32& g_out, const nn::Tensor32& label, double beta,
                      bool saturating_g) {
  if (beta < 0.0) throw ConfigError("cgan_losses: beta must be nonnegative");
  if (!d_real.same_shape(d_fake)) throw ConfigError("cgan_losses: logit shape mismatch");
  if (!g_out.same_shape(label)) throw ConfigError("cgan_losses: output/label shape mismatch");
  if (d_real.dim(0) != g_out.dim(0)) throw ConfigError("cgan_losses: batch size mismatch");
  if (!nn::all_finite(d_real) || !nn::all_finite(d_fake) || !nn::all_finite(g_out) ||
      !nn::all_finite(label))
    throw NumericalError("cgan_losses: non-finite input");

  const int b = d_real.dim(0);
  const std::vector<double> s_real = patch_mean_logits(d_real);
  const std::vector<double> s_fake = patch_mean_logits(d_fake);

  GanLosses out;
  std::vector<double> ds_real(s_real.size()), ds_fake_d(s_fake.size()), ds_fake_g(s_fake.size());
  for (int i = 0; i < b; ++i) {
    const std::size_t u = static_cast<std::size_t>(i);
    out.loss_d += softplus(-s_real[u]) + softplus(s_fake[u]);
    ds_real[u] = -logistic(-s_real[u]) / b;
    ds_fake_d[u] = logistic(s_fake[u]) / b;
    if (saturating_g) {
      out.adv_g -= softplus(s_fake[u]);
      ds_fake_g[u] = -logistic(s_fake[u]) / b;
    } else {
      out.adv_g += softplus(-s_fake[u]);
      ds_fake_g[u] = -logistic(-s_fake[u]) / b;
    }
  }
  out.loss_d /= b;
  out.adv_g /= b;
  out.d_real_grad = spread_logit_grad(d_real.shape, ds_real);
  out.d_fake_grad_d = spread_logit_grad(d_fake.shape, ds_fake_d);
  out.d_fake_grad_g = spread_logit_grad(d_fake.shape, ds_fake_g);

  out.gen_grad_l2 = nn::Tensor32(g_out.shape);
  const std::size_t per = g_out.v.size() / static_cast<std::size_t>(b);
  for (int i = 0; i < b; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * per;
    double sq = 0.0;
    for (std::size_t p = 0; p < per; ++p) {
      const double diff = static_cast<double>(g_out.v[base + p]) - label.v[base + p];
      sq += diff * diff;
    }
    const double l2 = std::sqrt(sq);
    out.l2_term += l2 / b;
    const double coeff = beta / (b * std::max(l2, 1e-12));
    for (std::size_t p = 0; p < per; ++p)
      out.gen_grad_l2.v[base + p] =
          static_cast<float>(coeff * (static_cast<double>(g_out.v[base + p]) - label.v[base + p]));
  }
  out.loss_g = out.adv_g + beta * out.l2_term;
  return out;
}

nn::NamedParams<float> CganModel::named_params() {
  nn::NamedParams<float> out = g.named_params("g");
  nn::NamedParams<float> dp = d.named_params("d");
  out.insert(out.end(), dp.begin(), dp.end());
  return out;
}

CganModel build_cgan(const GanTrainConfig& cfg) {
  return CganModel{cfg, GeneratorNet(cfg), PatchDiscriminator(cfg)};
}

std::vector<GanHistoryRow> train_cgan(CganModel& model, const std::vector<ChannelPair>& train,
                                      const std::vector<ChannelPair>& val,
                                      const GanTrainConfig& cfg, const GanEpochCallback& on_epoch) {
  if (train.empty()) throw ConfigError("train_cgan: empty training set");
  if (cfg.epochs < 0) throw ConfigError("train_cgan: negative epoch count");
  if (cfg.lr <= 0.0) throw ConfigError("train_cgan: learning rate must be positive");
  if (cfg.batch < 1) throw ConfigError("train_cgan: batch size must be positive");
  if (cfg.beta < 0.0) throw ConfigError("train_cgan: beta must be nonnegative");

  const int mh = model.cfg.in_h, mw = model.cfg.in_w;
  const int n = static_cast<int>(train.size());
  std::vector<nn::Tensor32> conds, labels;
  conds.reserve(train.size());
  labels.reserve(train.size());
  for (const ChannelPair& p : train) {
    if (p.h_ce.rows() != mh || p.h_ce.cols() != mw || p.h_true.rows() != mh ||
        p.h_true.cols() != mw)
      throw ConfigError("train_cgan: sample shape does not match the model geometry");
    conds.push_back(to_tensor(dsp::normalize_scale(p.h_ce).data));
    labels.push_back(to_tensor(dsp::normalize_scale(p.h_true).data));
  }

  nn::Adam<float> opt_g(model.g.params(), static_cast<float>(cfg.lr));
  nn::Adam<float> opt_d(model.d.params(), static_cast<float>(cfg.lr));
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 31));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  std::vector<GanHistoryRow> history;
  history.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double sum_d = 0.0, sum_g = 0.0, sum_l2 = 0.0;
    int start = 0;
    while (start < n) {
      int bs = std::min(cfg.batch, n - start);
      if (n - start - bs == 1) bs += 1;  // fold a trailing singleton batch

      nn::Tensor32 x = gather_batch(conds, order, start, bs);
      nn::Tensor32 y = gather_batch(labels, order, start, bs);

      nn::Tensor32 g_out = model.g.forward(x, true);
      nn::Tensor32 fake_in = nn::concat_channels(x, g_out);
      nn::Tensor32 d_fake = model.d.forward(fake_in, true);

      // The fake-side cotangents depend only on the fake logits, so both
      // backwards against the fake-pass caches happen before the real pass
      // overwrites them; every gradient refers to the pre-update parameters.
      const GanLosses fake_side = cgan_losses(d_fake, d_fake, g_out, y, cfg.beta, cfg.saturating_g);

      nn::Tensor32 dfake_in = model.d.backward(fake_side.d_fake_grad_g);
      auto [dcond, dgen] = nn::split_channels(dfake_in, 2, 2);
      (void)dcond;
      opt_d.zero_grad();
      model.d.backward(fake_side.d_fake_grad_d);

      nn::Tensor32 real_in = nn::concat_channels(x, y);
      nn::Tensor32 d_real = model.d.forward(real_in, true);
      GanLosses losses = cgan_losses(d_real, d_fake, g_out, y, cfg.beta, cfg.saturating_g);
      model.d.backward(losses.d_real_grad);
      opt_d.step();
      opt_d.zero_grad();

      add_into(dgen, losses.gen_grad_l2);
      model.g.backward(dgen);
      opt_g.step();
      opt_g.zero_grad();

      if (!std::isfinite(losses.loss_d) || !std::isfinite(losses.loss_g))
        throw NumericalError("train_cgan: loss diverged");
      sum_d += losses.loss_d * bs;
      sum_g += losses.loss_g * bs;
      sum_l2 += losses.l2_term * bs;
      start += bs;
    }

    GanHistoryRow row;
    row.loss_d = sum_d / n;
    row.loss_g = sum_g / n;
    row.l2_term = sum_l2 / n;
    if (!val.empty()) {
      double acc = 0.0;
      for (const ChannelPair& p : val)
        acc += eval::nse(p.h_true, infer(model.g, p.h_ce, cfg.snr_db).entries);
      row.val_nse = acc / static_cast<double>(val.size());
    }
    history.push_back(row);
    if (on_epoch) on_epoch(epoch, row, model);
  }
  return history;
}

ChannelMatrix infer(GeneratorNet& g, const CMat& h_ce, double snr_db, bool sample_noise) {
  const GanTrainConfig& cfg = g.config();
  if (h_ce.rows() != cfg.in_h || h_ce.cols() != cfg.in_w)
    throw ConfigError("infer: estimate shape does not match the model geometry");
  const dsp::StackedChannel sc = dsp::normalize_scale(h_ce);
  nn::Tensor32 x = to_tensor(sc.data);
  nn::Tensor32 y = g.forward(x, false, sample_noise);

  // The generator works in per-matrix normalized units. The true channel
  // carries roughly twice the energy of the measured half-array rows, minus
  // the noise share, so rescale by that estimate.
  dsp::StackedChannel out;
  out.data = from_tensor(y, 0);
  out.scale.scale_factor = std::sqrt(static_cast<double>(cfg.in_h) * cfg.in_w);
  out.scale.frobenius_norm = std::numbers::sqrt2 * sc.scale.frobenius_norm /
                             std::sqrt(1.0 + std::pow(10.0, -snr_db / 10.0));
  ChannelMatrix cm;
  cm.entries = dsp::denormalize(out);
  cm.kind = ChannelKind::Generated;
  return cm;
}

}  // namespace mrce::gan
