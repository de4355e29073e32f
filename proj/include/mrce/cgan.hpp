#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "mrce/nn.hpp"
#include "mrce/types.hpp"

namespace mrce::gan {

/// Geometry, capacity, and optimization settings for the conditional GAN.
/// One value fully describes a run; the network builders read the geometry
/// fields, the training loop reads the optimization fields.
struct GanTrainConfig {
  int epochs = 150;
  double lr = 2e-4;
  double beta = 100.0;  // weight of the L2 fidelity term in the generator objective
  int batch = 8;
  std::uint64_t seed = 0;
  int filter_len = 5;  // square kernel edge of every convolution
  int in_h = 8;        // antennas
  int in_w = 1200;     // subcarriers
  float leaky_slope = 0.3f;
  float dropout_rate = 0.5f;
  int up4_filters = 65;       // filter count of the fourth upsample stage
  bool use_skips = true;      // mirror skip concatenations (off = ablation)
  bool saturating_g = false;  // literal log(1 - sigmoid) generator objective
  double snr_db = 20.0;       // assumed measurement SNR, used to rescale at inference
};

/// Encoder-decoder over [batch, antennas, subcarriers, 2] real/imag stacks.
///
/// Seven downsample stages (conv -> batch norm except on the first -> leaky
/// ReLU) shrink the input to a [1 x 1 x 128] bottleneck; seven upsample
/// stages (transposed conv targeting the exact mirror shape -> batch norm ->
/// dropout on the first three -> ReLU) grow it back, each of the first six
/// concatenated with the equal-shape downsample output. A final stride-1
/// convolution projects to 2 channels through tanh. Forward mutates cached
/// layer state, so concurrent use needs one instance per thread.
class GeneratorNet {
 public:
  explicit GeneratorNet(const GanTrainConfig& cfg);

  /// `sample_noise` keeps dropout active outside training for stochastic
  /// inference; batch norm always follows `training`.
  nn::Tensor32 forward(const nn::Tensor32& x, bool training, bool sample_noise = false);
  nn::Tensor32 backward(const nn::Tensor32& dy);

  std::vector<nn::Tensor32*> params();
  nn::NamedParams<float> named_params(const std::string& prefix = "g");
  std::int64_t param_count();

  /// Stage output shapes from the last forward: input, each downsample, each
  /// upsample (before its skip concatenation), projection head.
  const std::vector<std::vector<int>>& last_trace() const { return trace_; }
  const GanTrainConfig& config() const { return cfg_; }

 private:
  struct DownStage {
    std::unique_ptr<nn::Conv2D<float>> conv;
    std::unique_ptr<nn::BatchNorm<float>> bn;  // null on the first stage
    std::unique_ptr<nn::Activation<float>> act;
  };
  struct UpStage {
    std::unique_ptr<nn::Conv2DTranspose<float>> deconv;
    std::unique_ptr<nn::BatchNorm<float>> bn;
    std::unique_ptr<nn::Dropout<float>> drop;  // null past the third stage
    std::unique_ptr<nn::Activation<float>> act;
  };

  GanTrainConfig cfg_;
  std::vector<DownStage> down_;
  std::vector<UpStage> up_;
  std::unique_ptr<nn::Conv2D<float>> head_;
  std::unique_ptr<nn::Activation<float>> head_act_;
  std::vector<nn::Tensor32> down_out_;  // post-activation stage outputs kept for skips
  std::vector<int> up_out_channels_;    // pre-concat channel counts for backward splits
  std::vector<std::vector<int>> trace_;
};

/// Strided-conv patch critic over [batch, antennas, subcarriers, 4] stacks
/// (condition concatenated with candidate). Five strided stages, then two
/// zero-pad + valid-conv stages; the last convolution is linear, so the
/// output is a grid of patch logits. Same per-thread caveat as the generator.
class PatchDiscriminator {
 public:
  explicit PatchDiscriminator(const GanTrainConfig& cfg);

  nn::Tensor32 forward(const nn::Tensor32& x, bool training);
  nn::Tensor32 backward(const nn::Tensor32& dy);

  std::vector<nn::Tensor32*> params();
  nn::NamedParams<float> named_params(const std::string& prefix = "d");
  std::int64_t param_count();

  /// Stage output shapes from the last forward, input first.
  const std::vector<std::vector<int>>& last_trace() const { return trace_; }

 private:
  struct Stage {
    std::unique_ptr<nn::ZeroPad2D<float>> pad;  // null on strided stages
    std::unique_ptr<nn::Conv2D<float>> conv;
    std::unique_ptr<nn::BatchNorm<float>> bn;     // null on first and last
    std::unique_ptr<nn::Activation<float>> act;  // null on the last (linear logits)
  };

  GanTrainConfig cfg_;
  std::vector<Stage> stages_;
  std::vector<std::vector<int>> trace_;
};

GeneratorNet build_generator(const GanTrainConfig& cfg);
PatchDiscriminator build_discriminator(const GanTrainConfig& cfg);

/// Per-sample mean over the patch logit grid.
std::vector<double> patch_mean_logits(const nn::Tensor32& patches);

/// Both adversarial losses and their gradients, plus the weighted L2 term.
/// Losses are batch means over per-sample scalars; `l2_term` is the
/// unweighted mean Frobenius distance between generator output and label.
struct GanLosses {
  double loss_d = 0.0;
  double loss_g = 0.0;
  double adv_g = 0.0;
  double l2_term = 0.0;
  nn::Tensor32 d_real_grad;    // d loss_d / d real-pass patch logits
  nn::Tensor32 d_fake_grad_d;  // d loss_d / d fake-pass patch logits
  nn::Tensor32 d_fake_grad_g;  // d adv_g / d fake-pass patch logits
  nn::Tensor32 gen_grad_l2;    // d (beta * l2_term) / d generator output
};

/// Log-sigmoid losses computed on logits: loss_d = mean[softplus(-s_real) +
/// softplus(s_fake)], generator adversarial term mean[softplus(-s_fake)], or
/// mean[-softplus(s_fake)] when `saturating_g`. Throws NumericalError on any
/// non-finite input.
GanLosses cgan_losses(const nn::Tensor32& d_real, const nn::Tensor32& d_fake,
                      const nn::Tensor32& g_out, const nn::Tensor32& label, double beta,
                      bool saturating_g = false);

/// One supervised example: zero-filled measured estimate and the full channel.
struct ChannelPair {
  CMat h_ce;
  CMat h_true;
};

struct GanHistoryRow {
  double loss_d = 0.0;
  double loss_g = 0.0;
  double l2_term = 0.0;
  double val_nse = std::numeric_limits<double>::quiet_NaN();
};

struct CganModel {
  GanTrainConfig cfg;
  GeneratorNet g;
  PatchDiscriminator d;

  nn::NamedParams<float> named_params();
};

CganModel build_cgan(const GanTrainConfig& cfg);

/// Called after each epoch with the zero-based epoch index, that epoch's
/// history row, and the live model, e.g. to write periodic checkpoints.
using GanEpochCallback = std::function<void(int, const GanHistoryRow&, CganModel&)>;

/// Alternating per-batch discriminator/generator Adam updates. Both matrices
/// of every pair are Frobenius-normalized to unit entry RMS before stacking.
/// One history row per epoch; val_nse stays NaN when `val` is empty. The
/// loop reads optimization fields and seed from `cfg` while the networks
/// keep their construction geometry. A trailing batch of one sample folds
/// into its predecessor so batch statistics stay defined. Bit-reproducible
/// per config; throws NumericalError when a loss goes non-finite.
std::vector<GanHistoryRow> train_cgan(CganModel& model, const std::vector<ChannelPair>& train,
                                      const std::vector<ChannelPair>& val,
                                      const GanTrainConfig& cfg,
                                      const GanEpochCallback& on_epoch = {});

/// Run the generator on a zero-filled estimate and undo the normalization.
/// The full-channel power is unknown at inference, so the output scale is
/// estimated from the measured rows and the assumed SNR. Dropout stays off
/// unless `sample_noise`.
ChannelMatrix infer(GeneratorNet& g, const CMat& h_ce, double snr_db = 20.0,
                    bool sample_noise = false);

}  // namespace mrce::gan
