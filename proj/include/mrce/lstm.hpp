#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mrce/nn.hpp"
#include "mrce/preprocess.hpp"
#include "mrce/types.hpp"

namespace mrce::lstm {

/// Activation for the cell candidate and the cell-output transform. Gates
/// (input/forget/output) are always logistic.
enum class CellAct { Tanh, Sigmoid, Linear };

/// One LSTM layer. Gate order in the stacked [4u x .] matrices is
/// (input, forget, candidate, output).
struct LstmLayerParams {
  nn::Tensor64 w;  // [4u, f]  input weights
  nn::Tensor64 r;  // [4u, u]  recurrent weights
  nn::Tensor64 b;  // [4u]
  int units = 0;
  int features = 0;
  CellAct candidate = CellAct::Tanh;
  CellAct cell_out = CellAct::Tanh;

  std::int64_t param_count() const {
    return 4LL * units * (features + units + 1);
  }
};

LstmLayerParams make_lstm_layer(int units, int features, CellAct candidate, CellAct cell_out,
                                std::mt19937_64& rng, double sigma = 0.2);

/// One time step: gates = sigma(W x + R h + b) split (i, f, g, o);
/// c <- f.*c + i.*act(g); h <- o.*act_out(c). Updates h and c in place.
void lstm_cell_step(const LstmLayerParams& p, const Eigen::VectorXd& x, Eigen::VectorXd& h,
                    Eigen::VectorXd& c);

/// Per-step caches recorded by a forward pass, consumed by backpropagation
/// through time.
struct LstmTape {
  Eigen::MatrixXd x;       // [K, f]
  Eigen::MatrixXd i, f, g, o;  // [K, u] activated gates
  Eigen::MatrixXd c;       // [K, u] cell states after the step
  Eigen::MatrixXd h;       // [K, u] hidden states after the step
};

/// Run a full sequence from h0 = c0 = 0; returns hidden states for every step
/// ([K, u]). If `tape` is non-null it is filled for a later backward pass.
Eigen::MatrixXd lstm_layer_forward(const LstmLayerParams& p, const Eigen::MatrixXd& x_seq,
                                   LstmTape* tape = nullptr);

/// Backpropagation through time. Accumulates parameter gradients into
/// p.w.g/p.r.g/p.b.g and returns dLoss/dx ([K, f]). `truncation` > 0 cuts the
/// recurrent gradient flow at chunk boundaries every that many steps;
/// 0 means the full sequence.
Eigen::MatrixXd lstm_layer_backward(LstmLayerParams& p, const LstmTape& tape,
                                    const Eigen::MatrixXd& dh_seq, int truncation = 0);

/// Two-layer phase refinement net: 10 tanh units over (coarse, quantized)
/// phase pairs, then a single linear-activation unit producing the refined
/// phase directly. 568 parameters.
struct PhaseNet {
  LstmLayerParams l1;
  LstmLayerParams l2;

  std::int64_t param_count() const { return l1.param_count() + l2.param_count(); }
  std::vector<nn::Tensor64*> params();
  nn::NamedParams<double> named_params();
};

/// `literal_sigmoid_candidate` switches the first layer's cell candidate from
/// tanh to logistic; the output layer's activation stays linear either way.
PhaseNet build_phase_net(std::uint64_t seed, bool literal_sigmoid_candidate = false);

/// Refined phase trajectory for one antenna: runs both layers over the
/// [K, 2] stack of (coarse phase, one-bit phase) and returns the raw linear
/// outputs (not wrapped).
RVec refine_phase(const PhaseNet& net, const RVec& coarse_phase, const RVec& quantized_phase);

struct LstmTrainConfig {
  int epochs = 50;
  double lr = 2e-4;
  int batch = 8;
  int truncation = 0;  // BPTT window; 0 = full sequence
  std::uint64_t seed = 0;
  bool circular_loss = false;  // wrap the error to (-pi, pi] before squaring
};

struct LstmTrainHistory {
  std::vector<double> train_mse;  // per epoch, after the update pass
  std::vector<double> val_mse;
};

double phase_mse(const PhaseNet& net, const std::vector<dsp::PhaseSequence>& seqs,
                 bool circular = false);

/// Called after each epoch with the zero-based epoch index and the live net,
/// e.g. to write periodic checkpoints.
using LstmEpochCallback = std::function<void(int, PhaseNet&)>;

/// Minibatch Adam on mean squared phase error over all time steps. Validation
/// MSE is recorded every epoch (entry 0 of each history column is the
/// untrained net). Throws NumericalError if the loss goes non-finite.
LstmTrainHistory train_phase_net(PhaseNet& net, const std::vector<dsp::PhaseSequence>& train,
                                 const std::vector<dsp::PhaseSequence>& val,
                                 const LstmTrainConfig& cfg,
                                 const LstmEpochCallback& on_epoch = {});

}  // namespace mrce::lstm
