#include "mrce/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace mrce::lstm {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap map_of(const nn::Tensor64& t, int rows, int cols) {
  return ConstMap(t.v.data(), rows, cols);
}

Eigen::ArrayXd logistic(const Eigen::ArrayXd& z) {
  return 1.0 / (1.0 + (-z).exp());
}

Eigen::ArrayXd cell_act(CellAct kind, const Eigen::ArrayXd& z) {
  switch (kind) {
    case CellAct::Tanh: return z.tanh();
    case CellAct::Sigmoid: return logistic(z);
    case CellAct::Linear: return z;
  }
  throw ConfigError("lstm: unknown cell activation");
}

/// Derivative expressed through the activated value a = act(z).
Eigen::ArrayXd cell_act_grad_from_value(CellAct kind, const Eigen::ArrayXd& a) {
  switch (kind) {
    case CellAct::Tanh: return 1.0 - a.square();
    case CellAct::Sigmoid: return a * (1.0 - a);
    case CellAct::Linear: return Eigen::ArrayXd::Ones(a.size());
  }
  throw ConfigError("lstm: unknown cell activation");
}

void check_layer(const LstmLayerParams& p) {
  if (p.units < 1 || p.features < 1) throw ConfigError("lstm: units and features must be positive");
  if (p.w.shape != std::vector<int>{4 * p.units, p.features} ||
      p.r.shape != std::vector<int>{4 * p.units, p.units} ||
      p.b.shape != std::vector<int>{4 * p.units})
    throw ConfigError("lstm: parameter shapes do not match units/features");
}

double wrap_pi(double x) {
  return std::remainder(x, 2.0 * std::numbers::pi);
}

}  // namespace

LstmLayerParams make_lstm_layer(int units, int features, CellAct candidate, CellAct cell_out,
                                std::mt19937_64& rng, double sigma) {
  if (units < 1 || features < 1) throw ConfigError("lstm: units and features must be positive");
  LstmLayerParams p;
  p.units = units;
  p.features = features;
  p.candidate = candidate;
  p.cell_out = cell_out;
  p.w = nn::init_normal<double>({4 * units, features}, 0.0, sigma, rng);
  p.r = nn::init_normal<double>({4 * units, units}, 0.0, sigma, rng);
  p.b = nn::Tensor64({4 * units});
  return p;
}

void lstm_cell_step(const LstmLayerParams& p, const Eigen::VectorXd& x, Eigen::VectorXd& h,
                    Eigen::VectorXd& c) {
  check_layer(p);
  const int u = p.units;
  if (x.size() != p.features || h.size() != u || c.size() != u)
    throw ConfigError("lstm_cell_step: input/state sizes do not match the layer");

  const Eigen::VectorXd z = map_of(p.w, 4 * u, p.features) * x +
                            map_of(p.r, 4 * u, u) * h +
                            Eigen::Map<const Eigen::VectorXd>(p.b.v.data(), 4 * u);
  const Eigen::ArrayXd gi = logistic(z.segment(0, u).array());
  const Eigen::ArrayXd gf = logistic(z.segment(u, u).array());
  const Eigen::ArrayXd gg = cell_act(p.candidate, z.segment(2 * u, u).array());
  const Eigen::ArrayXd go = logistic(z.segment(3 * u, u).array());

  c = (gf * c.array() + gi * gg).matrix();
  h = (go * cell_act(p.cell_out, c.array())).matrix();
}

Eigen::MatrixXd lstm_layer_forward(const LstmLayerParams& p, const Eigen::MatrixXd& x_seq,
                                   LstmTape* tape) {
  check_layer(p);
  const int steps = static_cast<int>(x_seq.rows());
  const int u = p.units;
  if (steps < 1) throw ConfigError("lstm_layer_forward: empty sequence");
  if (x_seq.cols() != p.features)
    throw ConfigError("lstm_layer_forward: sequence feature width does not match the layer");

  const auto wm = map_of(p.w, 4 * u, p.features);
  const auto rm = map_of(p.r, 4 * u, u);
  const auto bv = Eigen::Map<const Eigen::VectorXd>(p.b.v.data(), 4 * u);

  Eigen::MatrixXd hs(steps, u);
  if (tape) {
    tape->x = x_seq;
    tape->i.resize(steps, u);
    tape->f.resize(steps, u);
    tape->g.resize(steps, u);
    tape->o.resize(steps, u);
    tape->c.resize(steps, u);
    tape->h.resize(steps, u);
  }

  Eigen::VectorXd h = Eigen::VectorXd::Zero(u);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(u);
  for (int t = 0; t < steps; ++t) {
    const Eigen::VectorXd z = wm * x_seq.row(t).transpose() + rm * h + bv;
    const Eigen::ArrayXd gi = logistic(z.segment(0, u).array());
    const Eigen::ArrayXd gf = logistic(z.segment(u, u).array());
    const Eigen::ArrayXd gg = cell_act(p.candidate, z.segment(2 * u, u).array());
    const Eigen::ArrayXd go = logistic(z.segment(3 * u, u).array());
    c = (gf * c.array() + gi * gg).matrix();
    h = (go * cell_act(p.cell_out, c.array())).matrix();
    hs.row(t) = h.transpose();
    if (tape) {
      tape->i.row(t) = gi.transpose();
      tape->f.row(t) = gf.transpose();
      tape->g.row(t) = gg.transpose();
      tape->o.row(t) = go.transpose();
      tape->c.row(t) = c.transpose();
      tape->h.row(t) = h.transpose();
    }
  }
  return hs;
}

Eigen::MatrixXd lstm_layer_backward(LstmLayerParams& p, const LstmTape& tape,
                                    const Eigen::MatrixXd& dh_seq, int truncation) {
  check_layer(p);
  const int steps = static_cast<int>(tape.x.rows());
  const int u = p.units;
  if (dh_seq.rows() != steps || dh_seq.cols() != u)
    throw ConfigError("lstm_layer_backward: gradient shape does not match the tape");
  if (truncation < 0) throw ConfigError("lstm_layer_backward: truncation must be >= 0");

  p.w.ensure_grad();
  p.r.ensure_grad();
  p.b.ensure_grad();
  const auto wm = map_of(p.w, 4 * u, p.features);
  const auto rm = map_of(p.r, 4 * u, u);
  MutMap wg(p.w.g.data(), 4 * u, p.features);
  MutMap rg(p.r.g.data(), 4 * u, u);
  Eigen::Map<Eigen::VectorXd> bg(p.b.g.data(), 4 * u);

  Eigen::MatrixXd dx(steps, p.features);
  Eigen::ArrayXd dh_carry = Eigen::ArrayXd::Zero(u);
  Eigen::ArrayXd dc_carry = Eigen::ArrayXd::Zero(u);
  Eigen::VectorXd dz(4 * u);

  for (int t = steps - 1; t >= 0; --t) {
    const Eigen::ArrayXd gi = tape.i.row(t).transpose().array();
    const Eigen::ArrayXd gf = tape.f.row(t).transpose().array();
    const Eigen::ArrayXd gg = tape.g.row(t).transpose().array();
    const Eigen::ArrayXd go = tape.o.row(t).transpose().array();
    const Eigen::ArrayXd ct = tape.c.row(t).transpose().array();
    const Eigen::ArrayXd c_prev =
        t > 0 ? Eigen::ArrayXd(tape.c.row(t - 1).transpose().array()) : Eigen::ArrayXd::Zero(u);

    const Eigen::ArrayXd dh = dh_seq.row(t).transpose().array() + dh_carry;
    const Eigen::ArrayXd theta = cell_act(p.cell_out, ct);
    const Eigen::ArrayXd dc = dc_carry + dh * go * cell_act_grad_from_value(p.cell_out, theta);

    dz.segment(0, u) = (dc * gg * gi * (1.0 - gi)).matrix();            // input gate
    dz.segment(u, u) = (dc * c_prev * gf * (1.0 - gf)).matrix();        // forget gate
    dz.segment(2 * u, u) = (dc * gi * cell_act_grad_from_value(p.candidate, gg)).matrix();
    dz.segment(3 * u, u) = (dh * theta * go * (1.0 - go)).matrix();     // output gate

    wg.noalias() += dz * tape.x.row(t);
    if (t > 0) rg.noalias() += dz * tape.h.row(t - 1);
    bg += dz;
    dx.row(t) = (wm.transpose() * dz).transpose();

    dh_carry = (rm.transpose() * dz).array();
    dc_carry = dc * gf;
    if (truncation > 0 && t % truncation == 0) {
      dh_carry.setZero();
      dc_carry.setZero();
    }
  }
  return dx;
}

std::vector<nn::Tensor64*> PhaseNet::params() {
  return {&l1.w, &l1.r, &l1.b, &l2.w, &l2.r, &l2.b};
}

nn::NamedParams<double> PhaseNet::named_params() {
  return {{"l1.w", &l1.w}, {"l1.r", &l1.r}, {"l1.b", &l1.b},
          {"l2.w", &l2.w}, {"l2.r", &l2.r}, {"l2.b", &l2.b}};
}

PhaseNet build_phase_net(std::uint64_t seed, bool literal_sigmoid_candidate) {
  std::mt19937_64 rng(seed);
  PhaseNet net;
  const CellAct cand = literal_sigmoid_candidate ? CellAct::Sigmoid : CellAct::Tanh;
  net.l1 = make_lstm_layer(10, 2, cand, CellAct::Tanh, rng);
  net.l2 = make_lstm_layer(1, 10, CellAct::Linear, CellAct::Linear, rng);
  return net;
}

RVec refine_phase(const PhaseNet& net, const RVec& coarse_phase, const RVec& quantized_phase) {
  if (coarse_phase.size() != quantized_phase.size())
    throw ConfigError("refine_phase: input sequences must have equal length");
  const int steps = static_cast<int>(coarse_phase.size());
  Eigen::MatrixXd x(steps, 2);
  x.col(0) = coarse_phase;
  x.col(1) = quantized_phase;
  return lstm_layer_forward(net.l2, lstm_layer_forward(net.l1, x)).col(0);
}

namespace {

Eigen::MatrixXd stack_inputs(const dsp::PhaseSequence& s) {
  if (s.i1.size() != s.i2.size() || s.i1.size() != s.label.size())
    throw ConfigError("lstm: phase sequence field lengths differ");
  Eigen::MatrixXd x(s.i1.size(), 2);
  x.col(0) = s.i1;
  x.col(1) = s.i2;
  return x;
}

/// Error trajectory and its mean-square value; `circular` measures the
/// shortest angular distance instead of the raw difference.
Eigen::ArrayXd seq_error(const PhaseNet& net, const dsp::PhaseSequence& s, bool circular) {
  const Eigen::MatrixXd x = stack_inputs(s);
  const Eigen::VectorXd y = lstm_layer_forward(net.l2, lstm_layer_forward(net.l1, x)).col(0);
  Eigen::ArrayXd err = (y - s.label).array();
  if (circular)
    for (Eigen::Index k = 0; k < err.size(); ++k) err[k] = wrap_pi(err[k]);
  return err;
}

}  // namespace

double phase_mse(const PhaseNet& net, const std::vector<dsp::PhaseSequence>& seqs, bool circular) {
  if (seqs.empty()) throw ConfigError("phase_mse: no sequences");
  double sum = 0.0;
  std::int64_t count = 0;
  for (const auto& s : seqs) {
    const Eigen::ArrayXd err = seq_error(net, s, circular);
    sum += err.square().sum();
    count += err.size();
  }
  return sum / static_cast<double>(count);
}

LstmTrainHistory train_phase_net(PhaseNet& net, const std::vector<dsp::PhaseSequence>& train,
                                 const std::vector<dsp::PhaseSequence>& val,
                                 const LstmTrainConfig& cfg, const LstmEpochCallback& on_epoch) {
  if (train.empty()) throw ConfigError("train_phase_net: empty training set");
  if (cfg.epochs < 1 || cfg.batch < 1 || !(cfg.lr > 0))
    throw ConfigError("train_phase_net: epochs, batch, and lr must be positive");

  nn::Adam<double> opt(net.params(), cfg.lr);
  std::mt19937_64 shuffle_rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  LstmTrainHistory hist;
  hist.train_mse.push_back(phase_mse(net, train, cfg.circular_loss));
  if (!val.empty()) hist.val_mse.push_back(phase_mse(net, val, cfg.circular_loss));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch);
      opt.zero_grad();
      std::int64_t count = 0;
      for (std::size_t k = start; k < stop; ++k) count += train[order[k]].label.size();

      for (std::size_t k = start; k < stop; ++k) {
        const auto& s = train[order[k]];
        const Eigen::MatrixXd x = stack_inputs(s);
        LstmTape tape1, tape2;
        const Eigen::MatrixXd h1 = lstm_layer_forward(net.l1, x, &tape1);
        const Eigen::MatrixXd h2 = lstm_layer_forward(net.l2, h1, &tape2);
        Eigen::ArrayXd err = (h2.col(0) - s.label).array();
        if (cfg.circular_loss)
          for (Eigen::Index j = 0; j < err.size(); ++j) err[j] = wrap_pi(err[j]);
        Eigen::MatrixXd dh2 = (2.0 / static_cast<double>(count)) * err.matrix();
        const Eigen::MatrixXd dh1 = lstm_layer_backward(net.l2, tape2, dh2, cfg.truncation);
        lstm_layer_backward(net.l1, tape1, dh1, cfg.truncation);
      }
      opt.step();
    }

    const double train_mse = phase_mse(net, train, cfg.circular_loss);
    if (!std::isfinite(train_mse))
      throw NumericalError("train_phase_net: loss diverged to a non-finite value");
    hist.train_mse.push_back(train_mse);
    if (!val.empty()) hist.val_mse.push_back(phase_mse(net, val, cfg.circular_loss));
    if (on_epoch) on_epoch(epoch, net);
  }
  return hist;
}

}  // namespace mrce::lstm
