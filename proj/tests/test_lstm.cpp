#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "mrce/channel_sim.hpp"
#include "mrce/eval.hpp"
#include "mrce/fft.hpp"
#include "mrce/lstm.hpp"
#include "mrce/preprocess.hpp"
#include "mrce/rng.hpp"

using namespace mrce;
using lstm::CellAct;

namespace {

lstm::LstmLayerParams random_layer(int units, int features, std::uint64_t seed,
                                   CellAct cand = CellAct::Tanh,
                                   CellAct out = CellAct::Tanh, double sigma = 0.4) {
  std::mt19937_64 rng(seed);
  return lstm::make_lstm_layer(units, features, cand, out, rng, sigma);
}

Eigen::MatrixXd random_seq(int steps, int features, std::uint64_t seed, double amp = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, amp);
  Eigen::MatrixXd x(steps, features);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = gauss(rng);
  return x;
}

}  // namespace

TEST_CASE("layer construction: shapes, parameter counts, and errors") {
  std::mt19937_64 rng(7);
  const auto p = lstm::make_lstm_layer(10, 2, CellAct::Tanh, CellAct::Tanh, rng);
  CHECK(p.w.shape == std::vector<int>{40, 2});
  CHECK(p.r.shape == std::vector<int>{40, 10});
  CHECK(p.b.shape == std::vector<int>{40});
  CHECK(p.param_count() == 520);
  for (double v : p.b.v) CHECK(v == 0.0);

  const auto q = lstm::make_lstm_layer(1, 10, CellAct::Linear, CellAct::Linear, rng);
  CHECK(q.param_count() == 48);

  std::mt19937_64 r1(11), r2(11);
  const auto a = lstm::make_lstm_layer(3, 2, CellAct::Tanh, CellAct::Tanh, r1);
  const auto b = lstm::make_lstm_layer(3, 2, CellAct::Tanh, CellAct::Tanh, r2);
  CHECK(a.w.v == b.w.v);
  CHECK(a.r.v == b.r.v);

  CHECK_THROWS_AS((void)lstm::make_lstm_layer(0, 2, CellAct::Tanh, CellAct::Tanh, rng),
                  ConfigError);
  auto bad = random_layer(2, 2, 1);
  bad.w = nn::Tensor64({8, 3});
  Eigen::VectorXd h = Eigen::VectorXd::Zero(2), c = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd x = Eigen::VectorXd::Ones(2);
  CHECK_THROWS_AS(lstm::lstm_cell_step(bad, x, h, c), ConfigError);
}

TEST_CASE("phase net has exactly 568 trainable parameters") {
  const auto net = lstm::build_phase_net(3);
  CHECK(net.l1.param_count() == 520);
  CHECK(net.l2.param_count() == 48);
  CHECK(net.param_count() == 568);

  std::int64_t total = 0;
  auto copy = net;
  for (const auto* t : copy.params()) total += t->size();
  CHECK(total == 568);

  CHECK(net.l1.units == 10);
  CHECK(net.l1.features == 2);
  CHECK(net.l1.candidate == CellAct::Tanh);
  CHECK(net.l2.units == 1);
  CHECK(net.l2.candidate == CellAct::Linear);
  CHECK(net.l2.cell_out == CellAct::Linear);

  const auto lit = lstm::build_phase_net(3, true);
  CHECK(lit.l1.candidate == CellAct::Sigmoid);
  CHECK(lit.l2.candidate == CellAct::Linear);
  CHECK(lit.param_count() == 568);

  const auto again = lstm::build_phase_net(3);
  CHECK(again.l1.w.v == net.l1.w.v);
  CHECK(again.l2.r.v == net.l2.r.v);
  const auto other = lstm::build_phase_net(4);
  CHECK(other.l1.w.v != net.l1.w.v);
}

TEST_CASE("all-zero parameters keep hidden and cell state at zero") {
  auto p = random_layer(4, 3, 21);
  std::fill(p.w.v.begin(), p.w.v.end(), 0.0);
  std::fill(p.r.v.begin(), p.r.v.end(), 0.0);

  Eigen::VectorXd h = Eigen::VectorXd::Zero(4), c = Eigen::VectorXd::Zero(4);
  const Eigen::VectorXd x = random_seq(1, 3, 5).row(0).transpose();
  lstm::lstm_cell_step(p, x, h, c);
  CHECK(h.cwiseAbs().maxCoeff() == 0.0);
  CHECK(c.cwiseAbs().maxCoeff() == 0.0);

  const Eigen::MatrixXd hs = lstm::lstm_layer_forward(p, random_seq(6, 3, 9, 3.0));
  CHECK(hs.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("saturated forget gate carries the cell state, closed input gate adds nothing") {
  auto p = random_layer(2, 1, 33);
  std::fill(p.w.v.begin(), p.w.v.end(), 0.0);
  std::fill(p.r.v.begin(), p.r.v.end(), 0.0);
  const int u = 2;
  for (int j = 0; j < u; ++j) {
    p.b.v[static_cast<std::size_t>(0 * u + j)] = -40.0;  // input gate -> 0
    p.b.v[static_cast<std::size_t>(1 * u + j)] = 40.0;   // forget gate -> 1
    p.b.v[static_cast<std::size_t>(3 * u + j)] = 40.0;   // output gate -> 1
  }

  Eigen::VectorXd c(2), h(2);
  c << 0.7, -1.3;
  h << 0.1, 0.2;
  const Eigen::VectorXd c0 = c;
  Eigen::VectorXd x(1);
  x << 2.5;
  for (int t = 0; t < 5; ++t) lstm::lstm_cell_step(p, x, h, c);
  CHECK((c - c0).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(h[0] - std::tanh(0.7)) < 1e-12);
  CHECK(std::abs(h[1] - std::tanh(-1.3)) < 1e-12);
}

TEST_CASE("scalar cell matches an extended-precision step oracle") {
  // One unit, one feature: every (candidate, output) activation pair is
  // recomputed step by step in long double.
  const double wi = 0.31, wf = -0.47, wg = 0.83, wo = 0.22;
  const double ri = -0.29, rf = 0.41, rg = -0.62, ro = 0.55;
  const double bi = 0.05, bf = 0.11, bg = -0.07, bo = 0.02;
  const std::vector<double> xs{0.9, -1.4, 0.3, 2.2, -0.6};

  auto run_oracle = [&](CellAct cand, CellAct out) {
    auto sigl = [](long double z) { return 1.0L / (1.0L + std::exp(-z)); };
    auto actl = [&](CellAct k, long double z) {
      if (k == CellAct::Tanh) return std::tanh(z);
      if (k == CellAct::Sigmoid) return sigl(z);
      return z;
    };
    std::vector<double> hs;
    long double h = 0.0L, c = 0.0L;
    for (double xv : xs) {
      const long double x = xv;
      const long double i = sigl(wi * x + ri * h + bi);
      const long double f = sigl(wf * x + rf * h + bf);
      const long double g = actl(cand, wg * x + rg * h + bg);
      const long double o = sigl(wo * x + ro * h + bo);
      c = f * c + i * g;
      h = o * actl(out, c);
      hs.push_back(static_cast<double>(h));
    }
    return hs;
  };

  for (CellAct cand : {CellAct::Tanh, CellAct::Sigmoid, CellAct::Linear}) {
    for (CellAct out : {CellAct::Tanh, CellAct::Linear}) {
      lstm::LstmLayerParams p;
      p.units = 1;
      p.features = 1;
      p.candidate = cand;
      p.cell_out = out;
      p.w = nn::Tensor64({4, 1});
      p.w.v = {wi, wf, wg, wo};
      p.r = nn::Tensor64({4, 1});
      p.r.v = {ri, rf, rg, ro};
      p.b = nn::Tensor64({4});
      p.b.v = {bi, bf, bg, bo};

      Eigen::MatrixXd x(5, 1);
      for (int t = 0; t < 5; ++t) x(t, 0) = xs[static_cast<std::size_t>(t)];
      const Eigen::MatrixXd hs = lstm::lstm_layer_forward(p, x);
      const auto want = run_oracle(cand, out);
      for (int t = 0; t < 5; ++t) {
        const double scale = std::max(std::abs(want[static_cast<std::size_t>(t)]), 1e-6);
        CHECK(std::abs(hs(t, 0) - want[static_cast<std::size_t>(t)]) / scale < 1e-12);
      }
    }
  }
}

TEST_CASE("length-one sequence equals a single cell step from the zero state") {
  const auto p = random_layer(3, 2, 55);
  const Eigen::MatrixXd x = random_seq(1, 2, 4);
  const Eigen::MatrixXd hs = lstm::lstm_layer_forward(p, x);

  Eigen::VectorXd h = Eigen::VectorXd::Zero(3), c = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd x0 = x.row(0).transpose();
  lstm::lstm_cell_step(p, x0, h, c);
  CHECK((hs.row(0).transpose() - h).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("the layer is stateful: splitting a sequence changes the second half") {
  const auto p = random_layer(4, 2, 77);
  const Eigen::MatrixXd x = random_seq(8, 2, 13);
  const Eigen::MatrixXd full = lstm::lstm_layer_forward(p, x);
  const Eigen::MatrixXd tail = lstm::lstm_layer_forward(p, x.bottomRows(4));
  CHECK((full.bottomRows(4) - tail).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("backpropagation through five steps matches finite differences") {
  std::mt19937_64 rng(2026);
  for (CellAct cand : {CellAct::Tanh, CellAct::Sigmoid, CellAct::Linear}) {
    auto p = random_layer(3, 2, 101 + static_cast<std::uint64_t>(cand), cand, CellAct::Tanh);
    nn::Tensor64 x = gradcheck::random_tensor({5, 2}, rng);

    auto to_mat = [&]() {
      Eigen::MatrixXd m(5, 2);
      for (int t = 0; t < 5; ++t)
        for (int j = 0; j < 2; ++j) m(t, j) = x.v[static_cast<std::size_t>(t * 2 + j)];
      return m;
    };
    auto fwd = [&]() {
      const Eigen::MatrixXd hs = lstm::lstm_layer_forward(p, to_mat());
      nn::Tensor64 y({5, 3});
      for (int t = 0; t < 5; ++t)
        for (int j = 0; j < 3; ++j) y.v[static_cast<std::size_t>(t * 3 + j)] = hs(t, j);
      return y;
    };
    auto bwd = [&](const nn::Tensor64& dy) {
      lstm::LstmTape tape;
      lstm::lstm_layer_forward(p, to_mat(), &tape);
      Eigen::MatrixXd dh(5, 3);
      for (int t = 0; t < 5; ++t)
        for (int j = 0; j < 3; ++j) dh(t, j) = dy.v[static_cast<std::size_t>(t * 3 + j)];
      const Eigen::MatrixXd dx = lstm::lstm_layer_backward(p, tape, dh);
      for (int t = 0; t < 5; ++t)
        for (int j = 0; j < 2; ++j) x.g[static_cast<std::size_t>(t * 2 + j)] = dx(t, j);
    };
    const double err = gradcheck::max_rel_error(fwd, bwd, {&p.w, &p.r, &p.b, &x}, rng, 1e-4);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("backpropagation through the stacked phase net matches finite differences") {
  std::mt19937_64 rng(404);
  auto net = lstm::build_phase_net(9);
  nn::Tensor64 x = gradcheck::random_tensor({5, 2}, rng);

  auto to_mat = [&]() {
    Eigen::MatrixXd m(5, 2);
    for (int t = 0; t < 5; ++t)
      for (int j = 0; j < 2; ++j) m(t, j) = x.v[static_cast<std::size_t>(t * 2 + j)];
    return m;
  };
  auto fwd = [&]() {
    const Eigen::MatrixXd y = lstm::lstm_layer_forward(net.l2, lstm::lstm_layer_forward(net.l1, to_mat()));
    nn::Tensor64 out({5, 1});
    for (int t = 0; t < 5; ++t) out.v[static_cast<std::size_t>(t)] = y(t, 0);
    return out;
  };
  auto bwd = [&](const nn::Tensor64& dy) {
    lstm::LstmTape t1, t2;
    const Eigen::MatrixXd h1 = lstm::lstm_layer_forward(net.l1, to_mat(), &t1);
    lstm::lstm_layer_forward(net.l2, h1, &t2);
    Eigen::MatrixXd dh2(5, 1);
    for (int t = 0; t < 5; ++t) dh2(t, 0) = dy.v[static_cast<std::size_t>(t)];
    const Eigen::MatrixXd dh1 = lstm::lstm_layer_backward(net.l2, t2, dh2);
    const Eigen::MatrixXd dx = lstm::lstm_layer_backward(net.l1, t1, dh1);
    for (int t = 0; t < 5; ++t)
      for (int j = 0; j < 2; ++j) x.g[static_cast<std::size_t>(t * 2 + j)] = dx(t, j);
  };
  std::vector<nn::Tensor64*> wrt = net.params();
  wrt.push_back(&x);
  const double err = gradcheck::max_rel_error(fwd, bwd, wrt, rng, 1e-4);
  CHECK(err < 1e-4);
}

TEST_CASE("gradient truncation cuts flow at chunk boundaries") {
  auto p = random_layer(3, 2, 909);
  const Eigen::MatrixXd x = random_seq(8, 2, 31);
  Eigen::MatrixXd dh = random_seq(8, 3, 32);

  auto grads_with = [&](int trunc) {
    lstm::LstmTape tape;
    lstm::lstm_layer_forward(p, x, &tape);
    p.w.ensure_grad();
    p.w.zero_grad();
    p.r.ensure_grad();
    p.r.zero_grad();
    p.b.ensure_grad();
    p.b.zero_grad();
    lstm::lstm_layer_backward(p, tape, dh, trunc);
    return std::make_pair(p.w.g, p.r.g);
  };

  const auto full0 = grads_with(0);
  const auto full8 = grads_with(8);
  CHECK(full0.first == full8.first);
  CHECK(full0.second == full8.second);

  const auto short2 = grads_with(2);
  double diff = 0.0;
  for (std::size_t i = 0; i < full0.first.size(); ++i)
    diff = std::max(diff, std::abs(full0.first[i] - short2.first[i]));
  CHECK(diff > 1e-9);

  CHECK_THROWS_AS(grads_with(-1), ConfigError);
}

TEST_CASE("cell and hidden states stay bounded with tanh activations") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const auto p = random_layer(6, 3, seed, CellAct::Tanh, CellAct::Tanh, 1.5);
    const int steps = 50;
    lstm::LstmTape tape;
    lstm::lstm_layer_forward(p, random_seq(steps, 3, seed + 100, 5.0), &tape);
    for (int t = 0; t < steps; ++t) {
      CHECK(tape.c.row(t).cwiseAbs().maxCoeff() <= static_cast<double>(t + 1) + 1e-12);
      CHECK(tape.h.row(t).cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("phase MSE is permutation-invariant and additive across steps") {
  const auto net = lstm::build_phase_net(17);
  std::mt19937_64 rng(88);
  std::normal_distribution<double> gauss(0.0, 1.0);

  auto make_seq = [&](int steps) {
    dsp::PhaseSequence s;
    s.i1.resize(steps);
    s.i2.resize(steps);
    s.label.resize(steps);
    for (int t = 0; t < steps; ++t) {
      s.i1[t] = gauss(rng);
      s.i2[t] = gauss(rng);
      s.label[t] = gauss(rng);
    }
    return s;
  };

  std::vector<dsp::PhaseSequence> batch{make_seq(16), make_seq(8), make_seq(24)};
  const double mse = lstm::phase_mse(net, batch);

  std::vector<dsp::PhaseSequence> shuffled{batch[2], batch[0], batch[1]};
  CHECK(lstm::phase_mse(net, shuffled) == doctest::Approx(mse).epsilon(1e-12));

  // Additivity: the batch MSE is the step-count-weighted mean of per-sequence
  // MSEs, and each sequence's MSE is the mean of its per-step squared errors.
  double weighted = 0.0;
  int steps = 0;
  for (const auto& s : batch) {
    const int k = static_cast<int>(s.label.size());
    weighted += lstm::phase_mse(net, {s}) * k;
    steps += k;
  }
  CHECK(weighted / steps == doctest::Approx(mse).epsilon(1e-12));

  const auto& s0 = batch[0];
  const RVec y = lstm::refine_phase(net, s0.i1, s0.i2);
  double manual = 0.0;
  for (Eigen::Index t = 0; t < y.size(); ++t) manual += (y[t] - s0.label[t]) * (y[t] - s0.label[t]);
  manual /= static_cast<double>(y.size());
  CHECK(lstm::phase_mse(net, {s0}) == doctest::Approx(manual).epsilon(1e-12));

  // Circular variant: errors near +-2pi collapse to ~0.
  dsp::PhaseSequence wrap;
  wrap.i1 = RVec::Zero(4);
  wrap.i2 = RVec::Zero(4);
  const RVec base = lstm::refine_phase(net, wrap.i1, wrap.i2);
  wrap.label = base.array() - 2.0 * std::numbers::pi;
  CHECK(lstm::phase_mse(net, {wrap}, true) < 1e-20);
  CHECK(lstm::phase_mse(net, {wrap}, false) ==
        doctest::Approx(4.0 * std::numbers::pi * std::numbers::pi).epsilon(1e-9));
}

TEST_CASE("refine_phase output shape, determinism, and input validation") {
  const auto net = lstm::build_phase_net(23);
  const RVec a = random_seq(12, 1, 3).col(0);
  const RVec b = random_seq(12, 1, 4).col(0);
  const RVec y1 = lstm::refine_phase(net, a, b);
  const RVec y2 = lstm::refine_phase(net, a, b);
  CHECK(y1.size() == 12);
  CHECK((y1 - y2).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS((void)lstm::refine_phase(net, a, b.head(5)), ConfigError);
}

TEST_CASE("identity task: the net learns to pass the first input through") {
  std::mt19937_64 rng(314);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.3, 2.2);

  // Smooth bounded trajectories in (-pi, pi) with no wraparound jumps.
  auto make_seq = [&](int steps) {
    dsp::PhaseSequence s;
    s.i1.resize(steps);
    s.i2.resize(steps);
    s.label.resize(steps);
    const double a1 = 0.35 * uni(rng), f1 = uni(rng), p1 = gauss(rng);
    const double a2 = 0.2 * uni(rng), f2 = uni(rng), p2 = gauss(rng);
    for (int t = 0; t < steps; ++t) {
      const double v = a1 * std::sin(0.2 * f1 * t + p1) + a2 * std::sin(0.35 * f2 * t + p2);
      s.i1[t] = v;
      s.i2[t] = 0.1 * gauss(rng);
      s.label[t] = v;
    }
    return s;
  };

  std::vector<dsp::PhaseSequence> train, val;
  for (int n = 0; n < 24; ++n) train.push_back(make_seq(32));
  for (int n = 0; n < 6; ++n) val.push_back(make_seq(32));

  auto net = lstm::build_phase_net(99);
  lstm::LstmTrainConfig cfg;
  cfg.epochs = 600;
  cfg.lr = 1e-2;
  cfg.batch = 4;
  cfg.seed = 5;
  const auto coarse = lstm::train_phase_net(net, train, val, cfg);
  CHECK(coarse.train_mse.size() == 601);
  CHECK(coarse.val_mse.size() == 601);

  cfg.epochs = 300;
  cfg.lr = 2e-3;
  const auto fine = lstm::train_phase_net(net, train, val, cfg);
  CHECK(fine.val_mse.back() < 1e-3);
}

TEST_CASE("training is reproducible per seed and guards against divergence") {
  std::mt19937_64 rng(55);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto make_seq = [&](int steps) {
    dsp::PhaseSequence s;
    s.i1 = RVec::NullaryExpr(steps, [&](Eigen::Index) { return gauss(rng); });
    s.i2 = RVec::NullaryExpr(steps, [&](Eigen::Index) { return gauss(rng); });
    s.label = s.i1;
    return s;
  };
  std::vector<dsp::PhaseSequence> train, val;
  for (int n = 0; n < 10; ++n) train.push_back(make_seq(16));
  for (int n = 0; n < 3; ++n) val.push_back(make_seq(16));

  lstm::LstmTrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch = 4;
  cfg.seed = 42;

  auto run = [&]() {
    auto net = lstm::build_phase_net(7);
    const auto hist = lstm::train_phase_net(net, train, val, cfg);
    return std::make_pair(hist, net.l1.w.v);
  };
  const auto [h1, w1] = run();
  const auto [h2, w2] = run();
  CHECK(h1.train_mse == h2.train_mse);
  CHECK(h1.val_mse == h2.val_mse);
  CHECK(w1 == w2);

  auto cfg2 = cfg;
  cfg2.seed = 43;
  auto net3 = lstm::build_phase_net(7);
  const auto h3 = lstm::train_phase_net(net3, train, val, cfg2);
  CHECK(h3.train_mse != h1.train_mse);

  auto poisoned = train;
  poisoned[0].label[0] = std::numeric_limits<double>::quiet_NaN();
  auto net4 = lstm::build_phase_net(7);
  CHECK_THROWS_AS((void)lstm::train_phase_net(net4, poisoned, val, cfg), NumericalError);

  CHECK_THROWS_AS((void)lstm::train_phase_net(net4, {}, val, cfg), ConfigError);
  auto bad = cfg;
  bad.lr = 0.0;
  CHECK_THROWS_AS((void)lstm::train_phase_net(net4, train, val, bad), ConfigError);
}

TEST_CASE("checkpoint round-trips the phase net through the shared format") {
  auto net = lstm::build_phase_net(1234);
  const std::string path = "lstm_ckpt_test.bin";
  nn::save_checkpoint(path, net.named_params());

  auto other = lstm::build_phase_net(999);
  nn::load_checkpoint(path, other.named_params());
  for (std::size_t i = 0; i < net.l1.w.v.size(); ++i) {
    CHECK(other.l1.w.v[i] == doctest::Approx(net.l1.w.v[i]).epsilon(1e-6));
    CHECK(other.l1.w.v[i] == static_cast<double>(static_cast<float>(net.l1.w.v[i])));
  }
  CHECK(other.l2.r.v[0] == static_cast<double>(static_cast<float>(net.l2.r.v[0])));
  std::remove(path.c_str());
}

TEST_CASE("measurement-chain training beats the untrained net and refines the coarse phase") {
  // Desk-scale end-to-end exercise: the coarse estimate is the true channel
  // with a per-antenna phase offset plus in-window noise, while the one-bit
  // branch carries absolute quadrant information that pins the offset down.
  // Training must (a) cut the validation MSE >= 20% vs the untrained net and
  // (b) yield a refined-phase channel that beats the coarse one in NSE.
  const int n_train = 20, n_val = 4;
  DatasetSpec spec;  // 8 antennas, 1200 subcarriers, 20 dB
  spec.num_samples = n_train + n_val;
  spec.num_paths = 3;
  spec.rng_seed = 2202;
  const auto samples = chan::sample_dataset(spec);

  dsp::LstmPreprocessConfig pp;
  pp.sequence_seed = 11;

  std::vector<dsp::PhaseSequence> train, val;
  std::vector<std::pair<CVec, CVec>> val_taps;  // (coarse chain taps, clean chain taps)
  for (int s = 0; s < n_train + n_val; ++s) {
    const CMat& truth = samples[static_cast<std::size_t>(s)].channel;

    std::mt19937_64 noise_rng(derive_seed(7, static_cast<std::uint64_t>(s)));
    const CMat noise = chan::add_awgn(truth, spec.snr_db, noise_rng) - truth;

    // Corrupt the low-delay taps directly so the error survives profiling
    // (white frequency-domain noise would mostly fall outside the delay
    // window), and rotate each antenna by a constant unknown phase.
    std::mt19937_64 corrupt(derive_seed(501, static_cast<std::uint64_t>(s)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> mag(0.5, 1.1);
    CMat gen(truth.rows(), truth.cols());
    for (Eigen::Index m = 0; m < truth.rows(); ++m) {
      CVec cir = dsp::ifft_unitary(truth.row(m).transpose());
      const int hot = pp.window / pp.oversample;
      const double sigma = std::sqrt(0.10 * cir.squaredNorm() / (2.0 * hot));
      for (int t = 0; t < hot; ++t) cir[t] += sigma * cd(gauss(corrupt), gauss(corrupt));
      const double offset = (corrupt() % 2 ? 1.0 : -1.0) * mag(corrupt);
      gen.row(m) = (dsp::fft_unitary(cir) * std::polar(1.0, offset)).transpose();
    }

    auto seqs = dsp::build_lstm_inputs(gen, truth, noise, pp);
    auto& sink = s < n_train ? train : val;
    for (auto& q : seqs) sink.push_back(std::move(q));

    if (s >= n_train) {
      const dsp::MixingSequence mix = dsp::gen_sequence(pp.window, pp.sequence_seed);
      for (Eigen::Index m = 0; m < truth.rows(); ++m) {
        auto chain = [&](const CVec& row, dsp::CirSource src) {
          return dsp::apply_sequence(
                     dsp::profile(dsp::ifft_unitary(row), pp.oversample, pp.window,
                                  pp.window_offset, src),
                     mix)
              .taps;
        };
        val_taps.emplace_back(chain(gen.row(m).transpose(), dsp::CirSource::Generated),
                              chain(truth.row(m).transpose(), dsp::CirSource::Truth));
      }
    }
  }

  auto net = lstm::build_phase_net(77);
  lstm::LstmTrainConfig cfg;
  cfg.epochs = 250;
  cfg.lr = 1e-2;
  cfg.batch = 8;
  cfg.seed = 9;
  cfg.circular_loss = true;  // weak window taps carry wrapped-phase noise
  const auto hist = lstm::train_phase_net(net, train, val, cfg);

  CHECK(hist.val_mse.front() > 0.0);
  CHECK(hist.val_mse.back() <= 0.8 * hist.val_mse.front());

  double nse_coarse = 0.0, nse_refined = 0.0;
  std::size_t row = 0;
  for (Eigen::Index s = 0; s < n_val; ++s) {
    for (int m = 0; m < 8; ++m, ++row) {
      const auto& [coarse, clean] = val_taps[row];
      const auto& vs = val[row];
      const RVec phi = lstm::refine_phase(net, vs.i1, vs.i2);
      CVec refined(coarse.size());
      for (Eigen::Index t = 0; t < coarse.size(); ++t)
        refined[t] = std::abs(coarse[t]) * std::polar(1.0, phi[t]);
      nse_coarse += eval::nse(clean, coarse);
      nse_refined += eval::nse(clean, refined);
    }
  }
  nse_coarse /= static_cast<double>(val_taps.size());
  nse_refined /= static_cast<double>(val_taps.size());
  CHECK(nse_refined <= nse_coarse);
}
