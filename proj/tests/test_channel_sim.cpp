#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mrce/channel_sim.hpp"
#include "mrce/dataset_io.hpp"
#include "mrce/rng.hpp"
#include "oracle_helpers.hpp"

using namespace mrce;
using namespace mrce::chan;

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

MultipathParams fixed_three_path() {
  MultipathParams p;
  p.components = {{3.71, cd(0.8, -0.4), 0.31},
                  {11.02, cd(-0.2, 1.1), 0.62},
                  {19.955, cd(0.05, 0.33), 0.12}};
  return p;
}
}  // namespace

TEST_CASE("steering vector broadside gives all ones") {
  const CVec v = steering_vector(kPi / 2, 0.5, 4);
  for (int m = 0; m < 4; ++m) CHECK(std::abs(v[m] - cd(1, 0)) < 1e-15);
}

TEST_CASE("steering vector endfire alternates sign at half-wavelength spacing") {
  const CVec v = steering_vector(0.0, 0.5, 4);
  for (int m = 0; m < 4; ++m) {
    const cd want = (m % 2 == 0) ? cd(1, 0) : cd(-1, 0);
    CHECK(std::abs(v[m] - want) < 1e-12);
  }
}

TEST_CASE("steering vector is a unit-modulus geometric progression") {
  const CVec v = steering_vector(kPi / 4, 0.5, 8);
  const double mu = 2 * kPi * 0.5 * std::cos(kPi / 4);
  CHECK(mu == doctest::Approx(kPi * std::sqrt(2.0) / 2).epsilon(1e-12));
  CHECK(std::abs(v[0] - cd(1, 0)) < 1e-15);
  for (int m = 0; m < 8; ++m) CHECK(std::abs(v[m]) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(v[2] - v[1] * v[1]) < 1e-12);
  const cd ratio = v[1] / v[0];
  for (int m = 1; m < 8; ++m) CHECK(std::abs(v[m] / v[m - 1] - ratio) < 1e-12);
}

TEST_CASE("single zero-delay path gives the steering vector on every subcarrier") {
  MultipathParams p;
  p.components = {{0.0, cd(1, 0), 0.4}};
  const ArrayGeometry geom{8, 0.5};
  const CVec a = steering_vector(0.4, 0.5, 8);
  for (int n : {0, 1, 599, 1199}) {
    const CVec h = channel_subcarrier(p, n, geom, 1200);
    CHECK((h - a).norm() < 1e-12);
  }
}

TEST_CASE("opposite amplitudes on an identical path cancel") {
  MultipathParams p;
  p.components = {{5.5, cd(1, 0), 0.3}, {5.5, cd(-1, 0), 0.3}};
  const CVec h = channel_subcarrier(p, 17, {8, 0.5}, 1200);
  CHECK(h.norm() < 1e-13);
}

TEST_CASE("three-path channel matches extended-precision summation oracle") {
  const MultipathParams p = fixed_three_path();
  const ArrayGeometry geom{8, 0.5};
  const int n_sub = 1200;
  const ChannelMatrix h = full_channel(p, geom, n_sub);
  double worst = 0.0;
  for (int n : {0, 1, 7, 450, 1199}) {
    const CVec col = channel_subcarrier(p, n, geom, n_sub);
    for (int m = 0; m < 8; ++m) {
      const auto want = oracle::channel_entry(p, m, n, 0.5L, n_sub);
      const cd w(static_cast<double>(want.real()), static_cast<double>(want.imag()));
      worst = std::max(worst, std::abs(col[m] - w) / std::abs(w));
      CHECK(std::abs(h.entries(m, n) - w) / std::abs(w) < 1e-12);
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("full channel has paper-scale shape") {
  const ChannelMatrix h = full_channel(fixed_three_path(), {8, 0.5}, 1200);
  CHECK(h.rows() == 8);
  CHECK(h.cols() == 1200);
  CHECK(h.kind == ChannelKind::Desired);
  CHECK(h.entries.allFinite());
}

TEST_CASE("channel rank is bounded by the number of paths") {
  auto numeric_rank = [](const CMat& m) {
    Eigen::JacobiSVD<CMat> svd(m);
    const auto& sv = svd.singularValues();
    int r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      if (sv[i] > 1e-9 * sv[0]) ++r;
    return r;
  };
  MultipathParams one;
  one.components = {{4.2, cd(0.3, 0.9), 0.5}};
  CHECK(numeric_rank(full_channel(one, {8, 0.5}, 256).entries) == 1);
  CHECK(numeric_rank(full_channel(fixed_three_path(), {8, 0.5}, 256).entries) <= 3);
}

TEST_CASE("single-path rows share one magnitude profile") {
  MultipathParams one;
  one.components = {{4.2, cd(0.3, 0.9), 0.5}};
  const CMat h = full_channel(one, {8, 0.5}, 64).entries;
  for (int m = 1; m < 8; ++m)
    CHECK((h.row(m).cwiseAbs() - h.row(0).cwiseAbs()).norm() < 1e-12);
}

TEST_CASE("channel construction is additive over path sets") {
  MultipathParams a = fixed_three_path();
  MultipathParams b;
  b.components = {{7.7, cd(0.1, -0.6), 0.71}};
  MultipathParams both = a;
  both.components.insert(both.components.end(), b.components.begin(), b.components.end());
  const ArrayGeometry geom{8, 0.5};
  const CMat sum =
      full_channel(a, geom, 300).entries + full_channel(b, geom, 300).entries;
  CHECK(oracle::rel_error(full_channel(both, geom, 300).entries, sum) < 1e-13);
}

TEST_CASE("noiseless constrained channel subsamples the full array") {
  const MultipathParams p = fixed_three_path();
  const CMat full = full_channel(p, {8, 0.5}, 400).entries;
  auto rng = make_rng(1);
  for (int offset : {0, 1}) {
    const ChannelMatrix c = constrained_channel(p, {4, 1.0}, 400, kInf, rng, offset);
    CHECK(c.rows() == 4);
    CHECK(c.cols() == 400);
    CHECK(c.kind == ChannelKind::Constrained);
    for (int r = 0; r < 4; ++r)
      CHECK((c.entries.row(r) - full.row(2 * r + offset)).norm() < 1e-12);
  }
}

TEST_CASE("constrained channel noise hits the configured snr") {
  const MultipathParams p = fixed_three_path();
  const int n_sub = 2500;  // 4 x 2500 = 1e4 Monte-Carlo entries
  auto rng = make_rng(77);
  const ChannelMatrix noisy = constrained_channel(p, {4, 1.0}, n_sub, 20.0, rng);
  auto rng2 = make_rng(0);
  const ChannelMatrix clean = constrained_channel(p, {4, 1.0}, n_sub, kInf, rng2);
  const double signal = clean.entries.squaredNorm() / clean.entries.size();
  const double noise = (noisy.entries - clean.entries).squaredNorm() / clean.entries.size();
  CHECK(noise / signal == doctest::Approx(1e-2).epsilon(0.05));
}

TEST_CASE("zero expansion places measured rows at their parity") {
  CMat c(2, 3);
  c << cd(1, 1), cd(2, 0), cd(3, -1), cd(4, 2), cd(5, 0), cd(6, 1);
  SUBCASE("offset 0: measured rows land on even indices") {
    const ChannelMatrix e = expand_zero_rows(c, 0);
    CHECK(e.rows() == 4);
    CHECK(e.kind == ChannelKind::Expanded);
    CHECK((e.entries.row(0) - c.row(0)).norm() == 0.0);
    CHECK(e.entries.row(1).norm() == 0.0);
    CHECK((e.entries.row(2) - c.row(1)).norm() == 0.0);
    CHECK(e.entries.row(3).norm() == 0.0);
  }
  SUBCASE("offset 1: measured rows land on odd indices") {
    const ChannelMatrix e = expand_zero_rows(c, 1);
    CHECK(e.entries.row(0).norm() == 0.0);
    CHECK((e.entries.row(1) - c.row(0)).norm() == 0.0);
    CHECK(e.entries.row(2).norm() == 0.0);
    CHECK((e.entries.row(3) - c.row(1)).norm() == 0.0);
  }
}

TEST_CASE("expanding an all-zero matrix stays zero") {
  const ChannelMatrix e = expand_zero_rows(CMat::Zero(4, 16), kDefaultFrfOffset);
  CHECK(e.entries.norm() == 0.0);
  CHECK(e.rows() == 8);
}

TEST_CASE("expand then subsample is the identity") {
  const CMat full = full_channel(fixed_three_path(), {8, 0.5}, 50).entries;
  for (int offset : {0, 1}) {
    const CMat half = subsample_rows(full, offset);
    const ChannelMatrix e = expand_zero_rows(half, offset);
    CHECK((subsample_rows(e.entries, offset) - half).norm() == 0.0);
  }
}

TEST_CASE("awgn meets its snr and infinite snr is the identity") {
  const ChannelMatrix h = full_channel(fixed_three_path(), {8, 0.5}, 1250);
  auto rng = make_rng(5);
  const ChannelMatrix noisy = add_awgn(h, 10.0, rng);
  const double signal = h.entries.squaredNorm() / h.entries.size();
  const double noise = (noisy.entries - h.entries).squaredNorm() / h.entries.size();
  CHECK(noise / signal == doctest::Approx(1e-1).epsilon(0.05));

  auto rng2 = make_rng(5);
  const ChannelMatrix same = add_awgn(h, kInf, rng2);
  CHECK((same.entries - h.entries).norm() == 0.0);

  auto rng3 = make_rng(5);
  const ChannelMatrix again = add_awgn(h, 10.0, rng3);
  CHECK((again.entries - noisy.entries).norm() == 0.0);
}

TEST_CASE("awgn marks expanded matrices as noisy") {
  const ChannelMatrix e = expand_zero_rows(CMat::Ones(4, 8), 1);
  auto rng = make_rng(9);
  CHECK(add_awgn(e, 20.0, rng).kind == ChannelKind::NoisyExpanded);
}

TEST_CASE("dataset draws follow the configured distributions") {
  DatasetSpec spec;
  spec.num_samples = 1;
  spec.num_paths = 5;
  spec.rng_seed = 42;
  auto rng = make_rng(123);
  std::vector<double> mags, delays, doas;
  for (int i = 0; i < 20000; ++i) {
    const MultipathParams p = draw_params(spec, rng);
    for (const auto& c : p.components) {
      mags.push_back(std::abs(c.amp));
      delays.push_back(c.delay_tap);
      doas.push_back(c.doa_rad);
    }
  }
  const std::size_t n = mags.size();
  CHECK(n == 100000);
  // scale 1/sqrt(2): F(x) = 1 - exp(-x^2)
  const double d_ray =
      oracle::ks_statistic(mags, [](double x) { return 1.0 - std::exp(-x * x); });
  CHECK(d_ray < oracle::ks_threshold_1pct(n));
  const double d_tau = oracle::ks_statistic(
      delays, [&](double x) { return std::clamp(x / spec.tau_max_taps, 0.0, 1.0); });
  CHECK(d_tau < oracle::ks_threshold_1pct(n));
  const double d_doa = oracle::ks_statistic(
      doas, [&](double x) { return std::clamp(x / spec.doa_max_rad, 0.0, 1.0); });
  CHECK(d_doa < oracle::ks_threshold_1pct(n));
}

TEST_CASE("delays within a sample are pairwise distinct") {
  DatasetSpec spec;
  spec.num_samples = 200;
  spec.num_paths = 5;
  spec.num_subcarriers = 16;  // keep the channel build cheap
  spec.rng_seed = 7;
  for (const auto& s : sample_dataset(spec)) {
    for (int i = 0; i < spec.num_paths; ++i)
      for (int j = i + 1; j < spec.num_paths; ++j)
        CHECK(std::abs(s.params.components[i].delay_tap - s.params.components[j].delay_tap) >=
              1e-6);
  }
}

TEST_CASE("dataset generation is pure and order-independent") {
  DatasetSpec spec;
  spec.num_samples = 6;
  spec.num_paths = 3;
  spec.num_subcarriers = 32;
  spec.rng_seed = 99;
  const auto a = sample_dataset(spec);
  const auto b = sample_dataset(spec);
  REQUIRE(a.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK((a[i].channel - b[i].channel).norm() == 0.0);

  DatasetSpec shorter = spec;
  shorter.num_samples = 3;
  const auto c = sample_dataset(shorter);
  for (int i = 0; i < 3; ++i) CHECK((a[i].channel - c[i].channel).norm() == 0.0);
}

TEST_CASE("paper-sized dataset specs validate and produce both MPC counts") {
  for (int paths : {3, 5}) {
    DatasetSpec spec;
    spec.num_samples = 2;
    spec.num_paths = paths;
    spec.num_subcarriers = 64;
    spec.rng_seed = 1;
    const auto ds = sample_dataset(spec);
    CHECK(static_cast<int>(ds.size()) == 2);
    CHECK(ds[0].params.num_paths() == paths);
    for (const auto& c : ds[0].params.components) {
      CHECK(c.delay_tap >= 0.0);
      CHECK(c.delay_tap <= spec.tau_max_taps);
      CHECK(c.doa_rad >= 0.0);
      CHECK(c.doa_rad <= spec.doa_max_rad);
    }
  }
}

TEST_CASE("doa ranges outside the unambiguous sector are rejected") {
  DatasetSpec spec;
  spec.num_samples = 1;
  spec.num_paths = 1;
  spec.doa_max_rad = 1.6;  // > pi/2
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.doa_max_rad = 0.7;
  spec.doa_min_rad = -0.1;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.doa_min_rad = 0.0;
  CHECK_NOTHROW(spec.validate());
}

TEST_CASE("dataset files round-trip") {
  DatasetSpec spec;
  spec.num_samples = 4;
  spec.num_paths = 3;
  spec.num_subcarriers = 48;
  spec.rng_seed = 2024;
  const auto samples = sample_dataset(spec);
  const std::string path = "test_dataset_roundtrip.bin";
  write_dataset(path, header_for(spec), samples);
  const Dataset back = read_dataset(path);
  CHECK(back.header.num_antennas == 8);
  CHECK(back.header.num_subcarriers == 48);
  CHECK(back.header.num_paths == 3);
  CHECK(back.header.num_samples == 4);
  CHECK(back.header.seed == 2024);
  CHECK(back.header.frf_offset == kDefaultFrfOffset);
  REQUIRE(back.samples.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK((back.samples[i].channel - samples[i].channel).norm() == 0.0);
    for (int k = 0; k < 3; ++k) {
      CHECK(back.samples[i].params.components[k].delay_tap ==
            samples[i].params.components[k].delay_tap);
      CHECK(back.samples[i].params.components[k].amp == samples[i].params.components[k].amp);
      CHECK(back.samples[i].params.components[k].doa_rad ==
            samples[i].params.components[k].doa_rad);
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("reading a non-dataset file fails cleanly") {
  const std::string path = "test_dataset_bad.bin";
  {
    std::ofstream os(path, std::ios::binary);
    os << "garbage";
  }
  CHECK_THROWS(read_dataset(path));
  std::remove(path.c_str());
}
