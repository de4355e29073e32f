#include "mrce/channel_sim.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "mrce/rng.hpp"

namespace mrce {

void DatasetSpec::validate() const {
  if (num_samples < 1) throw ConfigError("DatasetSpec: num_samples must be >= 1");
  if (num_paths < 1) throw ConfigError("DatasetSpec: need at least one multipath component");
  geometry().validate();
  if (num_antennas % 2 != 0)
    throw ConfigError("DatasetSpec: antenna count must be even (half-array measurement)");
  if (num_subcarriers < 1) throw ConfigError("DatasetSpec: num_subcarriers must be >= 1");
  if (!(tau_max_taps > 0)) throw ConfigError("DatasetSpec: tau_max_taps must be positive");
  if (!(tau_max_s > 0)) throw ConfigError("DatasetSpec: tau_max_s must be positive");
  if (doa_min_rad < 0 || doa_max_rad >= std::numbers::pi / 2 || doa_min_rad > doa_max_rad)
    throw ConfigError("DatasetSpec: DoA range must lie in [0, pi/2) (ULA ambiguity)");
  if (std::isnan(snr_db) || (std::isinf(snr_db) && snr_db < 0))
    throw ConfigError("DatasetSpec: snr_db must be finite or +inf");
  if (!(rayleigh_scale > 0)) throw ConfigError("DatasetSpec: rayleigh_scale must be positive");
  if (frf_offset != 0 && frf_offset != 1)
    throw ConfigError("DatasetSpec: frf_offset must be 0 or 1");
}

}  // namespace mrce

namespace mrce::chan {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kDelayGapTaps = 1e-6;

double noise_variance(double mean_power, double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  return mean_power / std::pow(10.0, snr_db / 10.0);
}

void add_noise_inplace(CMat& h, double snr_db, std::mt19937_64& rng) {
  const double mean_power = h.squaredNorm() / static_cast<double>(h.size());
  const double var = noise_variance(mean_power, snr_db);
  if (var == 0.0) return;
  std::normal_distribution<double> gauss(0.0, std::sqrt(var / 2.0));
  for (Eigen::Index c = 0; c < h.cols(); ++c)
    for (Eigen::Index r = 0; r < h.rows(); ++r)
      h(r, c) += cd(gauss(rng), gauss(rng));
}

}  // namespace

CVec steering_vector(double theta_rad, double spacing_wl, int num_antennas) {
  const double mu = kTwoPi * spacing_wl * std::cos(theta_rad);
  CVec v(num_antennas);
  for (int m = 0; m < num_antennas; ++m) v[m] = std::polar(1.0, mu * m);
  return v;
}

CVec channel_subcarrier(const MultipathParams& params, int n, const ArrayGeometry& geom,
                        int num_subcarriers) {
  CVec h = CVec::Zero(geom.num_antennas);
  for (const auto& c : params.components) {
    const cd ramp = std::polar(1.0, -kTwoPi * n * c.delay_tap / num_subcarriers);
    h += (c.amp * ramp) * steering_vector(c.doa_rad, geom.spacing_wl, geom.num_antennas);
  }
  return h;
}

ChannelMatrix full_channel(const MultipathParams& params, const ArrayGeometry& geom,
                           int num_subcarriers) {
  geom.validate();
  const int m = geom.num_antennas;
  CMat h = CMat::Zero(m, num_subcarriers);
  // Rank-1 update per path: outer product of steering vector and delay ramp.
  for (const auto& c : params.components) {
    const CVec a = steering_vector(c.doa_rad, geom.spacing_wl, m);
    CVec ramp(num_subcarriers);
    const double step = -kTwoPi * c.delay_tap / num_subcarriers;
    for (int n = 0; n < num_subcarriers; ++n) ramp[n] = std::polar(1.0, step * n);
    h.noalias() += (c.amp * a) * ramp.transpose();
  }
  return {std::move(h), ChannelKind::Desired};
}

CMat subsample_rows(const CMat& full, int frf_offset) {
  if (frf_offset != 0 && frf_offset != 1) throw ConfigError("frf_offset must be 0 or 1");
  const int half = static_cast<int>(full.rows()) / 2;
  CMat out(half, full.cols());
  for (int r = 0; r < half; ++r) out.row(r) = full.row(2 * r + frf_offset);
  return out;
}

ChannelMatrix constrained_channel(const MultipathParams& params,
                                  const ArrayGeometry& geom_constrained, int num_subcarriers,
                                  double snr_db, std::mt19937_64& rng, int frf_offset) {
  geom_constrained.validate();
  const ArrayGeometry full_geom{2 * geom_constrained.num_antennas,
                                geom_constrained.spacing_wl / 2.0};
  const ChannelMatrix full = full_channel(params, full_geom, num_subcarriers);
  CMat h = subsample_rows(full.entries, frf_offset);
  add_noise_inplace(h, snr_db, rng);
  return {std::move(h), ChannelKind::Constrained};
}

ChannelMatrix expand_zero_rows(const CMat& constrained, int frf_offset) {
  if (frf_offset != 0 && frf_offset != 1) throw ConfigError("frf_offset must be 0 or 1");
  const int half = static_cast<int>(constrained.rows());
  CMat out = CMat::Zero(2 * half, constrained.cols());
  for (int r = 0; r < half; ++r) out.row(2 * r + frf_offset) = constrained.row(r);
  return {std::move(out), ChannelKind::Expanded};
}

ChannelMatrix add_awgn(const ChannelMatrix& h, double snr_db, std::mt19937_64& rng) {
  CMat out = h.entries;
  add_noise_inplace(out, snr_db, rng);
  ChannelKind kind = h.kind == ChannelKind::Expanded ? ChannelKind::NoisyExpanded : h.kind;
  return {std::move(out), kind};
}

CMat add_awgn(const CMat& h, double snr_db, std::mt19937_64& rng) {
  CMat out = h;
  add_noise_inplace(out, snr_db, rng);
  return out;
}

MultipathParams draw_params(const DatasetSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<double> delays;
  delays.reserve(spec.num_paths);
  while (static_cast<int>(delays.size()) < spec.num_paths) {
    const double tau = u01(rng) * spec.tau_max_taps;
    bool distinct = true;
    for (double t : delays)
      if (std::abs(t - tau) < kDelayGapTaps) distinct = false;
    if (distinct) delays.push_back(tau);
  }
  MultipathParams params;
  params.components.resize(spec.num_paths);
  for (int i = 0; i < spec.num_paths; ++i) {
    auto& c = params.components[i];
    c.delay_tap = delays[i];
    const double mag = spec.rayleigh_scale * std::sqrt(-2.0 * std::log1p(-u01(rng)));
    c.amp = std::polar(mag, kTwoPi * u01(rng));
    c.doa_rad = spec.doa_min_rad + (spec.doa_max_rad - spec.doa_min_rad) * u01(rng);
  }
  return params;
}

std::vector<Sample> sample_dataset(const DatasetSpec& spec) {
  spec.validate();
  std::vector<Sample> samples(spec.num_samples);
  const ArrayGeometry geom = spec.geometry();
  for (int i = 0; i < spec.num_samples; ++i) {
    auto rng = make_rng(derive_seed(spec.rng_seed, static_cast<std::uint64_t>(i)));
    samples[i].params = draw_params(spec, rng);
    samples[i].channel = full_channel(samples[i].params, geom, spec.num_subcarriers).entries;
  }
  return samples;
}

}  // namespace mrce::chan
