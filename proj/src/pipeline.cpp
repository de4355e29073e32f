#include "mrce/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "mrce/dataset_io.hpp"
#include "mrce/fft.hpp"
#include "mrce/rng.hpp"

namespace mrce::pipe {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory: " + dir);
}

bool file_exists(const std::string& path) {
  std::error_code ec;
  return std::filesystem::exists(path, ec);
}

template <class F>
auto stage(const char* name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError("stage " + std::string(name) + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError("stage " + std::string(name) + ": " + e.what());
  }
}

/// First `k` indices of a [3-path half | 5-path half] pool, half from each.
std::vector<int> balanced_indices(int k, int pool_size) {
  if (k < 0 || k % 2 != 0 || k > pool_size)
    throw ConfigError("balanced slice must be even and fit the pool");
  std::vector<int> idx;
  idx.reserve(k);
  const int half = pool_size / 2;
  for (int i = 0; i < k / 2; ++i) idx.push_back(i);
  for (int i = 0; i < k / 2; ++i) idx.push_back(half + i);
  return idx;
}

/// Zero-filled measured estimate of the noisy channel, the cGAN input.
CMat zero_filled(const CMat& noisy, int frf_offset) {
  return chan::expand_zero_rows(chan::subsample_rows(noisy, frf_offset), frf_offset).entries;
}

std::vector<gan::ChannelPair> make_pairs(const std::vector<Sample>& pool,
                                         const std::vector<CMat>& noise, int k, int frf_offset) {
  std::vector<gan::ChannelPair> pairs;
  pairs.reserve(k);
  for (int idx : balanced_indices(k, static_cast<int>(pool.size()))) {
    gan::ChannelPair p;
    p.h_ce = zero_filled(pool[idx].channel + noise[idx], frf_offset);
    p.h_true = pool[idx].channel;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

/// Training configs carry seeds and geometry duplicated from the experiment;
/// the experiment fields are authoritative.
gan::GanTrainConfig resolved_gan_cfg(const ExperimentConfig& cfg) {
  gan::GanTrainConfig g = cfg.cgan;
  g.seed = cfg.seeds.cgan;
  g.snr_db = cfg.snr_db;
  g.in_h = cfg.dataset3.num_antennas;
  g.in_w = cfg.dataset3.num_subcarriers;
  return g;
}

lstm::LstmTrainConfig resolved_lstm_cfg(const ExperimentConfig& cfg) {
  lstm::LstmTrainConfig l = cfg.lstm_cfg;
  l.seed = cfg.seeds.lstm;
  return l;
}

dsp::LstmPreprocessConfig resolved_prep_cfg(const ExperimentConfig& cfg) {
  dsp::LstmPreprocessConfig p = cfg.prep;
  p.sequence_seed = cfg.seeds.sequence;
  return p;
}

std::string epoch_ckpt_path(const std::string& dir, const char* stem, int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_epoch_%04d.ckpt", epoch);
  return dir + "/" + stem + buf;
}

/// Accumulates one sample's per-antenna time-domain errors under both
/// aggregation rules.
struct NseAccumulator {
  double err_sum = 0.0;   // sum over antennas of ||truth - est||^2
  double ref_sum = 0.0;   // sum over antennas of ||truth||^2
  double ratio_sum = 0.0; // sum over antennas of per-antenna NSE
  int count = 0;

  void add(const CVec& truth, const CVec& est) {
    const double ref = truth.squaredNorm();
    if (!(ref > 0.0)) throw NumericalError("evaluate: zero reference chain");
    const double err = (truth - est).squaredNorm();
    err_sum += err;
    ref_sum += ref;
    ratio_sum += err / ref;
    ++count;
  }

  double value(bool matrix_nse) const {
    if (count == 0) throw NumericalError("evaluate: empty accumulator");
    return matrix_nse ? err_sum / ref_sum : ratio_sum / static_cast<double>(count);
  }
};

void sync_derived(ExperimentConfig& cfg) {
  cfg.prep.sequence_seed = cfg.seeds.sequence;
  cfg.cgan.seed = cfg.seeds.cgan;
  cfg.lstm_cfg.seed = cfg.seeds.lstm;
  cfg.cgan.snr_db = cfg.snr_db;
  cfg.cgan.in_h = cfg.dataset3.num_antennas;
  cfg.cgan.in_w = cfg.dataset3.num_subcarriers;
  cfg.esprit_cfg.doa_min_rad = cfg.dataset3.doa_min_rad;
  cfg.esprit_cfg.doa_max_rad = cfg.dataset3.doa_max_rad;
  cfg.dataset3.snr_db = cfg.snr_db;
  cfg.dataset5.snr_db = cfg.snr_db;
}

}  // namespace

SeedSet derive_seeds(std::uint64_t global_seed) {
  SeedSet s;
  s.train3 = derive_seed(global_seed, 1);
  s.train5 = derive_seed(global_seed, 2);
  s.test3 = derive_seed(global_seed, 3);
  s.test5 = derive_seed(global_seed, 4);
  s.noise_train = derive_seed(global_seed, 5);
  s.noise_test = derive_seed(global_seed, 6);
  s.cgan = derive_seed(global_seed, 7);
  s.lstm = derive_seed(global_seed, 8);
  s.sequence = derive_seed(global_seed, 9);
  return s;
}

void ExperimentConfig::validate() const {
  auto even_pos = [](int v, const char* what) {
    if (v < 2 || v % 2 != 0)
      throw ConfigError(std::string("ExperimentConfig: ") + what + " must be even and >= 2");
  };
  auto even_nonneg = [](int v, const char* what) {
    if (v < 0 || v % 2 != 0)
      throw ConfigError(std::string("ExperimentConfig: ") + what + " must be even and >= 0");
  };
  even_pos(train_samples, "train_samples");
  even_pos(test_samples, "test_samples");
  even_pos(cgan_train_samples, "cgan_train_samples");
  even_pos(lstm_train_samples, "lstm_train_samples");
  even_nonneg(cgan_val_samples, "cgan_val_samples");
  even_nonneg(lstm_val_samples, "lstm_val_samples");
  if (cgan_train_samples > train_samples || lstm_train_samples > train_samples)
    throw ConfigError("ExperimentConfig: training slices exceed the train pool");
  if (cgan_val_samples > test_samples || lstm_val_samples > test_samples)
    throw ConfigError("ExperimentConfig: validation slices exceed the test pool");
  if (std::isnan(snr_db) || (std::isinf(snr_db) && snr_db < 0))
    throw ConfigError("ExperimentConfig: snr_db must be finite or +inf");

  DatasetSpec d3 = dataset3, d5 = dataset5;
  d3.num_samples = d5.num_samples = 2;
  d3.validate();
  d5.validate();
  if (dataset3.num_antennas != dataset5.num_antennas ||
      dataset3.num_subcarriers != dataset5.num_subcarriers ||
      dataset3.spacing_wl != dataset5.spacing_wl || dataset3.frf_offset != dataset5.frf_offset)
    throw ConfigError("ExperimentConfig: the two dataset specs must share the array geometry");

  if (cgan.epochs < 0) throw ConfigError("ExperimentConfig: cgan.epochs must be >= 0");
  if (!(cgan.lr > 0)) throw ConfigError("ExperimentConfig: cgan.lr must be positive");
  if (cgan.batch < 1) throw ConfigError("ExperimentConfig: cgan.batch must be >= 1");
  if (cgan.beta < 0) throw ConfigError("ExperimentConfig: cgan.beta must be >= 0");
  if (cgan.in_h != dataset3.num_antennas || cgan.in_w != dataset3.num_subcarriers)
    throw ConfigError("ExperimentConfig: cgan geometry does not match the dataset specs");

  if (lstm_cfg.epochs < 1) throw ConfigError("ExperimentConfig: lstm.epochs must be >= 1");
  if (!(lstm_cfg.lr > 0)) throw ConfigError("ExperimentConfig: lstm.lr must be positive");
  if (lstm_cfg.batch < 1) throw ConfigError("ExperimentConfig: lstm.batch must be >= 1");
  if (lstm_cfg.truncation < 0) throw ConfigError("ExperimentConfig: lstm.truncation must be >= 0");

  if (with_esprit) {
    if (esprit_cfg.n_freq < 2 || esprit_cfg.n_freq > dataset3.num_subcarriers)
      throw ConfigError("ExperimentConfig: esprit.n_freq must lie in [2, num_subcarriers]");
    if (esprit_cfg.stride < 1) throw ConfigError("ExperimentConfig: esprit.stride must be >= 1");
  }

  if (prep.oversample < 1) throw ConfigError("ExperimentConfig: prep.oversample must be >= 1");
  if (prep.window < 1 || prep.window > prep.oversample * dataset3.num_subcarriers)
    throw ConfigError("ExperimentConfig: prep.window must lie in [1, oversample * subcarriers]");

  if (checkpoint_every < 0) throw ConfigError("ExperimentConfig: checkpoint_every must be >= 0");
  if (out_dir.empty()) throw ConfigError("ExperimentConfig: out_dir must not be empty");
}

ExperimentConfig desk_preset(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.seeds = derive_seeds(seed);
  cfg.train_samples = 64;
  cfg.test_samples = 32;
  cfg.cgan_train_samples = 64;
  cfg.lstm_train_samples = 64;
  cfg.cgan_val_samples = 8;
  cfg.lstm_val_samples = 32;
  cfg.dataset3.num_paths = 3;
  cfg.dataset5.num_paths = 5;
  cfg.cgan.epochs = 10;
  cfg.lstm_cfg.epochs = 10;
  sync_derived(cfg);
  return cfg;
}

ExperimentConfig paper_preset(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.seeds = derive_seeds(seed);
  cfg.train_samples = 2400;  // 1200 from each dataset; with the test pool each
  cfg.test_samples = 600;    // dataset contributes 1500 samples in total
  cfg.cgan_train_samples = 600;
  cfg.lstm_train_samples = 2400;
  cfg.cgan_val_samples = 0;
  cfg.lstm_val_samples = 64;
  cfg.dataset3.num_paths = 3;
  cfg.dataset5.num_paths = 5;
  cfg.cgan.epochs = 150;
  cfg.lstm_cfg.epochs = 50;
  sync_derived(cfg);
  return cfg;
}

Corpus make_corpus(const ExperimentConfig& cfg) {
  cfg.validate();
  auto pool = [&](int n, std::uint64_t s3, std::uint64_t s5) {
    DatasetSpec a = cfg.dataset3;
    a.num_samples = n / 2;
    a.rng_seed = s3;
    a.snr_db = cfg.snr_db;
    DatasetSpec b = cfg.dataset5;
    b.num_samples = n / 2;
    b.rng_seed = s5;
    b.snr_db = cfg.snr_db;
    std::vector<Sample> out = chan::sample_dataset(a);
    std::vector<Sample> tail = chan::sample_dataset(b);
    out.insert(out.end(), std::make_move_iterator(tail.begin()),
               std::make_move_iterator(tail.end()));
    return out;
  };
  auto noise = [&](const std::vector<Sample>& xs, std::uint64_t base) {
    std::vector<CMat> zs;
    zs.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      std::mt19937_64 rng(derive_seed(base, i));
      zs.push_back(chan::add_awgn(xs[i].channel, cfg.snr_db, rng) - xs[i].channel);
    }
    return zs;
  };
  Corpus c;
  c.train = pool(cfg.train_samples, cfg.seeds.train3, cfg.seeds.train5);
  c.test = pool(cfg.test_samples, cfg.seeds.test3, cfg.seeds.test5);
  c.noise_train = noise(c.train, cfg.seeds.noise_train);
  c.noise_test = noise(c.test, cfg.seeds.noise_test);
  return c;
}

void write_datasets(const ExperimentConfig& cfg, const std::string& dir) {
  cfg.validate();
  ensure_dir(dir);
  auto emit = [&](const DatasetSpec& base, int n, std::uint64_t seed, const char* name) {
    DatasetSpec spec = base;
    spec.num_samples = n / 2;
    spec.rng_seed = seed;
    spec.snr_db = cfg.snr_db;
    const std::vector<Sample> samples = chan::sample_dataset(spec);
    chan::write_dataset(dir + "/" + name + ".bin", chan::header_for(spec), samples);
  };
  emit(cfg.dataset3, cfg.train_samples, cfg.seeds.train3, "train3");
  emit(cfg.dataset5, cfg.train_samples, cfg.seeds.train5, "train5");
  emit(cfg.dataset3, cfg.test_samples, cfg.seeds.test3, "test3");
  emit(cfg.dataset5, cfg.test_samples, cfg.seeds.test5, "test5");
}

gan::CganModel cgan_stage(const ExperimentConfig& cfg, const Corpus& corpus, bool force_train) {
  ensure_dir(cfg.out_dir);
  const gan::GanTrainConfig gcfg = resolved_gan_cfg(cfg);
  gan::CganModel model = gan::build_cgan(gcfg);
  const std::string ckpt = cfg.out_dir + "/cgan.ckpt";
  if (!force_train && file_exists(ckpt)) {
    nn::load_checkpoint(ckpt, model.named_params());
    return model;
  }

  const int frf = cfg.dataset3.frf_offset;
  const auto train_pairs = make_pairs(corpus.train, corpus.noise_train, cfg.cgan_train_samples, frf);
  const auto val_pairs = make_pairs(corpus.test, corpus.noise_test, cfg.cgan_val_samples, frf);

  const std::string hist_path = cfg.out_dir + "/cgan_history.csv";
  std::ofstream hist(hist_path);
  if (!hist) throw std::runtime_error("cannot write " + hist_path);
  hist << "epoch,loss_d,loss_g,l2_term,val_nse\n" << std::flush;
  auto on_epoch = [&](int epoch, const gan::GanHistoryRow& row, gan::CganModel& m) {
    hist << (epoch + 1) << ',' << fmt(row.loss_d) << ',' << fmt(row.loss_g) << ','
         << fmt(row.l2_term) << ',' << fmt(row.val_nse) << '\n'
         << std::flush;
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
      nn::save_checkpoint(epoch_ckpt_path(cfg.out_dir, "cgan", epoch + 1), m.named_params());
  };
  gan::train_cgan(model, train_pairs, val_pairs, gcfg, on_epoch);
  nn::save_checkpoint(ckpt, model.named_params());
  return model;
}

lstm::PhaseNet lstm_stage(const ExperimentConfig& cfg, const Corpus& corpus,
                          gan::GeneratorNet& generator, bool force_train) {
  ensure_dir(cfg.out_dir);
  lstm::PhaseNet net = lstm::build_phase_net(cfg.seeds.lstm);
  const std::string ckpt = cfg.out_dir + "/lstm.ckpt";
  if (!force_train && file_exists(ckpt)) {
    nn::load_checkpoint(ckpt, net.named_params());
    return net;
  }

  const dsp::LstmPreprocessConfig prep = resolved_prep_cfg(cfg);
  const int frf = cfg.dataset3.frf_offset;
  auto sequences = [&](const std::vector<Sample>& pool, const std::vector<CMat>& noise, int k) {
    std::vector<dsp::PhaseSequence> seqs;
    for (int idx : balanced_indices(k, static_cast<int>(pool.size()))) {
      const CMat h_ce = zero_filled(pool[idx].channel + noise[idx], frf);
      const CMat h_g = gan::infer(generator, h_ce, cfg.snr_db).entries;
      auto s = dsp::build_lstm_inputs(h_g, pool[idx].channel, noise[idx], prep);
      seqs.insert(seqs.end(), std::make_move_iterator(s.begin()),
                  std::make_move_iterator(s.end()));
    }
    return seqs;
  };
  const auto train_seqs = sequences(corpus.train, corpus.noise_train, cfg.lstm_train_samples);
  const auto val_seqs = sequences(corpus.test, corpus.noise_test, cfg.lstm_val_samples);

  auto on_epoch = [&](int epoch, lstm::PhaseNet& n) {
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
      nn::save_checkpoint(epoch_ckpt_path(cfg.out_dir, "lstm", epoch + 1), n.named_params());
  };
  const lstm::LstmTrainHistory hist =
      lstm::train_phase_net(net, train_seqs, val_seqs, resolved_lstm_cfg(cfg), on_epoch);

  const std::string hist_path = cfg.out_dir + "/lstm_history.csv";
  std::ofstream os(hist_path);
  if (!os) throw std::runtime_error("cannot write " + hist_path);
  os << "epoch,train_mse,val_mse\n";
  for (std::size_t e = 0; e < hist.train_mse.size(); ++e) {
    const double val = e < hist.val_mse.size() ? hist.val_mse[e]
                                               : std::numeric_limits<double>::quiet_NaN();
    os << e << ',' << fmt(hist.train_mse[e]) << ',' << fmt(val) << '\n';
  }
  nn::save_checkpoint(ckpt, net.named_params());
  return net;
}

eval::NseReport evaluate_methods(const ExperimentConfig& cfg, const Corpus& corpus,
                                 gan::GeneratorNet* generator, const lstm::PhaseNet* phase_net) {
  ensure_dir(cfg.out_dir);
  const dsp::LstmPreprocessConfig prep = resolved_prep_cfg(cfg);
  const dsp::MixingSequence seq = dsp::gen_sequence(prep.window, prep.sequence_seed);
  const int frf = cfg.dataset3.frf_offset;
  const ArrayGeometry geom = cfg.dataset3.geometry();
  const int n_sub = cfg.dataset3.num_subcarriers;
  const bool run_ml = cfg.with_ml && (cfg.perfect_stub || (generator != nullptr && phase_net != nullptr));

  auto row_chain = [&](const CVec& freq_row, dsp::CirSource source) {
    return dsp::apply_sequence(
        dsp::profile(dsp::ifft_unitary(freq_row), prep.oversample, prep.window,
                     prep.window_offset, source),
        seq);
  };

  std::ofstream es3, es5;
  if (cfg.with_esprit) {
    auto open_csv = [&](std::ofstream& os, const std::string& path) {
      os.open(path);
      if (!os) throw std::runtime_error("cannot write " + path);
      os << "sample_id,path,theta_rad,delay_tap,amp_re,amp_im,residual\n";
    };
    open_csv(es3, cfg.out_dir + "/esprit3_estimates.csv");
    open_csv(es5, cfg.out_dir + "/esprit5_estimates.csv");
  }

  eval::NseReport report;
  std::vector<double>& meas = report.per_sample["measurement"];
  for (std::size_t i = 0; i < corpus.test.size(); ++i) {
    const CMat& h_true = corpus.test[i].channel;
    const CMat h_noisy = h_true + corpus.noise_test[i];
    const int rows = static_cast<int>(h_true.rows());

    std::vector<dsp::ProfiledCIR> truth_chain, noisy_chain;
    truth_chain.reserve(rows);
    noisy_chain.reserve(rows);
    for (int m = 0; m < rows; ++m) {
      truth_chain.push_back(row_chain(h_true.row(m).transpose(), dsp::CirSource::Truth));
      noisy_chain.push_back(
          row_chain(h_noisy.row(m).transpose(), dsp::CirSource::NoisyMeasurement));
    }

    NseAccumulator meas_acc;
    for (int m = 0; m < rows; ++m) meas_acc.add(truth_chain[m].taps, noisy_chain[m].taps);
    meas.push_back(meas_acc.value(cfg.matrix_nse));

    if (run_ml) {
      const CMat h_g = cfg.perfect_stub
                           ? h_true
                           : gan::infer(*generator, zero_filled(h_noisy, frf), cfg.snr_db).entries;
      NseAccumulator gan_acc, combined_acc;
      for (int m = 0; m < rows; ++m) {
        const dsp::ProfiledCIR gen_chain =
            row_chain(h_g.row(m).transpose(), dsp::CirSource::Generated);
        gan_acc.add(truth_chain[m].taps, gen_chain.taps);
        const RVec coarse = dsp::phase_of(gen_chain.taps);
        const RVec refined =
            cfg.perfect_stub
                ? coarse
                : lstm::refine_phase(*phase_net, coarse,
                                     dsp::phase_of(dsp::quantize_1bit(noisy_chain[m].taps)));
        const RVec mag = gen_chain.taps.cwiseAbs();
        combined_acc.add(truth_chain[m].taps, dsp::combine_mag_phase(mag, refined));
      }
      report.per_sample["cgan"].push_back(gan_acc.value(cfg.matrix_nse));
      report.per_sample["cgan_lstm"].push_back(combined_acc.value(cfg.matrix_nse));
    }

    if (cfg.with_esprit) {
      const CMat h_c = chan::subsample_rows(h_noisy, frf);
      auto run_variant = [&](int num_paths, std::ofstream& os, const char* method) {
        const esprit::EspritEstimate est = esprit::estimate_channel(
            h_c, num_paths, cfg.esprit_cfg, cfg.dataset3.spacing_wl, frf);
        for (std::size_t p = 0; p < est.triplets.size(); ++p) {
          const MultipathComponent& t = est.triplets[p];
          os << i << ',' << p << ',' << fmt(t.doa_rad) << ',' << fmt(t.delay_tap) << ','
             << fmt(t.amp.real()) << ',' << fmt(t.amp.imag()) << ',' << fmt(est.residual)
             << '\n';
        }
        const CMat h_e = esprit::reconstruct_channel(est, geom, n_sub).entries;
        NseAccumulator acc;
        for (int m = 0; m < rows; ++m)
          acc.add(truth_chain[m].taps,
                  row_chain(h_e.row(m).transpose(), dsp::CirSource::Generated).taps);
        report.per_sample[method].push_back(acc.value(cfg.matrix_nse));
      };
      run_variant(3, es3, "esprit_3mpc");
      run_variant(5, es5, "esprit_5mpc");
    }
  }
  return report;
}

eval::NseReport run_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  ensure_dir(cfg.out_dir);
  {
    const std::string path = cfg.out_dir + "/config.json";
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << config_to_json(cfg) << "\n";
  }

  const Corpus corpus = stage("generate", [&] { return make_corpus(cfg); });

  std::optional<gan::CganModel> model;
  std::optional<lstm::PhaseNet> net;
  if (cfg.with_ml && !cfg.perfect_stub) {
    model = stage("train-cgan", [&] { return cgan_stage(cfg, corpus, false); });
    net = stage("train-lstm", [&] { return lstm_stage(cfg, corpus, model->g, false); });
  }

  eval::NseReport report = stage("evaluate", [&] {
    return evaluate_methods(cfg, corpus, model ? &model->g : nullptr, net ? &*net : nullptr);
  });
  stage("report", [&] {
    eval::export_report(report, cfg.out_dir);
    return 0;
  });
  return report;
}

eval::NseReport report_from_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("report: cannot read " + path);
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("report: empty file " + path);
  std::vector<std::string> methods;
  {
    std::stringstream ss(line);
    std::string field;
    bool first = true;
    while (std::getline(ss, field, ',')) {
      if (first && field != "sample")
        throw ConfigError("report: expected a 'sample' header column in " + path);
      if (!first) methods.push_back(field);
      first = false;
    }
  }
  if (methods.empty()) throw ConfigError("report: no method columns in " + path);

  eval::NseReport report;
  for (const std::string& m : methods) report.per_sample[m];
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::size_t col = 0;
    while (std::getline(ss, field, ',')) {
      if (col > 0) {
        if (col - 1 >= methods.size())
          throw ConfigError("report: row with too many columns in " + path);
        std::size_t pos = 0;
        double v = 0.0;
        try {
          v = std::stod(field, &pos);
        } catch (const std::exception&) {
          throw ConfigError("report: bad number '" + field + "' in " + path);
        }
        if (pos != field.size())
          throw ConfigError("report: bad number '" + field + "' in " + path);
        report.per_sample[methods[col - 1]].push_back(v);
      }
      ++col;
    }
    if (col != methods.size() + 1)
      throw ConfigError("report: row with missing columns in " + path);
  }
  return report;
}

namespace {

json snr_to_json(double snr_db) {
  if (std::isinf(snr_db)) return "inf";
  return snr_db;
}

double snr_from_json(const json& v) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    throw ConfigError("config: snr_db string must be \"inf\"");
  }
  if (!v.is_number()) throw ConfigError("config: snr_db must be a number or \"inf\"");
  return v.get<double>();
}

template <class T>
T as(const json& v, const char* what) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: bad value for ") + what);
  }
}

/// Pop `key` from `obj` if present; leftovers are reported as unknown keys.
std::optional<json> take(json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) return std::nullopt;
  json v = std::move(*it);
  obj.erase(it);
  return v;
}

void reject_leftovers(const json& obj, const char* where) {
  if (!obj.empty())
    throw ConfigError(std::string("config: unknown key '") + obj.begin().key() + "' in " + where);
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");

  std::uint64_t seed = 0;
  if (auto v = take(j, "seed")) seed = as<std::uint64_t>(*v, "seed");
  std::string preset = "desk";
  if (auto v = take(j, "preset")) preset = as<std::string>(*v, "preset");
  ExperimentConfig cfg;
  if (preset == "desk")
    cfg = desk_preset(seed);
  else if (preset == "paper")
    cfg = paper_preset(seed);
  else
    throw ConfigError("config: unknown preset '" + preset + "' (expected desk or paper)");

  if (auto v = take(j, "out_dir")) cfg.out_dir = as<std::string>(*v, "out_dir");
  if (auto v = take(j, "train_samples")) cfg.train_samples = as<int>(*v, "train_samples");
  if (auto v = take(j, "test_samples")) cfg.test_samples = as<int>(*v, "test_samples");
  if (auto v = take(j, "cgan_train_samples"))
    cfg.cgan_train_samples = as<int>(*v, "cgan_train_samples");
  if (auto v = take(j, "lstm_train_samples"))
    cfg.lstm_train_samples = as<int>(*v, "lstm_train_samples");
  if (auto v = take(j, "cgan_val_samples")) cfg.cgan_val_samples = as<int>(*v, "cgan_val_samples");
  if (auto v = take(j, "lstm_val_samples")) cfg.lstm_val_samples = as<int>(*v, "lstm_val_samples");
  if (auto v = take(j, "snr_db")) cfg.snr_db = snr_from_json(*v);
  if (auto v = take(j, "matrix_nse")) cfg.matrix_nse = as<bool>(*v, "matrix_nse");
  if (auto v = take(j, "perfect_stub")) cfg.perfect_stub = as<bool>(*v, "perfect_stub");
  if (auto v = take(j, "with_ml")) cfg.with_ml = as<bool>(*v, "with_ml");
  if (auto v = take(j, "with_esprit")) cfg.with_esprit = as<bool>(*v, "with_esprit");
  if (auto v = take(j, "checkpoint_every")) cfg.checkpoint_every = as<int>(*v, "checkpoint_every");

  if (auto v = take(j, "seeds")) {
    if (!v->is_object()) throw ConfigError("config: seeds must be an object");
    auto u64 = [&](const char* k, std::uint64_t& field) {
      if (auto s = take(*v, k)) field = as<std::uint64_t>(*s, k);
    };
    u64("train3", cfg.seeds.train3);
    u64("train5", cfg.seeds.train5);
    u64("test3", cfg.seeds.test3);
    u64("test5", cfg.seeds.test5);
    u64("noise_train", cfg.seeds.noise_train);
    u64("noise_test", cfg.seeds.noise_test);
    u64("cgan", cfg.seeds.cgan);
    u64("lstm", cfg.seeds.lstm);
    u64("sequence", cfg.seeds.sequence);
    reject_leftovers(*v, "seeds");
  }

  if (auto v = take(j, "dataset")) {
    if (!v->is_object()) throw ConfigError("config: dataset must be an object");
    auto apply = [&](auto&& set) {
      set(cfg.dataset3);
      set(cfg.dataset5);
    };
    if (auto x = take(*v, "num_antennas"))
      apply([&](DatasetSpec& d) { d.num_antennas = as<int>(*x, "num_antennas"); });
    if (auto x = take(*v, "num_subcarriers"))
      apply([&](DatasetSpec& d) { d.num_subcarriers = as<int>(*x, "num_subcarriers"); });
    if (auto x = take(*v, "spacing_wl"))
      apply([&](DatasetSpec& d) { d.spacing_wl = as<double>(*x, "spacing_wl"); });
    if (auto x = take(*v, "tau_max_s"))
      apply([&](DatasetSpec& d) { d.tau_max_s = as<double>(*x, "tau_max_s"); });
    if (auto x = take(*v, "tau_max_taps"))
      apply([&](DatasetSpec& d) { d.tau_max_taps = as<double>(*x, "tau_max_taps"); });
    if (auto x = take(*v, "doa_min_rad"))
      apply([&](DatasetSpec& d) { d.doa_min_rad = as<double>(*x, "doa_min_rad"); });
    if (auto x = take(*v, "doa_max_rad"))
      apply([&](DatasetSpec& d) { d.doa_max_rad = as<double>(*x, "doa_max_rad"); });
    if (auto x = take(*v, "rayleigh_scale"))
      apply([&](DatasetSpec& d) { d.rayleigh_scale = as<double>(*x, "rayleigh_scale"); });
    if (auto x = take(*v, "frf_offset"))
      apply([&](DatasetSpec& d) { d.frf_offset = as<int>(*x, "frf_offset"); });
    reject_leftovers(*v, "dataset");
  }

  if (auto v = take(j, "cgan")) {
    if (!v->is_object()) throw ConfigError("config: cgan must be an object");
    if (auto x = take(*v, "epochs")) cfg.cgan.epochs = as<int>(*x, "cgan.epochs");
    if (auto x = take(*v, "lr")) cfg.cgan.lr = as<double>(*x, "cgan.lr");
    if (auto x = take(*v, "beta")) cfg.cgan.beta = as<double>(*x, "cgan.beta");
    if (auto x = take(*v, "batch")) cfg.cgan.batch = as<int>(*x, "cgan.batch");
    if (auto x = take(*v, "filter_len")) cfg.cgan.filter_len = as<int>(*x, "cgan.filter_len");
    if (auto x = take(*v, "leaky_slope")) cfg.cgan.leaky_slope = as<float>(*x, "cgan.leaky_slope");
    if (auto x = take(*v, "dropout_rate"))
      cfg.cgan.dropout_rate = as<float>(*x, "cgan.dropout_rate");
    if (auto x = take(*v, "up4_filters")) cfg.cgan.up4_filters = as<int>(*x, "cgan.up4_filters");
    if (auto x = take(*v, "use_skips")) cfg.cgan.use_skips = as<bool>(*x, "cgan.use_skips");
    if (auto x = take(*v, "saturating_g"))
      cfg.cgan.saturating_g = as<bool>(*x, "cgan.saturating_g");
    reject_leftovers(*v, "cgan");
  }

  if (auto v = take(j, "lstm")) {
    if (!v->is_object()) throw ConfigError("config: lstm must be an object");
    if (auto x = take(*v, "epochs")) cfg.lstm_cfg.epochs = as<int>(*x, "lstm.epochs");
    if (auto x = take(*v, "lr")) cfg.lstm_cfg.lr = as<double>(*x, "lstm.lr");
    if (auto x = take(*v, "batch")) cfg.lstm_cfg.batch = as<int>(*x, "lstm.batch");
    if (auto x = take(*v, "truncation")) cfg.lstm_cfg.truncation = as<int>(*x, "lstm.truncation");
    if (auto x = take(*v, "circular_loss"))
      cfg.lstm_cfg.circular_loss = as<bool>(*x, "lstm.circular_loss");
    reject_leftovers(*v, "lstm");
  }

  if (auto v = take(j, "esprit")) {
    if (!v->is_object()) throw ConfigError("config: esprit must be an object");
    if (auto x = take(*v, "n_freq")) cfg.esprit_cfg.n_freq = as<int>(*x, "esprit.n_freq");
    if (auto x = take(*v, "stride")) cfg.esprit_cfg.stride = as<int>(*x, "esprit.stride");
    if (auto x = take(*v, "method")) {
      const std::string m = as<std::string>(*x, "esprit.method");
      if (m == "hosvd")
        cfg.esprit_cfg.method = esprit::SubspaceMethod::HOSVD;
      else if (m == "svd")
        cfg.esprit_cfg.method = esprit::SubspaceMethod::MatrixSVD;
      else
        throw ConfigError("config: esprit.method must be 'hosvd' or 'svd'");
    }
    reject_leftovers(*v, "esprit");
  }

  if (auto v = take(j, "prep")) {
    if (!v->is_object()) throw ConfigError("config: prep must be an object");
    if (auto x = take(*v, "oversample")) cfg.prep.oversample = as<int>(*x, "prep.oversample");
    if (auto x = take(*v, "window")) cfg.prep.window = as<int>(*x, "prep.window");
    if (auto x = take(*v, "window_offset"))
      cfg.prep.window_offset = as<int>(*x, "prep.window_offset");
    if (auto x = take(*v, "noisy_labels"))
      cfg.prep.noisy_labels = as<bool>(*x, "prep.noisy_labels");
    reject_leftovers(*v, "prep");
  }

  reject_leftovers(j, "the top level");
  sync_derived(cfg);
  cfg.validate();
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  j["seeds"] = {{"train3", cfg.seeds.train3},
                {"train5", cfg.seeds.train5},
                {"test3", cfg.seeds.test3},
                {"test5", cfg.seeds.test5},
                {"noise_train", cfg.seeds.noise_train},
                {"noise_test", cfg.seeds.noise_test},
                {"cgan", cfg.seeds.cgan},
                {"lstm", cfg.seeds.lstm},
                {"sequence", cfg.seeds.sequence}};
  j["out_dir"] = cfg.out_dir;
  j["train_samples"] = cfg.train_samples;
  j["test_samples"] = cfg.test_samples;
  j["cgan_train_samples"] = cfg.cgan_train_samples;
  j["lstm_train_samples"] = cfg.lstm_train_samples;
  j["cgan_val_samples"] = cfg.cgan_val_samples;
  j["lstm_val_samples"] = cfg.lstm_val_samples;
  j["snr_db"] = snr_to_json(cfg.snr_db);
  j["matrix_nse"] = cfg.matrix_nse;
  j["perfect_stub"] = cfg.perfect_stub;
  j["with_ml"] = cfg.with_ml;
  j["with_esprit"] = cfg.with_esprit;
  j["checkpoint_every"] = cfg.checkpoint_every;
  j["dataset"] = {{"num_antennas", cfg.dataset3.num_antennas},
                  {"num_subcarriers", cfg.dataset3.num_subcarriers},
                  {"spacing_wl", cfg.dataset3.spacing_wl},
                  {"tau_max_s", cfg.dataset3.tau_max_s},
                  {"tau_max_taps", cfg.dataset3.tau_max_taps},
                  {"doa_min_rad", cfg.dataset3.doa_min_rad},
                  {"doa_max_rad", cfg.dataset3.doa_max_rad},
                  {"rayleigh_scale", cfg.dataset3.rayleigh_scale},
                  {"frf_offset", cfg.dataset3.frf_offset}};
  j["cgan"] = {{"epochs", cfg.cgan.epochs},
               {"lr", cfg.cgan.lr},
               {"beta", cfg.cgan.beta},
               {"batch", cfg.cgan.batch},
               {"filter_len", cfg.cgan.filter_len},
               {"leaky_slope", cfg.cgan.leaky_slope},
               {"dropout_rate", cfg.cgan.dropout_rate},
               {"up4_filters", cfg.cgan.up4_filters},
               {"use_skips", cfg.cgan.use_skips},
               {"saturating_g", cfg.cgan.saturating_g}};
  j["lstm"] = {{"epochs", cfg.lstm_cfg.epochs},
               {"lr", cfg.lstm_cfg.lr},
               {"batch", cfg.lstm_cfg.batch},
               {"truncation", cfg.lstm_cfg.truncation},
               {"circular_loss", cfg.lstm_cfg.circular_loss}};
  j["esprit"] = {{"n_freq", cfg.esprit_cfg.n_freq},
                 {"stride", cfg.esprit_cfg.stride},
                 {"method", cfg.esprit_cfg.method == esprit::SubspaceMethod::HOSVD ? "hosvd"
                                                                                    : "svd"}};
  j["prep"] = {{"oversample", cfg.prep.oversample},
               {"window", cfg.prep.window},
               {"window_offset", cfg.prep.window_offset},
               {"noisy_labels", cfg.prep.noisy_labels}};
  return j.dump(2);
}

}  // namespace mrce::pipe
