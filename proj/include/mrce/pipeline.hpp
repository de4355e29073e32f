#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrce/cgan.hpp"
#include "mrce/channel_sim.hpp"
#include "mrce/esprit.hpp"
#include "mrce/eval.hpp"
#include "mrce/lstm.hpp"
#include "mrce/preprocess.hpp"
#include "mrce/types.hpp"

namespace mrce::pipe {

/// Every random stream the pipeline touches, spelled out so a run is fully
/// reproducible from the config alone. Presets derive all nine from the
/// global seed; each can still be overridden individually.
struct SeedSet {
  std::uint64_t train3 = 0;       // 3-path half of the training pool
  std::uint64_t train5 = 0;       // 5-path half of the training pool
  std::uint64_t test3 = 0;        // 3-path half of the held-out pool
  std::uint64_t test5 = 0;        // 5-path half of the held-out pool
  std::uint64_t noise_train = 0;  // measurement noise for training samples
  std::uint64_t noise_test = 0;   // measurement noise for held-out samples
  std::uint64_t cgan = 0;         // generator/discriminator init + batch shuffle
  std::uint64_t lstm = 0;         // phase-net init + batch shuffle
  std::uint64_t sequence = 0;     // shared mixing sequence
};

SeedSet derive_seeds(std::uint64_t global_seed);

/// One experiment end to end: dataset sizes, measurement model, the three
/// estimator configurations, and where artifacts land. Channel pools are
/// drawn half from `dataset3` and half from `dataset5`; the slices fed to
/// each trainer keep that balance.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  SeedSet seeds;

  int train_samples = 64;       // generation pool for training (even, 50/50)
  int test_samples = 32;        // held-out evaluation pool (even, 50/50)
  int cgan_train_samples = 64;  // leading balanced slice of the train pool
  int lstm_train_samples = 64;  // leading balanced slice of the train pool
  int cgan_val_samples = 8;     // leading balanced slice of the test pool (0 = none)
  int lstm_val_samples = 32;    // leading balanced slice of the test pool (0 = none)

  double snr_db = 20.0;  // measurement SNR; +inf disables noise entirely

  DatasetSpec dataset3;  // 3 multipath components (num_samples/rng_seed set per pool)
  DatasetSpec dataset5;  // 5 multipath components

  dsp::LstmPreprocessConfig prep;  // sequence_seed kept in sync with seeds.sequence
  gan::GanTrainConfig cgan;        // seed kept in sync with seeds.cgan
  lstm::LstmTrainConfig lstm_cfg;  // seed kept in sync with seeds.lstm
  esprit::EspritConfig esprit_cfg;

  std::string out_dir = "mrce-out";
  bool matrix_nse = false;    // one NSE over the stacked chain matrix instead of
                              // the per-antenna mean
  bool perfect_stub = false;  // replace both learned stages with identities:
                              // generator output := true channel, refined phase :=
                              // its own input phase; exercises the deterministic
                              // wiring end to end without training
  bool with_ml = true;        // run the two learned estimators
  bool with_esprit = true;    // run the parametric baseline at 3 and 5 paths
  int checkpoint_every = 0;   // extra per-epoch checkpoints when > 0

  void validate() const;
};

/// 64/32 pool, 10 epochs for both trainers. Finishes in minutes on one core.
ExperimentConfig desk_preset(std::uint64_t seed = 0);

/// Full-scale run: 1500 + 1500 samples (2400 train / 600 test), 600-sample
/// adversarial training for 150 epochs, 2400-sample phase training for 50.
/// Takes hours on a CPU; use `checkpoint_every` to keep progress.
ExperimentConfig paper_preset(std::uint64_t seed = 0);

/// Parse a JSON config document: optional "preset" ("desk"/"paper") and
/// "seed" pick the base, the remaining keys override individual fields.
/// Unknown keys are rejected. See README for the schema.
ExperimentConfig config_from_json(const std::string& text);

/// Fully explicit echo of a config, parseable by config_from_json.
std::string config_to_json(const ExperimentConfig& cfg);

/// Channel pools plus the per-sample measurement noise draws. Both pools
/// list the 3-path half first, then the 5-path half.
struct Corpus {
  std::vector<Sample> train;
  std::vector<Sample> test;
  std::vector<CMat> noise_train;  // full-array noise, same index as `train`
  std::vector<CMat> noise_test;
};

Corpus make_corpus(const ExperimentConfig& cfg);

/// Write the four channel pools as binary datasets into `dir`
/// (train3/train5/test3/test5.bin).
void write_datasets(const ExperimentConfig& cfg, const std::string& dir);

/// Train the conditional GAN on the corpus (writing cgan.ckpt and
/// cgan_history.csv under cfg.out_dir), or load an existing cgan.ckpt when
/// present and `force_train` is false.
gan::CganModel cgan_stage(const ExperimentConfig& cfg, const Corpus& corpus, bool force_train);

/// Train the phase net on sequences built from the generator's estimates
/// (writing lstm.ckpt and lstm_history.csv), or load an existing lstm.ckpt.
lstm::PhaseNet lstm_stage(const ExperimentConfig& cfg, const Corpus& corpus,
                          gan::GeneratorNet& generator, bool force_train);

/// Per-sample time-domain NSE of every enabled method over the test pool:
/// "measurement" always, "cgan" and "cgan_lstm" when the models are given or
/// cfg.perfect_stub is set, "esprit_3mpc"/"esprit_5mpc" when cfg.with_esprit
/// (also writing esprit{3,5}_estimates.csv under cfg.out_dir).
eval::NseReport evaluate_methods(const ExperimentConfig& cfg, const Corpus& corpus,
                                 gan::GeneratorNet* generator, const lstm::PhaseNet* phase_net);

/// The whole experiment: generate, train or load both models, evaluate all
/// methods, and export the report files into cfg.out_dir. Any stage failure
/// is rethrown with a "stage <name>:" prefix.
eval::NseReport run_pipeline(const ExperimentConfig& cfg);

/// Rebuild a report from a previously written nse_per_sample.csv.
eval::NseReport report_from_csv(const std::string& path);

}  // namespace mrce::pipe
