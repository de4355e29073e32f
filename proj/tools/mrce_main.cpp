#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "mrce/pipeline.hpp"

namespace {

using mrce::ConfigError;
using mrce::NumericalError;

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// MRCE_OUT_ROOT prefixes relative output directories so runs can be
/// redirected without touching the config.
void resolve_out_dir(mrce::pipe::ExperimentConfig& cfg) {
  const char* root = std::getenv("MRCE_OUT_ROOT");
  if (root != nullptr && root[0] != '\0' &&
      !std::filesystem::path(cfg.out_dir).is_absolute())
    cfg.out_dir = std::string(root) + "/" + cfg.out_dir;
}

void write_config_echo(const mrce::pipe::ExperimentConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) throw std::runtime_error("cannot create directory: " + cfg.out_dir);
  const std::string path = cfg.out_dir + "/config.json";
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << mrce::pipe::config_to_json(cfg) << "\n";
}

void print_summary(const mrce::eval::NseReport& report) {
  std::printf("%-14s %6s %14s %14s %10s\n", "method", "count", "median", "mean", "mean_db");
  for (const auto& [name, values] : report.per_sample) {
    const mrce::eval::MethodSummary s = report.summary(name);
    std::printf("%-14s %6d %14.6g %14.6g %10.2f\n", name.c_str(), s.count, s.median, s.mean,
                s.mean_db);
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Mixed-resolution massive MIMO channel estimation experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string preset = "desk";
  std::uint64_t seed = 0;
  std::string out_override;
  app.add_option("-c,--config", config_path,
                 "JSON experiment config (see README for the schema)");
  app.add_option("-p,--preset", preset, "Preset when no config file is given: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("-s,--seed", seed, "Global seed when no config file is given");
  app.add_option("-o,--out", out_override, "Output directory (overrides the config)");

  CLI::App* cmd_gen = app.add_subcommand("gen-data", "Write the four channel pools as binary datasets");
  CLI::App* cmd_cgan = app.add_subcommand("train-cgan", "Train the conditional GAN and checkpoint it");
  CLI::App* cmd_lstm = app.add_subcommand("train-lstm", "Train the phase net on top of cgan.ckpt");
  CLI::App* cmd_esprit = app.add_subcommand("run-esprit", "Run the parametric baseline on the test pool");
  CLI::App* cmd_eval = app.add_subcommand("evaluate", "Run the whole pipeline and export the report");
  CLI::App* cmd_report = app.add_subcommand("report", "Rebuild CDFs and summary from nse_per_sample.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help text or the parse error
    return code == 0 ? 0 : 2;
  }

  mrce::pipe::ExperimentConfig cfg;
  if (!config_path.empty()) {
    if (app.count("--preset") > 0 || app.count("--seed") > 0)
      throw ConfigError("--preset/--seed conflict with --config; set them in the file");
    cfg = mrce::pipe::config_from_json(read_file(config_path));
  } else {
    cfg = preset == "paper" ? mrce::pipe::paper_preset(seed) : mrce::pipe::desk_preset(seed);
  }
  if (!out_override.empty()) cfg.out_dir = out_override;
  resolve_out_dir(cfg);
  cfg.validate();

  if (cmd_report->parsed()) {
    const std::string csv = cfg.out_dir + "/nse_per_sample.csv";
    const mrce::eval::NseReport report = mrce::pipe::report_from_csv(csv);
    mrce::eval::export_report(report, cfg.out_dir);
    print_summary(report);
    return 0;
  }

  write_config_echo(cfg);

  if (cmd_gen->parsed()) {
    const std::string dir = cfg.out_dir + "/datasets";
    mrce::pipe::write_datasets(cfg, dir);
    std::printf("wrote train3/train5/test3/test5.bin under %s\n", dir.c_str());
    return 0;
  }

  if (cmd_cgan->parsed()) {
    std::fprintf(stderr, "[mrce] generating %d + %d samples\n", cfg.train_samples,
                 cfg.test_samples);
    const mrce::pipe::Corpus corpus = mrce::pipe::make_corpus(cfg);
    std::fprintf(stderr, "[mrce] training the conditional GAN (%d epochs)\n", cfg.cgan.epochs);
    mrce::pipe::cgan_stage(cfg, corpus, true);
    std::printf("wrote %s/cgan.ckpt and cgan_history.csv\n", cfg.out_dir.c_str());
    return 0;
  }

  if (cmd_lstm->parsed()) {
    if (!std::filesystem::exists(cfg.out_dir + "/cgan.ckpt"))
      throw ConfigError("train-lstm: no cgan.ckpt under " + cfg.out_dir +
                        "; run train-cgan first");
    const mrce::pipe::Corpus corpus = mrce::pipe::make_corpus(cfg);
    mrce::gan::CganModel model = mrce::pipe::cgan_stage(cfg, corpus, false);
    std::fprintf(stderr, "[mrce] training the phase net (%d epochs)\n", cfg.lstm_cfg.epochs);
    mrce::pipe::lstm_stage(cfg, corpus, model.g, true);
    std::printf("wrote %s/lstm.ckpt and lstm_history.csv\n", cfg.out_dir.c_str());
    return 0;
  }

  if (cmd_esprit->parsed()) {
    mrce::pipe::ExperimentConfig ecfg = cfg;
    ecfg.with_ml = false;
    ecfg.with_esprit = true;
    const mrce::pipe::Corpus corpus = mrce::pipe::make_corpus(ecfg);
    const mrce::eval::NseReport report =
        mrce::pipe::evaluate_methods(ecfg, corpus, nullptr, nullptr);
    mrce::eval::export_report(report, ecfg.out_dir);
    print_summary(report);
    return 0;
  }

  // evaluate
  (void)cmd_eval;
  const mrce::eval::NseReport report = mrce::pipe::run_pipeline(cfg);
  print_summary(report);
  std::printf("report written under %s\n", cfg.out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "mrce: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "mrce: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mrce: %s\n", e.what());
    return 1;
  }
}
