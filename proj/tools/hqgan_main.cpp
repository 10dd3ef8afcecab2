#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hqgan/errors.hpp"
#include "hqgan/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"hqgan - hybrid quantum-classical GAN experiment runner"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  std::string config_path;
  bool dry_run = false;
  std::string data_dir, pretrained, out_dir;
  long long seed = -1;
  run->add_option("config", config_path, "Experiment config file")->required();
  run->add_flag("--dry-run", dry_run, "Validate the config and print the plan");
  run->add_option("--seed", seed, "Override the training seed");
  run->add_option("--data-dir", data_dir,
                  "CIFAR-10 batch directory (or HQGAN_DATA_DIR)");
  run->add_option("--pretrained", pretrained, "Discriminator-init weight store");
  run->add_option("--out", out_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    hqgan::ExperimentConfig cfg = hqgan::parse_experiment_config(config_path);
    if (seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed);
    if (!data_dir.empty()) {
      cfg.data_dir = data_dir;
    } else if (cfg.data_dir.empty()) {
      if (const char* env = std::getenv("HQGAN_DATA_DIR")) cfg.data_dir = env;
    }
    if (!pretrained.empty()) cfg.pretrained = pretrained;
    if (!out_dir.empty()) cfg.out_dir = out_dir;

    if (dry_run) {
      std::cout << hqgan::describe_plan(cfg);
      return 0;
    }
    hqgan::run_experiment(cfg);
    std::cout << "done: " << cfg.out_dir.string() << "\n";
    return 0;
  } catch (const hqgan::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const hqgan::TrainAbort& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
