#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hqgan/discriminator.hpp"
#include "hqgan/generator.hpp"
#include "hqgan/trainer.hpp"

namespace hqgan {

/// One experiment as a flat key-value config file. The experiment id fixes
/// the generator/discriminator kinds:
///   1 = classical/classical, 2 = classical/hybrid, 3 = quantum/classical,
///   4 = quantum/hybrid, 5 = quantum/hybrid with separate per-class runs.
struct ExperimentConfig {
  int experiment_id = 1;
  BlockKind generator_kind = BlockKind::kClassical;
  HeadKind discriminator_kind = HeadKind::kClassical;

  std::string dataset = "synthetic";  // "cifar10" | "synthetic"
  std::filesystem::path data_dir;     // cifar10 batch directory
  std::vector<int> classes;           // target classes, one training run each
  std::size_t sample_cap = 0;         // per-class training image cap (0 = all)

  std::size_t image_size = 0;  // 0 = dataset default (32 cifar, 16 synthetic)
  std::size_t n_qubits = 5;
  std::size_t gen_base_channels = 256;
  std::vector<std::size_t> backbone_channels = {64, 64, 128, 256, 512};

  std::size_t pretrain_epochs = 5;
  std::size_t pretrain_per_class = 500;   // cifar pretraining cap per class
  std::size_t synthetic_per_class = 512;  // synthetic training images per class
  std::size_t synthetic_eval_count = 128;

  TrainConfig train;
  std::filesystem::path pretrained;  // optional discriminator-init weights
  std::filesystem::path out_dir = "runs/exp";
};

ExperimentConfig parse_experiment_config_text(std::string_view text,
                                              const std::string& origin);
ExperimentConfig parse_experiment_config(const std::filesystem::path& path);

/// Human-readable resolved plan (what --dry-run prints).
std::string describe_plan(const ExperimentConfig& cfg);

/// Pretrains (or loads) the discriminator initialization, trains one GAN per
/// target class, and writes runlog.csv / metrics.csv / sample grids / weight
/// stores under out_dir. Throws ConfigError, TrainAbort or IoError.
void run_experiment(const ExperimentConfig& cfg);

/// De-normalizes, tiles and writes `count` generated samples as a PNG grid.
void export_samples(Generator& gen, std::size_t count, std::size_t grid_cols,
                    const std::filesystem::path& path, std::uint64_t seed,
                    LatentDist dist = LatentDist::kUniformArc);

/// Two CSVs: per-step losses (step,epoch,d_loss,g_loss) and per-evaluation
/// metrics (epoch,fid,kid,is_mean,is_std,extractor_id,n_eval).
void export_curves(const RunLog& log, const std::filesystem::path& losses_csv,
                   const std::filesystem::path& metrics_csv);

/// Inverse of export_curves (epoch wall-clock is not serialized).
RunLog parse_runlog(const std::filesystem::path& losses_csv,
                    const std::filesystem::path& metrics_csv);

/// Exclusive lock file guarding an output directory; released on destruction.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path lock_path_;
};

}  // namespace hqgan
