#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hqgan/data.hpp"
#include "hqgan/discriminator.hpp"
#include "hqgan/generator.hpp"
#include "hqgan/metrics.hpp"
#include "hqgan/nn.hpp"

namespace hqgan {

struct TrainConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::size_t batch_size = 8;
  std::size_t epochs = 100;
  /// Epochs between FID/KID/IS evaluations (also evaluated at epoch 0 and
  /// after the final epoch); 0 disables metric evaluation.
  std::size_t metric_every = 10;
  /// Generated sample count per evaluation; 0 matches the held-out count.
  std::size_t eval_samples = 0;
  std::uint64_t seed = 0;
  LatentDist latent = LatentDist::kUniformArc;
};

void validate(const TrainConfig& cfg);

struct StepRecord {
  std::size_t step = 0;   // global step, 1-based
  std::size_t epoch = 0;  // 1-based
  double d_loss = 0.0;
  double g_loss = 0.0;
};

struct MetricPoint {
  std::size_t epoch = 0;  // 0 = before training
  double fid = 0.0;
  double kid = 0.0;
  double is_mean = 0.0;
  double is_std = 0.0;
  std::string extractor_id;
  std::size_t n_eval = 0;
};

struct RunLog {
  std::vector<StepRecord> steps;
  std::vector<MetricPoint> metrics;
  std::vector<double> epoch_seconds;
};

/// Alternating D/G updates with BCE-with-logits and Adam, one D step per G
/// step: D sees the real batch (target 1) and detached fakes (target 0),
/// then G is updated on fresh latents against target 1.
class GanTrainer {
 public:
  GanTrainer(Generator& gen, Discriminator& disc, const TrainConfig& cfg);

  /// One adversarial step; returns (d_loss, g_loss). Aborts with TrainAbort
  /// on a non-finite loss, carrying a diagnostic snapshot.
  std::pair<double, double> train_step(const Tensor& real_batch);

  /// The two halves of a step, exposed so optimizer isolation is testable:
  /// each Adam instance owns exactly its own network's parameters.
  double discriminator_step(const Tensor& real_batch);
  double generator_step();

  /// Full run over the training set; evaluates on the held-out set per the
  /// metric schedule. `on_evaluate` (optional) fires after each metric point
  /// with the epoch index. The extractor may be null when metrics are off.
  RunLog train(const Dataset& train_data, const Dataset& eval_data,
               FeatureExtractor* extractor,
               const std::function<void(std::size_t epoch)>& on_evaluate = {});

  /// Metrics of the current generator against the held-out images;
  /// generation uses eval-mode batch statistics and epoch-seeded latents.
  MetricPoint evaluate_epoch(const Tensor& real_images, FeatureExtractor& extractor,
                             std::size_t n_gen, std::size_t epoch);

  std::size_t global_step() const { return step_; }
  Adam& generator_opt() { return adam_g_; }
  Adam& discriminator_opt() { return adam_d_; }

 private:
  std::string snapshot(double d_loss, double g_loss) const;

  Generator& gen_;
  Discriminator& disc_;
  TrainConfig cfg_;
  Adam adam_g_;
  Adam adam_d_;
  Rng latent_rng_;
  std::size_t step_ = 0;
};

/// Images from eval-mode generation with a dedicated latent stream.
Tensor generate_images(Generator& gen, std::size_t count, std::uint64_t seed,
                       LatentDist dist, std::size_t chunk = 64);

}  // namespace hqgan
