#include "hqgan/trainer.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "hqgan/errors.hpp"

namespace hqgan {

void validate(const TrainConfig& cfg) {
  if (cfg.learning_rate <= 0.0) throw ConfigError("train: learning_rate must be > 0");
  if (cfg.beta1 <= 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 <= 0.0 || cfg.beta2 >= 1.0) {
    throw ConfigError("train: beta parameters must lie in (0,1)");
  }
  if (cfg.batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (cfg.epochs == 0) throw ConfigError("train: epochs must be >= 1");
}

namespace {

AdamConfig adam_config(const TrainConfig& cfg) {
  AdamConfig a;
  a.learning_rate = cfg.learning_rate;
  a.beta1 = cfg.beta1;
  a.beta2 = cfg.beta2;
  return a;
}

std::vector<Tensor> tensors_of(const std::vector<NamedTensor>& named) {
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (const NamedTensor& nt : named) out.push_back(nt.tensor);
  return out;
}

double param_norm(const std::vector<NamedTensor>& params) {
  double total = 0.0;
  for (const NamedTensor& nt : params) {
    for (const double v : nt.tensor.data()) total += v * v;
  }
  return std::sqrt(total);
}

}  // namespace

GanTrainer::GanTrainer(Generator& gen, Discriminator& disc, const TrainConfig& cfg)
    : gen_(gen),
      disc_(disc),
      cfg_(cfg),
      adam_g_(tensors_of(gen.parameters()), adam_config(cfg)),
      adam_d_(tensors_of(disc.parameters()), adam_config(cfg)),
      latent_rng_(derive_seed(cfg.seed, "train_latent")) {
  validate(cfg);
}

std::string GanTrainer::snapshot(double d_loss, double g_loss) const {
  std::ostringstream os;
  os << "non-finite loss at step " << step_ << " (d_loss=" << d_loss
     << ", g_loss=" << g_loss << ", seed=" << cfg_.seed
     << ", |G|=" << param_norm(gen_.parameters())
     << ", |D|=" << param_norm(disc_.parameters()) << ")";
  return os.str();
}

double GanTrainer::discriminator_step(const Tensor& real_batch) {
  const std::size_t n = real_batch.shape().at(0);
  const Tensor ones = Tensor::full({n, 1}, 1.0);
  const Tensor zeros = Tensor::zeros({n, 1});

  // Real images as 1, detached fakes as 0; only D's Adam runs.
  const Tensor z = sample_latent(n, gen_.latent_dim(), latent_rng_, cfg_.latent);
  const Tensor fake = gen_.forward(z, Mode::kTrain).detached();
  const Tensor d_loss =
      add(bce_with_logits(disc_.forward(real_batch, Mode::kTrain), ones),
          bce_with_logits(disc_.forward(fake, Mode::kTrain), zeros));
  adam_d_.zero_grad();
  d_loss.backward();
  adam_d_.step();
  return d_loss.value();
}

double GanTrainer::generator_step() {
  const std::size_t n = cfg_.batch_size;
  const Tensor ones = Tensor::full({n, 1}, 1.0);

  // Fresh latents, independent of the D step's fakes.
  const Tensor z = sample_latent(n, gen_.latent_dim(), latent_rng_, cfg_.latent);
  const Tensor g_logits = disc_.forward(gen_.forward(z, Mode::kTrain), Mode::kTrain);
  const Tensor g_loss = bce_with_logits(g_logits, ones);
  adam_g_.zero_grad();
  g_loss.backward();
  adam_g_.step();
  return g_loss.value();
}

std::pair<double, double> GanTrainer::train_step(const Tensor& real_batch) {
  const std::size_t n = real_batch.shape().at(0);
  if (n != cfg_.batch_size) {
    throw ShapeError("train_step: batch has " + std::to_string(n) +
                     " samples, configured batch_size is " +
                     std::to_string(cfg_.batch_size));
  }
  ++step_;
  const double d = discriminator_step(real_batch);
  const double g = generator_step();
  if (!std::isfinite(d) || !std::isfinite(g)) {
    throw TrainAbort(snapshot(d, g), static_cast<long>(step_), cfg_.seed);
  }
  return {d, g};
}

Tensor generate_images(Generator& gen, std::size_t count, std::uint64_t seed,
                       LatentDist dist, std::size_t chunk) {
  Rng rng(seed);
  Tensor out;
  std::vector<double> collected;
  Shape shape;
  for (std::size_t start = 0; start < count; start += chunk) {
    const std::size_t n = std::min(chunk, count - start);
    const Tensor z = sample_latent(n, gen.latent_dim(), rng, dist);
    const Tensor images = gen.forward(z, Mode::kEval);
    if (shape.empty()) shape = images.shape();
    collected.insert(collected.end(), images.data().begin(), images.data().end());
  }
  shape[0] = count;
  return Tensor::from_data(shape, std::move(collected));
}

MetricPoint GanTrainer::evaluate_epoch(const Tensor& real_images,
                                       FeatureExtractor& extractor,
                                       std::size_t n_gen, std::size_t epoch) {
  const FeatureSet real_features = extract_features(real_images, extractor, "real");
  const Tensor generated = generate_images(
      gen_, n_gen, derive_seed(cfg_.seed, "eval_latent", epoch), cfg_.latent);
  const auto [gen_features, gen_probs] =
      extract_features_and_probs(generated, extractor, "generated");

  MetricPoint point;
  point.epoch = epoch;
  point.fid = fid(real_features, gen_features);
  point.kid = kid(real_features, gen_features);
  const auto [is_mean, is_std] = inception_score(gen_probs, 1);
  point.is_mean = is_mean;
  point.is_std = is_std;
  point.extractor_id = extractor.id();
  point.n_eval = n_gen;
  return point;
}

RunLog GanTrainer::train(const Dataset& train_data, const Dataset& eval_data,
                         FeatureExtractor* extractor,
                         const std::function<void(std::size_t)>& on_evaluate) {
  RunLog log;
  const bool with_metrics = extractor != nullptr && cfg_.metric_every > 0;

  Tensor eval_images;
  FeatureSet real_features;
  std::size_t n_gen = 0;
  if (with_metrics) {
    if (eval_data.count() < 2) {
      throw ConfigError("train: held-out set needs at least 2 images for metrics");
    }
    eval_images = make_batch_all(eval_data).images;
    real_features = extract_features(eval_images, *extractor, "real");
    n_gen = cfg_.eval_samples > 0 ? cfg_.eval_samples : eval_data.count();
  }

  auto evaluate = [&](std::size_t epoch) {
    const Tensor generated = generate_images(
        gen_, n_gen, derive_seed(cfg_.seed, "eval_latent", epoch), cfg_.latent);
    const auto [gen_features, gen_probs] =
        extract_features_and_probs(generated, *extractor, "generated");
    MetricPoint point;
    point.epoch = epoch;
    point.fid = fid(real_features, gen_features);
    point.kid = kid(real_features, gen_features);
    const auto [is_mean, is_std] = inception_score(gen_probs, 1);
    point.is_mean = is_mean;
    point.is_std = is_std;
    point.extractor_id = extractor->id();
    point.n_eval = n_gen;
    log.metrics.push_back(std::move(point));
    if (on_evaluate) on_evaluate(epoch);
  };

  if (with_metrics) evaluate(0);

  for (std::size_t epoch = 1; epoch <= cfg_.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& idx :
         batch_indices(train_data.count(), cfg_.batch_size, cfg_.seed, epoch)) {
      const ImageBatch batch = make_batch(train_data, idx);
      const auto [d, g] = train_step(batch.images);
      log.steps.push_back({step_, epoch, d, g});
    }
    log.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    if (with_metrics && (epoch % cfg_.metric_every == 0 || epoch == cfg_.epochs)) {
      evaluate(epoch);
    }
  }
  return log;
}

}  // namespace hqgan
