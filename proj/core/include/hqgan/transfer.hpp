#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "hqgan/data.hpp"
#include "hqgan/discriminator.hpp"
#include "hqgan/metrics.hpp"
#include "hqgan/weight_store.hpp"

namespace hqgan {

/// Backbone plus a temporary softmax head, used both for pretraining the
/// discriminator initialization and as the metric feature extractor.
class Classifier {
 public:
  Classifier(const BackboneConfig& cfg, std::size_t n_classes, std::uint64_t seed);

  Tensor logits(const Tensor& images, Mode mode) {
    return head_.forward(backbone_.forward(images, mode));
  }
  Tensor features(const Tensor& images, Mode mode) {
    return backbone_.forward(images, mode);
  }
  Tensor head_logits(const Tensor& features) { return head_.forward(features); }

  Backbone& backbone() { return backbone_; }
  std::size_t n_classes() const { return n_classes_; }

  std::vector<NamedTensor> parameters() const;
  /// Backbone entries keep their bare names; the head is prefixed "head.".
  std::vector<StateEntry> state_entries();

 private:
  Backbone backbone_;
  LinearLayer head_;
  std::size_t n_classes_ = 0;
};

struct PretrainReport {
  std::size_t epochs = 0;
  double final_accuracy = 0.0;
  std::vector<double> epoch_losses;  // one mean loss per epoch
};

struct PretrainOptions {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

/// Trains a fresh classifier on the labeled dataset with cross-entropy and
/// returns the backbone weights only (the softmax head is discarded,
/// mirroring the identity-head replacement). Dataset labels may be any
/// distinct integers; they are remapped to 0..n_classes-1 in sorted order.
/// Pass `classifier_out` to also keep the trained classifier.
std::pair<WeightStore, PretrainReport> pretrain_backbone(
    const Dataset& data, std::size_t n_classes, const BackboneConfig& backbone_cfg,
    const PretrainOptions& opts,
    std::shared_ptr<Classifier>* classifier_out = nullptr);

/// Metric extractor backed by a trained classifier in eval mode: penultimate
/// features plus softmax class posteriors. The id fingerprints the weights
/// so scores from different extractors are never comparable by accident.
class ClassifierExtractor : public FeatureExtractor {
 public:
  explicit ClassifierExtractor(std::shared_ptr<Classifier> classifier);

  std::string id() const override { return id_; }
  std::size_t feature_dim() const override;
  std::size_t n_classes() const override;
  void extract(const Tensor& images, std::vector<double>& features,
               std::vector<double>* probabilities) override;

 private:
  std::shared_ptr<Classifier> classifier_;
  std::string id_;
};

}  // namespace hqgan
