#include "hqgan/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "hqgan/errors.hpp"
#include "hqgan/rng.hpp"

namespace hqgan {

Classifier::Classifier(const BackboneConfig& cfg, std::size_t n_classes,
                       std::uint64_t seed)
    : backbone_(cfg, seed), n_classes_(n_classes) {
  if (n_classes < 2) {
    throw ConfigError("classifier: need at least 2 classes, got " +
                      std::to_string(n_classes));
  }
  Rng rng(derive_seed(seed, "classifier.head"));
  head_ = LinearLayer(backbone_.feature_dim(), n_classes, /*with_bias=*/true, rng);
}

std::vector<NamedTensor> Classifier::parameters() const {
  std::vector<NamedTensor> out = backbone_.parameters();
  head_.collect("head", out);
  return out;
}

std::vector<StateEntry> Classifier::state_entries() {
  std::vector<StateEntry> out = backbone_.state_entries();
  out.push_back({"head.weight", head_.weight.shape(),
                 head_.weight.mutable_data().data(), head_.weight.size()});
  out.push_back({"head.bias", head_.bias.shape(), head_.bias.mutable_data().data(),
                 head_.bias.size()});
  return out;
}

// ---------------------------------------------------------------------------
// Pretraining
// ---------------------------------------------------------------------------

namespace {

std::vector<int> remap_labels(const Dataset& data, std::size_t n_classes) {
  std::map<int, int> index;
  for (const Image& img : data.images) index.emplace(img.label, 0);
  if (index.size() != n_classes) {
    throw ConfigError("pretrain: dataset has " + std::to_string(index.size()) +
                      " distinct labels, caller claimed " +
                      std::to_string(n_classes));
  }
  int next = 0;
  for (auto& [label, idx] : index) idx = next++;
  std::vector<int> remapped(data.count());
  for (std::size_t i = 0; i < data.count(); ++i) {
    remapped[i] = index.at(data.images[i].label);
  }
  return remapped;
}

double accuracy_of(Classifier& clf, const Dataset& data,
                   const std::vector<int>& labels, std::size_t chunk) {
  std::size_t correct = 0;
  std::vector<std::size_t> idx(chunk);
  for (std::size_t start = 0; start < data.count(); start += chunk) {
    const std::size_t count = std::min(chunk, data.count() - start);
    idx.resize(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = start + i;
    const ImageBatch batch = make_batch(data, idx);
    const Tensor logits = clf.logits(batch.images, Mode::kEval);
    const auto lv = logits.data();
    const std::size_t c = clf.n_classes();
    for (std::size_t i = 0; i < count; ++i) {
      const double* row = lv.data() + i * c;
      const std::size_t arg =
          static_cast<std::size_t>(std::max_element(row, row + c) - row);
      if (static_cast<int>(arg) == labels[start + i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.count());
}

}  // namespace

std::pair<WeightStore, PretrainReport> pretrain_backbone(
    const Dataset& data, std::size_t n_classes, const BackboneConfig& backbone_cfg,
    const PretrainOptions& opts, std::shared_ptr<Classifier>* classifier_out) {
  if (data.count() == 0) throw ConfigError("pretrain: empty dataset");
  if (n_classes < 2) throw ConfigError("pretrain: n_classes must be >= 2");
  const std::vector<int> labels = remap_labels(data, n_classes);

  Classifier clf(backbone_cfg, n_classes, derive_seed(opts.seed, "pretrain.init"));

  std::vector<Tensor> params;
  for (const NamedTensor& nt : clf.parameters()) params.push_back(nt.tensor);
  AdamConfig adam_cfg;
  adam_cfg.learning_rate = opts.learning_rate;
  adam_cfg.beta1 = 0.9;  // plain classification, not GAN momentum
  adam_cfg.beta2 = 0.999;
  Adam adam(params, adam_cfg);

  PretrainReport report;
  report.epochs = opts.epochs;
  for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (const auto& batch_idx :
         batch_indices(data.count(), opts.batch_size, opts.seed, epoch)) {
      const ImageBatch batch = make_batch(data, batch_idx);
      std::vector<int> batch_labels(batch_idx.size());
      for (std::size_t i = 0; i < batch_idx.size(); ++i) {
        batch_labels[i] = labels[batch_idx[i]];
      }
      const Tensor loss =
          cross_entropy(clf.logits(batch.images, Mode::kTrain), batch_labels);
      adam.zero_grad();
      loss.backward();
      adam.step();
      epoch_loss += loss.value();
      ++n_batches;
    }
    report.epoch_losses.push_back(n_batches ? epoch_loss / n_batches : 0.0);
  }
  report.final_accuracy = accuracy_of(clf, data, labels, 64);

  WeightStore store = export_state(clf.backbone().state_entries());
  if (classifier_out) *classifier_out = std::make_shared<Classifier>(std::move(clf));
  return {std::move(store), std::move(report)};
}

// ---------------------------------------------------------------------------
// Extractor
// ---------------------------------------------------------------------------

namespace {

std::uint64_t fingerprint(Classifier& clf) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const StateEntry& e : clf.state_entries()) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(e.data);
    for (std::size_t i = 0; i < e.size * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace

ClassifierExtractor::ClassifierExtractor(std::shared_ptr<Classifier> classifier)
    : classifier_(std::move(classifier)) {
  std::ostringstream os;
  os << "clf" << classifier_->backbone().feature_dim() << "d-"
     << classifier_->n_classes() << "c-" << std::hex << fingerprint(*classifier_);
  id_ = os.str();
}

std::size_t ClassifierExtractor::feature_dim() const {
  return classifier_->backbone().feature_dim();
}

std::size_t ClassifierExtractor::n_classes() const {
  return classifier_->n_classes();
}

void ClassifierExtractor::extract(const Tensor& images,
                                  std::vector<double>& features,
                                  std::vector<double>* probabilities) {
  if (images.shape().size() != 4) {
    throw ShapeError("extractor: expected [N,3,S,S] images, got " +
                     shape_str(images.shape()));
  }
  const std::size_t n = images.shape()[0];
  const std::size_t sample = images.size() / std::max<std::size_t>(n, 1);
  const std::size_t chunk = 64;
  const auto iv = images.data();
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t count = std::min(chunk, n - start);
    Shape shape = images.shape();
    shape[0] = count;
    Tensor slice = Tensor::from_data(
        shape, std::vector<double>(iv.begin() + start * sample,
                                   iv.begin() + (start + count) * sample));
    const Tensor feats = classifier_->features(slice, Mode::kEval);
    features.insert(features.end(), feats.data().begin(), feats.data().end());
    if (probabilities) {
      const auto probs = softmax_rows(classifier_->head_logits(feats));
      probabilities->insert(probabilities->end(), probs.begin(), probs.end());
    }
  }
}

}  // namespace hqgan
