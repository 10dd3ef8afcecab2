#pragma once

#include <cstdint>
#include <vector>

#include "hqgan/nn.hpp"
#include "hqgan/quantum.hpp"
#include "hqgan/tensor.hpp"

namespace hqgan {

/// ResNet-18-shaped residual classifier backbone with the three GAN
/// adaptations: conv1 is a spectral-normalized 3x3 stride-1 convolution,
/// there is no early max-pool, and the classification layer is replaced by
/// an identity so the network emits stage_channels.back() features.
struct BackboneConfig {
  // First entry is the conv1 width, the rest are the four residual stages.
  std::vector<std::size_t> stage_channels = {64, 64, 128, 256, 512};
  std::size_t blocks_per_stage = 2;
  std::size_t input_size = 32;
  std::size_t in_channels = 3;
};

class Backbone {
 public:
  Backbone(const BackboneConfig& cfg, std::uint64_t seed);

  /// [N,C,S,S] -> [N, feature_dim()]. Train mode runs one spectral-norm
  /// power iteration on conv1; eval mode reuses the stored vector.
  Tensor forward(const Tensor& images, Mode mode);

  std::size_t feature_dim() const { return cfg_.stage_channels.back(); }
  const BackboneConfig& config() const { return cfg_; }
  SpectralNormState& spectral_state() { return sn_; }
  const Tensor& conv1_weight() const { return conv1_.weight; }

  std::vector<NamedTensor> parameters() const;
  std::vector<StateEntry> state_entries();

 private:
  struct BasicBlock {
    Conv2dLayer conv1, conv2;
    BatchNormLayer bn1, bn2;
    bool projected = false;  // 1x1 shortcut when shape changes
    Conv2dLayer sc_conv;
    BatchNormLayer sc_bn;

    Tensor forward(const Tensor& x, Mode mode);
  };

  BackboneConfig cfg_;
  Conv2dLayer conv1_;
  SpectralNormState sn_;
  BatchNormLayer bn1_;
  std::vector<std::vector<BasicBlock>> stages_;
};

enum class HeadKind { kClassical, kHybrid };

struct DiscriminatorConfig {
  BackboneConfig backbone;
  HeadKind head_kind = HeadKind::kClassical;
  std::size_t n_qubits = 5;  // hybrid head only
};

/// Backbone plus one of the two heads:
///   classical: linear feature_dim -> 1
///   hybrid:    linear feature_dim -> n_qubits -> quantum circuit -> linear -> 1
/// Both emit raw logits; the loss applies the sigmoid.
class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);

  Tensor forward(const Tensor& images, Mode mode);
  Tensor features(const Tensor& images, Mode mode) {
    return backbone_.forward(images, mode);
  }
  /// Head only, from precomputed features.
  Tensor head_forward(const Tensor& features);

  Backbone& backbone() { return backbone_; }
  const DiscriminatorConfig& config() const { return cfg_; }

  std::vector<NamedTensor> parameters() const;
  std::vector<StateEntry> state_entries();

 private:
  DiscriminatorConfig cfg_;
  Backbone backbone_;
  LinearLayer cls_head_;  // classical
  LinearLayer proj_;      // hybrid: features -> n_qubits
  Tensor theta_;          // hybrid circuit angles [n,3]
  LinearLayer out_;       // hybrid: n_qubits -> 1
};

}  // namespace hqgan
