#pragma once

#include <cstdint>
#include <vector>

#include "hqgan/nn.hpp"
#include "hqgan/quantum.hpp"
#include "hqgan/tensor.hpp"

namespace hqgan {

enum class BlockKind { kClassical, kQuantum };

struct GeneratorConfig {
  BlockKind block_kind = BlockKind::kClassical;
  std::size_t n_qubits = 5;       // latent dimension
  std::size_t base_channels = 256;
  std::size_t output_channels = 3;
  std::size_t output_size = 32;   // must be 4 * 2^k, k >= 1
};

/// Doubles the spatial extent: the main path refines the upsampled input
/// through two conv/batch-norm/ReLU stages while a 1x1 convolution aligns
/// the shortcut channels; the two paths are summed.
struct ResidualUpBlock {
  Conv2dLayer conv1, conv2;  // 3x3, no bias (batch norm follows)
  BatchNormLayer bn1, bn2;
  Conv2dLayer shortcut;      // 1x1 on the upsampled input

  ResidualUpBlock() = default;
  ResidualUpBlock(std::size_t in_channels, std::size_t out_channels, Rng& rng);

  /// [N,C,H,W] -> [N,out_channels,2H,2W]
  Tensor forward(const Tensor& x, Mode mode);
};

/// Latent vector -> learning block (classical or quantum) -> FC + 1-D
/// batch norm -> (base,4,4) map -> residual upsampling blocks -> final
/// nearest-neighbor doubling + 3x3 conv -> tanh image in (-1,+1).
///
/// Both block variants expose exactly 3 * n_qubits trainable parameters, so
/// the classical and quantum generators are parameter-matched by
/// construction.
class Generator {
 public:
  Generator(const GeneratorConfig& cfg, std::uint64_t seed);

  /// z_batch: [N, n_qubits] -> images [N, output_channels, S, S].
  Tensor forward(const Tensor& z_batch, Mode mode);

  /// The learning block alone: [N,n] -> [N,n].
  Tensor block_forward(const Tensor& z_batch) const;

  std::vector<NamedTensor> parameters() const;
  std::vector<NamedTensor> block_parameters() const;
  std::vector<StateEntry> state_entries();

  const GeneratorConfig& config() const { return cfg_; }
  std::size_t latent_dim() const { return cfg_.n_qubits; }
  std::vector<ResidualUpBlock>& up_blocks() { return blocks_; }

 private:
  GeneratorConfig cfg_;
  std::size_t n_upblocks_ = 0;

  LinearLayer cls_fc1_;  // n -> 1, no bias
  LinearLayer cls_fc2_;  // 1 -> n, bias
  Tensor theta_;         // [n,3] circuit angles

  LinearLayer fc_;       // n -> base*4*4
  BatchNormLayer bn_;
  std::vector<ResidualUpBlock> blocks_;
  Conv2dLayer final_conv_;
};

/// Total number of trainable scalars.
std::size_t count_trainable(const std::vector<NamedTensor>& params);

/// Latent sampler: components uniform on [-pi/2, pi/2] by default so RY
/// encoding angles sweep a meaningful arc (standard-normal alternative).
enum class LatentDist { kUniformArc, kNormal };
Tensor sample_latent(std::size_t batch, std::size_t dim, Rng& rng,
                     LatentDist dist = LatentDist::kUniformArc);

}  // namespace hqgan
