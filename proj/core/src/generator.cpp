#include "hqgan/generator.hpp"

#include <cmath>

#include "hqgan/errors.hpp"
#include "hqgan/rng.hpp"

namespace hqgan {

namespace {

std::size_t doublings_for(std::size_t output_size) {
  if (output_size < 8) {
    throw ConfigError("generator: output_size must be at least 8, got " +
                      std::to_string(output_size));
  }
  std::size_t s = 4, k = 0;
  while (s < output_size) {
    s *= 2;
    ++k;
  }
  if (s != output_size) {
    throw ConfigError("generator: output_size must be 4 * 2^k, got " +
                      std::to_string(output_size));
  }
  return k;
}

}  // namespace

Generator::Generator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  const std::size_t doublings = doublings_for(cfg.output_size);
  n_upblocks_ = doublings - 1;
  if (cfg.base_channels >> n_upblocks_ == 0) {
    throw ConfigError("generator: base_channels " + std::to_string(cfg.base_channels) +
                      " too small for " + std::to_string(n_upblocks_) +
                      " upsampling blocks");
  }

  Rng rng(derive_seed(seed, "generator"));
  const std::size_t n = cfg.n_qubits;

  cls_fc1_ = LinearLayer(n, 1, /*with_bias=*/false, rng);
  cls_fc2_ = LinearLayer(1, n, /*with_bias=*/true, rng);
  theta_ = init_circuit_params(n, derive_seed(seed, "generator.theta"));

  fc_ = LinearLayer(n, cfg.base_channels * 16, /*with_bias=*/true, rng);
  bn_ = BatchNormLayer(cfg.base_channels * 16);

  std::size_t ch = cfg.base_channels;
  for (std::size_t b = 0; b < n_upblocks_; ++b) {
    blocks_.emplace_back(ch, ch / 2, rng);
    ch /= 2;
  }
  final_conv_ = Conv2dLayer(ch, cfg.output_channels, 3, 1, 1, /*with_bias=*/true, rng);
}

ResidualUpBlock::ResidualUpBlock(std::size_t in_channels, std::size_t out_channels,
                                 Rng& rng)
    : conv1(in_channels, out_channels, 3, 1, 1, /*with_bias=*/false, rng),
      conv2(out_channels, out_channels, 3, 1, 1, /*with_bias=*/false, rng),
      bn1(out_channels),
      bn2(out_channels),
      shortcut(in_channels, out_channels, 1, 1, 0, /*with_bias=*/true, rng) {}

Tensor ResidualUpBlock::forward(const Tensor& x, Mode mode) {
  const Tensor up = upsample_nearest2x(x);
  Tensor main = relu(bn1.forward(conv1.forward(up), mode));
  main = relu(bn2.forward(conv2.forward(main), mode));
  return add(main, shortcut.forward(up));
}

Tensor Generator::block_forward(const Tensor& z_batch) const {
  if (z_batch.shape().size() != 2 || z_batch.shape()[1] != cfg_.n_qubits) {
    throw ShapeError("generator: latent batch " + shape_str(z_batch.shape()) +
                     " does not match latent dimension " +
                     std::to_string(cfg_.n_qubits));
  }
  if (cfg_.block_kind == BlockKind::kClassical) {
    return cls_fc2_.forward(relu(cls_fc1_.forward(z_batch)));
  }
  return quantum_block(z_batch, theta_);
}

Tensor Generator::forward(const Tensor& z_batch, Mode mode) {
  Tensor x = block_forward(z_batch);
  x = bn_.forward(fc_.forward(x), mode);
  x = reshape(x, {z_batch.shape()[0], cfg_.base_channels, 4, 4});
  for (ResidualUpBlock& blk : blocks_) x = blk.forward(x, mode);
  x = upsample_nearest2x(x);
  x = final_conv_.forward(x);
  return hqgan::tanh(x);
}

std::vector<NamedTensor> Generator::block_parameters() const {
  std::vector<NamedTensor> out;
  if (cfg_.block_kind == BlockKind::kClassical) {
    cls_fc1_.collect("block.fc1", out);
    cls_fc2_.collect("block.fc2", out);
  } else {
    out.push_back({"block.theta", theta_});
  }
  return out;
}

std::vector<NamedTensor> Generator::parameters() const {
  std::vector<NamedTensor> out = block_parameters();
  fc_.collect("fc", out);
  bn_.collect("bn", out);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::string p = "up" + std::to_string(b);
    blocks_[b].conv1.collect(p + ".conv1", out);
    blocks_[b].bn1.collect(p + ".bn1", out);
    blocks_[b].conv2.collect(p + ".conv2", out);
    blocks_[b].bn2.collect(p + ".bn2", out);
    blocks_[b].shortcut.collect(p + ".shortcut", out);
  }
  final_conv_.collect("final_conv", out);
  return out;
}

std::vector<StateEntry> Generator::state_entries() {
  std::vector<StateEntry> out;
  for (NamedTensor& nt : parameters()) {
    out.push_back({nt.name, nt.tensor.shape(), nt.tensor.mutable_data().data(),
                   nt.tensor.size()});
  }
  auto add_buffers = [&out](const std::string& prefix, BatchNormLayer& bn) {
    std::vector<std::pair<std::string, std::vector<double>*>> bufs;
    bn.collect_buffers(prefix, bufs);
    for (auto& [name, vec] : bufs) {
      out.push_back({name, {vec->size()}, vec->data(), vec->size()});
    }
  };
  add_buffers("bn", bn_);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::string p = "up" + std::to_string(b);
    add_buffers(p + ".bn1", blocks_[b].bn1);
    add_buffers(p + ".bn2", blocks_[b].bn2);
  }
  return out;
}

std::size_t count_trainable(const std::vector<NamedTensor>& params) {
  std::size_t total = 0;
  for (const NamedTensor& nt : params) total += nt.tensor.size();
  return total;
}

Tensor sample_latent(std::size_t batch, std::size_t dim, Rng& rng, LatentDist dist) {
  Tensor z = Tensor::zeros({batch, dim});
  for (double& v : z.mutable_data()) {
    v = dist == LatentDist::kUniformArc
            ? rng.uniform(-1.57079632679489661923, 1.57079632679489661923)
            : rng.normal();
  }
  return z;
}

}  // namespace hqgan
