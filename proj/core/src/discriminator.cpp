#include "hqgan/discriminator.hpp"

#include "hqgan/errors.hpp"
#include "hqgan/rng.hpp"

namespace hqgan {

Backbone::Backbone(const BackboneConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.stage_channels.size() != 5) {
    throw ConfigError("backbone: stage_channels wants 5 entries (conv1 + 4 stages), got " +
                      std::to_string(cfg.stage_channels.size()));
  }
  if (cfg.blocks_per_stage == 0) {
    throw ConfigError("backbone: blocks_per_stage must be >= 1");
  }

  Rng rng(derive_seed(seed, "backbone"));
  conv1_ = Conv2dLayer(cfg.in_channels, cfg.stage_channels[0], 3, 1, 1,
                       /*with_bias=*/false, rng);
  spectral_norm_init(sn_, cfg.stage_channels[0], derive_seed(seed, "backbone.sn_u"));
  bn1_ = BatchNormLayer(cfg.stage_channels[0]);

  std::size_t in_ch = cfg.stage_channels[0];
  for (std::size_t s = 1; s < cfg.stage_channels.size(); ++s) {
    const std::size_t out_ch = cfg.stage_channels[s];
    std::vector<BasicBlock> blocks;
    for (std::size_t b = 0; b < cfg.blocks_per_stage; ++b) {
      const int stride = (b == 0 && s > 1) ? 2 : 1;
      BasicBlock blk;
      blk.conv1 = Conv2dLayer(in_ch, out_ch, 3, stride, 1, /*with_bias=*/false, rng);
      blk.bn1 = BatchNormLayer(out_ch);
      blk.conv2 = Conv2dLayer(out_ch, out_ch, 3, 1, 1, /*with_bias=*/false, rng);
      blk.bn2 = BatchNormLayer(out_ch);
      if (stride != 1 || in_ch != out_ch) {
        blk.projected = true;
        blk.sc_conv = Conv2dLayer(in_ch, out_ch, 1, stride, 0, /*with_bias=*/false, rng);
        blk.sc_bn = BatchNormLayer(out_ch);
      }
      blocks.push_back(std::move(blk));
      in_ch = out_ch;
    }
    stages_.push_back(std::move(blocks));
  }
}

Tensor Backbone::BasicBlock::forward(const Tensor& x, Mode mode) {
  Tensor main = relu(bn1.forward(conv1.forward(x), mode));
  main = bn2.forward(conv2.forward(main), mode);
  const Tensor shortcut = projected ? sc_bn.forward(sc_conv.forward(x), mode) : x;
  return relu(add(main, shortcut));
}

Tensor Backbone::forward(const Tensor& images, Mode mode) {
  if (images.shape().size() != 4 || images.shape()[1] != cfg_.in_channels) {
    throw ShapeError("backbone: expected [N," + std::to_string(cfg_.in_channels) +
                     ",S,S] images, got " + shape_str(images.shape()));
  }
  const Tensor w_bar =
      spectral_normalize(conv1_.weight, sn_, mode == Mode::kTrain ? 1 : 0);
  Tensor x = conv2d(images, w_bar, {}, conv1_.stride, conv1_.padding);
  x = relu(bn1_.forward(x, mode));
  for (auto& stage : stages_) {
    for (auto& blk : stage) x = blk.forward(x, mode);
  }
  return global_avg_pool(x);
}

std::vector<NamedTensor> Backbone::parameters() const {
  std::vector<NamedTensor> out;
  conv1_.collect("conv1", out);
  bn1_.collect("bn1", out);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (std::size_t b = 0; b < stages_[s].size(); ++b) {
      const std::string p =
          "layer" + std::to_string(s + 1) + "." + std::to_string(b);
      const BasicBlock& blk = stages_[s][b];
      blk.conv1.collect(p + ".conv1", out);
      blk.bn1.collect(p + ".bn1", out);
      blk.conv2.collect(p + ".conv2", out);
      blk.bn2.collect(p + ".bn2", out);
      if (blk.projected) {
        blk.sc_conv.collect(p + ".shortcut.conv", out);
        blk.sc_bn.collect(p + ".shortcut.bn", out);
      }
    }
  }
  return out;
}

std::vector<StateEntry> Backbone::state_entries() {
  std::vector<StateEntry> out;
  for (NamedTensor& nt : parameters()) {
    out.push_back({nt.name, nt.tensor.shape(), nt.tensor.mutable_data().data(),
                   nt.tensor.size()});
  }
  auto add_bn = [&out](const std::string& prefix, BatchNormLayer& bn) {
    std::vector<std::pair<std::string, std::vector<double>*>> bufs;
    bn.collect_buffers(prefix, bufs);
    for (auto& [name, vec] : bufs) {
      out.push_back({name, {vec->size()}, vec->data(), vec->size()});
    }
  };
  add_bn("bn1", bn1_);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (std::size_t b = 0; b < stages_[s].size(); ++b) {
      const std::string p =
          "layer" + std::to_string(s + 1) + "." + std::to_string(b);
      BasicBlock& blk = stages_[s][b];
      add_bn(p + ".bn1", blk.bn1);
      add_bn(p + ".bn2", blk.bn2);
      if (blk.projected) add_bn(p + ".shortcut.bn", blk.sc_bn);
    }
  }
  out.push_back({"conv1.sn_u", {sn_.u.size()}, sn_.u.data(), sn_.u.size()});
  return out;
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

Discriminator::Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), backbone_(cfg.backbone, seed) {
  if (cfg.head_kind == HeadKind::kHybrid && cfg.n_qubits == 0) {
    throw ConfigError("discriminator: hybrid head needs n_qubits >= 1");
  }
  Rng rng(derive_seed(seed, "discriminator.head"));
  const std::size_t feat = backbone_.feature_dim();
  cls_head_ = LinearLayer(feat, 1, /*with_bias=*/true, rng);
  proj_ = LinearLayer(feat, cfg.n_qubits, /*with_bias=*/true, rng);
  theta_ = init_circuit_params(cfg.n_qubits, derive_seed(seed, "discriminator.theta"));
  out_ = LinearLayer(cfg.n_qubits, 1, /*with_bias=*/true, rng);
}

Tensor Discriminator::head_forward(const Tensor& features) {
  if (cfg_.head_kind == HeadKind::kClassical) {
    return cls_head_.forward(features);
  }
  const Tensor angles = proj_.forward(features);
  const Tensor expectations = quantum_block(angles, theta_);
  return out_.forward(expectations);
}

Tensor Discriminator::forward(const Tensor& images, Mode mode) {
  return head_forward(backbone_.forward(images, mode));
}

std::vector<NamedTensor> Discriminator::parameters() const {
  std::vector<NamedTensor> out = backbone_.parameters();
  if (cfg_.head_kind == HeadKind::kClassical) {
    cls_head_.collect("head.fc", out);
  } else {
    proj_.collect("head.proj", out);
    out.push_back({"head.theta", theta_});
    out_.collect("head.out", out);
  }
  return out;
}

std::vector<StateEntry> Discriminator::state_entries() {
  std::vector<StateEntry> out = backbone_.state_entries();
  auto add_tensor = [&out](const std::string& name, Tensor& t) {
    out.push_back({name, t.shape(), t.mutable_data().data(), t.size()});
  };
  if (cfg_.head_kind == HeadKind::kClassical) {
    add_tensor("head.fc.weight", cls_head_.weight);
    add_tensor("head.fc.bias", cls_head_.bias);
  } else {
    add_tensor("head.proj.weight", proj_.weight);
    add_tensor("head.proj.bias", proj_.bias);
    add_tensor("head.theta", theta_);
    add_tensor("head.out.weight", out_.weight);
    add_tensor("head.out.bias", out_.bias);
  }
  return out;
}

}  // namespace hqgan
