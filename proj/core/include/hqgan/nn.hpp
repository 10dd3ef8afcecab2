#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hqgan/rng.hpp"
#include "hqgan/tensor.hpp"

namespace hqgan {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Uniform view over a network's persistable state: parameter tensors and
/// non-trainable buffers (running statistics, power-iteration vectors).
struct StateEntry {
  std::string name;
  Shape shape;
  double* data;
  std::size_t size;
};

/// DCGAN-family defaults: weights ~ N(0, 0.02), biases 0.
void init_normal(Tensor& t, Rng& rng, double stddev = 0.02);

struct LinearLayer {
  Tensor weight;  // [out, in]
  Tensor bias;    // undefined when the layer has no bias

  LinearLayer() = default;
  LinearLayer(std::size_t in, std::size_t out, bool with_bias, Rng& rng);

  Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct Conv2dLayer {
  Tensor weight;  // [F, C, k, k]
  Tensor bias;
  int stride = 1;
  int padding = 0;

  Conv2dLayer() = default;
  Conv2dLayer(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
              int stride, int padding, bool with_bias, Rng& rng);

  Tensor forward(const Tensor& x) const {
    return conv2d(x, weight, bias, stride, padding);
  }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct BatchNormLayer {
  Tensor gamma;
  Tensor beta;
  BatchNormState state;
  double eps = 1e-5;
  double momentum = 0.1;

  BatchNormLayer() = default;
  explicit BatchNormLayer(std::size_t channels);

  Tensor forward(const Tensor& x, Mode mode) {
    return batchnorm(x, gamma, beta, state, mode, eps, momentum);
  }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
  /// Running statistics as named buffers (for persistence, not optimization).
  void collect_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, std::vector<double>*>>& out);
};

// ---------------------------------------------------------------------------
// Spectral normalization
// ---------------------------------------------------------------------------

struct SpectralNormState {
  std::vector<double> u;  // unit left vector, length = rows of flattened W
  int power_iterations = 1;
  bool zero_weight_warning = false;
};

/// Seeds u with a fixed-seed random unit vector.
void spectral_norm_init(SpectralNormState& state, std::size_t rows,
                        std::uint64_t seed);

/// W / sigma_hat with sigma_hat = ||W^T u|| after `iterations` power-iteration
/// updates of state.u (0 keeps u frozen; gradients treat u as constant).
/// W is flattened to 2-D with rows = W.shape()[0]. An all-zero W is returned
/// unchanged with state.zero_weight_warning set.
Tensor spectral_normalize(const Tensor& w, SpectralNormState& state,
                          int iterations);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Standard Adam with bias correction over a fixed parameter list.
/// Parameters without an accumulated gradient are treated as zero-gradient.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg);

  void step();
  void zero_grad();

  long step_count() const { return step_count_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  std::vector<Tensor> params_;
  std::vector<Moments> moments_;
  AdamConfig cfg_;
  long step_count_ = 0;
};

}  // namespace hqgan
