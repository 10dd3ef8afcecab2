#include "hqgan/nn.hpp"

#include <cmath>

#include "hqgan/errors.hpp"

namespace hqgan {

void init_normal(Tensor& t, Rng& rng, double stddev) {
  for (double& v : t.mutable_data()) v = rng.normal(0.0, stddev);
}

LinearLayer::LinearLayer(std::size_t in, std::size_t out, bool with_bias, Rng& rng) {
  weight = Tensor::zeros({out, in}, true);
  init_normal(weight, rng);
  if (with_bias) bias = Tensor::zeros({out}, true);
}

void LinearLayer::collect(const std::string& prefix,
                          std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

Conv2dLayer::Conv2dLayer(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                         int stride_, int padding_, bool with_bias, Rng& rng)
    : stride(stride_), padding(padding_) {
  weight = Tensor::zeros({out_ch, in_ch, kernel, kernel}, true);
  init_normal(weight, rng);
  if (with_bias) bias = Tensor::zeros({out_ch}, true);
}

void Conv2dLayer::collect(const std::string& prefix,
                          std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

BatchNormLayer::BatchNormLayer(std::size_t channels) {
  gamma = Tensor::full({channels}, 1.0, true);
  beta = Tensor::zeros({channels}, true);
  state.running_mean.assign(channels, 0.0);
  state.running_var.assign(channels, 1.0);
}

void BatchNormLayer::collect(const std::string& prefix,
                             std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

void BatchNormLayer::collect_buffers(
    const std::string& prefix,
    std::vector<std::pair<std::string, std::vector<double>*>>& out) {
  out.emplace_back(prefix + ".running_mean", &state.running_mean);
  out.emplace_back(prefix + ".running_var", &state.running_var);
}

// ---------------------------------------------------------------------------
// Spectral normalization
// ---------------------------------------------------------------------------

void spectral_norm_init(SpectralNormState& state, std::size_t rows,
                        std::uint64_t seed) {
  Rng rng(seed);
  state.u.resize(rows);
  double norm2 = 0.0;
  for (double& v : state.u) {
    v = rng.normal();
    norm2 += v * v;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& v : state.u) v *= inv;
}

Tensor spectral_normalize(const Tensor& w, SpectralNormState& state,
                          int iterations) {
  if (w.shape().empty()) throw ShapeError("spectral_normalize: scalar weight");
  const std::size_t rows = w.shape()[0];
  const std::size_t cols = w.size() / rows;
  if (state.u.size() != rows) {
    throw ShapeError("spectral_normalize: state.u has length " +
                     std::to_string(state.u.size()) + ", weight rows " +
                     std::to_string(rows));
  }

  const double* wv = w.data().data();

  // Power iteration on raw values; the graph below treats u as a constant.
  std::vector<double> v(cols);
  for (int it = 0; it < iterations; ++it) {
    double vnorm2 = 0.0;
    for (std::size_t j = 0; j < cols; ++j) v[j] = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      const double ui = state.u[i];
      const double* row = wv + i * cols;
      for (std::size_t j = 0; j < cols; ++j) v[j] += ui * row[j];
    }
    for (std::size_t j = 0; j < cols; ++j) vnorm2 += v[j] * v[j];
    if (vnorm2 == 0.0) break;
    double inv = 1.0 / std::sqrt(vnorm2);
    for (std::size_t j = 0; j < cols; ++j) v[j] *= inv;

    double unorm2 = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      const double* row = wv + i * cols;
      double acc = 0.0;
      for (std::size_t j = 0; j < cols; ++j) acc += row[j] * v[j];
      state.u[i] = acc;
      unorm2 += acc * acc;
    }
    if (unorm2 == 0.0) break;
    inv = 1.0 / std::sqrt(unorm2);
    for (std::size_t i = 0; i < rows; ++i) state.u[i] *= inv;
  }

  // sigma_hat = ||W^T u||. Zero weight would divide by zero; hand it back
  // untouched and flag it.
  double sigma2 = 0.0;
  {
    std::vector<double> wu(cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      const double ui = state.u[i];
      const double* row = wv + i * cols;
      for (std::size_t j = 0; j < cols; ++j) wu[j] += ui * row[j];
    }
    for (std::size_t j = 0; j < cols; ++j) sigma2 += wu[j] * wu[j];
  }
  if (sigma2 < 1e-60) {
    state.zero_weight_warning = true;
    return w;
  }

  const Tensor u_const = Tensor::from_data({1, rows}, state.u);
  const Tensor w2d = reshape(w, {rows, cols});
  const Tensor wu = vecmat(u_const, w2d);
  const Tensor sigma = sqrt_scalar(sum(mul(wu, wu)));
  return reshape(div_by_scalar(w2d, sigma), w.shape());
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (cfg_.beta1 <= 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 <= 0.0 ||
      cfg_.beta2 >= 1.0) {
    throw ConfigError("adam: beta parameters must lie in (0,1)");
  }
  if (cfg_.learning_rate <= 0.0 || cfg_.epsilon <= 0.0) {
    throw ConfigError("adam: learning rate and epsilon must be positive");
  }
  moments_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    moments_[i].m.assign(params_[i].size(), 0.0);
    moments_[i].v.assign(params_[i].size(), 0.0);
  }
}

void Adam::step() {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    auto& mom = moments_[i];
    if (p.has_grad() && p.grad().size() != p.size()) {
      throw ShapeError("adam: gradient size mismatch for parameter " +
                       std::to_string(i));
    }
    auto data = p.mutable_data();
    const double* g = p.has_grad() ? p.grad().data() : nullptr;
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double gj = g ? g[j] : 0.0;
      mom.m[j] = cfg_.beta1 * mom.m[j] + (1.0 - cfg_.beta1) * gj;
      mom.v[j] = cfg_.beta2 * mom.v[j] + (1.0 - cfg_.beta2) * gj * gj;
      const double mhat = mom.m[j] / bc1;
      const double vhat = mom.v[j] / bc2;
      data[j] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace hqgan
