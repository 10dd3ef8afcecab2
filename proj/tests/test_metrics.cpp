#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "hqgan/errors.hpp"
#include "hqgan/metrics.hpp"
#include "test_util.hpp"

#ifdef HQGAN_HAVE_EIGEN
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#endif

using namespace hqgan;
using namespace hqgan::testutil;

namespace {

FeatureSet make_set(std::vector<double> values, std::size_t d,
                    std::string source = "real", std::string id = "test") {
  FeatureSet f;
  f.d = d;
  f.n = values.size() / d;
  f.values = std::move(values);
  f.source = std::move(source);
  f.extractor_id = std::move(id);
  return f;
}

FeatureSet gaussian_set(std::size_t n, std::size_t d, double mean, double stddev,
                        Rng& rng) {
  std::vector<double> v(n * d);
  for (double& x : v) x = rng.normal(mean, stddev);
  return make_set(std::move(v), d);
}

}  // namespace

TEST_CASE("matrix_sqrt_psd: diagonal and identity") {
  const auto s = matrix_sqrt_psd({4, 0, 0, 9}, 2);
  CHECK(s[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(s[3] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(std::abs(s[1]) < 1e-12);

  const auto eye = matrix_sqrt_psd({1, 0, 0, 1}, 2);
  CHECK(max_abs_diff(eye, std::vector<double>{1, 0, 0, 1}) < 1e-12);
}

TEST_CASE("matrix_sqrt_psd: reconstruction on random PSD matrices up to d=128") {
  Rng rng(5);
  for (const std::size_t d : {3ul, 16ul, 128ul}) {
    // PSD by construction: A = B^T B.
    std::vector<double> b(d * d);
    for (double& v : b) v = rng.normal();
    std::vector<double> a(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < d; ++k) a[i * d + j] += b[k * d + i] * b[k * d + j];
      }
    }
    const auto s = matrix_sqrt_psd(a, d);
    std::vector<double> ss(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < d; ++k) ss[i * d + j] += s[i * d + k] * s[k * d + j];
      }
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < d * d; ++i) {
      num += (ss[i] - a[i]) * (ss[i] - a[i]);
      den += a[i] * a[i];
    }
    CHECK(std::sqrt(num / den) < 1e-8);
  }
}

TEST_CASE("matrix_sqrt_psd: rejects asymmetric input") {
  CHECK_THROWS_AS(matrix_sqrt_psd({1, 2, 0, 1}, 2), ConfigError);
}

TEST_CASE("fid: self-distance is zero") {
  Rng rng(7);
  const FeatureSet x = gaussian_set(64, 5, 0.0, 1.0, rng);
  CHECK(fid(x, x) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("fid: 1-D shifted Gaussians approach (delta mu)^2") {
  Rng rng(11);
  const FeatureSet a = gaussian_set(10000, 1, 0.0, 1.0, rng);
  const FeatureSet b = gaussian_set(10000, 1, 1.0, 1.0, rng);
  const double v = fid(a, b);
  CHECK(v == doctest::Approx(1.0).epsilon(0.05));
}

#ifdef HQGAN_HAVE_EIGEN
TEST_CASE("fid: random 5-D sets match the direct product-eigendecomposition") {
  Rng rng(13);
  const std::size_t d = 5;
  const FeatureSet a = gaussian_set(200, d, 0.3, 1.4, rng);
  const FeatureSet b = gaussian_set(150, d, -0.2, 0.8, rng);

  // Independent route: FID via the eigenvalues of Sigma_r * Sigma_g itself.
  auto stats = [&](const FeatureSet& f) {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i < f.n; ++i) {
      for (std::size_t j = 0; j < d; ++j) mu(j) += f.values[i * d + j];
    }
    mu /= double(f.n);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < f.n; ++i) {
      Eigen::VectorXd row(d);
      for (std::size_t j = 0; j < d; ++j) row(j) = f.values[i * d + j];
      cov += (row - mu) * (row - mu).transpose();
    }
    cov /= double(f.n - 1);
    return std::pair{mu, cov};
  };
  const auto [mu_r, cov_r] = stats(a);
  const auto [mu_g, cov_g] = stats(b);
  const Eigen::MatrixXd product = cov_r * cov_g;
  const Eigen::EigenSolver<Eigen::MatrixXd> solver(product);
  double trace_sqrt = 0.0;
  for (int i = 0; i < solver.eigenvalues().size(); ++i) {
    trace_sqrt += std::sqrt(std::max(0.0, solver.eigenvalues()(i).real()));
  }
  const double expected = (mu_r - mu_g).squaredNorm() + cov_r.trace() +
                          cov_g.trace() - 2.0 * trace_sqrt;

  CHECK(std::abs(fid(a, b) - expected) < 1e-6);
}
#endif

TEST_CASE("fid: symmetric, nonnegative, and guarded") {
  Rng rng(17);
  const FeatureSet a = gaussian_set(40, 4, 0.0, 1.0, rng);
  const FeatureSet b = gaussian_set(30, 4, 0.5, 1.3, rng);
  const double ab = fid(a, b), ba = fid(b, a);
  CHECK(std::abs(ab - ba) < 1e-6);
  CHECK(ab >= 0.0);

  FeatureSet tiny = gaussian_set(1, 4, 0.0, 1.0, rng);
  CHECK_THROWS_AS(fid(tiny, b), ConfigError);
  FeatureSet other_extractor = a;
  other_extractor.extractor_id = "different";
  CHECK_THROWS_AS(fid(other_extractor, b), ConfigError);
}

TEST_CASE("kid: hand-computed 1-D kernel sums give exactly -8") {
  const FeatureSet x = make_set({1.0, -1.0}, 1);
  const FeatureSet y = make_set({1.0, -1.0}, 1);
  CHECK(kid(x, y) == -8.0);
}

TEST_CASE("kid: symmetric and separating") {
  Rng rng(19);
  const FeatureSet a = gaussian_set(50, 3, 0.0, 1.0, rng);
  const FeatureSet b = gaussian_set(60, 3, 5.0, 1.0, rng);
  CHECK(kid(a, b) == kid(b, a));
  CHECK(kid(a, b) > 10.0);
}

TEST_CASE("kid: unbiased near zero for same-distribution samples") {
  Rng rng(23);
  std::vector<double> estimates;
  for (int rep = 0; rep < 20; ++rep) {
    const FeatureSet a = gaussian_set(100, 4, 0.0, 1.0, rng);
    const FeatureSet b = gaussian_set(100, 4, 0.0, 1.0, rng);
    estimates.push_back(kid(a, b));
  }
  double mean = 0.0;
  for (const double v : estimates) mean += v;
  mean /= estimates.size();
  double var = 0.0;
  for (const double v : estimates) var += (v - mean) * (v - mean);
  var /= (estimates.size() - 1);
  const double stderr_mean = std::sqrt(var / estimates.size());
  CHECK(std::abs(mean) <= 3.0 * stderr_mean);
}

TEST_CASE("inception_score: marginal-equal rows give exactly 1") {
  ClassProbabilities probs;
  probs.n = 10;
  probs.c = 4;
  probs.values.assign(probs.n * probs.c, 0.25);
  const auto [mean, stddev] = inception_score(probs, 1);
  CHECK(mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(stddev == 0.0);
}

TEST_CASE("inception_score: uniform one-hot coverage gives exactly C") {
  const std::size_t c = 5, n = 20;
  ClassProbabilities probs;
  probs.n = n;
  probs.c = c;
  probs.values.assign(n * c, 0.0);
  for (std::size_t i = 0; i < n; ++i) probs.values[i * c + i % c] = 1.0;
  const auto [mean, stddev] = inception_score(probs, 1);
  CHECK(mean == doctest::Approx(double(c)).epsilon(1e-12));
}

TEST_CASE("inception_score: random rows match a direct KL summation oracle") {
  Rng rng(29);
  const std::size_t n = 32, c = 6;
  ClassProbabilities probs;
  probs.n = n;
  probs.c = c;
  probs.values.resize(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs.values[i * c + j] = rng.uniform(0.01, 1.0);
      row_sum += probs.values[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs.values[i * c + j] /= row_sum;
  }
  const auto [mean, stddev] = inception_score(probs, 1);

  std::vector<double> marginal(c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) marginal[j] += probs.values[i * c + j] / n;
  }
  double mean_kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double p = probs.values[i * c + j];
      mean_kl += p * std::log(p / marginal[j]) / n;
    }
  }
  CHECK(std::abs(mean - std::exp(mean_kl)) < 1e-10);
  CHECK(mean >= 1.0);
  CHECK(mean <= double(c));
}

TEST_CASE("inception_score: zero rows and bad rows are rejected") {
  ClassProbabilities probs;
  probs.n = 2;
  probs.c = 2;
  probs.values = {0.5, 0.5, 0.0, 0.0};
  CHECK_THROWS_AS(inception_score(probs, 1), ConfigError);
  probs.values = {0.5, 0.5, 0.9, 0.3};
  CHECK_THROWS_AS(inception_score(probs, 1), ConfigError);
}

TEST_CASE("metrics: invariant under identical row permutation") {
  Rng rng(31);
  FeatureSet a = gaussian_set(24, 3, 0.1, 1.0, rng);
  FeatureSet b = gaussian_set(24, 3, 0.4, 1.2, rng);
  const double f0 = fid(a, b), k0 = kid(a, b);

  // One fixed permutation applied to both sets.
  std::vector<std::size_t> perm(24);
  for (std::size_t i = 0; i < 24; ++i) perm[i] = (i * 7 + 3) % 24;
  auto permute = [&perm](FeatureSet& f) {
    std::vector<double> next(f.values.size());
    for (std::size_t i = 0; i < f.n; ++i) {
      for (std::size_t j = 0; j < f.d; ++j) {
        next[i * f.d + j] = f.values[perm[i] * f.d + j];
      }
    }
    f.values = std::move(next);
  };
  permute(a);
  permute(b);
  CHECK(std::abs(fid(a, b) - f0) < 1e-9);
  CHECK(std::abs(kid(a, b) - k0) < 1e-9);
}

namespace {

// Minimal deterministic extractor: channel means as features, fixed split
// of brightness as a two-class posterior.
class MeanExtractor : public FeatureExtractor {
 public:
  std::string id() const override { return "mean-extractor"; }
  std::size_t feature_dim() const override { return 3; }
  std::size_t n_classes() const override { return 2; }
  void extract(const Tensor& images, std::vector<double>& features,
               std::vector<double>* probabilities) override {
    const std::size_t n = images.shape()[0];
    const std::size_t plane = images.shape()[2] * images.shape()[3];
    for (std::size_t i = 0; i < n; ++i) {
      double bright = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::size_t p = 0; p < plane; ++p) {
          acc += images.data()[(i * 3 + c) * plane + p];
        }
        features.push_back(acc / plane);
        bright += acc / plane;
      }
      if (probabilities) {
        const double p = 1.0 / (1.0 + std::exp(-bright));
        probabilities->push_back(p);
        probabilities->push_back(1.0 - p);
      }
    }
  }
};

}  // namespace

TEST_CASE("extract_features: deterministic, row-per-image, permutation-aware") {
  Rng rng(37);
  MeanExtractor extractor;
  const Tensor images = random_tensor({6, 3, 4, 4}, rng, 0.5);

  const FeatureSet once = extract_features(images, extractor, "real");
  const FeatureSet twice = extract_features(images, extractor, "real");
  CHECK(once.n == 6);
  CHECK(once.d == 3);
  CHECK(once.extractor_id == "mean-extractor");
  CHECK(max_abs_diff(once.values, twice.values) == 0.0);

  // Swapping two images swaps their rows.
  std::vector<double> swapped(images.data().begin(), images.data().end());
  const std::size_t sample = 3 * 16;
  for (std::size_t k = 0; k < sample; ++k) {
    std::swap(swapped[0 * sample + k], swapped[3 * sample + k]);
  }
  const FeatureSet perm =
      extract_features(Tensor::from_data(images.shape(), swapped), extractor, "real");
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(perm.values[0 * 3 + j] == once.values[3 * 3 + j]);
    CHECK(perm.values[3 * 3 + j] == once.values[0 * 3 + j]);
  }

  const auto [feats, probs] = extract_features_and_probs(images, extractor, "generated");
  CHECK(probs.n == 6);
  CHECK(probs.c == 2);
  for (std::size_t i = 0; i < probs.n; ++i) {
    CHECK(probs.values[i * 2] + probs.values[i * 2 + 1] ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
}
