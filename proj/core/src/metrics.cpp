#include "hqgan/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "hqgan/errors.hpp"

namespace hqgan {

FeatureSet extract_features(const Tensor& images, FeatureExtractor& extractor,
                            std::string source) {
  FeatureSet set;
  set.d = extractor.feature_dim();
  set.source = std::move(source);
  set.extractor_id = extractor.id();
  extractor.extract(images, set.values, nullptr);
  set.n = set.values.size() / set.d;
  return set;
}

std::pair<FeatureSet, ClassProbabilities> extract_features_and_probs(
    const Tensor& images, FeatureExtractor& extractor, std::string source) {
  FeatureSet set;
  set.d = extractor.feature_dim();
  set.source = std::move(source);
  set.extractor_id = extractor.id();
  ClassProbabilities probs;
  probs.c = extractor.n_classes();
  extractor.extract(images, set.values, &probs.values);
  set.n = set.values.size() / set.d;
  probs.n = probs.values.size() / probs.c;
  return {std::move(set), std::move(probs)};
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition (cyclic Jacobi)
// ---------------------------------------------------------------------------

void symmetric_eigendecompose(std::vector<double> a, std::size_t d,
                              std::vector<double>& eigenvalues,
                              std::vector<double>& eigenvectors) {
  if (a.size() != d * d) {
    throw ShapeError("symmetric_eigendecompose: matrix size " +
                     std::to_string(a.size()) + " is not " + std::to_string(d) +
                     "^2");
  }
  eigenvectors.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) eigenvectors[i * d + i] = 1.0;

  double norm = 0.0;
  for (const double v : a) norm += v * v;
  norm = std::sqrt(norm);
  const double tol = norm > 0.0 ? 1e-14 * norm : 0.0;

  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
    }
    if (std::sqrt(2.0 * off) <= tol) break;

    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a[p * d + q];
        if (std::abs(apq) <= tol / (static_cast<double>(d) + 1.0)) continue;
        const double phi = 0.5 * std::atan2(2.0 * apq, a[q * d + q] - a[p * d + p]);
        const double c = std::cos(phi), s = std::sin(phi);
        // A <- J^T A J with J_pp = J_qq = c, J_pq = s, J_qp = -s
        for (std::size_t k = 0; k < d; ++k) {
          const double akp = a[k * d + p], akq = a[k * d + q];
          a[k * d + p] = c * akp - s * akq;
          a[k * d + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double apk = a[p * d + k], aqk = a[q * d + k];
          a[p * d + k] = c * apk - s * aqk;
          a[q * d + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double vkp = eigenvectors[k * d + p], vkq = eigenvectors[k * d + q];
          eigenvectors[k * d + p] = c * vkp - s * vkq;
          eigenvectors[k * d + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  eigenvalues.resize(d);
  for (std::size_t i = 0; i < d; ++i) eigenvalues[i] = a[i * d + i];
}

std::vector<double> matrix_sqrt_psd(const std::vector<double>& a, std::size_t d) {
  if (a.size() != d * d) {
    throw ShapeError("matrix_sqrt_psd: matrix size " + std::to_string(a.size()) +
                     " is not " + std::to_string(d) + "^2");
  }
  double scale = 0.0;
  for (const double v : a) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      if (std::abs(a[i * d + j] - a[j * d + i]) > 1e-8 * std::max(1.0, scale)) {
        throw ConfigError("matrix_sqrt_psd: input is not symmetric at (" +
                          std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }

  std::vector<double> w, v;
  symmetric_eigendecompose(a, d, w, v);
  for (double& lambda : w) lambda = lambda > 0.0 ? std::sqrt(lambda) : 0.0;

  // S = V diag(sqrt(w)) V^T
  std::vector<double> s(d * d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    const double wk = w[k];
    if (wk == 0.0) continue;
    for (std::size_t i = 0; i < d; ++i) {
      const double vik = v[i * d + k] * wk;
      if (vik == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) s[i * d + j] += vik * v[j * d + k];
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// FID
// ---------------------------------------------------------------------------

namespace {

void check_pair(const char* op, const FeatureSet& a, const FeatureSet& b,
                std::size_t min_n) {
  if (a.d != b.d) {
    throw ConfigError(std::string(op) + ": feature dimensions differ (" +
                      std::to_string(a.d) + " vs " + std::to_string(b.d) + ")");
  }
  if (a.extractor_id != b.extractor_id) {
    throw ConfigError(std::string(op) + ": extractor ids differ ('" +
                      a.extractor_id + "' vs '" + b.extractor_id + "')");
  }
  if (a.n < min_n || b.n < min_n) {
    throw ConfigError(std::string(op) + ": needs at least " +
                      std::to_string(min_n) + " samples per set, got " +
                      std::to_string(a.n) + " and " + std::to_string(b.n));
  }
  for (const double v : a.values) {
    if (!std::isfinite(v)) throw ConfigError(std::string(op) + ": non-finite feature");
  }
  for (const double v : b.values) {
    if (!std::isfinite(v)) throw ConfigError(std::string(op) + ": non-finite feature");
  }
}

std::vector<double> mean_of(const FeatureSet& f) {
  std::vector<double> mu(f.d, 0.0);
  for (std::size_t i = 0; i < f.n; ++i) {
    for (std::size_t j = 0; j < f.d; ++j) mu[j] += f.values[i * f.d + j];
  }
  for (double& v : mu) v /= static_cast<double>(f.n);
  return mu;
}

// Unbiased sample covariance.
std::vector<double> covariance_of(const FeatureSet& f, const std::vector<double>& mu) {
  std::vector<double> cov(f.d * f.d, 0.0);
  for (std::size_t i = 0; i < f.n; ++i) {
    const double* row = f.values.data() + i * f.d;
    for (std::size_t a = 0; a < f.d; ++a) {
      const double da = row[a] - mu[a];
      for (std::size_t b = a; b < f.d; ++b) {
        cov[a * f.d + b] += da * (row[b] - mu[b]);
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(f.n - 1);
  for (std::size_t a = 0; a < f.d; ++a) {
    for (std::size_t b = a; b < f.d; ++b) {
      cov[a * f.d + b] *= inv;
      cov[b * f.d + a] = cov[a * f.d + b];
    }
  }
  return cov;
}

std::vector<double> matmul_sq(const std::vector<double>& a,
                              const std::vector<double>& b, std::size_t d) {
  std::vector<double> out(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      const double aik = a[i * d + k];
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] += aik * b[k * d + j];
    }
  }
  return out;
}

}  // namespace

double fid(const FeatureSet& real, const FeatureSet& gen) {
  check_pair("fid", real, gen, 2);
  const std::size_t d = real.d;

  const auto mu_r = mean_of(real);
  const auto mu_g = mean_of(gen);
  const auto cov_r = covariance_of(real, mu_r);
  const auto cov_g = covariance_of(gen, mu_g);

  double mean_term = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double delta = mu_r[j] - mu_g[j];
    mean_term += delta * delta;
  }

  double trace_r = 0.0, trace_g = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    trace_r += cov_r[j * d + j];
    trace_g += cov_g[j * d + j];
  }

  // (S_r S_g)^{1/2} via the symmetrized product S_r^{1/2} S_g S_r^{1/2};
  // same trace, but keeps the eigenproblem symmetric.
  const auto sqrt_r = matrix_sqrt_psd(cov_r, d);
  auto m = matmul_sq(matmul_sq(sqrt_r, cov_g, d), sqrt_r, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const double sym = 0.5 * (m[i * d + j] + m[j * d + i]);
      m[i * d + j] = sym;
      m[j * d + i] = sym;
    }
  }
  const auto sqrt_m = matrix_sqrt_psd(m, d);
  double trace_cross = 0.0;
  for (std::size_t j = 0; j < d; ++j) trace_cross += sqrt_m[j * d + j];

  const double value = mean_term + trace_r + trace_g - 2.0 * trace_cross;
  return value > 0.0 ? value : 0.0;
}

// ---------------------------------------------------------------------------
// KID
// ---------------------------------------------------------------------------

namespace {

double poly_kernel(const double* a, const double* b, std::size_t d) {
  double dot = 0.0;
  for (std::size_t j = 0; j < d; ++j) dot += a[j] * b[j];
  const double base = dot / static_cast<double>(d) + 1.0;
  return base * base * base;
}

}  // namespace

double kid(const FeatureSet& real, const FeatureSet& gen) {
  check_pair("kid", real, gen, 2);
  const std::size_t d = real.d;
  const std::size_t n = real.n, m = gen.n;
  const double* x = real.values.data();
  const double* y = gen.values.data();

  double term_xx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      term_xx += 2.0 * poly_kernel(x + i * d, x + j * d, d);
    }
  }
  term_xx /= static_cast<double>(n) * static_cast<double>(n - 1);

  double term_yy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      term_yy += 2.0 * poly_kernel(y + i * d, y + j * d, d);
    }
  }
  term_yy /= static_cast<double>(m) * static_cast<double>(m - 1);

  double cross = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      cross += poly_kernel(x + i * d, y + j * d, d);
    }
  }
  cross *= 2.0 / (static_cast<double>(n) * static_cast<double>(m));

  return term_xx + term_yy - cross;
}

// ---------------------------------------------------------------------------
// Inception score
// ---------------------------------------------------------------------------

std::pair<double, double> inception_score(const ClassProbabilities& probs,
                                          std::size_t splits) {
  const std::size_t n = probs.n, c = probs.c;
  if (n == 0 || c == 0) throw ConfigError("inception_score: empty input");
  if (splits == 0 || splits > n) {
    throw ConfigError("inception_score: splits must be in [1, n]");
  }
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double p = probs.values[i * c + j];
      if (p < 0.0 || !std::isfinite(p)) {
        throw ConfigError("inception_score: invalid probability in row " +
                          std::to_string(i));
      }
      row_sum += p;
    }
    if (row_sum == 0.0) {
      throw ConfigError("inception_score: row " + std::to_string(i) + " is all zero");
    }
    if (std::abs(row_sum - 1.0) > 1e-8) {
      throw ConfigError("inception_score: row " + std::to_string(i) +
                        " sums to " + std::to_string(row_sum));
    }
  }

  std::vector<double> scores;
  const std::size_t base = n / splits;
  for (std::size_t s = 0; s < splits; ++s) {
    const std::size_t lo = s * base;
    const std::size_t hi = (s + 1 == splits) ? n : lo + base;
    const std::size_t count = hi - lo;

    std::vector<double> marginal(c, 0.0);
    for (std::size_t i = lo; i < hi; ++i) {
      for (std::size_t j = 0; j < c; ++j) marginal[j] += probs.values[i * c + j];
    }
    for (double& v : marginal) v /= static_cast<double>(count);

    double mean_kl = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      double kl = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        const double p = probs.values[i * c + j];
        if (p > 0.0) kl += p * std::log(p / marginal[j]);
      }
      mean_kl += kl;
    }
    mean_kl /= static_cast<double>(count);
    scores.push_back(std::exp(mean_kl));
  }

  double mean = 0.0;
  for (const double v : scores) mean += v;
  mean /= static_cast<double>(scores.size());
  double var = 0.0;
  for (const double v : scores) var += (v - mean) * (v - mean);
  var /= static_cast<double>(scores.size());
  return {mean, std::sqrt(var)};
}

}  // namespace hqgan
