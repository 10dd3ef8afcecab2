#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hqgan/tensor.hpp"

namespace hqgan {

/// Pluggable feature/probability source for the evaluation metrics. Must be
/// deterministic in eval mode (fixed normalization statistics).
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string id() const = 0;
  virtual std::size_t feature_dim() const = 0;
  virtual std::size_t n_classes() const = 0;
  /// images: [N,3,S,S] in [-1,+1]. Appends N rows to `features` and, when
  /// `probabilities` is non-null, N rows of class posteriors.
  virtual void extract(const Tensor& images, std::vector<double>& features,
                       std::vector<double>* probabilities) = 0;
};

struct FeatureSet {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> values;  // row-major N x d
  std::string source;          // "real" or "generated"
  std::string extractor_id;
};

struct ClassProbabilities {
  std::size_t n = 0;
  std::size_t c = 0;
  std::vector<double> values;  // row-stochastic N x C
};

FeatureSet extract_features(const Tensor& images, FeatureExtractor& extractor,
                            std::string source);
std::pair<FeatureSet, ClassProbabilities> extract_features_and_probs(
    const Tensor& images, FeatureExtractor& extractor, std::string source);

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns A = V diag(w) V^T with eigenvector j in column j of V (row-major).
void symmetric_eigendecompose(std::vector<double> a, std::size_t d,
                              std::vector<double>& eigenvalues,
                              std::vector<double>& eigenvectors);

/// Square root of a symmetric PSD matrix; negative eigenvalues (numerical
/// noise) are clipped at zero. Rejects inputs asymmetric beyond 1e-8.
std::vector<double> matrix_sqrt_psd(const std::vector<double>& a, std::size_t d);

/// Frechet distance between Gaussian fits of the two feature sets:
/// ||mu_r - mu_g||^2 + Tr(S_r + S_g - 2 (S_r S_g)^{1/2}), the product root
/// evaluated in the symmetrized form S_r^{1/2} S_g S_r^{1/2}. Negative
/// numerical noise is clipped to zero.
double fid(const FeatureSet& real, const FeatureSet& gen);

/// Unbiased squared MMD with the polynomial kernel (a.b/d + 1)^3: diagonal
/// terms excluded in the two within-set sums, included in the cross term.
double kid(const FeatureSet& real, const FeatureSet& gen);

/// exp(mean KL(p(y|x) || p_bar)) per split; returns mean and population
/// standard deviation across splits.
std::pair<double, double> inception_score(const ClassProbabilities& probs,
                                          std::size_t splits = 1);

}  // namespace hqgan
