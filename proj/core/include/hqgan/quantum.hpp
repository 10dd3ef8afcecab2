#pragma once

#include <complex>
#include <span>
#include <vector>

#include "hqgan/tensor.hpp"

namespace hqgan {

/// Exact amplitudes of an n-qubit register. Qubit 0 is the least significant
/// bit of the amplitude index.
class Statevector {
 public:
  explicit Statevector(std::size_t n_qubits);  // |0...0>

  std::size_t n_qubits() const { return n_; }
  std::size_t dim() const { return amps_.size(); }
  std::span<const std::complex<double>> amplitudes() const { return amps_; }

  /// RX(a) = [[cos a/2, -i sin a/2], [-i sin a/2, cos a/2]]
  void apply_rx(std::size_t qubit, double angle);
  /// RY(a) = [[cos a/2, -sin a/2], [sin a/2, cos a/2]]
  void apply_ry(std::size_t qubit, double angle);
  /// RZ(a) = diag(e^{-ia/2}, e^{ia/2})
  void apply_rz(std::size_t qubit, double angle);
  void apply_cnot(std::size_t control, std::size_t target);

  /// <Z_q> = P(bit q = 0) - P(bit q = 1), in [-1, +1].
  double expectation_z(std::size_t qubit) const;
  double norm() const;

 private:
  void apply_single(std::size_t qubit, std::complex<double> g00,
                    std::complex<double> g01, std::complex<double> g10,
                    std::complex<double> g11);

  std::size_t n_;
  std::vector<std::complex<double>> amps_;
};

/// One circuit evaluation: RY(z_q) per qubit, CNOT(q -> q+1) chain in
/// ascending order, then RX(theta[q][0]) RY(theta[q][1]) RZ(theta[q][2]) per
/// qubit, returning <Z_q> for every qubit. theta is row-major n x 3.
std::vector<double> circuit_expectations(std::span<const double> z,
                                         std::span<const double> theta);

struct QuantumGradients {
  std::vector<double> grad_theta;  // n x 3, summed over the batch
  std::vector<double> grad_z;      // N x n
};

/// Exact parameter-shift gradients, chained against upstream [N,n] and
/// accumulated over the batch for theta. All gates satisfy the two-point
/// rule df/da = [f(a + pi/2) - f(a - pi/2)] / 2.
QuantumGradients parameter_shift_gradients(std::span<const double> z_batch,
                                           std::size_t batch, std::size_t n_qubits,
                                           std::span<const double> theta,
                                           std::span<const double> upstream);

/// The circuit as a differentiable layer. z: [N,n], theta: [n,3]; returns
/// the [N,n] expectation values with parameter-shift backward.
Tensor quantum_block(const Tensor& z, const Tensor& theta);

/// Independent check: builds the full 2^n x 2^n circuit unitary by Kronecker
/// products and explicit matrix multiplication. Refuses n_qubits > 6.
std::vector<double> dense_unitary_oracle(std::size_t n_qubits,
                                         std::span<const double> z,
                                         std::span<const double> theta);

/// Fresh trainable circuit angles, uniform on [-pi/4, pi/4].
Tensor init_circuit_params(std::size_t n_qubits, std::uint64_t seed);

}  // namespace hqgan
