#include "hqgan/quantum.hpp"

#include <cmath>

#include "hqgan/errors.hpp"
#include "hqgan/rng.hpp"

namespace hqgan {

namespace {

constexpr double kHalfPi = 1.57079632679489661923;

using Complex = std::complex<double>;

void check_qubit(std::size_t qubit, std::size_t n) {
  if (qubit >= n) {
    throw ConfigError("qubit index " + std::to_string(qubit) + " outside register of " +
                      std::to_string(n));
  }
}

}  // namespace

Statevector::Statevector(std::size_t n_qubits) : n_(n_qubits) {
  if (n_qubits == 0) throw ConfigError("statevector needs at least one qubit");
  amps_.assign(std::size_t{1} << n_qubits, Complex(0.0, 0.0));
  amps_[0] = Complex(1.0, 0.0);
}

void Statevector::apply_single(std::size_t qubit, Complex g00, Complex g01,
                               Complex g10, Complex g11) {
  check_qubit(qubit, n_);
  const std::size_t bit = std::size_t{1} << qubit;
  for (std::size_t base = 0; base < amps_.size(); ++base) {
    if (base & bit) continue;
    const Complex a0 = amps_[base];
    const Complex a1 = amps_[base | bit];
    amps_[base] = g00 * a0 + g01 * a1;
    amps_[base | bit] = g10 * a0 + g11 * a1;
  }
}

void Statevector::apply_rx(std::size_t qubit, double angle) {
  const double c = std::cos(angle / 2.0), s = std::sin(angle / 2.0);
  apply_single(qubit, Complex(c, 0), Complex(0, -s), Complex(0, -s), Complex(c, 0));
}

void Statevector::apply_ry(std::size_t qubit, double angle) {
  const double c = std::cos(angle / 2.0), s = std::sin(angle / 2.0);
  apply_single(qubit, Complex(c, 0), Complex(-s, 0), Complex(s, 0), Complex(c, 0));
}

void Statevector::apply_rz(std::size_t qubit, double angle) {
  const double c = std::cos(angle / 2.0), s = std::sin(angle / 2.0);
  apply_single(qubit, Complex(c, -s), Complex(0, 0), Complex(0, 0), Complex(c, s));
}

void Statevector::apply_cnot(std::size_t control, std::size_t target) {
  check_qubit(control, n_);
  check_qubit(target, n_);
  if (control == target) throw ConfigError("cnot: control equals target");
  const std::size_t cbit = std::size_t{1} << control;
  const std::size_t tbit = std::size_t{1} << target;
  for (std::size_t i = 0; i < amps_.size(); ++i) {
    if ((i & cbit) && !(i & tbit)) std::swap(amps_[i], amps_[i | tbit]);
  }
}

double Statevector::expectation_z(std::size_t qubit) const {
  check_qubit(qubit, n_);
  const std::size_t bit = std::size_t{1} << qubit;
  double e = 0.0;
  for (std::size_t i = 0; i < amps_.size(); ++i) {
    const double p = std::norm(amps_[i]);
    e += (i & bit) ? -p : p;
  }
  return e;
}

double Statevector::norm() const {
  double total = 0.0;
  for (const Complex& a : amps_) total += std::norm(a);
  return std::sqrt(total);
}

// ---------------------------------------------------------------------------
// Circuit
// ---------------------------------------------------------------------------

std::vector<double> circuit_expectations(std::span<const double> z,
                                         std::span<const double> theta) {
  const std::size_t n = z.size();
  if (theta.size() != 3 * n) {
    throw ShapeError("circuit: theta has " + std::to_string(theta.size()) +
                     " entries, want " + std::to_string(3 * n));
  }
  Statevector state(n);
  for (std::size_t q = 0; q < n; ++q) state.apply_ry(q, z[q]);
  for (std::size_t q = 0; q + 1 < n; ++q) state.apply_cnot(q, q + 1);
  for (std::size_t q = 0; q < n; ++q) {
    state.apply_rx(q, theta[q * 3 + 0]);
    state.apply_ry(q, theta[q * 3 + 1]);
    state.apply_rz(q, theta[q * 3 + 2]);
  }
  std::vector<double> out(n);
  for (std::size_t q = 0; q < n; ++q) out[q] = state.expectation_z(q);
  return out;
}

QuantumGradients parameter_shift_gradients(std::span<const double> z_batch,
                                           std::size_t batch, std::size_t n_qubits,
                                           std::span<const double> theta,
                                           std::span<const double> upstream) {
  const std::size_t n = n_qubits;
  if (z_batch.size() != batch * n || upstream.size() != batch * n ||
      theta.size() != 3 * n) {
    throw ShapeError("parameter_shift_gradients: inconsistent sizes");
  }

  QuantumGradients out;
  out.grad_theta.assign(3 * n, 0.0);
  out.grad_z.assign(batch * n, 0.0);

  std::vector<double> z(n), th(theta.begin(), theta.end());
  for (std::size_t s = 0; s < batch; ++s) {
    std::copy_n(z_batch.begin() + s * n, n, z.begin());
    const double* up = upstream.data() + s * n;

    for (std::size_t q = 0; q < n; ++q) {
      const double orig = z[q];
      z[q] = orig + kHalfPi;
      const auto plus = circuit_expectations(z, th);
      z[q] = orig - kHalfPi;
      const auto minus = circuit_expectations(z, th);
      z[q] = orig;
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += up[k] * 0.5 * (plus[k] - minus[k]);
      out.grad_z[s * n + q] = acc;
    }

    for (std::size_t p = 0; p < 3 * n; ++p) {
      const double orig = th[p];
      th[p] = orig + kHalfPi;
      const auto plus = circuit_expectations(z, th);
      th[p] = orig - kHalfPi;
      const auto minus = circuit_expectations(z, th);
      th[p] = orig;
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += up[k] * 0.5 * (plus[k] - minus[k]);
      out.grad_theta[p] += acc;
    }
  }
  return out;
}

Tensor quantum_block(const Tensor& z, const Tensor& theta) {
  if (z.shape().size() != 2) {
    throw ShapeError("quantum_block: expected [N,n] latent batch, got " +
                     shape_str(z.shape()));
  }
  const std::size_t batch = z.shape()[0], n = z.shape()[1];
  if (theta.shape() != Shape{n, 3}) {
    throw ShapeError("quantum_block: theta " + shape_str(theta.shape()) +
                     " does not match " + std::to_string(n) + " qubits");
  }

  std::vector<double> out(batch * n);
  const double* zv = z.data().data();
  for (std::size_t s = 0; s < batch; ++s) {
    const auto e = circuit_expectations({zv + s * n, n}, theta.data());
    std::copy(e.begin(), e.end(), out.begin() + s * n);
  }
  return make_op({batch, n}, std::move(out), {z, theta},
                 [z, theta, batch, n](const double* g, const auto& parent_grad) {
                   const auto grads = parameter_shift_gradients(
                       z.data(), batch, n, theta.data(), {g, batch * n});
                   if (double* dz = parent_grad(0)) {
                     for (std::size_t i = 0; i < grads.grad_z.size(); ++i) {
                       dz[i] += grads.grad_z[i];
                     }
                   }
                   if (double* dth = parent_grad(1)) {
                     for (std::size_t i = 0; i < grads.grad_theta.size(); ++i) {
                       dth[i] += grads.grad_theta[i];
                     }
                   }
                 });
}

// ---------------------------------------------------------------------------
// Dense oracle
// ---------------------------------------------------------------------------

namespace {

using Matrix = std::vector<Complex>;  // row-major square

Matrix identity(std::size_t dim) {
  Matrix m(dim * dim, Complex(0, 0));
  for (std::size_t i = 0; i < dim; ++i) m[i * dim + i] = Complex(1, 0);
  return m;
}

Matrix kron(const Matrix& a, std::size_t da, const Matrix& b, std::size_t db) {
  Matrix out(da * db * da * db, Complex(0, 0));
  const std::size_t dim = da * db;
  for (std::size_t ia = 0; ia < da; ++ia) {
    for (std::size_t ja = 0; ja < da; ++ja) {
      const Complex va = a[ia * da + ja];
      if (va == Complex(0, 0)) continue;
      for (std::size_t ib = 0; ib < db; ++ib) {
        for (std::size_t jb = 0; jb < db; ++jb) {
          out[(ia * db + ib) * dim + (ja * db + jb)] = va * b[ib * db + jb];
        }
      }
    }
  }
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b, std::size_t dim) {
  Matrix out(dim * dim, Complex(0, 0));
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t k = 0; k < dim; ++k) {
      const Complex aik = a[i * dim + k];
      if (aik == Complex(0, 0)) continue;
      for (std::size_t j = 0; j < dim; ++j) out[i * dim + j] += aik * b[k * dim + j];
    }
  }
  return out;
}

// Embeds a 2x2 gate on `qubit` (LSB ordering): I_{high} (x) G (x) I_{low}.
Matrix embed_single(const Matrix& gate, std::size_t qubit, std::size_t n) {
  const std::size_t low = std::size_t{1} << qubit;
  const std::size_t high = std::size_t{1} << (n - 1 - qubit);
  Matrix m = kron(gate, 2, identity(low), low);
  return kron(identity(high), high, m, 2 * low);
}

Matrix rx_gate(double a) {
  const double c = std::cos(a / 2), s = std::sin(a / 2);
  return {Complex(c, 0), Complex(0, -s), Complex(0, -s), Complex(c, 0)};
}

Matrix ry_gate(double a) {
  const double c = std::cos(a / 2), s = std::sin(a / 2);
  return {Complex(c, 0), Complex(-s, 0), Complex(s, 0), Complex(c, 0)};
}

Matrix rz_gate(double a) {
  const double c = std::cos(a / 2), s = std::sin(a / 2);
  return {Complex(c, -s), Complex(0, 0), Complex(0, 0), Complex(c, s)};
}

// CNOT with control q, target q+1 embedded as I (x) CNOT4 (x) I. In the
// 4-dim block the control is the low bit: |t c> -> |t^c c>.
Matrix embed_cnot_adjacent(std::size_t control, std::size_t n) {
  Matrix cnot4(16, Complex(0, 0));
  cnot4[0 * 4 + 0] = Complex(1, 0);   // |00> -> |00>
  cnot4[3 * 4 + 1] = Complex(1, 0);   // |01> -> |11>
  cnot4[2 * 4 + 2] = Complex(1, 0);   // |10> -> |10>
  cnot4[1 * 4 + 3] = Complex(1, 0);   // |11> -> |01>
  const std::size_t low = std::size_t{1} << control;
  const std::size_t high = std::size_t{1} << (n - 2 - control);
  Matrix m = kron(cnot4, 4, identity(low), low);
  return kron(identity(high), high, m, 4 * low);
}

}  // namespace

std::vector<double> dense_unitary_oracle(std::size_t n_qubits,
                                         std::span<const double> z,
                                         std::span<const double> theta) {
  if (n_qubits > 6) {
    throw ConfigError("dense_unitary_oracle: refusing n_qubits = " +
                      std::to_string(n_qubits) + " (limit 6)");
  }
  if (z.size() != n_qubits || theta.size() != 3 * n_qubits) {
    throw ShapeError("dense_unitary_oracle: inconsistent sizes");
  }
  const std::size_t dim = std::size_t{1} << n_qubits;
  Matrix total = identity(dim);
  for (std::size_t q = 0; q < n_qubits; ++q) {
    total = matmul(embed_single(ry_gate(z[q]), q, n_qubits), total, dim);
  }
  for (std::size_t q = 0; q + 1 < n_qubits; ++q) {
    total = matmul(embed_cnot_adjacent(q, n_qubits), total, dim);
  }
  for (std::size_t q = 0; q < n_qubits; ++q) {
    total = matmul(embed_single(rx_gate(theta[q * 3 + 0]), q, n_qubits), total, dim);
    total = matmul(embed_single(ry_gate(theta[q * 3 + 1]), q, n_qubits), total, dim);
    total = matmul(embed_single(rz_gate(theta[q * 3 + 2]), q, n_qubits), total, dim);
  }

  // psi = U |0...0> is the first column.
  std::vector<double> expectations(n_qubits, 0.0);
  for (std::size_t q = 0; q < n_qubits; ++q) {
    const std::size_t bit = std::size_t{1} << q;
    double e = 0.0;
    for (std::size_t b = 0; b < dim; ++b) {
      const double p = std::norm(total[b * dim + 0]);
      e += (b & bit) ? -p : p;
    }
    expectations[q] = e;
  }
  return expectations;
}

Tensor init_circuit_params(std::size_t n_qubits, std::uint64_t seed) {
  Rng rng(seed);
  Tensor theta = Tensor::zeros({n_qubits, 3}, true);
  for (double& v : theta.mutable_data()) {
    v = rng.uniform(-kHalfPi / 2.0, kHalfPi / 2.0);
  }
  return theta;
}

}  // namespace hqgan
