#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "hqgan/errors.hpp"
#include "hqgan/quantum.hpp"
#include "test_util.hpp"

using namespace hqgan;
using namespace hqgan::testutil;

namespace {
constexpr double kPi = std::numbers::pi;

std::vector<double> zeros(std::size_t n) { return std::vector<double>(n, 0.0); }
}  // namespace

TEST_CASE("circuit: identity on |00000> gives all +1 expectations") {
  const auto e = circuit_expectations(zeros(5), zeros(15));
  REQUIRE(e.size() == 5);
  for (const double v : e) CHECK(v == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("circuit: pi flip on qubit 0 propagates through the CNOT chain") {
  std::vector<double> z = zeros(5);
  z[0] = kPi;
  const auto e = circuit_expectations(z, zeros(15));
  for (const double v : e) CHECK(v == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("circuit: pi/2 encoding builds a GHZ-type state with zero expectations") {
  std::vector<double> z = zeros(5);
  z[0] = kPi / 2.0;
  const auto e = circuit_expectations(z, zeros(15));
  for (const double v : e) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("statevector: norm conserved and expectations bounded on random circuits") {
  Rng rng(101);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    Statevector state(n);
    for (int g = 0; g < 30; ++g) {
      const std::size_t q = rng.below(n);
      const double a = rng.uniform(-2.0 * kPi, 2.0 * kPi);
      switch (rng.below(4)) {
        case 0: state.apply_rx(q, a); break;
        case 1: state.apply_ry(q, a); break;
        case 2: state.apply_rz(q, a); break;
        default:
          if (n > 1) {
            const std::size_t t = (q + 1) % n;
            state.apply_cnot(q, t);
          }
      }
    }
    CHECK(std::abs(state.norm() - 1.0) < 1e-10);
    for (std::size_t q = 0; q < n; ++q) {
      const double e = state.expectation_z(q);
      CHECK(e >= -1.0);
      CHECK(e <= 1.0);
    }
  }
}

TEST_CASE("dense oracle: base cases") {
  const auto one = dense_unitary_oracle(1, zeros(1), zeros(3));
  CHECK(one[0] == doctest::Approx(1.0).epsilon(1e-14));

  std::vector<double> z{kPi, 0.0};
  const auto two = dense_unitary_oracle(2, z, zeros(6));
  CHECK(two[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(two[1] == doctest::Approx(-1.0).epsilon(1e-12));

  CHECK_THROWS_AS(dense_unitary_oracle(7, zeros(7), zeros(21)), ConfigError);
}

TEST_CASE("fast simulator matches the dense oracle on random instances") {
  Rng rng(211);
  for (const std::size_t n : {1, 2, 3, 5}) {
    for (int trial = 0; trial < 25; ++trial) {
      std::vector<double> z(n), theta(3 * n);
      for (double& v : z) v = rng.uniform(-kPi, kPi);
      for (double& v : theta) v = rng.uniform(-kPi, kPi);
      const auto fast = circuit_expectations(z, theta);
      const auto dense = dense_unitary_oracle(n, z, theta);
      CHECK(max_abs_diff(fast, dense) < 1e-12);
    }
  }
}

TEST_CASE("parameter shift: analytic single-qubit cases") {
  // With theta = 0 the circuit on one qubit is RY(z), so <Z> = cos z.
  const Tensor theta = Tensor::zeros({1, 3}, true);
  {
    Tensor z = Tensor::zeros({1, 1}, true);
    sum(quantum_block(z, theta)).backward();
    CHECK(std::abs(z.grad()[0]) < 1e-12);  // -sin(0)
  }
  {
    Tensor z = Tensor::from_data({1, 1}, {kPi / 2.0}, true);
    sum(quantum_block(z, theta)).backward();
    CHECK(z.grad()[0] == doctest::Approx(-1.0).epsilon(1e-12));  // -sin(pi/2)
  }
}

TEST_CASE("parameter shift equals central finite differences on 5 qubits") {
  Rng rng(307);
  const std::size_t n = 5, batch = 2;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> z(batch * n), theta(3 * n), upstream(batch * n);
    for (double& v : z) v = rng.uniform(-kPi, kPi);
    for (double& v : theta) v = rng.uniform(-kPi, kPi);
    for (double& v : upstream) v = rng.uniform(-1.0, 1.0);

    const auto grads = parameter_shift_gradients(z, batch, n, theta, upstream);

    const double h = 1e-4;
    auto loss = [&](const std::vector<double>& zz, const std::vector<double>& th) {
      double acc = 0.0;
      for (std::size_t s = 0; s < batch; ++s) {
        const auto e = circuit_expectations({zz.data() + s * n, n}, th);
        for (std::size_t k = 0; k < n; ++k) acc += upstream[s * n + k] * e[k];
      }
      return acc;
    };

    for (std::size_t p = 0; p < 3 * n; ++p) {
      auto up = theta, down = theta;
      up[p] += h;
      down[p] -= h;
      const double fd = (loss(z, up) - loss(z, down)) / (2.0 * h);
      CHECK(std::abs(grads.grad_theta[p] - fd) < 1e-8);
    }
    for (std::size_t p = 0; p < batch * n; ++p) {
      auto up = z, down = z;
      up[p] += h;
      down[p] -= h;
      const double fd = (loss(up, theta) - loss(down, theta)) / (2.0 * h);
      CHECK(std::abs(grads.grad_z[p] - fd) < 1e-8);
    }
  }
}

TEST_CASE("quantum_block: shapes, parameter count and batch independence") {
  const std::size_t n = 5;
  const Tensor theta = init_circuit_params(n, 99);
  CHECK(theta.shape() == Shape{n, 3});
  CHECK(theta.size() == 15);  // 3 * n_qubits trainable angles
  for (const double v : theta.data()) {
    CHECK(v >= -kPi / 4.0);
    CHECK(v <= kPi / 4.0);
  }

  Rng rng(13);
  Tensor z = random_tensor({4, n}, rng, 1.0);
  const Tensor out = quantum_block(z, theta);
  CHECK(out.shape() == Shape{4, n});
  for (const double v : out.data()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }

  // Permuting batch rows permutes outputs identically.
  std::vector<double> permuted(z.size());
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      permuted[r * n + c] = z.data()[perm[r] * n + c];
    }
  }
  const Tensor out_perm = quantum_block(Tensor::from_data({4, n}, permuted), theta);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      CHECK(out_perm.data()[r * n + c] == out.data()[perm[r] * n + c]);
    }
  }

  const Tensor bad = Tensor::zeros({2, n + 1});
  CHECK_THROWS_AS(quantum_block(bad, theta), ShapeError);
}

TEST_CASE("quantum_block: gradcheck through the tensor graph") {
  Rng rng(401);
  const std::size_t n = 3;
  Tensor z = random_tensor({2, n}, rng, 1.0, true);
  Tensor theta = random_tensor({n, 3}, rng, 0.8, true);
  Tensor w = random_tensor({2, n}, rng, 1.0, true);
  const auto r = gradcheck(
      [&] { return sum(hqgan::tanh(linear(quantum_block(z, theta), w))); },
      {z, theta, w}, 1e-5);
  CHECK(r.max_rel_err < 1e-6);
}
