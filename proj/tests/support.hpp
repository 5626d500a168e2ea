#pragma once

// Seeded generators and dense oracles shared by the test suites.

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "scanvar/scanvar.hpp"

namespace scanvar::testing {

inline Matrix e1_kernel(int which) {
  Matrix m(2, 2);
  if (which == 0)
    m << 0.9, 0.1, 0.1, 0.9;
  else
    m << 0.6, 0.4, 0.4, 0.6;
  return m;
}

inline KernelFamily e1_family() { return KernelFamily(Dist::uniform(2), {Kernel(e1_kernel(0)), Kernel(e1_kernel(1))}); }

inline Vector e1_f() {
  Vector f(2);
  f << 1.0, -1.0;
  return f;
}

inline KernelFamily random_family(std::size_t n, std::size_t k, std::uint64_t seed) {
  const Dist pi = random_dist(n, derive_seed(seed, 1000));
  std::vector<Kernel> ks;
  for (std::size_t i = 0; i < k; ++i) ks.push_back(random_reversible(pi, derive_seed(seed, i)));
  return KernelFamily(pi, std::move(ks));
}

inline Vector random_vector(std::size_t n, std::uint64_t seed) {
  engine gen(derive_seed(seed, 77));
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = 2.0 * uniform01(gen) - 1.0;
  return v;
}

inline Vector random_centered(const Dist& pi, std::uint64_t seed) {
  return center(random_vector(pi.size(), seed), pi);
}

inline std::size_t random_size(std::uint64_t seed, std::size_t lo, std::size_t hi) {
  engine gen(derive_seed(seed, 31));
  return lo + static_cast<std::size_t>(uniform01(gen) * static_cast<double>(hi - lo + 1));
}

// Explicit nk x nk matrix of T from its definition (T phi)_i = K_i phi_{i+1}.
inline Matrix explicit_T(const KernelFamily& fam) {
  const auto n = static_cast<Eigen::Index>(fam.n());
  const std::size_t k = fam.k();
  Matrix t = Matrix::Zero(n * static_cast<Eigen::Index>(k), n * static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i)
    t.block(static_cast<Eigen::Index>(i) * n, static_cast<Eigen::Index>((i + 1) % k) * n, n, n) += fam[i].matrix();
  return t;
}

// Block permutation (Shift phi)_i = phi_{i+1}.
inline Matrix explicit_shift(std::size_t n, std::size_t k) {
  const auto nn = static_cast<Eigen::Index>(n);
  Matrix s = Matrix::Zero(nn * static_cast<Eigen::Index>(k), nn * static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i)
    s.block(static_cast<Eigen::Index>(i) * nn, static_cast<Eigen::Index>((i + 1) % k) * nn, nn, nn) =
        Matrix::Identity(nn, nn);
  return s;
}

// pi tiled k times, the weights of the block inner product.
inline Vector block_weights(const Dist& pi, std::size_t k) {
  const auto n = static_cast<Eigen::Index>(pi.size());
  Vector w(n * static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i) w.segment(static_cast<Eigen::Index>(i) * n, n) = pi.weights();
  return w;
}

// Adjoint in the weighted inner product: D^{-1} M^T D.
inline Matrix weighted_adjoint(const Matrix& m, const Vector& w) {
  return w.cwiseInverse().asDiagonal() * m.transpose() * w.asDiagonal();
}

// sum_{i=0}^{N} lambda^i <f, K_q..K_{q+i-1} f>, summed over phases, by direct
// matrix products.
inline double brute_strat(const KernelFamily& fam, const Vector& f, double lambda, std::size_t terms) {
  const Vector fc = center(f, fam.pi());
  const std::size_t k = fam.k();
  double acc = 0.0;
  for (std::size_t q = 0; q < k; ++q) {
    Matrix prod = Matrix::Identity(fc.size(), fc.size());
    double lp = 1.0;
    for (std::size_t i = 1; i <= terms; ++i) {
      prod = prod * fam[(q + i - 1) % k].matrix();
      lp *= lambda;
      acc += lp * inner(fc, Vector(prod * fc), fam.pi());
    }
  }
  return inner(fc, fc, fam.pi()) + 2.0 / static_cast<double>(k) * acc;
}

// var(sum_t f(X_t)) / M by the double sum over explicit transition products.
inline double brute_finite_M(const KernelFamily& fam, const Vector& f, std::size_t horizon, bool rand) {
  const Vector fc = center(f, fam.pi());
  const Matrix p = random_scan(fam).matrix();
  double total = 0.0;
  for (std::size_t i = 0; i < horizon; ++i) {
    Matrix prod = Matrix::Identity(fc.size(), fc.size());
    for (std::size_t j = i; j < horizon; ++j) {
      if (j > i) prod = prod * (rand ? p : fam[(j - 1) % fam.k()].matrix());
      const double c = inner(fc, Vector(prod * fc), fam.pi());
      total += (j == i ? 1.0 : 2.0) * c;
    }
  }
  return total / static_cast<double>(horizon);
}

} // namespace scanvar::testing
