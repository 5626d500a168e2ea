#pragma once

// The homogeneous embedding of a deterministic-scan cycle.
//
// For a family K_0..K_{k-1} the embedding acts on k-tuples of functions
// (block vectors) by
//
//   (T phi)_i = K_i phi_{i+1}            (indices mod k)
//
// and factors as T = Delta o Shift with (Shift phi)_i = phi_{i+1} and
// (Delta phi)_i = K_i phi_i. Block vectors carry the inner product
// <phi, psi> = sum_i <phi_i, psi_i>_pi, under which Shift is unitary, Delta
// is self-adjoint (every K_i is pi-reversible) and T* = Shift^{-1} o Delta.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scanvar/errors.hpp"
#include "scanvar/kernels.hpp"

namespace scanvar {

/// Element of (L^2(pi))^k stored as k stacked length-n segments.
class BlockVector {
public:
  BlockVector(std::size_t n, std::size_t k) : n_(n), k_(k), data_(Vector::Zero(detail::idx(n * k))) {
    if (n == 0 || k == 0) throw dimension_error("block vector needs n >= 1 and k >= 1");
  }

  BlockVector(std::size_t n, std::size_t k, Vector stacked) : n_(n), k_(k), data_(std::move(stacked)) {
    if (n == 0 || k == 0) throw dimension_error("block vector needs n >= 1 and k >= 1");
    detail::require_size(static_cast<std::size_t>(data_.size()), n * k, "block vector");
  }

  /// (f, f, ..., f) with k copies.
  static BlockVector replicate(const Vector& f, std::size_t k) {
    const std::size_t n = static_cast<std::size_t>(f.size());
    BlockVector out(n, k);
    for (std::size_t i = 0; i < k; ++i) out.component(i) = f;
    return out;
  }

  static BlockVector from_components(std::span<const Vector> parts) {
    if (parts.empty()) throw dimension_error("block vector needs at least one component");
    const std::size_t n = static_cast<std::size_t>(parts.front().size());
    BlockVector out(n, parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) {
      detail::require_size(static_cast<std::size_t>(parts[i].size()), n, "block component");
      out.component(i) = parts[i];
    }
    return out;
  }

  Eigen::VectorBlock<Vector> component(std::size_t i) { return data_.segment(detail::idx(i * n_), detail::idx(n_)); }
  Eigen::VectorBlock<const Vector> component(std::size_t i) const {
    return data_.segment(detail::idx(i * n_), detail::idx(n_));
  }

  std::size_t n() const { return n_; }
  std::size_t k() const { return k_; }
  const Vector& stacked() const { return data_; }
  Vector& stacked() { return data_; }


  BlockVector& operator+=(const BlockVector& o) {
    same_shape(o);
    data_ += o.data_;
    return *this;
  }
  BlockVector& operator-=(const BlockVector& o) {
    same_shape(o);
    data_ -= o.data_;
    return *this;
  }
  BlockVector& operator*=(double a) {
    data_ *= a;
    return *this;
  }

  friend BlockVector operator+(BlockVector a, const BlockVector& b) { return a += b; }
  friend BlockVector operator-(BlockVector a, const BlockVector& b) { return a -= b; }
  friend BlockVector operator*(double s, BlockVector a) { return a *= s; }

  void same_shape(const BlockVector& o) const {
    if (o.n_ != n_ || o.k_ != k_)
      throw dimension_error("block vector shape " + std::to_string(o.n_) + "x" + std::to_string(o.k_) +
                            " does not match " + std::to_string(n_) + "x" + std::to_string(k_));
  }

private:
  std::size_t n_;
  std::size_t k_;
  Vector data_;
};

/// sum_i <phi_i, psi_i>_pi.
inline double inner(const BlockVector& phi, const BlockVector& psi, const Dist& pi) {
  phi.same_shape(psi);
  detail::require_size(phi.n(), pi.size(), "block inner product");
  double s = 0.0;
  for (std::size_t i = 0; i < phi.k(); ++i)
    s += (pi.weights().array() * phi.component(i).array() * psi.component(i).array()).sum();
  return s;
}

inline double norm(const BlockVector& phi, const Dist& pi) { return std::sqrt(inner(phi, phi, pi)); }

namespace detail {

inline void check_block(const KernelFamily& fam, const BlockVector& phi) {
  if (phi.n() != fam.n() || phi.k() != fam.k())
    throw dimension_error("block vector " + std::to_string(phi.n()) + "x" + std::to_string(phi.k()) +
                          " does not match family " + std::to_string(fam.n()) + "x" + std::to_string(fam.k()));
}

inline void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda < 1.0))
    throw precondition_error("lambda = " + fmt(lambda) + " outside [0, 1)");
}

} // namespace detail

/// (Shift^power phi)_j = phi_{j + power}. power = +1 is the forward circular
/// permutation, -1 its inverse.
inline BlockVector shift(const BlockVector& phi, long long power) {
  BlockVector out(phi.n(), phi.k());
  for (std::size_t j = 0; j < phi.k(); ++j) out.component(j) = phi.component(cycle_index(j, power, phi.k()));
  return out;
}

/// (Delta phi)_i = K_i phi_i.
inline BlockVector diag_apply(const KernelFamily& fam, const BlockVector& phi) {
  detail::check_block(fam, phi);
  BlockVector out(phi.n(), phi.k());
  for (std::size_t i = 0; i < phi.k(); ++i) out.component(i).noalias() = fam[i].matrix() * phi.component(i);
  return out;
}

/// T phi = Delta(Shift phi).
inline BlockVector apply_T(const KernelFamily& fam, const BlockVector& phi) {
  return diag_apply(fam, shift(phi, +1));
}

/// T* phi = Shift^{-1}(Delta phi).
inline BlockVector apply_T_adjoint(const KernelFamily& fam, const BlockVector& phi) {
  return shift(diag_apply(fam, phi), -1);
}

/// S = (T + T*) / 2.
inline BlockVector symmetric_part(const KernelFamily& fam, const BlockVector& phi) {
  return 0.5 * (apply_T(fam, phi) + apply_T_adjoint(fam, phi));
}

/// A = (T - T*) / 2.
inline BlockVector skew_part(const KernelFamily& fam, const BlockVector& phi) {
  return 0.5 * (apply_T(fam, phi) - apply_T_adjoint(fam, phi));
}

/// T^i phi; component j equals K_j K_{j+1} ... K_{j+i-1} phi_{j+i}.
inline BlockVector power_apply(const KernelFamily& fam, const BlockVector& phi, std::size_t i) {
  detail::check_block(fam, phi);
  BlockVector out = phi;
  for (std::size_t s = 0; s < i; ++s) out = apply_T(fam, out);
  return out;
}

/// Operators on block vectors that have a dense realization.
enum class Op {
  T,            // Delta o Shift
  T_adjoint,    // Shift^{-1} o Delta
  S,            // (T + T*) / 2
  shift_diag,   // Shift o Delta
  unshift_diag, // Shift^{-1} o Delta (equal to T*)
};

inline const char* to_string(Op op) {
  switch (op) {
  case Op::T: return "T";
  case Op::T_adjoint: return "T*";
  case Op::S: return "S";
  case Op::shift_diag: return "Shift.Delta";
  case Op::unshift_diag: return "Shift^-1.Delta";
  }
  return "?";
}

inline BlockVector apply(Op op, const KernelFamily& fam, const BlockVector& phi) {
  switch (op) {
  case Op::T: return apply_T(fam, phi);
  case Op::T_adjoint:
  case Op::unshift_diag: return apply_T_adjoint(fam, phi);
  case Op::S: return symmetric_part(fam, phi);
  case Op::shift_diag: return shift(diag_apply(fam, phi), +1);
  }
  throw error("unknown operator");
}

/// LU factorization of (I - lambda Op) for repeated solves at one lambda.
class Resolvent {
public:
  Resolvent(const Matrix& op, double lambda, std::size_t n, std::size_t k)
      : op_(op), lambda_(lambda), n_(n), k_(k) {
    detail::check_lambda(lambda);
    const Eigen::Index dim = op.rows();
    lu_.compute(Matrix::Identity(dim, dim) - lambda * op);
  }

  /// x with (I - lambda Op) x = rhs; residual <= 1e-10 ||rhs|| or throws.
  BlockVector solve(const BlockVector& rhs) const {
    if (rhs.n() != n_ || rhs.k() != k_) throw dimension_error("resolvent right-hand side has the wrong shape");
    const Vector& b = rhs.stacked();
    Vector x = lu_.solve(b);
    Vector r = b - (x - lambda_ * (op_ * x));
    const double limit = 1e-10 * b.norm();
    if (!(r.norm() <= limit)) {
      x += lu_.solve(r); // one step of iterative refinement
      r = b - (x - lambda_ * (op_ * x));
    }
    if (!x.allFinite() || !(r.norm() <= limit))
      throw singular_system_error("resolvent solve residual " + detail::fmt(r.norm()) + " exceeds " +
                                  detail::fmt(limit));
    return BlockVector(n_, k_, std::move(x));
  }

  double lambda() const { return lambda_; }

private:
  Matrix op_;
  double lambda_;
  std::size_t n_, k_;
  Eigen::PartialPivLU<Matrix> lu_;
};

/// The embedding of a family with lazily built, cached nk x nk realizations.
/// Copies share the cache; each realization is built exactly once.
class EmbeddedOperator {
public:
  explicit EmbeddedOperator(KernelFamily fam)
      : fam_(std::make_shared<const KernelFamily>(std::move(fam))), cache_(std::make_shared<Cache>()) {}

  const KernelFamily& family() const { return *fam_; }

  BlockVector apply(Op op, const BlockVector& phi) const { return scanvar::apply(op, *fam_, phi); }

  const Matrix& realization(Op op) const {
    const auto slot = static_cast<std::size_t>(op);
    std::call_once(cache_->once[slot], [&] { cache_->mats[slot] = build(op); });
    return cache_->mats[slot];
  }

  Resolvent factor(Op op, double lambda) const { return Resolvent(realization(op), lambda, fam_->n(), fam_->k()); }

  BlockVector solve(Op op, double lambda, const BlockVector& rhs) const {
    detail::check_block(*fam_, rhs);
    return factor(op, lambda).solve(rhs);
  }

private:
  static constexpr std::size_t op_count = 5;
  struct Cache {
    std::array<std::once_flag, op_count> once;
    std::array<Matrix, op_count> mats;
  };

  Matrix build(Op op) const {
    const std::size_t n = fam_->n(), k = fam_->k();
    const Eigen::Index nn = detail::idx(n);
    Matrix m = Matrix::Zero(detail::idx(n * k), detail::idx(n * k));
    auto block = [&](std::size_t row, std::size_t col) {
      return m.block(detail::idx(row * n), detail::idx(col * n), nn, nn);
    };
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t next = cycle_index(i, +1, k), prev = cycle_index(i, -1, k);
      switch (op) {
      case Op::T: block(i, next) += (*fam_)[i].matrix(); break;
      case Op::T_adjoint:
      case Op::unshift_diag: block(i, prev) += (*fam_)[prev].matrix(); break;
      case Op::S:
        block(i, next) += 0.5 * (*fam_)[i].matrix();
        block(i, prev) += 0.5 * (*fam_)[prev].matrix();
        break;
      case Op::shift_diag: block(i, next) += (*fam_)[next].matrix(); break;
      }
    }
    return m;
  }

  std::shared_ptr<const KernelFamily> fam_;
  std::shared_ptr<Cache> cache_;
};

/// x with (I - lambda Op) x = rhs by dense LU of the block realization.
inline BlockVector resolvent_solve(Op op, const KernelFamily& fam, double lambda, const BlockVector& rhs) {
  return EmbeddedOperator(fam).solve(op, lambda, rhs);
}

} // namespace scanvar
