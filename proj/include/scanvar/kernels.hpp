#pragma once

// Finite-state distributions, observables and Markov kernels, together with
// the kernel-family constructors used throughout the toolkit.
//
// States are indexed 0..n-1 and kernels in a family 0..k-1. A kernel is a
// row-stochastic matrix whose row x is the law of the next state given x;
// functions act on the right, (K f)(x) = sum_y K(x,y) f(y).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "scanvar/errors.hpp"
#include "scanvar/rng.hpp"

namespace scanvar {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Row-sum tolerance for stochastic matrices.
inline constexpr double tau_stoch = 1e-12;
/// Detailed-balance tolerance, relative to max_{x,y} pi(x) K(x,y).
inline constexpr double tau_rev = 1e-10;
/// General numeric equality.
inline constexpr double tau_num = 1e-10;

namespace detail {

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

// Tag for constructing a Kernel whose invariants hold by construction
// (products and blends of validated kernels).
struct unchecked_t {
  explicit unchecked_t() = default;
};
inline constexpr unchecked_t unchecked{};

} // namespace detail

struct StateSpace {
  std::size_t n = 1;
  std::vector<std::string> labels;

  explicit StateSpace(std::size_t size, std::vector<std::string> names = {})
      : n(size), labels(std::move(names)) {
    if (n == 0) throw validation_error("state space must have at least one state");
    if (!labels.empty()) {
      if (labels.size() != n)
        throw validation_error("state space has " + std::to_string(n) + " states but " +
                               std::to_string(labels.size()) + " labels");
      std::unordered_set<std::string> seen(labels.begin(), labels.end());
      if (seen.size() != labels.size()) throw validation_error("state labels must be distinct");
    }
  }
};

/// Probability distribution on {0, ..., n-1}.
class Dist {
public:
  explicit Dist(Vector weights) : w_(std::move(weights)) {
    if (auto why = check(w_)) throw validation_error(*why);
  }

  static Dist uniform(std::size_t n) {
    if (n == 0) throw validation_error("distribution must have at least one state");
    return Dist(Vector::Constant(detail::idx(n), 1.0 / static_cast<double>(n)));
  }

  // Why `w` is not a valid distribution, or nullopt if it is.
  static std::optional<std::string> check(const Vector& w) {
    if (w.size() == 0) return "distribution must have at least one state";
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      if (!std::isfinite(w[i])) return "distribution weight " + std::to_string(i) + " is not finite";
      if (w[i] < 0.0)
        return "distribution weight " + std::to_string(i) + " is negative (" + detail::fmt(w[i]) + ")";
    }
    const double dev = std::abs(w.sum() - 1.0);
    if (dev > tau_stoch)
      return "distribution weights sum to 1 - " + detail::fmt(1.0 - w.sum()) + " (deviation " +
             detail::fmt(dev) + " > " + detail::fmt(tau_stoch) + ")";
    return std::nullopt;
  }

  std::size_t size() const { return static_cast<std::size_t>(w_.size()); }
  const Vector& weights() const { return w_; }
  double operator[](std::size_t i) const { return w_[detail::idx(i)]; }

private:
  Vector w_;
};

/// Real function on the state space.
class ObsFunction {
public:
  explicit ObsFunction(Vector values) : v_(std::move(values)) {
    if (!v_.allFinite()) throw validation_error("observable has non-finite entries");
  }

  std::size_t size() const { return static_cast<std::size_t>(v_.size()); }
  const Vector& values() const { return v_; }
  double operator[](std::size_t i) const { return v_[detail::idx(i)]; }

  bool is_centered(const Dist& pi, double tol = tau_num) const {
    return std::abs(pi.weights().dot(v_)) <= tol;
  }

private:
  Vector v_;
};

/// Row-stochastic matrix.
class Kernel {
public:
  explicit Kernel(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() == 0)
      throw validation_error("kernel must be a non-empty square matrix, got " +
                             std::to_string(m_.rows()) + "x" + std::to_string(m_.cols()));
    if (!m_.allFinite()) throw validation_error("kernel has non-finite entries");
    for (Eigen::Index x = 0; x < m_.rows(); ++x) {
      const double lo = m_.row(x).minCoeff();
      if (lo < -tau_stoch)
        throw validation_error("kernel row " + std::to_string(x) + " has negative entry " + detail::fmt(lo));
      const double dev = std::abs(m_.row(x).sum() - 1.0);
      if (dev > tau_stoch)
        throw validation_error("kernel row " + std::to_string(x) + " sums to 1 - " +
                               detail::fmt(1.0 - m_.row(x).sum()) + " (deviation " + detail::fmt(dev) +
                               " > " + detail::fmt(tau_stoch) + ")");
    }
  }

  Kernel(Matrix m, detail::unchecked_t) : m_(std::move(m)) {}

  static Kernel identity(std::size_t n) {
    return Kernel(Matrix::Identity(detail::idx(n), detail::idx(n)), detail::unchecked);
  }

  std::size_t size() const { return static_cast<std::size_t>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  double operator()(std::size_t x, std::size_t y) const { return m_(detail::idx(x), detail::idx(y)); }

private:
  Matrix m_;
};

struct KernelDiagnostics {
  std::size_t index = 0;
  bool shape_ok = true;
  double max_row_sum_deviation = 0.0;
  std::size_t worst_row = 0;
  double max_negative_entry = 0.0; // magnitude of the most negative entry, 0 if none
  double detailed_balance_residual = 0.0; // max |pi(x)K(x,y) - pi(y)K(y,x)|
  double detailed_balance_relative = 0.0; // residual / max pi(x)K(x,y)
  std::size_t worst_x = 0, worst_y = 0;
};

struct DiagnosticsReport {
  double row_tolerance = 0.0;
  double reversibility_tolerance = 0.0;
  double pi_sum_deviation = 0.0;
  double min_pi = 0.0;
  std::vector<std::string> problems; // structural problems (dimensions, pi)
  std::vector<KernelDiagnostics> kernels;
  bool passed = false;

  // One line per violated invariant; empty when passed.
  std::vector<std::string> violations() const {
    std::vector<std::string> out = problems;
    for (const auto& k : kernels) {
      const std::string who = "kernel " + std::to_string(k.index);
      if (!k.shape_ok) continue;
      if (k.max_row_sum_deviation > row_tolerance)
        out.push_back(who + ": row " + std::to_string(k.worst_row) + " sum deviates from 1 by " +
                      detail::fmt(k.max_row_sum_deviation) + " (tolerance " + detail::fmt(row_tolerance) + ")");
      if (k.max_negative_entry > row_tolerance)
        out.push_back(who + ": negative entry of magnitude " + detail::fmt(k.max_negative_entry) +
                      " (tolerance " + detail::fmt(row_tolerance) + ")");
      if (k.detailed_balance_relative > reversibility_tolerance)
        out.push_back(who + ": detailed-balance residual " + detail::fmt(k.detailed_balance_residual) +
                      " at (" + std::to_string(k.worst_x) + "," + std::to_string(k.worst_y) +
                      "), relative " + detail::fmt(k.detailed_balance_relative) + " (tolerance " +
                      detail::fmt(reversibility_tolerance) + ")");
    }
    return out;
  }
};

/// Check pi and a list of raw matrices against the family invariants.
/// Never throws; inspect `passed` and `violations()`.
inline DiagnosticsReport validate_family(const Vector& pi, std::span<const Matrix> kernels, double row_tol,
                                         double rev_tol) {
  DiagnosticsReport rep;
  rep.row_tolerance = row_tol;
  rep.reversibility_tolerance = rev_tol;
  const Eigen::Index n = pi.size();
  if (n == 0) rep.problems.push_back("pi is empty");
  if (kernels.empty()) rep.problems.push_back("family has no kernels");
  if (n > 0) {
    rep.pi_sum_deviation = std::abs(pi.sum() - 1.0);
    rep.min_pi = pi.minCoeff();
    if (!pi.allFinite()) rep.problems.push_back("pi has non-finite entries");
    if (rep.pi_sum_deviation > row_tol)
      rep.problems.push_back("pi sums to 1 - " + detail::fmt(1.0 - pi.sum()) + " (deviation " +
                             detail::fmt(rep.pi_sum_deviation) + ", tolerance " + detail::fmt(row_tol) + ")");
    if (rep.min_pi <= 0.0)
      rep.problems.push_back("pi has a non-positive weight " + detail::fmt(rep.min_pi) +
                             " (degenerate states are not supported)");
  }
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    const Matrix& m = kernels[i];
    KernelDiagnostics d;
    d.index = i;
    if (m.rows() != n || m.cols() != n) {
      d.shape_ok = false;
      rep.problems.push_back("kernel " + std::to_string(i) + " is " + std::to_string(m.rows()) + "x" +
                             std::to_string(m.cols()) + ", expected " + std::to_string(n) + "x" +
                             std::to_string(n));
      rep.kernels.push_back(d);
      continue;
    }
    double flow_scale = 0.0;
    for (Eigen::Index x = 0; x < n; ++x) {
      const double dev = std::abs(m.row(x).sum() - 1.0);
      if (dev > d.max_row_sum_deviation || !std::isfinite(dev)) {
        d.max_row_sum_deviation = dev;
        d.worst_row = static_cast<std::size_t>(x);
      }
      d.max_negative_entry = std::max(d.max_negative_entry, -m.row(x).minCoeff());
      for (Eigen::Index y = 0; y < n; ++y) {
        flow_scale = std::max(flow_scale, std::abs(pi[x] * m(x, y)));
        const double r = std::abs(pi[x] * m(x, y) - pi[y] * m(y, x));
        if (r > d.detailed_balance_residual) {
          d.detailed_balance_residual = r;
          d.worst_x = static_cast<std::size_t>(x);
          d.worst_y = static_cast<std::size_t>(y);
        }
      }
    }
    d.detailed_balance_relative = flow_scale > 0.0 ? d.detailed_balance_residual / flow_scale : 0.0;
    rep.kernels.push_back(d);
  }
  rep.passed = rep.violations().empty();
  return rep;
}

inline DiagnosticsReport validate_family(const Vector& pi, std::span<const Matrix> kernels, double tol) {
  return validate_family(pi, kernels, tol, tol);
}

/// Ordered list of pi-reversible kernels sharing the target pi.
class KernelFamily {
public:
  KernelFamily(StateSpace space, Dist pi, std::vector<Kernel> kernels)
      : space_(std::move(space)), pi_(std::move(pi)), kernels_(std::move(kernels)) {
    if (space_.n != pi_.size())
      throw dimension_error("state space has " + std::to_string(space_.n) + " states but pi has " +
                            std::to_string(pi_.size()));
    std::vector<Matrix> raw;
    raw.reserve(kernels_.size());
    for (const auto& k : kernels_) raw.push_back(k.matrix());
    const auto rep = validate_family(pi_.weights(), raw, tau_stoch, tau_rev);
    if (!rep.passed) {
      std::string msg = "invalid kernel family:";
      for (const auto& v : rep.violations()) msg += "\n  " + v;
      throw validation_error(msg);
    }
  }

  KernelFamily(const Dist& pi, std::vector<Kernel> kernels)
      : KernelFamily(StateSpace(pi.size()), pi, std::move(kernels)) {}

  const StateSpace& space() const { return space_; }
  const Dist& pi() const { return pi_; }
  std::span<const Kernel> kernels() const { return kernels_; }
  const Kernel& operator[](std::size_t i) const { return kernels_.at(i); }
  std::size_t n() const { return space_.n; }
  std::size_t k() const { return kernels_.size(); }

private:
  StateSpace space_;
  Dist pi_;
  std::vector<Kernel> kernels_;
};

namespace detail {

inline void require_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw dimension_error(std::string(what) + ": length " + std::to_string(got) + " does not match " +
                          std::to_string(want));
}

} // namespace detail

/// <f, g>_pi = sum_x pi(x) f(x) g(x).
inline double inner(const Vector& f, const Vector& g, const Dist& pi) {
  detail::require_size(static_cast<std::size_t>(f.size()), pi.size(), "inner");
  detail::require_size(static_cast<std::size_t>(g.size()), pi.size(), "inner");
  return (pi.weights().array() * f.array() * g.array()).sum();
}

inline double inner(const ObsFunction& f, const ObsFunction& g, const Dist& pi) {
  return inner(f.values(), g.values(), pi);
}

inline double mean(const Vector& f, const Dist& pi) {
  detail::require_size(static_cast<std::size_t>(f.size()), pi.size(), "mean");
  return pi.weights().dot(f);
}

// Constants map to exactly zero.
inline Vector center(const Vector& f, const Dist& pi) {
  if (f.size() > 0 && f.maxCoeff() == f.minCoeff()) {
    detail::require_size(static_cast<std::size_t>(f.size()), pi.size(), "center");
    return Vector::Zero(f.size());
  }
  return f.array() - mean(f, pi);
}

/// f - pi(f), which lies in L^2_0(pi).
inline ObsFunction center(const ObsFunction& f, const Dist& pi) { return ObsFunction(center(f.values(), pi)); }

/// L^2(pi) adjoint of a matrix operator: D^{-1} K^T D with D = diag(pi).
inline Matrix adjoint_matrix(const Matrix& k, const Dist& pi) {
  const Vector& w = pi.weights();
  return w.cwiseInverse().asDiagonal() * k.transpose() * w.asDiagonal();
}

/// Kernel index reached from `j` after `power` steps of the forward cycle
/// j -> j+1 -> ... -> k-1 -> 0. Negative powers walk backwards.
inline std::size_t cycle_index(std::size_t j, long long power, std::size_t k) {
  if (k == 0 || j >= k)
    throw index_error("cycle index " + std::to_string(j) + " out of range for cycle length " + std::to_string(k));
  const long long kk = static_cast<long long>(k);
  long long r = (static_cast<long long>(j) + power % kk) % kk;
  if (r < 0) r += kk;
  return static_cast<std::size_t>(r);
}

/// Random-scan kernel (1/k) sum_j K_j. Each entry is summed in sorted order so
/// the result is bitwise independent of the family's ordering.
inline Kernel random_scan(const KernelFamily& fam) {
  const std::size_t k = fam.k();
  if (k == 0) throw validation_error("random scan of an empty family");
  const Eigen::Index n = detail::idx(fam.n());
  Matrix out(n, n);
  std::vector<double> vals(k);
  for (Eigen::Index x = 0; x < n; ++x)
    for (Eigen::Index y = 0; y < n; ++y) {
      for (std::size_t j = 0; j < k; ++j) vals[j] = fam[j].matrix()(x, y);
      std::sort(vals.begin(), vals.end());
      double s = 0.0;
      for (double v : vals) s += v;
      out(x, y) = s / static_cast<double>(k);
    }
  return Kernel(std::move(out), detail::unchecked);
}

/// K_q K_{q+1} ... K_{q+s-1} (indices mod k); the identity when s == 0.
inline Matrix cycle_product(const KernelFamily& fam, std::size_t q, std::size_t steps) {
  if (q >= fam.k()) throw index_error("kernel index " + std::to_string(q) + " out of range");
  const Eigen::Index n = detail::idx(fam.n());
  Matrix out = Matrix::Identity(n, n);
  for (std::size_t s = 0; s < steps; ++s) out = out * fam[(q + s) % fam.k()].matrix();
  return out;
}

inline Kernel compose_cycle(const KernelFamily& fam, std::size_t q, std::size_t steps) {
  return Kernel(cycle_product(fam, q, steps), detail::unchecked);
}

/// Gibbs kernel on an n1 x n2 grid resampling one coordinate from its exact
/// conditional under `joint`. State (a, b) has flat index a * n2 + b;
/// coordinate 0 is a, coordinate 1 is b.
inline Kernel build_gibbs(const Dist& joint, std::size_t n1, std::size_t n2, int coordinate) {
  if (n1 == 0 || n2 == 0 || joint.size() != n1 * n2)
    throw dimension_error("joint of size " + std::to_string(joint.size()) + " is not a " + std::to_string(n1) +
                          "x" + std::to_string(n2) + " grid");
  if (coordinate != 0 && coordinate != 1) throw index_error("Gibbs coordinate must be 0 or 1");
  const Eigen::Index n = detail::idx(n1 * n2);
  Matrix out = Matrix::Zero(n, n);
  auto flat = [n2](std::size_t a, std::size_t b) { return detail::idx(a * n2 + b); };
  if (coordinate == 0) {
    for (std::size_t b = 0; b < n2; ++b) {
      double mass = 0.0;
      for (std::size_t a = 0; a < n1; ++a) mass += joint[a * n2 + b];
      if (!(mass > 0.0))
        throw degenerate_conditional_error("zero-probability slice: second coordinate = " + std::to_string(b));
      for (std::size_t a = 0; a < n1; ++a)
        for (std::size_t a2 = 0; a2 < n1; ++a2) out(flat(a, b), flat(a2, b)) = joint[a2 * n2 + b] / mass;
    }
  } else {
    for (std::size_t a = 0; a < n1; ++a) {
      double mass = 0.0;
      for (std::size_t b = 0; b < n2; ++b) mass += joint[a * n2 + b];
      if (!(mass > 0.0))
        throw degenerate_conditional_error("zero-probability slice: first coordinate = " + std::to_string(a));
      for (std::size_t b = 0; b < n2; ++b)
        for (std::size_t b2 = 0; b2 < n2; ++b2) out(flat(a, b), flat(a, b2)) = joint[a * n2 + b2] / mass;
    }
  }
  return Kernel(std::move(out), detail::unchecked);
}

/// Metropolis-Hastings kernel for `pi` with proposal `q`. The accepted flow
/// min(pi(x)q(x,y), pi(y)q(y,x)) is symmetric, so detailed balance holds to
/// rounding.
inline Kernel build_metropolis(const Dist& pi, const Kernel& proposal) {
  const std::size_t n = pi.size();
  detail::require_size(proposal.size(), n, "build_metropolis proposal");
  const Matrix& q = proposal.matrix();
  const Vector& w = pi.weights();
  const Eigen::Index nn = detail::idx(n);
  Matrix out = Matrix::Zero(nn, nn);
  for (Eigen::Index x = 0; x < nn; ++x) {
    if (!(w[x] > 0.0)) {
      out(x, x) = 1.0;
      continue;
    }
    double off = 0.0;
    for (Eigen::Index y = 0; y < nn; ++y) {
      if (y == x) continue;
      const double flow = std::min(w[x] * q(x, y), w[y] * q(y, x));
      out(x, y) = flow / w[x];
      off += out(x, y);
    }
    out(x, x) = std::max(0.0, 1.0 - off);
  }
  return Kernel(std::move(out), detail::unchecked);
}

/// (1 - a) K + a I.
inline Kernel lazy(const Kernel& k, double a) {
  if (!(a >= 0.0 && a <= 1.0)) throw validation_error("laziness " + detail::fmt(a) + " outside [0, 1]");
  const Eigen::Index n = k.matrix().rows();
  return Kernel((1.0 - a) * k.matrix() + a * Matrix::Identity(n, n), detail::unchecked);
}

/// Reachability of every state from state 0 and of state 0 from every state
/// over the graph of positive entries.
inline bool is_irreducible(const Matrix& m) {
  const Eigen::Index n = m.rows();
  auto reach_all = [&](bool transpose) {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::queue<Eigen::Index> todo;
    todo.push(0);
    seen[0] = 1;
    Eigen::Index count = 1;
    while (!todo.empty()) {
      const Eigen::Index x = todo.front();
      todo.pop();
      for (Eigen::Index y = 0; y < n; ++y) {
        const double v = transpose ? m(y, x) : m(x, y);
        if (v > 0.0 && !seen[static_cast<std::size_t>(y)]) {
          seen[static_cast<std::size_t>(y)] = 1;
          ++count;
          todo.push(y);
        }
      }
    }
    return count == n;
  };
  return n > 0 && reach_all(false) && reach_all(true);
}

/// Seeded random distribution with weights bounded away from zero.
inline Dist random_dist(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw validation_error("distribution must have at least one state");
  engine gen(derive_seed(seed, 0x5eed));
  Vector w(detail::idx(n));
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = 0.1 + uniform01(gen);
  w /= w.sum();
  // Put the rounding residue on the largest weight so the sum is 1 to an ulp.
  Eigen::Index imax = 0;
  w.maxCoeff(&imax);
  w[imax] += 1.0 - w.sum();
  return Dist(std::move(w));
}

/// Metropolized random proposal for `pi`, deterministic in `seed`. Proposals
/// have a random symmetric sparsity pattern; up to 100 seed-derived attempts
/// are made to obtain an irreducible kernel.
inline Kernel random_reversible(const Dist& pi, std::uint64_t seed) {
  const Eigen::Index n = detail::idx(pi.size());
  constexpr int max_attempts = 100;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    engine gen(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    Matrix mask = Matrix::Zero(n, n);
    for (Eigen::Index x = 0; x < n; ++x)
      for (Eigen::Index y = x; y < n; ++y) {
        const double keep = (x == y || uniform01(gen) < 0.6) ? 1.0 : 0.0;
        mask(x, y) = mask(y, x) = keep;
      }
    Matrix q(n, n);
    for (Eigen::Index x = 0; x < n; ++x) {
      for (Eigen::Index y = 0; y < n; ++y) q(x, y) = mask(x, y) * (0.05 + uniform01(gen));
      q.row(x) /= q.row(x).sum();
    }
    Kernel k = build_metropolis(pi, Kernel(std::move(q), detail::unchecked));
    if (is_irreducible(k.matrix())) return k;
  }
  throw validation_error("random_reversible: no irreducible kernel after " + std::to_string(max_attempts) +
                         " attempts");
}

} // namespace scanvar
