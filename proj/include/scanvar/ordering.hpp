#pragma once

// Checkers for the variance-ordering results built on the embedding:
// random scan vs deterministic scan for two kernels (with the skew-part gap
// bound), the variational representations behind it, Peskun-type comparison
// of two cycles along a linear path of kernels, and the palindromic cycles
// for which that comparison extends beyond two kernels.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "scanvar/embedding.hpp"
#include "scanvar/errors.hpp"
#include "scanvar/kernels.hpp"
#include "scanvar/rng.hpp"
#include "scanvar/variance.hpp"

namespace scanvar {

/// Eigenvalues in (-tau_eig, 0) count as zero in semidefiniteness verdicts.
inline constexpr double tau_eig = 1e-10;

namespace detail {

inline void require_two(const KernelFamily& fam, const char* what) {
  if (fam.k() != 2)
    throw precondition_error(std::string(what) + " needs exactly two kernels, family has " + std::to_string(fam.k()));
}

inline void require_compatible(const KernelFamily& a, const KernelFamily& b) {
  if (a.n() != b.n() || a.k() != b.k())
    throw precondition_error("mismatched families: " + std::to_string(a.n()) + " states x " + std::to_string(a.k()) +
                             " kernels vs " + std::to_string(b.n()) + " x " + std::to_string(b.k()));
  if ((a.pi().weights() - b.pi().weights()).cwiseAbs().maxCoeff() > tau_num)
    throw precondition_error("mismatched families: target distributions differ");
}

} // namespace detail

/// Lower bound on var_rand - var_strat for two kernels:
/// lambda^2 <A g, (I - lambda S)^{-1} A g> with
/// g = (I - lambda T*)^{-1} (I - lambda S) (I - lambda T)^{-1} fbar,
/// scaled by 2/k like the variance itself.
inline double gap_lower_bound(const KernelFamily& fam, const Vector& f, double lambda) {
  detail::require_two(fam, "gap_lower_bound");
  detail::check_lambda(lambda);
  const Vector fc = detail::centered_obs(fam, f);
  if (lambda == 0.0) return 0.0;
  const EmbeddedOperator op(fam);
  const BlockVector fbar = BlockVector::replicate(fc, fam.k());
  const BlockVector x = op.solve(Op::T, lambda, fbar);
  const BlockVector h = x - lambda * symmetric_part(fam, x);
  const BlockVector g = op.solve(Op::T_adjoint, lambda, h);
  const BlockVector a = skew_part(fam, g);
  const BlockVector y = op.solve(Op::S, lambda, a);
  return (2.0 / static_cast<double>(fam.k())) * lambda * lambda * inner(a, y, fam.pi());
}

/// Both schemes at one lambda; the gap bound is NaN unless k == 2.
inline VarianceReport variance_report(const KernelFamily& fam, const Vector& f, double lambda,
                                      Method method = Method::resolvent, int series_terms = default_series_terms) {
  VarianceReport r;
  r.lambda = lambda;
  const auto s = var_lambda_strat_detailed(fam, f, lambda, method, series_terms);
  r.var_strat = s.value;
  r.method = s.method;
  r.truncation_bound = s.truncation_bound;
  r.var_rand = var_lambda_rand(fam, f, lambda);
  r.gap = r.var_rand - r.var_strat;
  r.gap_lower_bound =
      fam.k() == 2 ? gap_lower_bound(fam, f, lambda) : std::numeric_limits<double>::quiet_NaN();
  return r;
}

struct OrderingReport {
  double lambda = 0.0;
  double var_rand = 0.0;
  double var_strat = 0.0;
  double gap = 0.0;
  double gap_lower_bound = 0.0;
  Method method = Method::resolvent;
  double truncation_bound = 0.0;
  bool ordering_holds = false; // gap >= -tol
  bool bound_holds = false;    // gap >= gap_lower_bound - tol
};

// tol is tau_num, widened by the truncation bound when var_strat came from a
// truncated series.
inline OrderingReport to_ordering_report(const VarianceReport& v) {
  OrderingReport o;
  o.lambda = v.lambda;
  o.var_rand = v.var_rand;
  o.var_strat = v.var_strat;
  o.gap = v.gap;
  o.gap_lower_bound = v.gap_lower_bound;
  o.method = v.method;
  o.truncation_bound = v.truncation_bound;
  const double tol = tau_num + v.truncation_bound;
  o.ordering_holds = v.gap >= -tol;
  o.bound_holds = std::isnan(v.gap_lower_bound) || v.gap >= v.gap_lower_bound - tol;
  return o;
}

/// var_rand >= var_strat for two kernels at every lambda in the grid, plus a
/// lambda = 1 row from the asymptotic variances when the cycle covariances are
/// absolutely summable. The limit row reports a gap bound of 0.
inline std::vector<OrderingReport> check_main_theorem(const KernelFamily& fam, const Vector& f,
                                                      std::span<const double> lambdas,
                                                      Method method = Method::resolvent,
                                                      int series_terms = default_series_terms) {
  detail::require_two(fam, "check_main_theorem");
  std::vector<OrderingReport> out;
  for (double l : lambdas) out.push_back(to_ordering_report(variance_report(fam, f, l, method, series_terms)));
  if (summability_check(fam, f).absolutely_summable) {
    VarianceReport v;
    v.lambda = 1.0;
    v.method = Method::limit;
    v.var_strat = var_limit(fam, f, Scheme::strat);
    v.var_rand = var_limit(fam, f, Scheme::rand);
    v.gap = v.var_rand - v.var_strat;
    v.gap_lower_bound = 0.0;
    out.push_back(to_ordering_report(v));
  }
  return out;
}

struct BellmanResult {
  double value = 0.0;
  Vector argmax;
};

/// 2 <f, g>_w - <g, Op g>_w.
inline double bellman_objective(const Matrix& op, const Vector& weights, const Vector& f, const Vector& g) {
  return 2.0 * (weights.array() * f.array() * g.array()).sum() -
         (weights.array() * g.array() * (op * g).array()).sum();
}

/// sup_g 2<f,g>_w - <g, Op g>_w = <f, Op^{-1} f>_w, attained at g = Op^{-1} f,
/// for Op self-adjoint and positive definite in the w-weighted inner product.
/// Pass pi for L^2(pi) and pi tiled k times for block vectors.
inline BellmanResult bellman_value(const Matrix& op, const Vector& weights, const Vector& f) {
  const Eigen::Index n = op.rows();
  if (op.cols() != n || weights.size() != n || f.size() != n)
    throw dimension_error("bellman_value: operator, weights and f must agree in size");
  if (!(weights.minCoeff() > 0.0)) throw precondition_error("bellman_value: weights must be positive");
  const Matrix wop = weights.asDiagonal() * op;
  const double scale = std::max(1.0, wop.cwiseAbs().maxCoeff());
  const double asym = (wop - wop.transpose()).cwiseAbs().maxCoeff();
  if (asym > tau_num * scale)
    throw precondition_error("bellman_value: operator is not self-adjoint (asymmetry " + detail::fmt(asym) + ")");
  const Vector sq = weights.cwiseSqrt();
  Matrix sym = sq.cwiseInverse().asDiagonal() * wop * sq.cwiseInverse().asDiagonal();
  sym = 0.5 * (sym + sym.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  if (!(lo > 1e-14 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff())))
    throw precondition_error("bellman_value: operator is not positive definite (min eigenvalue " +
                             detail::fmt(lo) + ")");
  BellmanResult r;
  r.argmax = Eigen::PartialPivLU<Matrix>(op).solve(f);
  r.value = (weights.array() * f.array() * r.argmax.array()).sum();
  return r;
}

struct VariationalReport {
  double lhs = 0.0; // <f, (I - lambda K)^{-1} f>
  double rhs = 0.0; // objective at g_hat
  double residual = 0.0;
  double max_probe_excess = 0.0; // max over probes of objective(g) - lhs
  bool holds = false;
};

/// Checks, for a pi-invariant (not necessarily reversible) K,
///   <f,(I - lambda K)^{-1} f> = 2<f,g> - <g,(I - lambda S)g> - lambda^2 <Ag,(I - lambda S)^{-1} Ag>
/// at g = (I - lambda K*)^{-1}(I - lambda S)(I - lambda K)^{-1} f, and that
/// random probes never exceed it.
inline VariationalReport variational_identity_check(const Matrix& k, const Dist& pi, const Vector& f, double lambda,
                                                    int probes = 200, std::uint64_t seed = 1) {
  detail::check_lambda(lambda);
  const Eigen::Index n = k.rows();
  if (k.cols() != n || static_cast<std::size_t>(n) != pi.size() || f.size() != n)
    throw dimension_error("variational_identity_check: dimensions disagree");
  const Vector& w = pi.weights();
  const double drift = (k.transpose() * w - w).cwiseAbs().maxCoeff();
  if (drift > tau_num)
    throw precondition_error("kernel does not leave pi invariant (max |pi K - pi| = " + detail::fmt(drift) + ")");
  const Matrix id = Matrix::Identity(n, n);
  const Matrix ks = adjoint_matrix(k, pi);
  const Matrix s = 0.5 * (k + ks);
  const Matrix a = 0.5 * (k - ks);
  const Eigen::PartialPivLU<Matrix> res_k(id - lambda * k), res_ks(id - lambda * ks), res_s(id - lambda * s);

  auto ip = [&](const Vector& x, const Vector& y) { return (w.array() * x.array() * y.array()).sum(); };
  auto objective = [&](const Vector& g) {
    const Vector ag = a * g;
    return 2.0 * ip(f, g) - ip(g, g - lambda * (s * g)) - lambda * lambda * ip(ag, res_s.solve(ag));
  };

  VariationalReport rep;
  rep.lhs = ip(f, res_k.solve(f));
  const Vector x = res_k.solve(f);
  const Vector g_hat = res_ks.solve(x - lambda * (s * x));
  rep.rhs = objective(g_hat);
  rep.residual = std::abs(rep.lhs - rep.rhs);

  engine gen(derive_seed(seed, 0xbe11));
  std::normal_distribution<double> normal;
  rep.max_probe_excess = -std::numeric_limits<double>::infinity();
  for (int p = 0; p < probes; ++p) {
    Vector g(n);
    for (Eigen::Index i = 0; i < n; ++i) g[i] = normal(gen);
    if (p % 2 == 0) g = g_hat + (0.1 / (1.0 + p)) * g; // probes near the maximizer
    rep.max_probe_excess = std::max(rep.max_probe_excess, objective(g) - rep.lhs);
  }
  const double scale = std::max(1.0, std::abs(rep.lhs));
  rep.holds = rep.residual <= 1e-9 * scale && (probes == 0 || rep.max_probe_excess <= 1e-10 * scale);
  return rep;
}

struct PeskunComparison {
  KernelFamily family_a; // larger Dirichlet forms
  KernelFamily family_b;
  std::vector<bool> dominance_per_kernel;
  std::vector<double> min_eigenvalue_per_kernel;
  double min_dirichlet_gap_eigenvalue = 0.0;
  bool dominates = false;
};

/// Whether <g,(I - B_i)g> <= <g,(I - A_i)g> for every g and i, i.e. whether
/// D^{1/2}(B_i - A_i)D^{-1/2} is positive semidefinite for every kernel.
inline PeskunComparison peskun_dominates(const KernelFamily& fam_a, const KernelFamily& fam_b) {
  detail::require_compatible(fam_a, fam_b);
  PeskunComparison cmp{fam_a, fam_b, {}, {}, std::numeric_limits<double>::infinity(), true};
  const Vector sq = fam_a.pi().weights().cwiseSqrt();
  for (std::size_t i = 0; i < fam_a.k(); ++i) {
    Matrix d = sq.asDiagonal() * (fam_b[i].matrix() - fam_a[i].matrix()) * sq.cwiseInverse().asDiagonal();
    d = 0.5 * (d + d.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> es(d, Eigen::EigenvaluesOnly);
    double lo = es.eigenvalues().minCoeff();
    if (lo > -tau_eig && lo < 0.0) lo = 0.0;
    cmp.min_eigenvalue_per_kernel.push_back(lo);
    cmp.dominance_per_kernel.push_back(lo >= 0.0);
    cmp.min_dirichlet_gap_eigenvalue = std::min(cmp.min_dirichlet_gap_eigenvalue, lo);
    cmp.dominates = cmp.dominates && lo >= 0.0;
  }
  return cmp;
}

struct PeskunRow {
  double lambda = 0.0;
  double var_strat_a = 0.0;
  double var_strat_b = 0.0;
  double gap = 0.0; // var_strat_b - var_strat_a
  Method method = Method::resolvent;
  bool ordering_holds = false; // var_strat_a <= var_strat_b + tol
};

struct PeskunReport {
  PeskunComparison comparison;
  std::vector<PeskunRow> rows;
  bool precondition_met = false; // dominance holds, so the ordering is implied
  bool ordering_holds = false;   // every row holds
};

/// Deterministic-scan variances of a dominating pair of two-kernel cycles. The
/// comparison is emitted even when dominance fails, flagged through
/// precondition_met.
inline PeskunReport check_peskun_theorem(const KernelFamily& fam_a, const KernelFamily& fam_b, const Vector& f,
                                         std::span<const double> lambdas, Method method = Method::resolvent,
                                         int series_terms = default_series_terms) {
  detail::require_two(fam_a, "check_peskun_theorem");
  PeskunReport rep{peskun_dominates(fam_a, fam_b), {}, false, true};
  rep.precondition_met = rep.comparison.dominates;
  auto push = [&](PeskunRow row, double tol) {
    row.gap = row.var_strat_b - row.var_strat_a;
    row.ordering_holds = row.gap >= -tol;
    rep.ordering_holds = rep.ordering_holds && row.ordering_holds;
    rep.rows.push_back(row);
  };
  for (double l : lambdas) {
    const auto a = var_lambda_strat_detailed(fam_a, f, l, method, series_terms);
    const auto b = var_lambda_strat_detailed(fam_b, f, l, method, series_terms);
    push({l, a.value, b.value, 0.0, method, false}, tau_num + a.truncation_bound + b.truncation_bound);
  }
  if (summability_check(fam_a, f).absolutely_summable && summability_check(fam_b, f).absolutely_summable)
    push({1.0, var_limit(fam_a, f, Scheme::strat), var_limit(fam_b, f, Scheme::strat), 0.0, Method::limit, false},
         tau_num);
  return rep;
}

/// Linear path between two compatible families: kernel i at beta is
/// beta A_i + (1 - beta) B_i, so the embedding is T(beta) = beta T_A + (1 - beta) T_B.
class BetaPath {
public:
  BetaPath(KernelFamily a, KernelFamily b) : a_(std::move(a)), b_(std::move(b)) {
    detail::require_compatible(a_, b_);
  }

  const KernelFamily& endpoint_a() const { return a_; }
  const KernelFamily& endpoint_b() const { return b_; }

  KernelFamily at(double beta) const {
    if (!(beta >= 0.0 && beta <= 1.0)) throw precondition_error("beta = " + detail::fmt(beta) + " outside [0, 1]");
    if (beta == 1.0) return a_;
    if (beta == 0.0) return b_;
    std::vector<Kernel> ks;
    for (std::size_t i = 0; i < a_.k(); ++i)
      ks.emplace_back(beta * a_[i].matrix() + (1.0 - beta) * b_[i].matrix(), detail::unchecked);
    return KernelFamily(a_.space(), a_.pi(), std::move(ks));
  }

  /// delta(beta) = <fbar, (I - lambda T(beta))^{-1} fbar>.
  double delta(const Vector& f, double lambda, double beta) const {
    const KernelFamily fam = at(beta);
    const BlockVector fbar = BlockVector::replicate(detail::centered_obs(fam, f), fam.k());
    return inner(fbar, resolvent_solve(Op::T, fam, lambda, fbar), fam.pi());
  }

  /// d delta / d beta = lambda <(I - lambda Shift^{-1}Delta(beta))^{-1} fbar,
  ///                            (Delta_A - Delta_B)(I - lambda Shift Delta(beta))^{-1} fbar>.
  double derivative(const Vector& f, double lambda, double beta) const {
    detail::check_lambda(lambda);
    const KernelFamily fam = at(beta);
    const EmbeddedOperator op(fam);
    const BlockVector fbar = BlockVector::replicate(detail::centered_obs(fam, f), fam.k());
    const BlockVector u = op.solve(Op::unshift_diag, lambda, fbar);
    const BlockVector v = op.solve(Op::shift_diag, lambda, fbar);
    const BlockVector dv = diag_apply(a_, v) - diag_apply(b_, v);
    return lambda * inner(u, dv, fam.pi());
  }

private:
  KernelFamily a_;
  KernelFamily b_;
};

inline double beta_derivative(const KernelFamily& fam_a, const KernelFamily& fam_b, const Vector& f, double lambda,
                              double beta) {
  if (fam_a.k() < 2) throw precondition_error("beta_derivative needs at least two kernels");
  return BetaPath(fam_a, fam_b).derivative(f, lambda, beta);
}

enum class PalindromeVariant { odd, even };

inline const char* to_string(PalindromeVariant v) { return v == PalindromeVariant::odd ? "odd" : "even"; }

/// Generator index at each cycle position. Odd (k = 2p-1):
/// Q_{p-1},...,Q_1,Q_0,Q_1,...,Q_{p-1}. Even (k = 2p-2):
/// Q_{p-2},...,Q_1,Q_0,Q_1,...,Q_{p-1}.
inline std::vector<std::size_t> palindrome_order(std::size_t p, PalindromeVariant v) {
  if (p < 2) throw precondition_error("palindromic cycle needs p >= 2 generators");
  std::vector<std::size_t> order;
  if (v == PalindromeVariant::odd) {
    for (std::size_t j = 0; j + 1 < 2 * p; ++j) order.push_back(j < p - 1 ? p - 1 - j : j - (p - 1));
  } else {
    for (std::size_t j = 0; j + 2 < 2 * p; ++j) order.push_back(j < p - 1 ? p - 2 - j : j + 2 - p);
  }
  return order;
}

/// Cycle positions about which the palindrome is symmetric.
inline std::vector<std::size_t> palindrome_centers(std::size_t p, PalindromeVariant v) {
  if (v == PalindromeVariant::odd) return {p - 1};
  return {p - 2, 2 * p - 3};
}

struct PalindromeEntry {
  PalindromeVariant variant = PalindromeVariant::odd;
  std::size_t k = 0;
  std::size_t index = 0; // perturbed cycle position
  double beta = 0.0;
  double component_gap = 0.0; // max |[(I - l S D)^{-1} fbar]_i - [(I - l S^{-1} D)^{-1} fbar]_i|
  double derivative = 0.0;
};

struct PalindromeReport {
  std::vector<PalindromeEntry> entries;
  double max_component_gap = 0.0;
  double min_derivative = 0.0;
  bool holds = false;
};

/// Builds both palindromic cycles from the generators and, at every center i,
/// compares the two resolvent-type block components and the beta derivative
/// against the cycle whose i-th kernel is lazified by `laziness` (so
/// Delta - Delta_check is positive semidefinite and supported on block i).
inline PalindromeReport palindrome_check(std::span<const Kernel> generators, const Dist& pi, double lambda,
                                         const Vector& f, std::span<const double> betas, double laziness = 0.5) {
  detail::check_lambda(lambda);
  const std::size_t p = generators.size();
  if (p < 2) throw precondition_error("palindrome_check needs at least two generators");
  PalindromeReport rep;
  rep.min_derivative = std::numeric_limits<double>::infinity();
  for (auto variant : {PalindromeVariant::odd, PalindromeVariant::even}) {
    const auto order = palindrome_order(p, variant);
    std::vector<Kernel> ks;
    for (std::size_t g : order) ks.push_back(generators[g]);
    const KernelFamily base(pi, ks);
    for (std::size_t i : palindrome_centers(p, variant)) {
      std::vector<Kernel> perturbed = ks;
      perturbed[i] = lazy(ks[i], laziness);
      const BetaPath path(KernelFamily(pi, perturbed), base);
      for (double beta : betas) {
        const KernelFamily fam = path.at(beta);
        const EmbeddedOperator op(fam);
        const BlockVector fbar = BlockVector::replicate(detail::centered_obs(fam, f), fam.k());
        const BlockVector fwd = op.solve(Op::shift_diag, lambda, fbar);
        const BlockVector bwd = op.solve(Op::unshift_diag, lambda, fbar);
        PalindromeEntry e{variant, order.size(), i, beta, 0.0, 0.0};
        e.component_gap = (fwd.component(i) - bwd.component(i)).cwiseAbs().maxCoeff();
        e.derivative = path.derivative(f, lambda, beta);
        rep.max_component_gap = std::max(rep.max_component_gap, e.component_gap);
        rep.min_derivative = std::min(rep.min_derivative, e.derivative);
        rep.entries.push_back(e);
      }
    }
  }
  rep.holds = rep.max_component_gap <= tau_num && rep.min_derivative >= -tau_num;
  return rep;
}

} // namespace scanvar
