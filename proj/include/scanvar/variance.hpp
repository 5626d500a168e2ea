#pragma once

// Exact discounted and asymptotic variances of ergodic averages under the
// random-scan kernel and the deterministic-scan cycle, exact finite-horizon
// variances from a stationary start, and exact finite-dimensional laws.
//
// Every routine centers f under pi before use. For the cycle,
//
//   var_lambda(strat) = ||f||^2 + (2/k) sum_q sum_{s>=1} lambda^s <f, K_q..K_{q+s-1} f>
//                     = (2/k) <fbar, (I - lambda T)^{-1} fbar> - ||f||^2,
//
// where fbar = (f, ..., f); the random-scan analogue is
// 2 <f, (I - lambda P)^{-1} f> - ||f||^2 with P the kernel average.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "scanvar/embedding.hpp"
#include "scanvar/errors.hpp"
#include "scanvar/kernels.hpp"

namespace scanvar {

enum class Scheme { strat, rand };
enum class Method { resolvent, series, limit };

inline const char* to_string(Scheme s) { return s == Scheme::strat ? "strat" : "rand"; }

inline const char* to_string(Method m) {
  switch (m) {
  case Method::resolvent: return "resolvent";
  case Method::series: return "series";
  case Method::limit: return "limit";
  }
  return "?";
}

inline constexpr int default_series_terms = 400;

struct StratVariance {
  double value = 0.0;
  Method method = Method::resolvent;
  double truncation_bound = 0.0; // series only: 2 ||f||^2 lambda^{N+1} / (1 - lambda)
};

/// Per-lambda comparison of the two schemes.
struct VarianceReport {
  double lambda = 0.0;
  double var_strat = 0.0;
  double var_rand = 0.0;
  double gap = 0.0; // var_rand - var_strat
  double gap_lower_bound = 0.0;
  Method method = Method::resolvent;
  double truncation_bound = 0.0;
};

namespace detail {

inline Vector centered_obs(const KernelFamily& fam, const Vector& f) {
  require_size(static_cast<std::size_t>(f.size()), fam.n(), "observable");
  return center(f, fam.pi());
}

inline bool is_zero_function(const Vector& fc, const Dist& pi) { return inner(fc, fc, pi) <= 1e-30; }

// Solve (I - C) x = b for pi-centered b, with C pi-invariant, by deflating the
// eigenvalue-1 direction: (I - C + 1 pi^T) x = b has the centered solution.
inline Vector solve_centered(const Matrix& c, const Dist& pi, const Vector& b) {
  const Eigen::Index n = c.rows();
  Matrix a = Matrix::Identity(n, n) - c + Vector::Ones(n) * pi.weights().transpose();
  Eigen::PartialPivLU<Matrix> lu(a);
  Vector x = lu.solve(b);
  const double res = (a * x - b).norm();
  if (!x.allFinite() || res > 1e-9 * std::max(1.0, b.norm()))
    throw reducibility_error("deflated system (I - C + 1 pi^T) is singular (residual " + fmt(res) +
                             "); the chain is reducible");
  return x;
}

// Spectral radius of C restricted to pi-centered functions.
inline double centered_spectral_radius(const Matrix& c, const Dist& pi) {
  const Eigen::Index n = c.rows();
  if (n == 1) return 0.0;
  Matrix d = c - Vector::Ones(n) * pi.weights().transpose();
  Eigen::EigenSolver<Matrix> es(d, false);
  if (es.info() != Eigen::Success) throw error("eigenvalue computation failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// a[m-1] = <f, K_q K_{q+1} ... K_{q+m-1} f>_pi for m = 1..max_lag, where the
// kernels cycle through `cycle` starting at q. Uses the row-vector recursion
// u_{m} = u_{m-1} K_{q+m-1}, u_0 = pi .* f.
inline std::vector<double> cycle_covariances(std::span<const Matrix> cycle, std::size_t q, const Dist& pi,
                                             const Vector& fc, std::size_t max_lag) {
  std::vector<double> out(max_lag);
  Vector u = pi.weights().cwiseProduct(fc);
  const std::size_t k = cycle.size();
  for (std::size_t m = 1; m <= max_lag; ++m) {
    u = cycle[(q + m - 1) % k].transpose() * u;
    out[m - 1] = u.dot(fc);
  }
  return out;
}

inline std::vector<Matrix> family_matrices(const KernelFamily& fam) {
  std::vector<Matrix> out;
  out.reserve(fam.k());
  for (const auto& k : fam.kernels()) out.push_back(k.matrix());
  return out;
}

} // namespace detail

/// Discounted variance of the deterministic-scan cycle.
inline StratVariance var_lambda_strat_detailed(const KernelFamily& fam, const Vector& f, double lambda,
                                               Method method = Method::resolvent,
                                               int series_terms = default_series_terms) {
  detail::check_lambda(lambda);
  const Vector fc = detail::centered_obs(fam, f);
  const Dist& pi = fam.pi();
  const double norm2 = inner(fc, fc, pi);
  const double k = static_cast<double>(fam.k());
  StratVariance out;
  out.method = method;
  if (method == Method::resolvent) {
    const BlockVector fbar = BlockVector::replicate(fc, fam.k());
    const BlockVector x = resolvent_solve(Op::T, fam, lambda, fbar);
    out.value = (2.0 / k) * inner(fbar, x, pi) - norm2;
    return out;
  }
  if (method != Method::series) throw precondition_error("var_lambda_strat: method must be resolvent or series");
  if (series_terms < 0) throw precondition_error("series_terms must be non-negative");
  const auto terms = static_cast<std::size_t>(series_terms);
  const auto mats = detail::family_matrices(fam);
  double acc = 0.0;
  for (std::size_t q = 0; q < fam.k(); ++q) {
    const auto a = detail::cycle_covariances(mats, q, pi, fc, terms);
    double lp = 1.0;
    for (std::size_t s = 1; s <= terms; ++s) {
      lp *= lambda;
      acc += lp * a[s - 1];
    }
  }
  out.value = norm2 + (2.0 / k) * acc;
  out.truncation_bound = 2.0 * norm2 * std::pow(lambda, static_cast<double>(terms) + 1.0) / (1.0 - lambda);
  return out;
}

inline double var_lambda_strat(const KernelFamily& fam, const Vector& f, double lambda,
                               Method method = Method::resolvent, int series_terms = default_series_terms) {
  return var_lambda_strat_detailed(fam, f, lambda, method, series_terms).value;
}

/// Discounted variance of the random-scan chain.
inline double var_lambda_rand(const KernelFamily& fam, const Vector& f, double lambda) {
  detail::check_lambda(lambda);
  const Vector fc = detail::centered_obs(fam, f);
  const Matrix p = random_scan(fam).matrix();
  const Eigen::Index n = p.rows();
  const Vector x = Eigen::PartialPivLU<Matrix>(Matrix::Identity(n, n) - lambda * p).solve(fc);
  return 2.0 * inner(fc, x, fam.pi()) - inner(fc, fc, fam.pi());
}

struct SummabilityReport {
  bool absolutely_summable = false;
  double cycle_contraction = 0.0;       // max_q spectral radius of the full cycle on centered functions
  std::vector<double> per_phase_radius; // one entry per starting kernel q
};

/// Whether the cycle covariances <f, K_q ... K_{q+s-1} f> are absolutely
/// summable, decided by the spectral radius of the full-cycle kernels
/// K_q K_{q+1} ... K_{q+k-1} on centered functions. A centered f that
/// vanishes is trivially summable.
inline SummabilityReport summability_check(const KernelFamily& fam, const Vector& f) {
  const Vector fc = detail::centered_obs(fam, f);
  SummabilityReport rep;
  for (std::size_t q = 0; q < fam.k(); ++q) {
    const double r = detail::centered_spectral_radius(cycle_product(fam, q, fam.k()), fam.pi());
    rep.per_phase_radius.push_back(r);
    rep.cycle_contraction = std::max(rep.cycle_contraction, r);
  }
  rep.absolutely_summable = rep.cycle_contraction < 1.0 - tau_num || detail::is_zero_function(fc, fam.pi());
  return rep;
}

/// Asymptotic variance (the lambda -> 1 limit) by exact solves on the centered
/// subspace.
///
/// For the cycle, the lag-s products with s = m k + r factor as
/// C_q^m K_q..K_{q+r-1} with C_q the full-cycle kernel, so each phase sums to
/// <f, (I - C_q)^{-1} (C_q f + sum_{r=1}^{k-1} K_q..K_{q+r-1} f)>.
inline double var_limit(const KernelFamily& fam, const Vector& f, Scheme scheme) {
  const Vector fc = detail::centered_obs(fam, f);
  const Dist& pi = fam.pi();
  if (detail::is_zero_function(fc, pi)) return 0.0;
  const double norm2 = inner(fc, fc, pi);

  if (scheme == Scheme::rand) {
    const Matrix p = random_scan(fam).matrix();
    // P is pi-reversible, so D^{1/2} P D^{-1/2} is symmetric.
    const Vector sq = pi.weights().cwiseSqrt();
    Matrix sym = sq.asDiagonal() * p * sq.cwiseInverse().asDiagonal();
    sym = 0.5 * (sym + sym.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    const auto ones = std::count_if(ev.begin(), ev.end(), [](double v) { return std::abs(v - 1.0) <= 1e-10; });
    if (ones > 1)
      throw reducibility_error("random-scan kernel has eigenvalue 1 with multiplicity " + std::to_string(ones));
    const Vector x = detail::solve_centered(p, pi, fc);
    return 2.0 * inner(fc, x, pi) - norm2;
  }

  const auto summ = summability_check(fam, fc);
  if (!summ.absolutely_summable)
    throw summability_error("cycle covariances are not absolutely summable (cycle contraction " +
                            detail::fmt(summ.cycle_contraction) + " >= 1)");
  const std::size_t k = fam.k();
  double total = 0.0;
  for (std::size_t q = 0; q < k; ++q) {
    Matrix partial = Matrix::Identity(fc.size(), fc.size());
    Vector b = Vector::Zero(fc.size());
    for (std::size_t r = 1; r < k; ++r) {
      partial = partial * fam[(q + r - 1) % k].matrix();
      b += partial * fc;
    }
    const Matrix full = partial * fam[(q + k - 1) % k].matrix();
    b += full * fc;
    total += inner(fc, detail::solve_centered(full, pi, b), pi);
  }
  return norm2 + (2.0 / static_cast<double>(k)) * total;
}

/// Exact var_pi(M^{1/2} S_M(f)) for a chain started at X_0 ~ pi:
/// ||f||^2 + (2/M) sum_{0<=i<j<=M-1} <f, K_{i->j} f>. The cycle uses kernel
/// K_{t mod k} for the move X_t -> X_{t+1}.
inline double finite_M_variance_exact(const KernelFamily& fam, const Vector& f, std::size_t horizon,
                                      Scheme scheme) {
  if (horizon == 0) throw precondition_error("horizon M must be at least 1");
  const Vector fc = detail::centered_obs(fam, f);
  const Dist& pi = fam.pi();
  std::vector<Matrix> cycle;
  if (scheme == Scheme::rand)
    cycle.push_back(random_scan(fam).matrix());
  else
    cycle = detail::family_matrices(fam);
  const std::size_t k = cycle.size();
  const std::size_t max_lag = horizon - 1;
  double cross = 0.0;
  for (std::size_t q = 0; q < k && q < horizon; ++q) {
    const auto a = detail::cycle_covariances(cycle, q, pi, fc, max_lag);
    for (std::size_t m = 1; m <= max_lag; ++m) {
      // number of start times i = q (mod k) with i + m <= M - 1
      const std::size_t last = horizon - 1 - m;
      if (last < q) break;
      const std::size_t count = (last - q) / k + 1;
      cross += static_cast<double>(count) * a[m - 1];
    }
  }
  return inner(fc, fc, pi) + 2.0 * cross / static_cast<double>(horizon);
}

/// Exact law of (X_0, ..., X_m), flattened with X_0 as the most significant
/// digit in base n.
struct JointLaw {
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<double> probs;

  double at(std::span<const std::size_t> states) const {
    if (states.size() != m + 1) throw dimension_error("joint law index needs m + 1 states");
    std::size_t idx = 0;
    for (std::size_t s : states) {
      if (s >= n) throw index_error("state " + std::to_string(s) + " out of range");
      idx = idx * n + s;
    }
    return probs[idx];
  }
};

enum class LawScheme { strat, embedded_component };

namespace detail {

inline std::size_t checked_pow(std::size_t base, std::size_t exp, std::size_t cap) {
  std::size_t out = 1;
  for (std::size_t i = 0; i < exp; ++i) {
    if (out > cap / std::max<std::size_t>(base, 1)) return cap + 1;
    out *= base;
  }
  return out;
}

} // namespace detail

inline constexpr std::size_t joint_law_cap = 1'000'000;

/// Exact finite-dimensional law of the deterministic-scan chain, either
/// directly or as the diagonal component X_t^{(t mod k)} of the product chain
/// that moves every coordinate at once (coordinate i feeds coordinate i+1
/// through K_i), started from pi^{(x)k}.
inline JointLaw joint_law_exact(const KernelFamily& fam, std::size_t m, LawScheme scheme) {
  const std::size_t n = fam.n(), k = fam.k();
  const std::size_t table = detail::checked_pow(n, m + 1, joint_law_cap);
  if (table > joint_law_cap)
    throw table_size_error("joint law table n^(m+1) exceeds " + std::to_string(joint_law_cap) + " entries");
  const Vector& pi = fam.pi().weights();
  JointLaw law{n, m, {}};

  if (scheme == LawScheme::strat) {
    std::vector<double> cur(pi.data(), pi.data() + n);
    for (std::size_t t = 0; t < m; ++t) {
      const Matrix& kt = fam[t % k].matrix();
      std::vector<double> next(cur.size() * n);
      for (std::size_t h = 0; h < cur.size(); ++h) {
        const auto x = detail::idx(h % n);
        for (std::size_t y = 0; y < n; ++y) next[h * n + y] = cur[h] * kt(x, detail::idx(y));
      }
      cur = std::move(next);
    }
    law.probs = std::move(cur);
    return law;
  }

  // Product chain over tuples (x^(0), ..., x^(k-1)), tuple index in base n
  // with coordinate 0 most significant.
  const std::size_t tuples = detail::checked_pow(n, k, 1000);
  if (tuples > 1000 || table * tuples > 10 * joint_law_cap)
    throw table_size_error("embedded joint law needs n^k <= 1000 and n^(m+1+k) <= 1e7");
  auto digit = [&](std::size_t tuple, std::size_t coord) {
    std::size_t div = 1;
    for (std::size_t c = coord + 1; c < k; ++c) div *= n;
    return (tuple / div) % n;
  };
  Matrix prod(detail::idx(tuples), detail::idx(tuples));
  for (std::size_t a = 0; a < tuples; ++a)
    for (std::size_t b = 0; b < tuples; ++b) {
      double p = 1.0;
      for (std::size_t i = 0; i < k; ++i)
        p *= fam[i](digit(a, i), digit(b, (i + 1) % k));
      prod(detail::idx(a), detail::idx(b)) = p;
    }
  // state (history h, tuple a) with probability cur[h * tuples + a]
  std::vector<double> cur(tuples * n, 0.0);
  for (std::size_t a = 0; a < tuples; ++a) {
    double p = 1.0;
    for (std::size_t i = 0; i < k; ++i) p *= pi[detail::idx(digit(a, i))];
    cur[digit(a, 0) * tuples + a] = p;
  }
  std::size_t histories = n;
  for (std::size_t t = 0; t < m; ++t) {
    const std::size_t coord = (t + 1) % k;
    std::vector<double> next(histories * n * tuples, 0.0);
    for (std::size_t h = 0; h < histories; ++h)
      for (std::size_t a = 0; a < tuples; ++a) {
        const double p = cur[h * tuples + a];
        if (p == 0.0) continue;
        for (std::size_t b = 0; b < tuples; ++b) {
          const double pb = prod(detail::idx(a), detail::idx(b));
          if (pb == 0.0) continue;
          next[(h * n + digit(b, coord)) * tuples + b] += p * pb;
        }
      }
    cur = std::move(next);
    histories *= n;
  }
  law.probs.assign(histories, 0.0);
  for (std::size_t h = 0; h < histories; ++h)
    for (std::size_t a = 0; a < tuples; ++a) law.probs[h] += cur[h * tuples + a];
  return law;
}

} // namespace scanvar
