#pragma once

// Seeded simulation of the random-scan chain, the deterministic-scan cycle
// and the product chain of the embedding, plus replicated estimation of
// var_pi(M^{1/2} S_M(f)).
//
// Every path is a pure function of (family, config). Replica r of an
// estimate uses seed derive_seed(master, r), so scheduling replicas on any
// number of threads gives identical results.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "scanvar/errors.hpp"
#include "scanvar/kernels.hpp"
#include "scanvar/rng.hpp"

namespace scanvar {

enum class SimScheme { rand, strat, embedded };

inline const char* to_string(SimScheme s) {
  switch (s) {
  case SimScheme::rand: return "rand";
  case SimScheme::strat: return "strat";
  case SimScheme::embedded: return "embedded";
  }
  return "?";
}

struct SimulationConfig {
  std::size_t steps = 1;    // M, number of recorded states
  std::size_t replicas = 1; // R
  std::uint64_t seed = 0;
  SimScheme scheme = SimScheme::strat;
  std::size_t burn_in = 0;

  void validate() const {
    if (steps < 1) throw config_error("simulation needs steps >= 1");
    if (replicas < 1) throw config_error("simulation needs replicas >= 1");
  }
};

/// Recorded states. For the embedded scheme each time step holds a k-tuple.
struct Path {
  SimScheme scheme = SimScheme::strat;
  std::size_t width = 1;
  std::vector<std::uint32_t> states; // row-major, length() x width

  std::size_t length() const { return width == 0 ? 0 : states.size() / width; }
  std::uint32_t at(std::size_t t, std::size_t coord = 0) const { return states[t * width + coord]; }
};

namespace detail {

// Inverse-CDF sampling: the first index whose cumulative weight strictly
// exceeds u, falling back to the last index of positive weight when rounding
// leaves the total below u.
class CdfTable {
public:
  explicit CdfTable(const Matrix& rows) : n_(static_cast<std::size_t>(rows.cols())) {
    cdf_.resize(static_cast<std::size_t>(rows.rows()) * n_);
    last_.resize(static_cast<std::size_t>(rows.rows()));
    for (Eigen::Index x = 0; x < rows.rows(); ++x) {
      double acc = 0.0;
      std::size_t last = 0;
      for (Eigen::Index y = 0; y < rows.cols(); ++y) {
        acc += rows(x, y);
        cdf_[static_cast<std::size_t>(x) * n_ + static_cast<std::size_t>(y)] = acc;
        if (rows(x, y) > 0.0) last = static_cast<std::size_t>(y);
      }
      last_[static_cast<std::size_t>(x)] = last;
    }
  }

  std::uint32_t sample(std::size_t row, double u) const {
    const auto first = cdf_.begin() + static_cast<std::ptrdiff_t>(row * n_);
    const auto it = std::upper_bound(first, first + static_cast<std::ptrdiff_t>(n_), u);
    if (it == first + static_cast<std::ptrdiff_t>(n_)) return static_cast<std::uint32_t>(last_[row]);
    return static_cast<std::uint32_t>(it - first);
  }

private:
  std::size_t n_;
  std::vector<double> cdf_;
  std::vector<std::size_t> last_;
};

struct Samplers {
  CdfTable initial;
  std::vector<CdfTable> kernels;

  explicit Samplers(const KernelFamily& fam) : initial(fam.pi().weights().transpose()) {
    for (const auto& k : fam.kernels()) kernels.emplace_back(k.matrix());
  }
};

inline Path run_path(const KernelFamily& fam, const Samplers& smp, const SimulationConfig& cfg) {
  const std::size_t k = fam.k();
  engine gen(derive_seed(cfg.seed, 0));
  Path path;
  path.scheme = cfg.scheme;
  path.width = cfg.scheme == SimScheme::embedded ? k : 1;
  path.states.reserve(cfg.steps * path.width);

  std::vector<std::uint32_t> cur(path.width), nxt(path.width);
  for (auto& c : cur) c = smp.initial.sample(0, uniform01(gen));

  const std::size_t total = cfg.burn_in + cfg.steps;
  for (std::size_t t = 0; t < total; ++t) {
    if (t >= cfg.burn_in) path.states.insert(path.states.end(), cur.begin(), cur.end());
    if (t + 1 == total) break;
    switch (cfg.scheme) {
    case SimScheme::rand: {
      const auto j = std::min(k - 1, static_cast<std::size_t>(uniform01(gen) * static_cast<double>(k)));
      cur[0] = smp.kernels[j].sample(cur[0], uniform01(gen));
      break;
    }
    case SimScheme::strat: cur[0] = smp.kernels[t % k].sample(cur[0], uniform01(gen)); break;
    case SimScheme::embedded:
      // coordinate i moves through K_i into slot i+1
      for (std::size_t i = 0; i < k; ++i) nxt[(i + 1) % k] = smp.kernels[i].sample(cur[i], uniform01(gen));
      cur.swap(nxt);
      break;
    }
  }
  return path;
}

} // namespace detail

/// One path of cfg.steps recorded states, X_0 ~ pi (pi^{(x)k} for the
/// embedded scheme). The cycle applies K_{t mod k} to move X_t -> X_{t+1}.
inline Path simulate(const KernelFamily& fam, const SimulationConfig& cfg) {
  cfg.validate();
  return detail::run_path(fam, detail::Samplers(fam), cfg);
}

/// X_t^{(t mod k)}: the coordinate of the product chain that follows the cycle
/// started at kernel 0.
inline Path embedded_component_extract(const Path& path) {
  if (path.scheme != SimScheme::embedded)
    throw config_error(std::string("component extraction needs an embedded path, got ") + to_string(path.scheme));
  Path out;
  out.scheme = SimScheme::strat;
  out.width = 1;
  const std::size_t len = path.length();
  out.states.reserve(len);
  for (std::size_t t = 0; t < len; ++t) out.states.push_back(path.at(t, t % path.width));
  return out;
}

struct VarianceEstimate {
  double point = 0.0;
  double standard_error = 0.0;
  std::size_t replicas_used = 0;
};

/// Sample variance over R replicas of M^{1/2} S_M(f - pi(f)). The standard
/// error comes from the spread of the squared deviations. The embedded scheme
/// uses the extracted cycle component.
inline VarianceEstimate estimate_variance(const KernelFamily& fam, const Vector& f, std::size_t steps,
                                          std::size_t replicas, std::uint64_t seed, SimScheme scheme,
                                          unsigned threads = 1) {
  if (replicas < 2) throw config_error("variance estimation needs at least two replicas");
  if (steps < 1) throw config_error("simulation needs steps >= 1");
  detail::require_size(static_cast<std::size_t>(f.size()), fam.n(), "observable");
  const Vector fc = center(f, fam.pi());
  const detail::Samplers smp(fam);
  std::vector<double> y(replicas);

  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t r = begin; r < replicas; r += stride) {
      SimulationConfig cfg{steps, 1, derive_seed(seed, r), scheme, 0};
      Path p = detail::run_path(fam, smp, cfg);
      if (scheme == SimScheme::embedded) p = embedded_component_extract(p);
      double s = 0.0;
      for (auto x : p.states) s += fc[static_cast<Eigen::Index>(x)];
      y[r] = s / std::sqrt(static_cast<double>(steps));
    }
  };
  const unsigned nthreads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(replicas)));
  if (nthreads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(work, t, nthreads);
  }

  const double rr = static_cast<double>(replicas);
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= rr;
  std::vector<double> d(replicas);
  double dmean = 0.0;
  for (std::size_t r = 0; r < replicas; ++r) {
    d[r] = (y[r] - mean) * (y[r] - mean);
    dmean += d[r];
  }
  dmean /= rr;
  double dvar = 0.0;
  for (double v : d) dvar += (v - dmean) * (v - dmean);
  dvar /= rr - 1.0;

  VarianceEstimate est;
  est.replicas_used = replicas;
  est.point = dmean * rr / (rr - 1.0);
  est.standard_error = std::sqrt(dvar / rr) * rr / (rr - 1.0);
  return est;
}

} // namespace scanvar
