#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "support.hpp"

using namespace scanvar;
using namespace scanvar::testing;

namespace {

// Frequencies of consecutive pairs (X_t, X_{t+1}) over a single-coordinate path.
Matrix pair_counts(const Path& p, std::size_t n) {
  Matrix c = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t t = 0; t + 1 < p.length(); ++t) c(p.at(t), p.at(t + 1)) += 1.0;
  return c;
}

double chi_square(const std::vector<double>& observed, const std::vector<double>& expected) {
  double s = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i)
    if (expected[i] > 0.0) s += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
  return s;
}

} // namespace

TEST(Simulate, SameSeedSamePath) {
  const auto fam = random_family(5, 3, 4);
  for (auto s : {SimScheme::rand, SimScheme::strat, SimScheme::embedded}) {
    const SimulationConfig cfg{1000, 1, 99, s, 10};
    const Path a = simulate(fam, cfg), b = simulate(fam, cfg);
    EXPECT_EQ(a.states, b.states) << to_string(s);
    EXPECT_EQ(a.length(), 1000u);
    EXPECT_EQ(a.width, s == SimScheme::embedded ? 3u : 1u);
  }
  SimulationConfig other{1000, 1, 100, SimScheme::strat, 0};
  EXPECT_NE(simulate(fam, other).states, simulate(fam, SimulationConfig{1000, 1, 99, SimScheme::strat, 0}).states);
}

TEST(Simulate, IdentityKernelsFreezeTheState) {
  const KernelFamily fam(random_dist(4, 1), {Kernel::identity(4), Kernel::identity(4)});
  for (auto s : {SimScheme::rand, SimScheme::strat}) {
    const Path p = simulate(fam, {200, 1, 3, s, 0});
    for (std::size_t t = 1; t < p.length(); ++t) EXPECT_EQ(p.at(t), p.at(0));
  }
}

TEST(Simulate, RejectsBadConfig) {
  EXPECT_THROW(simulate(e1_family(), {0, 1, 0, SimScheme::strat, 0}), config_error);
  EXPECT_THROW(embedded_component_extract(simulate(e1_family(), {5, 1, 0, SimScheme::strat, 0})), config_error);
}

TEST(Simulate, CycleTransitionsFollowTheScheduledKernel) {
  const auto fam = e1_family();
  const std::size_t m = 100000;
  const Path p = simulate(fam, {m, 1, 2024, SimScheme::strat, 0});
  Matrix c[2] = {Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
  for (std::size_t t = 0; t + 1 < m; ++t) c[t % 2](p.at(t), p.at(t + 1)) += 1.0;
  for (int j = 0; j < 2; ++j)
    for (int x = 0; x < 2; ++x) {
      const double rows = c[j].row(x).sum();
      const double q = fam[static_cast<std::size_t>(j)].matrix()(x, 0);
      const double se = std::sqrt(q * (1 - q) / rows);
      EXPECT_NEAR(c[j](x, 0) / rows, q, 3 * se) << "kernel " << j << " row " << x;
    }
}

TEST(Simulate, MarginalsStayAtPi) {
  const auto fam = random_family(4, 3, 8);
  const std::size_t m = 60000;
  for (auto s : {SimScheme::rand, SimScheme::strat}) {
    const Path p = simulate(fam, {m, 1, 5, s, 0});
    Vector freq = Vector::Zero(4);
    for (auto x : p.states) freq[x] += 1.0;
    freq /= static_cast<double>(m);
    for (int x = 0; x < 4; ++x) {
      // dependent draws: allow a generous multiple of the iid standard error
      const double q = fam.pi().weights()[x];
      EXPECT_NEAR(freq[x], q, 12 * std::sqrt(q * (1 - q) / static_cast<double>(m))) << to_string(s);
    }
  }
}

TEST(Simulate, ExtractionPicksTheCycleCoordinate) {
  Path p;
  p.scheme = SimScheme::embedded;
  p.width = 2;
  p.states = {0, 1, 2, 3, 4, 5, 6, 7};
  EXPECT_EQ(embedded_component_extract(p).states, (std::vector<std::uint32_t>{0, 3, 4, 7}));
  p.width = 1;
  p.states = {5, 6, 7};
  EXPECT_EQ(embedded_component_extract(p).states, p.states);
}

TEST(Simulate, EmbeddedComponentPairsMatchExactLaw) {
  const auto fam = random_family(3, 2, 12);
  const auto law = joint_law_exact(fam, 1, LawScheme::embedded_component);
  const std::size_t m = 200000;
  const Path p = embedded_component_extract(simulate(fam, {m, 1, 77, SimScheme::embedded, 0}));
  // lag-1 pairs alternate between K_0 and K_1; the law is of (X_0, X_1) only,
  // so compare the pairs that start at even t.
  Matrix even = Matrix::Zero(3, 3);
  for (std::size_t t = 0; t + 1 < m; t += 2) even(p.at(t), p.at(t + 1)) += 1.0;
  const double ne = even.sum();
  for (std::size_t x = 0; x < 3; ++x)
    for (std::size_t y = 0; y < 3; ++y) {
      const std::array<std::size_t, 2> xy{x, y};
      const double q = law.at(xy);
      EXPECT_NEAR(even(detail::idx(x), detail::idx(y)) / ne, q, 4 * std::sqrt(q * (1 - q) / ne));
    }
  EXPECT_GT(pair_counts(p, 3).sum(), 0.0);
}

TEST(Simulate, EmbeddedAndCycleLawsAgreeByChiSquare) {
  const auto fam = random_family(2, 2, 31);
  const auto law = joint_law_exact(fam, 2, LawScheme::strat);
  const std::size_t reps = 20000;
  std::vector<double> obs_strat(8, 0.0), obs_emb(8, 0.0), expected(8);
  for (std::size_t i = 0; i < 8; ++i) expected[i] = law.probs[i] * static_cast<double>(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    const Path s = simulate(fam, {3, 1, derive_seed(5, r), SimScheme::strat, 0});
    const Path e = embedded_component_extract(simulate(fam, {3, 1, derive_seed(6, r), SimScheme::embedded, 0}));
    obs_strat[s.at(0) * 4 + s.at(1) * 2 + s.at(2)] += 1.0;
    obs_emb[e.at(0) * 4 + e.at(1) * 2 + e.at(2)] += 1.0;
  }
  // 7 degrees of freedom; 24.3 is the 0.999 quantile
  EXPECT_LT(chi_square(obs_strat, expected), 24.3);
  EXPECT_LT(chi_square(obs_emb, expected), 24.3);
}

TEST(EstimateVariance, ConstantObservableGivesZero) {
  const auto est = estimate_variance(e1_family(), Vector::Constant(2, 3.0), 64, 10, 1, SimScheme::strat);
  EXPECT_EQ(est.point, 0.0);
  EXPECT_EQ(est.standard_error, 0.0);
  EXPECT_EQ(est.replicas_used, 10u);
}

TEST(EstimateVariance, RequiresTwoReplicas) {
  EXPECT_THROW(estimate_variance(e1_family(), e1_f(), 10, 1, 1, SimScheme::strat), config_error);
}

TEST(EstimateVariance, E1WithinThreeStandardErrors) {
  const auto fam = e1_family();
  const std::size_t m = 4096, r = 200;
  for (auto s : {SimScheme::strat, SimScheme::rand, SimScheme::embedded}) {
    const auto est = estimate_variance(fam, e1_f(), m, r, 17, s, 2);
    const double exact = finite_M_variance_exact(fam, e1_f(), m, s == SimScheme::rand ? Scheme::rand : Scheme::strat);
    EXPECT_NEAR(est.point, exact, 3 * est.standard_error) << to_string(s);
  }
}

TEST(EstimateVariance, ThreadCountDoesNotChangeTheResult) {
  const auto fam = random_family(5, 2, 9);
  const Vector f = random_vector(5, 9);
  const auto one = estimate_variance(fam, f, 500, 37, 4, SimScheme::embedded, 1);
  const auto four = estimate_variance(fam, f, 500, 37, 4, SimScheme::embedded, 4);
  EXPECT_EQ(one.point, four.point);
  EXPECT_EQ(one.standard_error, four.standard_error);
}

TEST(EstimateVariance, StandardErrorShrinksWithReplicas) {
  const auto fam = e1_family();
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t r : {50u, 200u, 800u}) {
    const auto est = estimate_variance(fam, e1_f(), 256, r, 3, SimScheme::strat);
    EXPECT_LT(est.standard_error, prev);
    prev = est.standard_error;
  }
}
