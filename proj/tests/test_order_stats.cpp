#include <limits>
#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tailpass/order_stats.hpp"

using namespace tailpass;

namespace {

LatencyProfile prof_of(std::vector<double> t) { return LatencyProfile::from_latencies(t); }

}  // namespace

TEST(SortByLatency, SymmetricClientsTieInOriginalOrder) {
  SystemConfig cfg;
  std::vector<ClientProfile> cl{oracle::client(0, 2, 1), oracle::client(1, 8, 1)};
  const auto prof = sort_by_latency(cl, 5.0, cfg);
  EXPECT_EQ(prof.sorted_t[0], prof.sorted_t[1]);
  EXPECT_EQ(prof.perm, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(prof.gaps[0], 0.0);
}

TEST(SortByLatency, SingleClient) {
  SystemConfig cfg;
  std::vector<ClientProfile> cl{oracle::client(0, 2, 1)};
  const auto prof = sort_by_latency(cl, 5.0, cfg);
  EXPECT_EQ(prof.perm, std::vector<std::size_t>{0});
  EXPECT_TRUE(prof.gaps.empty());
}

TEST(SortByLatency, MatchesIndependentSort) {
  SystemConfig cfg;
  Rng rng(5);
  std::vector<ClientProfile> cl;
  for (int i = 0; i < 10; ++i)
    cl.push_back(oracle::client(i, rng.uniform(0, 10), rng.uniform(1, 5), rng.uniform(0.05, 0.15)));
  const double x = 3.3;
  std::vector<std::pair<double, int>> ref;
  for (const auto& c : cl) ref.emplace_back(latency(c, x, cfg), c.id);
  std::sort(ref.begin(), ref.end());
  const auto prof = sort_by_latency(cl, x, cfg);
  for (std::size_t k = 0; k < cl.size(); ++k) {
    EXPECT_EQ(prof.sorted_t[k], ref[k].first);
    EXPECT_EQ(cl[prof.perm[k]].id, ref[k].second);
  }
  for (std::size_t k = 0; k + 1 < cl.size(); ++k) EXPECT_GE(prof.gaps[k], 0.0);
}

TEST(ExpectedStraggler, SingleClient) {
  const auto prof = prof_of({2.0});
  for (long K : {1, 3, 40}) {
    EXPECT_EQ(expected_straggler(SamplingDistribution({1.0}), prof, K), 2.0);
    EXPECT_EQ(expected_straggler_gap_form(SamplingDistribution({1.0}), prof, K), 2.0);
  }
}

TEST(ExpectedStraggler, KOneIsMean) {
  const auto prof = prof_of({1.0, 1.5, 4.0});
  const SamplingDistribution q({0.2, 0.3, 0.5});
  EXPECT_NEAR(expected_straggler(q, prof, 1), 0.2 + 0.45 + 2.0, 1e-15);
  EXPECT_NEAR(expected_straggler_gap_form(q, prof, 1), 2.65, 1e-15);
}

TEST(ExpectedStraggler, TwoClassValue) {
  const auto prof = prof_of({1.0, 2.0});
  const SamplingDistribution q({0.5, 0.5});
  EXPECT_EQ(expected_straggler(q, prof, 2), 1.75);
  EXPECT_EQ(expected_straggler_gap_form(q, prof, 2), 1.75);
  // t_f + gap (1 - (1 - delta)^K)
  EXPECT_EQ(1.0 + 1.0 * (1.0 - 0.25), 1.75);
}

TEST(ExpectedStraggler, MatchesTupleEnumeration) {
  Rng rng(21);
  for (int k = 0; k < 30; ++k) {
    const std::size_t n = 2 + k % 4;
    const int K = 1 + k % 5;
    auto t = oracle::random_latencies(rng, n);
    std::sort(t.begin(), t.end());
    const auto q = oracle::random_simplex(rng, n);
    const double ref = oracle::enumerate_expected_max(t, q, K);
    EXPECT_LE(oracle::rel_err(expected_straggler(SamplingDistribution(q), prof_of(t), K), ref), 1e-13);
  }
}

TEST(ExpectedStraggler, UnsortedInputIsSortedFirst) {
  const std::vector<double> t{3.0, 1.0, 2.0};
  const auto prof = prof_of(t);
  const std::vector<double> q_orig{0.5, 0.3, 0.2};
  const SamplingDistribution qs(prof.to_sorted<double>(q_orig));
  EXPECT_NEAR(expected_straggler(qs, prof, 3), oracle::enumerate_expected_max(t, q_orig, 3), 1e-14);
}

TEST(GapForm, AllEqualLatencies) {
  const auto prof = prof_of({1.3, 1.3, 1.3, 1.3});
  const SamplingDistribution q({0.1, 0.2, 0.3, 0.4});
  EXPECT_EQ(expected_straggler_gap_form(q, prof, 7), 1.3);
  EXPECT_NEAR(expected_straggler(q, prof, 7), 1.3, 1e-15);
}

TEST(GapForm, AgreesWithPmfFormN8K20) {
  Rng rng(8);
  const auto prof = prof_of(oracle::random_latencies(rng, 8));
  const SamplingDistribution q(oracle::random_simplex(rng, 8));
  const double a = expected_straggler(q, prof, 20), b = expected_straggler_gap_form(q, prof, 20);
  EXPECT_LE(oracle::rel_err(a, b), 1e-12);
}

TEST(ExpectedStraggler, BoundsAndConcavity) {
  Rng rng(9);
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 2 + k % 10;
    const long K = 1 + k % 30;
    const auto prof = prof_of(oracle::random_latencies(rng, n));
    const auto q1 = oracle::random_simplex(rng, n), q2 = oracle::random_simplex(rng, n);
    const double f1 = expected_straggler(SamplingDistribution(q1), prof, K);
    const double f2 = expected_straggler(SamplingDistribution(q2), prof, K);
    EXPECT_GE(f1, prof.sorted_t.front() - 1e-15);
    EXPECT_LE(f1, prof.sorted_t.back() + 1e-15);
    const double lam = rng.uniform();
    std::vector<double> mix(n);
    for (std::size_t i = 0; i < n; ++i) mix[i] = lam * q1[i] + (1 - lam) * q2[i];
    const double fm = expected_straggler(SamplingDistribution::normalized(mix), prof, K);
    EXPECT_GE(fm, lam * f1 + (1 - lam) * f2 - 1e-12);
  }
}

TEST(ExpectedStraggler, MoreTailMassNeverLowersF) {
  Rng rng(10);
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 3 + k % 6;
    const auto prof = prof_of(oracle::random_latencies(rng, n));
    auto q = oracle::random_simplex(rng, n);
    const double f0 = expected_straggler(SamplingDistribution(q), prof, 5);
    q.back() += 0.3;
    const double f1 = expected_straggler(SamplingDistribution::normalized(q), prof, 5);
    EXPECT_GE(f1, f0 - 1e-15);
  }
}

TEST(ExpectedStraggler, DimensionMismatch) {
  const auto prof = prof_of({1.0, 2.0});
  try {
    expected_straggler(SamplingDistribution({0.2, 0.3, 0.5}), prof, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  EXPECT_THROW(expected_straggler_gap_form(SamplingDistribution({1.0}), prof, 2), Error);
  EXPECT_THROW(straggler_pmf(SamplingDistribution({1.0}), prof, 2), Error);
}

TEST(SamplingDistribution, RejectsInvalid) {
  EXPECT_THROW(SamplingDistribution({0.5, 0.6}), Error);
  EXPECT_THROW(SamplingDistribution({1.0, 0.0}), Error);
  EXPECT_THROW(SamplingDistribution(std::vector<double>{}), Error);
  const SamplingDistribution q({0.25, 0.75});
  EXPECT_EQ(q.cum(), (std::vector<double>{0.0, 0.25, 1.0}));
}

TEST(TailSensitivity, TwoClassValue) {
  const auto d = tail_sensitivity(SamplingDistribution({0.5, 0.5}), prof_of({1.0, 2.0}), 2);
  EXPECT_EQ(d, (std::vector<double>{1.0, 0.0}));
}

TEST(TailSensitivity, ZeroWhenAllEqual) {
  const auto d = tail_sensitivity(SamplingDistribution({0.2, 0.3, 0.5}), prof_of({2, 2, 2}), 4);
  for (double v : d) EXPECT_EQ(v, 0.0);
}

TEST(TailSensitivity, ShapeAndSimplexDirections) {
  Rng rng(12);
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t n = 2 + inst % 7;
    const long K = 1 + inst * 2;
    const auto prof = prof_of(oracle::random_latencies(rng, n));
    const auto q = oracle::random_simplex(rng, n);
    const auto d = tail_sensitivity(SamplingDistribution(q), prof, K);
    EXPECT_EQ(d.back(), 0.0);
    for (std::size_t s = 0; s + 1 < n; ++s) EXPECT_GE(d[s], d[s + 1]);
    for (int r = 0; r < 5; ++r) {
      const auto a = static_cast<std::size_t>(rng.uniform() * n);
      auto b = static_cast<std::size_t>(rng.uniform() * n);
      if (a == b) b = (a + 1) % n;
      auto f_at = [&](double h) {
        auto qq = q;
        qq[a] += h;
        qq[b] -= h;
        return expected_straggler_gap_form(SamplingDistribution::normalized(qq), prof, K);
      };
      const double h = 1e-4 * std::min(q[a], q[b]);
      const double fd = (4 * oracle::central_diff(f_at, 0.0, h) - oracle::central_diff(f_at, 0.0, 2 * h)) / 3;
      const double an = -(d[a] - d[b]);
      // d[a] and d[b] can nearly cancel; measure against the larger term plus the FD round-off floor
      const double floor = 100 * std::numeric_limits<double>::epsilon() * std::abs(f_at(0.0)) / h;
      EXPECT_LE(std::abs(fd - an), 1e-6 * std::max(std::abs(d[a]), std::abs(d[b])) + floor);
    }
  }
}

TEST(Hessian, ZeroGaps) {
  const auto h = straggler_hessian(SamplingDistribution({0.2, 0.3, 0.5}), prof_of({1, 1, 1}), 5);
  EXPECT_EQ(h.norm(), 0.0);
}

TEST(Hessian, TwoClassEntry) {
  const auto h = straggler_hessian(SamplingDistribution({0.5, 0.5}), prof_of({1.0, 2.0}), 2);
  EXPECT_EQ(h(0, 0), -2.0);
  EXPECT_EQ(h(0, 1), 0.0);
  EXPECT_EQ(h(1, 0), 0.0);
  EXPECT_EQ(h(1, 1), 0.0);
}

TEST(Hessian, KTooSmall) {
  try {
    straggler_hessian(SamplingDistribution({0.5, 0.5}), prof_of({1.0, 2.0}), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::KTooSmall);
  }
}

TEST(Hessian, NegativeSemidefiniteAndRank) {
  Rng rng(13);
  for (int inst = 0; inst < 10; ++inst) {
    const std::size_t n = 3 + inst % 5;
    auto t = oracle::random_latencies(rng, n);
    t[1] = t[0];  // one zero gap
    const auto prof = prof_of(t);
    const SamplingDistribution q(oracle::random_simplex(rng, n));
    const long K = 2 + inst;
    const auto h = straggler_hessian(q, prof, K);
    EXPECT_LE((h - h.transpose()).norm(), 1e-14 * (1 + h.norm()));
    const double scale = h.cwiseAbs().maxCoeff();
    for (int r = 0; r < 100; ++r) {
      Eigen::VectorXd v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = rng.normal();
      v.array() -= v.mean();
      EXPECT_LE(v.dot(h * v), 1e-10 * scale * v.squaredNorm());
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    int positive_gaps = 0;
    for (double g : prof.gaps) positive_gaps += g > 0.0;
    int rank = 0;
    for (int i = 0; i < es.eigenvalues().size(); ++i) {
      EXPECT_LE(es.eigenvalues()[i], 1e-10 * scale);
      rank += std::abs(es.eigenvalues()[i]) > 1e-9 * scale;
    }
    EXPECT_LE(rank, positive_gaps);
  }
}

TEST(Hessian, MatchesDifferenceOfGradients) {
  Rng rng(14);
  const auto prof = prof_of(oracle::random_latencies(rng, 5));
  const auto q = oracle::random_simplex(rng, 5);
  const long K = 6;
  const auto h = straggler_hessian(SamplingDistribution(q), prof, K);
  Eigen::VectorXd v(5);
  v << 0.3, -0.1, 0.2, -0.25, -0.15;
  // second directional derivative along v by central differences of f
  auto f_at = [&](double s) {
    std::vector<double> qq(5);
    for (int i = 0; i < 5; ++i) qq[i] = q[i] + s * v[i];
    return expected_straggler_gap_form(SamplingDistribution::normalized(qq), prof, K);
  };
  const double e = 1e-4;
  const double fd2 = (f_at(e) - 2 * f_at(0) + f_at(-e)) / (e * e);
  EXPECT_LE(oracle::rel_err(fd2, v.dot(h * v)), 1e-5);
}

TEST(StragglerPmf, Examples) {
  const auto pi = straggler_pmf(SamplingDistribution({0.5, 0.5}), prof_of({1.0, 2.0}), 2);
  EXPECT_EQ(pi, (std::vector<double>{0.25, 0.75}));
  const auto pu = straggler_pmf(SamplingDistribution::uniform(2), prof_of({1.0, 2.0}), 2);
  EXPECT_EQ(pu, (std::vector<double>{0.25, 0.75}));
  const SamplingDistribution q({0.1, 0.6, 0.3});
  const auto p1 = straggler_pmf(q, prof_of({1, 2, 3}), 1);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p1[i], q[i], 1e-16);
}

TEST(StragglerPmf, ValidPmfAndMatchesEnumeration) {
  Rng rng(15);
  for (int k = 0; k < 20; ++k) {
    const std::size_t n = 2 + k % 4;
    const int K = 1 + k % 4;
    auto t = oracle::random_latencies(rng, n);
    std::sort(t.begin(), t.end());
    const auto q = oracle::random_simplex(rng, n);
    const auto pi = straggler_pmf(SamplingDistribution(q), prof_of(t), K);
    const auto ref = oracle::enumerate_straggler_pmf(t, q, K);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_GE(pi[i], 0.0);
      EXPECT_NEAR(pi[i], ref[i], 1e-14);
      total += pi[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(MonteCarlo, SingleClientExact) {
  const auto est = monte_carlo_straggler(SamplingDistribution({1.0}), prof_of({2.0}), 4, 1000, 1);
  EXPECT_EQ(est.mean, 2.0);
  EXPECT_EQ(est.std_error, 0.0);
}

TEST(MonteCarlo, TwoClassWithinFourSigma) {
  const auto est = monte_carlo_straggler(SamplingDistribution({0.5, 0.5}), prof_of({1.0, 2.0}), 2, 1'000'000, 42);
  EXPECT_GT(est.std_error, 0.0);
  EXPECT_LE(std::abs(est.mean - 1.75), 4.0 * est.std_error);
}

TEST(MonteCarlo, DeterministicAndJobIndependent) {
  Rng rng(16);
  const auto prof = prof_of(oracle::random_latencies(rng, 6));
  const SamplingDistribution q(oracle::random_simplex(rng, 6));
  const auto a = monte_carlo_straggler(q, prof, 7, 300'000, 99, 1);
  const auto b = monte_carlo_straggler(q, prof, 7, 300'000, 99, 1);
  const auto c = monte_carlo_straggler(q, prof, 7, 300'000, 99, 4);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.std_error, b.std_error);
  EXPECT_EQ(a.mean, c.mean);
  EXPECT_EQ(a.straggler_counts, c.straggler_counts);
  const auto d = monte_carlo_straggler(q, prof, 7, 300'000, 100, 1);
  EXPECT_NE(a.mean, d.mean);
}
