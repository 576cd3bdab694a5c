#include <gtest/gtest.h>

#include <map>
#include <set>

#include "qramsim/twirlset.hpp"

using namespace qramsim;

namespace {

// Dense oracle for the dataset map: apply C gate by gate to |Psi(g)>.
Vec apply_gates(const TwirlElement& c, Vec psi) {
  for (const auto& g : clifford_gate_list(c)) psi = gate_matrix(g, c.n) * psi;
  return psi;
}

std::uint64_t key(const F2Matrix& a) {
  std::uint64_t k = 0;
  for (int i = 0; i < a.n; ++i) k |= a.rows[static_cast<std::size_t>(i)] << (i * a.n);
  return k;
}

}  // namespace

TEST(SampleTwirl, SingleQubitIsTrivialInA) {
  CounterRng rng(1);
  std::map<std::pair<std::uint64_t, std::uint64_t>, int> counts;
  for (int t = 0; t < 4000; ++t) {
    const auto c = sample_twirl(1, rng);
    EXPECT_EQ(c.A, F2Matrix::identity(1));
    counts[{c.u, c.v}]++;
  }
  EXPECT_EQ(counts.size(), 4U);
  for (const auto& [k, v] : counts) EXPECT_NEAR(v, 1000, 150);
}

TEST(SampleTwirl, GL2IsUniformChiSquare) {
  CounterRng rng(2);
  std::map<std::uint64_t, int> counts;
  const int samples = 100000;
  for (int t = 0; t < samples; ++t) counts[key(sample_twirl(2, rng).A)]++;
  ASSERT_EQ(counts.size(), 6U);
  double chi2 = 0;
  const double expect = samples / 6.0;
  for (const auto& [k, v] : counts) chi2 += (v - expect) * (v - expect) / expect;
  EXPECT_LT(chi2, 20.5);  // 5 degrees of freedom, p ~ 0.001
}

TEST(SampleTwirl, AlwaysValid) {
  CounterRng rng(3);
  for (int n = 1; n <= 8; ++n)
    for (int t = 0; t < 100; ++t) EXPECT_NO_THROW(sample_twirl(n, rng).validate());
}

TEST(TwirlDataset, IdentityAndLinearPhase) {
  CounterRng rng(4);
  const auto g = DataTable::random(3, rng);
  EXPECT_EQ(twirl_dataset(g, TwirlElement::identity(3)), g);
  auto c = TwirlElement::identity(3);
  c.v = 1;
  const auto gc = twirl_dataset(g, c);
  for (std::uint64_t x = 0; x < 8; ++x) EXPECT_EQ(gc(x), g(x) ^ static_cast<bool>(x & 1U));
}

TEST(TwirlDataset, StateIdentityHoldsForRandomElements) {
  CounterRng rng(5);
  for (int n = 1; n <= 4; ++n)
    for (int t = 0; t < 40; ++t) {
      const auto g = DataTable::random(n, rng);
      const auto c = sample_twirl(n, rng);
      const Vec lhs = apply_gates(c, resource_state(g).amplitudes);
      EXPECT_LT((lhs - resource_state(twirl_dataset(g, c)).amplitudes).cwiseAbs().maxCoeff(), 1e-12);
      // Restoring direction: |Psi(g)> = C^dagger |Psi(g_C)>.
      const Vec back = clifford_matrix(c).adjoint() * resource_state(twirl_dataset(g, c)).amplitudes;
      EXPECT_LT((back - resource_state(g).amplitudes).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(CliffordMatrix, SpecialCasesAndGateCount) {
  EXPECT_TRUE(clifford_matrix(TwirlElement::identity(3)).isApprox(Mat::Identity(8, 8)));
  auto c = TwirlElement::identity(1);
  c.u = 1;
  EXPECT_TRUE(clifford_matrix(c).isApprox(pauli_matrix({1, 0, 0, 1})));
  CounterRng rng(6);
  for (int n = 1; n <= 6; ++n)
    for (int t = 0; t < 30; ++t) {
      const auto e = sample_twirl(n, rng);
      EXPECT_LE(static_cast<int>(clifford_gate_list(e).size()), 2 * n + n * (n - 1) / 2 + n * n);
    }
}

TEST(CliffordMatrix, GateProductMatchesMonomialForm) {
  CounterRng rng(7);
  for (int t = 0; t < 30; ++t) {
    const auto c = sample_twirl(3, rng);
    const Mat u = clifford_matrix(c);
    const auto f = monomial_form(c);
    Mat m = Mat::Zero(8, 8);
    for (std::uint64_t x = 0; x < 8; ++x) m(static_cast<Eigen::Index>(f.image[x]), static_cast<Eigen::Index>(x)) = f.sign[x];
    EXPECT_LT((u - m).cwiseAbs().maxCoeff(), 1e-12);
    const Mat rho = random_density(8, rng).matrix();
    EXPECT_LT((restore_conjugate(f, rho) - u.adjoint() * rho * u).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ConjugatePauli, SingleQubitSignFlip) {
  auto c = TwirlElement::identity(1);
  c.u = 1;
  EXPECT_EQ(conjugate_pauli(c, {1, 0, 1, 0}), (PauliString{1, 1, 1, 0}));
  EXPECT_EQ(conjugate_pauli(TwirlElement::identity(2), {2, 0, 0, 0}), (PauliString{2, 0, 0, 0}));
}

TEST(ConjugatePauli, ClosedFormMatchesDenseExhaustiveN2) {
  const auto all = all_twirl_elements(2);
  ASSERT_EQ(all.size(), 192U);
  for (const auto& c : all) {
    const Mat u = clifford_matrix(c);
    for (std::uint64_t i = 0; i < PauliString::count(2); ++i) {
      const auto p = PauliString::from_index(2, i);
      const auto dense = pauli_from_matrix(u * pauli_matrix(p) * u.adjoint());
      ASSERT_TRUE(dense.has_value());
      ASSERT_EQ(conjugate_pauli(c, p), *dense);
    }
  }
}

TEST(ConjugatePauli, ClosedFormMatchesDenseRandomN3) {
  CounterRng rng(8);
  for (int t = 0; t < 200; ++t) {
    const auto c = sample_twirl(3, rng);
    const auto p = PauliString::from_index(3, rng.below(PauliString::count(3)));
    const Mat u = clifford_matrix(c);
    const auto dense = pauli_from_matrix(u * pauli_matrix(p) * u.adjoint());
    ASSERT_TRUE(dense.has_value());
    EXPECT_EQ(conjugate_pauli(c, p), *dense);
  }
}

TEST(UniformSpreading, ExactCountsN2) {
  const auto all = all_twirl_elements(2);
  for (std::uint64_t i = 0; i < PauliString::count(2); ++i) {
    const auto p = PauliString::from_index(2, i);
    std::map<std::uint64_t, int> hits;
    for (const auto& c : all) {
      const auto q = conjugate_pauli(c, p);
      ASSERT_EQ(pauli_subset(q), pauli_subset(p));
      hits[q.index()]++;
    }
    std::uint64_t subset_size = 0;
    for (std::uint64_t j = 0; j < PauliString::count(2); ++j)
      subset_size += pauli_subset(PauliString::from_index(2, j)) == pauli_subset(p);
    ASSERT_EQ(hits.size(), subset_size);
    for (const auto& [k, v] : hits) EXPECT_EQ(static_cast<std::uint64_t>(v) * subset_size, all.size());
  }
}

TEST(UniformSpreading, ChiSquareN3) {
  CounterRng rng(9);
  const PauliString p{3, 0, 0b011, 0b101};  // a.b = 1 -> odd subset
  std::map<std::uint64_t, int> hits;
  const int samples = 100000;
  for (int t = 0; t < samples; ++t) hits[conjugate_pauli(sample_twirl(3, rng), p).index()]++;
  std::uint64_t size = 0;
  for (std::uint64_t j = 0; j < PauliString::count(3); ++j)
    size += pauli_subset(PauliString::from_index(3, j)) == PauliSubset::Podd;
  ASSERT_EQ(hits.size(), size);
  double chi2 = 0;
  const double expect = static_cast<double>(samples) / static_cast<double>(size);
  for (const auto& [k, v] : hits) chi2 += (v - expect) * (v - expect) / expect;
  // size = 56 -> 55 dof; the 0.999 quantile is about 93.2.
  EXPECT_LT(chi2, 93.2);
}

TEST(OffDiagonalVanishing, ExactN2) {
  const auto all = all_twirl_elements(2);
  std::vector<Mat> us;
  for (const auto& c : all) us.push_back(clifford_matrix(c));
  for (std::uint64_t i = 0; i < PauliString::count(2); i += 2)
    for (std::uint64_t j = 0; j < PauliString::count(2); j += 2) {
      if (i == j) continue;
      const Mat p = pauli_matrix(PauliString::from_index(2, i)), q = pauli_matrix(PauliString::from_index(2, j));
      Mat avg = Mat::Zero(16, 16);
      for (const auto& u : us) avg += kron(u * p * u.adjoint(), u * q * u.adjoint());
      avg /= static_cast<double>(us.size());
      EXPECT_LE(avg.cwiseAbs().maxCoeff(), 1e-12) << PauliString::from_index(2, i).label() << " " << PauliString::from_index(2, j).label();
    }
}

TEST(OddPaulis, NullExpectationOnResourceStates) {
  CounterRng rng(10);
  for (int n = 1; n <= 3; ++n)
    for (int t = 0; t < 50; ++t) {
      const Vec psi = resource_state(DataTable::random(n, rng)).amplitudes;
      for (std::uint64_t i = 0; i < PauliString::count(n); ++i) {
        const auto p = PauliString::from_index(n, i);
        if (pauli_subset(p) != PauliSubset::Podd) continue;
        EXPECT_LT(std::abs(psi.dot(pauli_matrix(p) * psi)), 1e-12);
      }
    }
}

TEST(TwirledState, NoiselessIsPure) {
  CounterRng rng(11);
  const auto g = DataTable::random(2, rng);
  const auto ts = twirled_state(g, noiseless_device(2), TwirlMode::exact());
  EXPECT_EQ(ts.samples, 192U);
  EXPECT_LT((ts.state.matrix() - DensityMatrix::pure(resource_state(g)).matrix()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TwirledState, TopEigenvectorUnderDeadRouterAndCoherentNoise) {
  CounterRng rng(12);
  for (const auto& dev : {dead_router_device(2, {3}), coherent_rotation_device(2, 0.5), global_depolarizing_device(2, 0.3)}) {
    for (int t = 0; t < 5; ++t) {
      const auto g = DataTable::random(2, rng);
      const auto ts = twirled_state(g, dev, TwirlMode::exact());
      const Vec psi = resource_state(g).amplitudes;
      const Mat& rho = ts.state.matrix();
      const double lambda = fidelity_pure(rho, psi);
      EXPECT_LT((rho * psi - lambda * psi).norm(), 1e-9);
      EXPECT_NEAR(lambda, ts.mean_term_fidelity, 1e-12);
      const RVec ev = spectrum(rho);
      EXPECT_NEAR(ev(ev.size() - 1), lambda, 1e-9) << dev.label;
      EXPECT_LE(ev(ev.size() - 2), 0.5 + 1e-9) << dev.label;
    }
  }
}

TEST(TwirledState, MonteCarloIsReproducibleAndThreadIndependent) {
  CounterRng rng(13);
  const auto g = DataTable::random(3, rng);
  ResourcePreparer prep(dead_router_device(3, {5}));
  const auto a = twirled_state(g, prep, TwirlMode::monte_carlo(500, 77), 1);
  const auto b = twirled_state(g, prep, TwirlMode::monte_carlo(500, 77), 4);
  EXPECT_EQ(a.state.matrix(), b.state.matrix());
  EXPECT_FALSE(a.exact);
  EXPECT_EQ(a.seed, 77U);
  EXPECT_THROW(twirled_state(g, dead_router_device(3, {5}), TwirlMode::exact()), CapError);
}
