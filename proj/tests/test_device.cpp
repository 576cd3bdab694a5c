#include <gtest/gtest.h>

#include "qramsim/device.hpp"

using namespace qramsim;

TEST(Device, NoiselessGivesPureResource) {
  CounterRng rng(1);
  const auto g = DataTable::random(3, rng);
  const auto rho = noisy_resource_state(noiseless_device(3), g);
  EXPECT_NEAR(fidelity_pure(rho, resource_state(g)), 1.0, 1e-12);
  EXPECT_TRUE(noiseless_device(3).is_noiseless());
  EXPECT_TRUE(dead_router_device(3, {}).is_noiseless());
}

TEST(Device, GlobalDepolarizingFidelity) {
  CounterRng rng(2);
  for (double p : {0.0, 0.1, 0.5, 1.0}) {
    const auto g = DataTable::random(3, rng);
    const auto rho = noisy_resource_state(global_depolarizing_device(3, p), g);
    EXPECT_NEAR(fidelity_pure(rho, resource_state(g)), (1 - p) + p / 8, 1e-12);
  }
}

TEST(Device, DeadRouterClosedFormN2) {
  const auto dev = dead_router_device(2, {1});
  dev.post_noise.check_trace_preserving();
  const auto rho = noisy_resource_state(dev, DataTable(2));
  EXPECT_NEAR(fidelity_pure(rho, resource_state(DataTable(2))), 0.625, 1e-12);
  EXPECT_NEAR(dead_router_fidelity(2, 1), 0.625, 1e-15);
}

TEST(Device, DeadRouterClosedFormAllSizes) {
  CounterRng rng(3);
  for (int n = 1; n <= 4; ++n) {
    const std::uint64_t d = std::uint64_t{1} << n;
    for (std::uint64_t k = 0; k <= d; ++k) {
      std::vector<std::uint64_t> dead;
      for (std::uint64_t x = 0; x < d && dead.size() < k; ++x)
        if (rng.bernoulli(0.5) || d - x == k - dead.size()) dead.push_back(x);
      const auto g = DataTable::random(n, rng);
      const auto rho = noisy_resource_state(dead_router_device(n, dead), g);
      EXPECT_NEAR(fidelity_pure(rho, resource_state(g)), dead_router_fidelity(n, k), 1e-12) << n << " " << k;
    }
  }
}

TEST(Device, DiagonalNoiseCommutesWithDatasetChange) {
  CounterRng rng(4);
  const auto dev = dead_router_device(3, {2, 6});
  for (int t = 0; t < 10; ++t) {
    const auto g = DataTable::random(3, rng), h = DataTable::random(3, rng);
    const RVec w = qram_unitary(h).cwiseProduct(qram_unitary(g));
    const Mat mapped = w.asDiagonal() * noisy_resource_matrix(dev, g) * w.asDiagonal();
    EXPECT_LT((mapped - noisy_resource_matrix(dev, h)).cwiseAbs().maxCoeff(), 1e-12);
    // Complementing the dataset only flips a global sign of V(g).
    EXPECT_LT((noisy_resource_matrix(dev, g) - noisy_resource_matrix(dev, g ^ DataTable::constant(3, true))).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(PauliTwirl, IdentityStaysIdentity) {
  const auto res = pauli_twirl_channel(QuantumChannel::identity(4));
  EXPECT_NEAR(res.chi_II, 1.0, 1e-12);
  CounterRng rng(5);
  const Mat rho = random_density(4, rng).matrix();
  EXPECT_LT((apply_channel(res.channel, rho) - rho).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PauliTwirl, CoherentZRotationBecomesDephasing) {
  for (double theta : {0.05, 0.3, 1.1}) {
    Mat rz = Mat::Zero(2, 2);
    rz(0, 0) = std::exp(cd(0, -theta / 2));
    rz(1, 1) = std::exp(cd(0, theta / 2));
    const auto res = pauli_twirl_channel(QuantumChannel::unitary(rz));
    const double pz = std::sin(theta / 2) * std::sin(theta / 2);
    EXPECT_NEAR(res.weights[1], pz, 1e-12);  // a = 1, b = 0 -> Z
    EXPECT_NEAR(res.chi_II, 1 - pz, 1e-12);
  }
}

TEST(PauliTwirl, ChoiIsPauliDiagonalForRandomChannels) {
  CounterRng rng(6);
  for (int q = 1; q <= 2; ++q)
    for (int t = 0; t < 10; ++t) {
      const auto ch = compose(QuantumChannel::unitary(random_unitary(Eigen::Index{1} << q, rng)),
                              random_channel(Eigen::Index{1} << q, 2, rng));
      const auto res = pauli_twirl_channel(ch);
      Mat chi = pauli_basis_choi(res.channel);
      double off = 0;
      for (Eigen::Index i = 0; i < chi.rows(); ++i)
        for (Eigen::Index k = 0; k < chi.cols(); ++k)
          if (i != k) off = std::max(off, std::abs(chi(i, k)));
      EXPECT_LT(off, 1e-9);
      EXPECT_LT(res.channel.tp_defect(), 1e-9);
    }
}

TEST(PauliTwirl, FidelityAtLeastIdentityWeight) {
  CounterRng rng(7);
  for (int t = 0; t < 20; ++t) {
    const auto ch = QuantumChannel::unitary(random_unitary(4, rng));
    const auto res = pauli_twirl_channel(ch);
    const auto psi = resource_state(DataTable::random(2, rng));
    const Mat rho = DensityMatrix::pure(psi).matrix();
    EXPECT_GE(fidelity_pure(apply_channel(res.channel, rho), psi.amplitudes), res.chi_II - 1e-12);
  }
}

TEST(PauliTwirl, MonteCarloApproachesExact) {
  CounterRng rng(8);
  const auto ch = QuantumChannel::unitary(random_unitary(2, rng));
  const auto exact = pauli_twirl_channel(ch);
  const auto mc = pauli_twirl_channel(ch, 20000, rng);
  EXPECT_LT((choi(mc) - choi(exact.channel)).cwiseAbs().maxCoeff(), 0.03);
}

TEST(EncodingNoise, IdentityAndDepolarizing) {
  CounterRng rng(9);
  const auto g = DataTable::random(3, rng);
  const Mat rho = DensityMatrix::pure(resource_state(g)).matrix();
  EXPECT_LT((apply_encoding_noise(EncodingNoise::identity(3), rho) - rho).cwiseAbs().maxCoeff(), 1e-15);
  const auto dep = EncodingNoise::depolarizing(3, 0.2);
  dep.validate();
  EXPECT_NEAR(fidelity_pure(apply_encoding_noise(dep, rho), resource_state(g).amplitudes), 0.8 + 0.2 / 8, 1e-12);
}

TEST(EncodingNoise, RandomTailsKeepIdentityWeightBound) {
  CounterRng rng(10);
  for (int t = 0; t < 100; ++t) {
    const auto enc = EncodingNoise::random_tail(2, 0.9, rng);
    enc.validate();
    const auto psi = resource_state(DataTable::random(2, rng));
    const Mat rho = DensityMatrix::pure(psi).matrix();
    EXPECT_GE(fidelity_pure(apply_encoding_noise(enc, rho), psi.amplitudes), 0.9 - 1e-12);
  }
  EncodingNoise bad = EncodingNoise::identity(2);
  bad.pauli_weights[0].second = 0.5;
  EXPECT_THROW(bad.validate(), PreconditionError);
}
