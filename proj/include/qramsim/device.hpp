#pragma once

// Noisy physical QRAM devices with dataset-independent noise, the dead-router
// model, logical encoding noise, and Pauli twirling of a channel.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "qramsim/boolfn.hpp"
#include "qramsim/qcore.hpp"

namespace qramsim {

/*! \brief Device acting as post_noise o V(g) o pre_noise.
 *
 * Both noise channels are plain fields, so they cannot depend on the dataset.
 */
struct NoisyDevice {
  int n = 0;
  QuantumChannel pre_noise;
  QuantumChannel post_noise;
  std::string label = "noiseless";

  [[nodiscard]] Eigen::Index dim() const { return Eigen::Index{1} << n; }
  [[nodiscard]] bool is_noiseless() const {
    auto trivial = [this](const QuantumChannel& ch) {
      return ch.kraus.size() == 1 && (ch.kraus[0] - Mat::Identity(dim(), dim())).cwiseAbs().maxCoeff() < 1e-14;
    };
    return trivial(pre_noise) && trivial(post_noise);
  }
};

inline Mat plus_state_density(int n) {
  const Eigen::Index d = Eigen::Index{1} << n;
  return Mat::Constant(d, d, cd(1.0 / static_cast<double>(d)));
}

//! N2[ V(g) N1[|+><+|^n] V(g)^dagger ] as a raw matrix.
inline Mat noisy_resource_matrix(const NoisyDevice& dev, const DataTable& g) {
  if (g.n() != dev.n) throw DimensionError("noisy_resource_state: dataset size does not match the device");
  const RVec v = qram_unitary(g);
  Mat rho = apply_channel(dev.pre_noise, plus_state_density(dev.n));
  rho = v.asDiagonal() * rho * v.asDiagonal();
  return apply_channel(dev.post_noise, rho);
}

inline DensityMatrix noisy_resource_state(const NoisyDevice& dev, const DataTable& g) {
  return DensityMatrix(noisy_resource_matrix(dev, g));
}

// ---------------------------------------------------------------------------
// Device presets

inline NoisyDevice noiseless_device(int n) {
  check_register(n);
  const Eigen::Index d = Eigen::Index{1} << n;
  return {n, QuantumChannel::identity(d), QuantumChannel::identity(d), "noiseless"};
}

//! rho -> (1-p) rho + p I/d, written with Pauli Kraus operators.
inline QuantumChannel depolarizing_channel(int n, double p) {
  if (p < 0 || p > 1) throw PreconditionError("depolarizing rate must be in [0, 1]");
  const Eigen::Index d = Eigen::Index{1} << n;
  const double d2 = static_cast<double>(d * d);
  std::vector<Mat> ks;
  ks.push_back(std::sqrt(1 - p + p / d2) * Mat::Identity(d, d));
  if (p > 0)
    for (std::uint64_t a = 0; a < static_cast<std::uint64_t>(d); ++a)
      for (std::uint64_t b = 0; b < static_cast<std::uint64_t>(d); ++b)
        if (a || b) ks.push_back(std::sqrt(p / d2) * pauli_matrix({n, 0, a, b}));
  return {d, d, std::move(ks)};
}

inline NoisyDevice global_depolarizing_device(int n, double p) {
  NoisyDevice dev = noiseless_device(n);
  dev.post_noise = depolarizing_channel(n, p);
  dev.label = "global_depolarizing";
  return dev;
}

//! Independent Z flips with probability p on every qubit.
inline NoisyDevice per_qubit_dephasing_device(int n, double p) {
  if (p < 0 || p > 1) throw PreconditionError("dephasing rate must be in [0, 1]");
  NoisyDevice dev = noiseless_device(n);
  QuantumChannel ch = QuantumChannel::identity(1);
  const QuantumChannel one{2, 2, {std::sqrt(1 - p) * Mat::Identity(2, 2), std::sqrt(p) * pauli_matrix({1, 0, 1, 0})}};
  for (int q = 0; q < n; ++q) ch = tensor(ch, one);
  dev.post_noise = ch;
  dev.label = "per_qubit_dephasing";
  return dev;
}

//! Coherent over-rotation exp(-i theta X / 2) on every qubit after the query.
inline NoisyDevice coherent_rotation_device(int n, double theta) {
  NoisyDevice dev = noiseless_device(n);
  Mat r(2, 2);
  r << std::cos(theta / 2), cd(0, -std::sin(theta / 2)), cd(0, -std::sin(theta / 2)), std::cos(theta / 2);
  Mat u = Mat::Identity(1, 1);
  for (int q = 0; q < n; ++q) u = kron(r, u);
  dev.post_noise = QuantumChannel::unitary(u);
  dev.label = "coherent_rotation";
  return dev;
}

inline NoisyDevice custom_kraus_device(int n, QuantumChannel pre, QuantumChannel post) {
  const Eigen::Index d = Eigen::Index{1} << n;
  if (pre.in_dim != d || pre.out_dim != d || post.in_dim != d || post.out_dim != d)
    throw DimensionError("custom device: channel dimensions must match 2^n");
  pre.check_trace_preserving();
  post.check_trace_preserving();
  return {n, std::move(pre), std::move(post), "custom_kraus"};
}

/*! \brief Dead router on the addresses in `dead`.
 *
 * Post-noise: rho -> (I - Pi) rho (I - Pi) + tr(Pi rho) I / 2^n, with Pi the
 * projector onto the dead addresses.  Kraus operators are I - Pi and
 * |y><x| / 2^{n/2} for every dead x and every address y.
 */
inline NoisyDevice dead_router_device(int n, const std::vector<std::uint64_t>& dead) {
  NoisyDevice dev = noiseless_device(n);
  const Eigen::Index d = dev.dim();
  Mat keep = Mat::Identity(d, d);
  std::vector<Mat> ks;
  std::vector<bool> seen(static_cast<std::size_t>(d), false);
  for (std::uint64_t x : dead) {
    if (x >= static_cast<std::uint64_t>(d)) throw DimensionError("dead_router_device: address out of range");
    if (seen[x]) continue;
    seen[x] = true;
    keep(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(x)) = 0;
  }
  ks.push_back(keep);
  const double amp = 1.0 / std::sqrt(static_cast<double>(d));
  for (Eigen::Index x = 0; x < d; ++x) {
    if (!seen[static_cast<std::size_t>(x)]) continue;
    for (Eigen::Index y = 0; y < d; ++y) {
      Mat k = Mat::Zero(d, d);
      k(y, x) = amp;
      ks.push_back(std::move(k));
    }
  }
  dev.post_noise = QuantumChannel(d, d, std::move(ks));
  dev.label = dead.empty() ? "noiseless" : "dead_router";
  return dev;
}

//! Closed-form resource fidelity of the dead-router device with k dead addresses.
inline double dead_router_fidelity(int n, std::uint64_t k) {
  const double d = std::ldexp(1.0, n);
  const double kk = static_cast<double>(k);
  return (d - kk) * (d - 1 - kk) / (d * d) + 1.0 / d;
}

// ---------------------------------------------------------------------------
// Logical encoding noise

/*! \brief Stochastic Pauli channel standing in for the encoding step.
 *
 * Weights are over unsigned Paulis (s = 0); `eps_enc` is the configured
 * error rate and the identity weight must be at least 1 - eps_enc.
 */
struct EncodingNoise {
  int n = 0;
  double eps_enc = 0.0;
  std::vector<std::pair<PauliString, double>> pauli_weights;

  [[nodiscard]] double identity_weight() const {
    double w = 0;
    for (const auto& [p, q] : pauli_weights)
      if (p.a == 0 && p.b == 0) w += q;
    return w;
  }

  void validate(double tol = 1e-9) const {
    double total = 0;
    for (const auto& [p, q] : pauli_weights) {
      if (q < -tol) throw PreconditionError("EncodingNoise: negative weight");
      if (p.n != n) throw DimensionError("EncodingNoise: Pauli size mismatch");
      total += q;
    }
    if (std::abs(total - 1) > tol) throw PreconditionError("EncodingNoise: weights must sum to 1");
    if (identity_weight() < 1 - eps_enc - tol) throw PreconditionError("EncodingNoise: identity weight below 1 - eps_enc");
  }

  static EncodingNoise identity(int n) { return {n, 0.0, {{PauliString{n, 0, 0, 0}, 1.0}}}; }

  //! rho -> (1-q) rho + q I/2^n.
  static EncodingNoise depolarizing(int n, double q) {
    EncodingNoise e{n, q, {}};
    const std::uint64_t d = std::uint64_t{1} << n;
    const double each = q / static_cast<double>(d * d);
    for (std::uint64_t a = 0; a < d; ++a)
      for (std::uint64_t b = 0; b < d; ++b) e.pauli_weights.push_back({{n, 0, a, b}, (a || b) ? each : 1 - q + each});
    return e;
  }

  //! Identity weight w, remaining 1 - w spread over non-identity Paulis with random proportions.
  static EncodingNoise random_tail(int n, double w, CounterRng& rng) {
    EncodingNoise e{n, 1 - w, {{PauliString{n, 0, 0, 0}, w}}};
    const std::uint64_t d = std::uint64_t{1} << n;
    std::vector<double> raw;
    for (std::uint64_t k = 1; k < d * d; ++k) raw.push_back(rng.uniform());
    double s = 0;
    for (double r : raw) s += r;
    std::uint64_t k = 1;
    for (double r : raw) {
      e.pauli_weights.push_back({{n, 0, k % d, k / d}, (1 - w) * r / s});
      ++k;
    }
    return e;
  }
};

inline Mat apply_encoding_noise(const EncodingNoise& enc, const Mat& rho) {
  if (rho.rows() != (Eigen::Index{1} << enc.n)) throw DimensionError("apply_encoding_noise: dimension mismatch");
  Mat out = Mat::Zero(rho.rows(), rho.cols());
  for (const auto& [p, w] : enc.pauli_weights)
    if (w != 0) out += w * conjugate_by_pauli(rho, p);
  return out;
}

inline DensityMatrix apply_encoding_noise(const EncodingNoise& enc, const DensityMatrix& rho) {
  return DensityMatrix(apply_encoding_noise(enc, rho.matrix()));
}

inline QuantumChannel encoding_channel(const EncodingNoise& enc) {
  const Eigen::Index d = Eigen::Index{1} << enc.n;
  std::vector<Mat> ks;
  for (const auto& [p, w] : enc.pauli_weights)
    if (w > 0) ks.push_back(std::sqrt(w) * pauli_matrix(p));
  return {d, d, std::move(ks)};
}

// ---------------------------------------------------------------------------
// Pauli twirl of a channel

struct PauliTwirlResult {
  QuantumChannel channel;
  std::vector<double> weights;  //!< indexed by a | (b << n) over unsigned Paulis
  double chi_II = 0.0;
};

/*! \brief Exact twirl E_G[G^dagger ch(G rho G^dagger) G] over the 4^n unsigned Paulis.
 *
 * The result is the stochastic Pauli channel with weights
 * p_P = sum_k |Tr(P K_k)|^2 / 4^n.
 */
inline PauliTwirlResult pauli_twirl_channel(const QuantumChannel& ch) {
  const int n = ch.in_qubits();
  if (n < 0 || ch.in_dim != ch.out_dim) throw DimensionError("pauli_twirl_channel: needs a qubit channel with equal input and output");
  if (n > 3) throw CapError("pauli_twirl_channel: exact twirl limited to 3 qubits");
  const std::uint64_t d = std::uint64_t{1} << n;
  const double d2 = static_cast<double>(d * d);
  PauliTwirlResult res;
  res.weights.assign(d * d, 0.0);
  std::vector<Mat> ks;
  for (std::uint64_t b = 0; b < d; ++b)
    for (std::uint64_t a = 0; a < d; ++a) {
      const Mat p = pauli_matrix({n, 0, a, b});
      double w = 0;
      for (const auto& k : ch.kraus) w += std::norm((p.adjoint() * k).trace());
      w /= d2;
      res.weights[a | (b << n)] = w;
      if (w > 0) ks.push_back(std::sqrt(w) * p);
    }
  res.chi_II = res.weights[0];
  res.channel = QuantumChannel(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d), std::move(ks));
  return res;
}

//! Monte Carlo twirl with `samples` uniformly drawn Paulis.
inline QuantumChannel pauli_twirl_channel(const QuantumChannel& ch, std::uint64_t samples, CounterRng& rng) {
  const int n = ch.in_qubits();
  if (n < 0 || ch.in_dim != ch.out_dim) throw DimensionError("pauli_twirl_channel: needs a qubit channel with equal input and output");
  check_register(n);
  const std::uint64_t d = std::uint64_t{1} << n;
  std::vector<Mat> ks;
  const double scale = 1.0 / std::sqrt(static_cast<double>(samples));
  for (std::uint64_t s = 0; s < samples; ++s) {
    const Mat g = pauli_matrix({n, 0, rng.below(d), rng.below(d)});
    for (const auto& k : ch.kraus) ks.push_back(scale * (g.adjoint() * k * g));
  }
  return {ch.in_dim, ch.out_dim, std::move(ks)};
}

//! Choi matrix expressed in the Pauli basis: chi[P, Q] = <<P| J |Q>> / d.
inline Mat pauli_basis_choi(const QuantumChannel& ch) {
  const int n = ch.in_qubits();
  const Eigen::Index d = ch.in_dim;
  const Mat j = choi(ch);
  std::vector<Vec> basis;
  for (std::uint64_t b = 0; b < static_cast<std::uint64_t>(d); ++b)
    for (std::uint64_t a = 0; a < static_cast<std::uint64_t>(d); ++a) {
      const Mat p = pauli_matrix({n, 0, a, b});
      basis.emplace_back(Eigen::Map<const Vec>(p.data(), d * d) / std::sqrt(static_cast<double>(d)));
    }
  const auto m = static_cast<Eigen::Index>(basis.size());
  Mat chi(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index k = 0; k < m; ++k) chi(i, k) = basis[static_cast<std::size_t>(i)].dot(j * basis[static_cast<std::size_t>(k)]);
  return chi;
}

}  // namespace qramsim
