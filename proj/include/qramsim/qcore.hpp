#pragma once

// Dense linear-algebra substrate: states, density matrices, signed Pauli
// strings, Kraus channels, Choi matrices and distances, plus the diagonal QRAM
// unitary and its resource state.
//
// Register convention: basis index bit q holds qubit q (qubit 0 carries x_1).
// For two registers, tensor(low, high) places `low` on the least significant
// index bits, i.e. the joint index is i_low + dim(low) * i_high.

#include <Eigen/Dense>
#include <complex>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "qramsim/boolfn.hpp"
#include "qramsim/errors.hpp"
#include "qramsim/rng.hpp"

namespace qramsim {

using cd = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

inline constexpr int kRegisterCap = 6;
inline constexpr int kJointCap = 12;
inline constexpr double kStateTol = 1e-9;
inline constexpr double kPsdTol = 1e-8;

inline int log2_dim(Eigen::Index d) {
  if (d <= 0 || (d & (d - 1)) != 0) return -1;
  int q = 0;
  while ((Eigen::Index{1} << q) < d) ++q;
  return q;
}

inline void check_register(int q, int cap = kRegisterCap) {
  if (q > cap) throw CapError("register of " + std::to_string(q) + " qubits exceeds the cap of " + std::to_string(cap));
}

//! Standard Kronecker product: `a` occupies the most significant index.
inline Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// ---------------------------------------------------------------------------

struct StateVector {
  int num_qubits = 0;
  Vec amplitudes;

  StateVector() = default;
  explicit StateVector(Vec v) : num_qubits(log2_dim(v.size())), amplitudes(std::move(v)) {
    if (std::abs(amplitudes.squaredNorm() - 1.0) > kStateTol) throw InvariantError("StateVector: norm is not 1");
  }
  [[nodiscard]] Eigen::Index dim() const { return amplitudes.size(); }
};

/*! \brief Hermitian, positive semidefinite, unit-trace matrix.
 *
 * Invariants are verified on construction when QRAMSIM_CHECK_INVARIANTS is
 * defined or NDEBUG is not; `validate()` runs the same checks on demand.
 * Dimensions need not be powers of two (distillation works on qudits).
 */
class DensityMatrix {
public:
  DensityMatrix() = default;
  explicit DensityMatrix(Mat m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw DimensionError("DensityMatrix: matrix is not square");
#if defined(QRAMSIM_CHECK_INVARIANTS) || !defined(NDEBUG)
    validate();
#endif
  }

  static DensityMatrix pure(const Vec& psi) { return DensityMatrix(psi * psi.adjoint()); }
  static DensityMatrix pure(const StateVector& psi) { return pure(psi.amplitudes); }
  static DensityMatrix maximally_mixed(Eigen::Index d) {
    return DensityMatrix(Mat::Identity(d, d) / static_cast<double>(d));
  }
  static DensityMatrix diagonal(const RVec& p) { return DensityMatrix(p.cast<cd>().asDiagonal().toDenseMatrix()); }

  [[nodiscard]] const Mat& matrix() const { return m_; }
  [[nodiscard]] Eigen::Index dim() const { return m_.rows(); }
  [[nodiscard]] int num_qubits() const { return log2_dim(m_.rows()); }
  [[nodiscard]] cd operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

  //! Throws InvariantError unless Hermitian, unit trace and PSD within tolerance.
  void validate(double tol = kStateTol, double psd_tol = kPsdTol) const {
    if ((m_ - m_.adjoint()).cwiseAbs().maxCoeff() > tol) throw InvariantError("DensityMatrix: not Hermitian");
    if (std::abs(m_.trace() - cd(1.0)) > tol) throw InvariantError("DensityMatrix: trace is not 1");
    Eigen::SelfAdjointEigenSolver<Mat> es(m_, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -psd_tol) throw InvariantError("DensityMatrix: negative eigenvalue");
  }

private:
  Mat m_;
};

// ---------------------------------------------------------------------------
// QRAM unitary and resource state

//! Diagonal of V(g): entry x is (-1)^{g(x)}.
inline RVec qram_unitary(const DataTable& g, int cap = kRegisterCap) {
  check_register(g.n(), cap);
  RVec d(static_cast<Eigen::Index>(g.size()));
  for (std::uint64_t x = 0; x < g.size(); ++x) d(static_cast<Eigen::Index>(x)) = g(x) ? -1.0 : 1.0;
  return d;
}

//! |Psi(g)> = V(g)|+>^n.
inline StateVector resource_state(const DataTable& g, int cap = kRegisterCap) {
  const RVec d = qram_unitary(g, cap);
  return StateVector((d / std::sqrt(static_cast<double>(d.size()))).cast<cd>());
}

// ---------------------------------------------------------------------------
// Signed Pauli strings i^{a.b} (-1)^s X^b Z^a with a.b taken mod 2.

enum class PauliSubset { P0, P1, PZ, Peven, Podd };

inline const char* to_string(PauliSubset s) {
  switch (s) {
    case PauliSubset::P0: return "P0";
    case PauliSubset::P1: return "P1";
    case PauliSubset::PZ: return "PZ";
    case PauliSubset::Peven: return "Peven";
    case PauliSubset::Podd: return "Podd";
  }
  return "?";
}

struct PauliString {
  int n = 0;
  int s = 0;
  std::uint64_t a = 0;  //!< Z part
  std::uint64_t b = 0;  //!< X part

  [[nodiscard]] int symplectic_parity() const { return parity(a & b); }
  [[nodiscard]] bool is_identity_up_to_sign() const { return a == 0 && b == 0; }

  //! Packs (s, a, b) into one index in [0, 2^{2n+1}); used for enumeration and counting.
  [[nodiscard]] std::uint64_t index() const {
    return static_cast<std::uint64_t>(s) | (a << 1) | (b << (n + 1));
  }
  static PauliString from_index(int n, std::uint64_t idx) {
    const std::uint64_t mask = (std::uint64_t{1} << n) - 1;
    return {n, static_cast<int>(idx & 1U), (idx >> 1) & mask, (idx >> (n + 1)) & mask};
  }
  static std::uint64_t count(int n) { return std::uint64_t{1} << (2 * n + 1); }

  //! Single-qubit X_q or Z_q (q is 0-based).
  static PauliString x_on(int n, int q) { return {n, 0, 0, std::uint64_t{1} << q}; }
  static PauliString z_on(int n, int q) { return {n, 0, std::uint64_t{1} << q, 0}; }

  [[nodiscard]] std::string label() const {
    std::string out = s ? "-" : "+";
    for (int q = 0; q < n; ++q) {
      const int za = static_cast<int>((a >> q) & 1U), xb = static_cast<int>((b >> q) & 1U);
      out.push_back(za && xb ? 'Y' : za ? 'Z' : xb ? 'X' : 'I');
    }
    return out;
  }

  friend bool operator==(const PauliString&, const PauliString&) = default;
};

//! Phase i^{phase} times a canonical Pauli; the phase is 0 whenever the factors commute.
struct PhasedPauli {
  int phase = 0;
  PauliString pauli;
};

inline PhasedPauli operator*(const PauliString& p, const PauliString& q) {
  if (p.n != q.n) throw DimensionError("Pauli product: size mismatch");
  PauliString r{p.n, 0, p.a ^ q.a, p.b ^ q.b};
  int k = p.symplectic_parity() + q.symplectic_parity() + 2 * (p.s ^ q.s ^ parity(p.a & q.b)) - r.symplectic_parity();
  k = ((k % 4) + 4) % 4;
  if (k % 2 == 0) {
    r.s = k / 2;
    return {0, r};
  }
  return {k, r};
}

inline PauliSubset pauli_subset(const PauliString& p) {
  if (p.a == 0 && p.b == 0) return p.s ? PauliSubset::P1 : PauliSubset::P0;
  if (p.b == 0) return PauliSubset::PZ;
  return p.symplectic_parity() ? PauliSubset::Podd : PauliSubset::Peven;
}

inline cd i_pow(int k) {
  switch (((k % 4) + 4) % 4) {
    case 0: return {1, 0};
    case 1: return {0, 1};
    case 2: return {-1, 0};
    default: return {0, -1};
  }
}

inline Mat pauli_matrix(const PauliString& p) {
  check_register(p.n, kJointCap);
  const Eigen::Index d = Eigen::Index{1} << p.n;
  Mat m = Mat::Zero(d, d);
  const cd base = i_pow(p.symplectic_parity()) * (p.s ? -1.0 : 1.0);
  for (std::uint64_t x = 0; x < static_cast<std::uint64_t>(d); ++x)
    m(static_cast<Eigen::Index>(x ^ p.b), static_cast<Eigen::Index>(x)) = parity(p.a & x) ? -base : base;
  return m;
}

//! Recovers (s, a, b) when `m` equals a canonical signed Pauli within `tol`.
inline std::optional<PauliString> pauli_from_matrix(const Mat& m, double tol = 1e-9) {
  const int n = log2_dim(m.rows());
  if (n < 0 || m.rows() != m.cols()) return std::nullopt;
  Eigen::Index bi = 0;
  m.col(0).cwiseAbs().maxCoeff(&bi);
  const auto b = static_cast<std::uint64_t>(bi);
  const cd c0 = m(bi, 0);
  std::uint64_t a = 0;
  for (int q = 0; q < n; ++q) {
    const std::uint64_t e = std::uint64_t{1} << q;
    if ((m(static_cast<Eigen::Index>(b ^ e), static_cast<Eigen::Index>(e)) / c0).real() < 0) a |= e;
  }
  const cd unit = i_pow(parity(a & b));
  PauliString p{n, 0, a, b};
  if (std::abs(c0 - unit) < tol) p.s = 0;
  else if (std::abs(c0 + unit) < tol) p.s = 1;
  else return std::nullopt;
  if ((m - pauli_matrix(p)).cwiseAbs().maxCoeff() > tol) return std::nullopt;
  return p;
}

//! P rho P^dagger for a canonical Pauli, in O(d^2) without forming P.
inline Mat conjugate_by_pauli(const Mat& rho, const PauliString& p) {
  const Eigen::Index d = rho.rows();
  Mat out(d, d);
  for (Eigen::Index y = 0; y < d; ++y) {
    const auto yy = static_cast<std::uint64_t>(y);
    const double sy = parity(p.a & yy) ? -1.0 : 1.0;
    for (Eigen::Index x = 0; x < d; ++x) {
      const auto xx = static_cast<std::uint64_t>(x);
      const double sx = parity(p.a & xx) ? -1.0 : 1.0;
      out(static_cast<Eigen::Index>(xx ^ p.b), static_cast<Eigen::Index>(yy ^ p.b)) = sx * sy * rho(x, y);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Channels

/*! \brief Kraus representation of a channel from in_dim to out_dim.
 *
 * Classical outputs (measurement records) are carried as extra dephased
 * qubits on the most significant side of the output.
 */
struct QuantumChannel {
  Eigen::Index in_dim = 1;
  Eigen::Index out_dim = 1;
  std::vector<Mat> kraus;

  QuantumChannel() = default;
  QuantumChannel(Eigen::Index din, Eigen::Index dout, std::vector<Mat> ks)
      : in_dim(din), out_dim(dout), kraus(std::move(ks)) {
    for (const auto& k : kraus)
      if (k.rows() != out_dim || k.cols() != in_dim) throw DimensionError("QuantumChannel: Kraus operator has wrong shape");
  }

  static QuantumChannel identity(Eigen::Index d) { return {d, d, {Mat::Identity(d, d)}}; }
  static QuantumChannel unitary(const Mat& u) { return {u.cols(), u.rows(), {u}}; }

  [[nodiscard]] int in_qubits() const { return log2_dim(in_dim); }
  [[nodiscard]] int out_qubits() const { return log2_dim(out_dim); }

  //! Largest entry of |sum K^dagger K - I|.
  [[nodiscard]] double tp_defect() const {
    Mat s = Mat::Zero(in_dim, in_dim);
    for (const auto& k : kraus) s.noalias() += k.adjoint() * k;
    return (s - Mat::Identity(in_dim, in_dim)).cwiseAbs().maxCoeff();
  }
  void check_trace_preserving(double tol = 1e-8) const {
    if (tp_defect() > tol) throw InvariantError("QuantumChannel: not trace preserving");
  }
};

inline Mat apply_channel(const QuantumChannel& ch, const Mat& rho) {
  if (rho.rows() != ch.in_dim) throw DimensionError("apply_channel: input dimension mismatch");
  Mat out = Mat::Zero(ch.out_dim, ch.out_dim);
  for (const auto& k : ch.kraus) out.noalias() += k * rho * k.adjoint();
  return out;
}

inline DensityMatrix apply_channel(const QuantumChannel& ch, const DensityMatrix& rho) {
  return DensityMatrix(apply_channel(ch, rho.matrix()));
}

//! Channel `second` after `first`.
inline QuantumChannel compose(const QuantumChannel& second, const QuantumChannel& first) {
  if (first.out_dim != second.in_dim) throw DimensionError("compose: dimension mismatch");
  std::vector<Mat> ks;
  ks.reserve(first.kraus.size() * second.kraus.size());
  for (const auto& k2 : second.kraus)
    for (const auto& k1 : first.kraus) ks.push_back(k2 * k1);
  return {first.in_dim, second.out_dim, std::move(ks)};
}

//! Joint matrix with `low` on the least significant index bits.
inline Mat tensor(const Mat& low, const Mat& high) { return kron(high, low); }

inline DensityMatrix tensor(const DensityMatrix& low, const DensityMatrix& high) {
  return DensityMatrix(tensor(low.matrix(), high.matrix()));
}

//! Parallel channel: `low` acts on the least significant subsystem.
inline QuantumChannel tensor(const QuantumChannel& low, const QuantumChannel& high) {
  std::vector<Mat> ks;
  for (const auto& kh : high.kraus)
    for (const auto& kl : low.kraus) ks.push_back(kron(kh, kl));
  return {low.in_dim * high.in_dim, low.out_dim * high.out_dim, std::move(ks)};
}

/*! \brief Trace out every qubit not listed in `kept`.
 *
 * Kept qubits keep their relative order: the smallest listed qubit becomes
 * qubit 0 of the result.
 */
inline Mat partial_trace(const Mat& rho, const std::vector<int>& kept) {
  const int q = log2_dim(rho.rows());
  if (q < 0) throw DimensionError("partial_trace: dimension is not a power of two");
  std::uint64_t kept_mask = 0;
  for (int k : kept) {
    if (k < 0 || k >= q) throw DimensionError("partial_trace: qubit index out of range");
    kept_mask |= std::uint64_t{1} << k;
  }
  std::vector<int> order;
  for (int k = 0; k < q; ++k)
    if ((kept_mask >> k) & 1U) order.push_back(k);
  auto compress = [&](std::uint64_t x) {
    std::uint64_t r = 0;
    for (std::size_t i = 0; i < order.size(); ++i) r |= ((x >> order[i]) & 1U) << i;
    return r;
  };
  const Eigen::Index dk = Eigen::Index{1} << order.size();
  Mat out = Mat::Zero(dk, dk);
  const auto d = static_cast<std::uint64_t>(rho.rows());
  for (std::uint64_t x = 0; x < d; ++x)
    for (std::uint64_t y = 0; y < d; ++y)
      if ((x & ~kept_mask) == (y & ~kept_mask))
        out(static_cast<Eigen::Index>(compress(x)), static_cast<Eigen::Index>(compress(y))) +=
            rho(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
  return out;
}

inline DensityMatrix partial_trace(const DensityMatrix& rho, const std::vector<int>& kept) {
  return DensityMatrix(partial_trace(rho.matrix(), kept));
}

//! Trace over the second (least significant) factor of a dA x dB bipartition in kron order.
inline Mat trace_out_second(const Mat& rho, Eigen::Index da, Eigen::Index db) {
  Mat out = Mat::Zero(da, da);
  for (Eigen::Index i = 0; i < da; ++i)
    for (Eigen::Index j = 0; j < da; ++j) out(i, j) = rho.block(i * db, j * db, db, db).trace();
  return out;
}

//! Trace over the first (most significant) factor of a dA x dB bipartition in kron order.
inline Mat trace_out_first(const Mat& rho, Eigen::Index da, Eigen::Index db) {
  Mat out = Mat::Zero(db, db);
  for (Eigen::Index i = 0; i < da; ++i) out += rho.block(i * db, i * db, db, db);
  return out;
}

struct MeasurementOutcome {
  std::uint64_t outcome = 0;  //!< bit i is the result on the i-th listed qubit
  double probability = 0.0;
  std::optional<DensityMatrix> post_state;  //!< normalized full-register state; empty when probability is 0
};

//! Computational-basis measurement of the listed qubits; returns all 2^k outcomes.
inline std::vector<MeasurementOutcome> measure_computational(const DensityMatrix& rho, const std::vector<int>& qubits) {
  const int q = rho.num_qubits();
  if (q < 0) throw DimensionError("measure_computational: dimension is not a power of two");
  for (int k : qubits)
    if (k < 0 || k >= q) throw DimensionError("measure_computational: qubit index out of range");
  const auto d = static_cast<std::uint64_t>(rho.dim());
  auto outcome_of = [&](std::uint64_t x) {
    std::uint64_t r = 0;
    for (std::size_t i = 0; i < qubits.size(); ++i) r |= ((x >> qubits[i]) & 1U) << i;
    return r;
  };
  std::vector<MeasurementOutcome> result;
  for (std::uint64_t o = 0; o < (std::uint64_t{1} << qubits.size()); ++o) {
    Mat proj = Mat::Zero(rho.dim(), rho.dim());
    for (std::uint64_t x = 0; x < d; ++x)
      for (std::uint64_t y = 0; y < d; ++y)
        if (outcome_of(x) == o && outcome_of(y) == o)
          proj(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) = rho(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
    MeasurementOutcome mo;
    mo.outcome = o;
    mo.probability = std::max(0.0, proj.trace().real());
    if (mo.probability > 0) mo.post_state = DensityMatrix(proj / mo.probability);
    result.push_back(std::move(mo));
  }
  return result;
}

/*! \brief Normalized Choi matrix (id (x) ch)(|Omega><Omega|).
 *
 * The channel output occupies the least significant index, the reference
 * system the most significant: J[(o + dout * i), (o' + dout * i')].
 */
inline Mat choi(const QuantumChannel& ch) {
  const Eigen::Index n = ch.in_dim * ch.out_dim;
  Mat j = Mat::Zero(n, n);
  for (const auto& k : ch.kraus) {
    const Eigen::Map<const Vec> v(k.data(), n);
    j.noalias() += v * v.adjoint();
  }
  return j / static_cast<double>(ch.in_dim);
}

//! Sum of |eigenvalues| of a Hermitian matrix.
inline double trace_norm(const Mat& h) {
  Eigen::SelfAdjointEigenSolver<Mat> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().sum();
}

inline double trace_distance(const Mat& rho, const Mat& sigma) {
  if (rho.rows() != sigma.rows() || rho.cols() != sigma.cols()) throw DimensionError("trace_distance: dimension mismatch");
  return 0.5 * trace_norm(rho - sigma);
}

inline double trace_distance(const DensityMatrix& rho, const DensityMatrix& sigma) {
  return trace_distance(rho.matrix(), sigma.matrix());
}

//! <psi| rho |psi>.
inline double fidelity_pure(const Mat& rho, const Vec& psi) {
  if (rho.rows() != psi.size()) throw DimensionError("fidelity_pure: dimension mismatch");
  return (psi.adjoint() * rho * psi)(0, 0).real();
}
inline double fidelity_pure(const DensityMatrix& rho, const StateVector& psi) {
  return fidelity_pure(rho.matrix(), psi.amplitudes);
}

struct EigenPair {
  double value = 0.0;
  Vec vector;
};

inline EigenPair principal_eig(const Mat& rho) {
  Eigen::SelfAdjointEigenSolver<Mat> es(rho);
  const Eigen::Index last = rho.rows() - 1;
  return {es.eigenvalues()(last), es.eigenvectors().col(last)};
}
inline EigenPair principal_eig(const DensityMatrix& rho) { return principal_eig(rho.matrix()); }

//! Eigenvalues in ascending order.
inline RVec spectrum(const Mat& rho) {
  Eigen::SelfAdjointEigenSolver<Mat> es(rho, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

// ---------------------------------------------------------------------------
// Random objects for tests and experiments

inline Mat random_gaussian_matrix(Eigen::Index rows, Eigen::Index cols, CounterRng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double re = nd(rng);
      const double im = nd(rng);
      m(i, j) = cd(re, im);
    }
  return m;
}

//! Haar-random unitary via QR with phase correction.
inline Mat random_unitary(Eigen::Index d, CounterRng& rng) {
  Eigen::HouseholderQR<Mat> qr(random_gaussian_matrix(d, d, rng));
  Mat q = qr.householderQ();
  const Mat r = qr.matrixQR();
  for (Eigen::Index k = 0; k < d; ++k) {
    const cd diag = r(k, k);
    q.col(k) *= std::abs(diag) > 0 ? diag / std::abs(diag) : cd(1.0);
  }
  return q;
}

//! Random density matrix of the given rank (Ginibre ensemble).
inline DensityMatrix random_density(Eigen::Index d, CounterRng& rng, Eigen::Index rank = -1) {
  if (rank < 0) rank = d;
  const Mat g = random_gaussian_matrix(d, rank, rng);
  Mat rho = g * g.adjoint();
  rho /= rho.trace().real();
  return DensityMatrix(rho);
}

//! Random channel with `kraus_count` Kraus operators (Stinespring from a random isometry).
inline QuantumChannel random_channel(Eigen::Index d, int kraus_count, CounterRng& rng) {
  const Mat u = random_unitary(d * kraus_count, rng);
  std::vector<Mat> ks;
  for (int k = 0; k < kraus_count; ++k) ks.push_back(u.block(k * d, 0, d, d));
  return {d, d, std::move(ks)};
}

inline Vec random_state(Eigen::Index d, CounterRng& rng) {
  Vec v = random_gaussian_matrix(d, 1, rng).col(0);
  return v / v.norm();
}

}  // namespace qramsim
