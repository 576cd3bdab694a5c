#pragma once
/**
 * @file distill.hpp
 * State-agnostic purity amplification.
 *
 * Distillers consume copies of an unknown mixed state from a CopySource and
 * try to output something close to its principal eigenvector. Two state
 * representations are supported: a dense DensityMatrix, and a SpectralState
 * that stores only the eigenvalues in a fixed (implicit) eigenbasis. Every
 * distiller here maps states diagonal in the input's eigenbasis to states
 * diagonal in that same basis, so the spectral form is exact, not a
 * shortcut, and it lets large-dimension runs stay O(d).
 */

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "qramsim/qcore.hpp"

namespace qramsim {

inline constexpr std::uint64_t kDefaultCopyBudget = 1'000'000;

//! Eigenvalues of a state in a fixed eigenbasis; index `principal` marks |Xi>.
struct SpectralState {
  RVec weights;
  Eigen::Index principal = 0;

  [[nodiscard]] Eigen::Index dim() const { return weights.size(); }
  [[nodiscard]] double principal_weight() const { return weights(principal); }
  [[nodiscard]] double purity() const { return weights.squaredNorm(); }

  //! Index of the largest weight (ties resolve to the lowest index).
  static SpectralState from_weights(RVec w) {
    Eigen::Index top = 0;
    w.maxCoeff(&top);
    return {std::move(w), top};
  }
};

/**
 * Stream of identical copies of rho_in with a copy counter and a hard budget.
 *
 * `next()` hands out one copy; `take(k)` charges k copies at once for
 * distillers that account for consumption arithmetically. Both throw
 * BudgetError instead of exceeding the budget.
 */
template <class State>
class CopySource {
public:
  explicit CopySource(State rho, std::uint64_t budget = kDefaultCopyBudget) : rho_(std::move(rho)), budget_(budget) {}

  const State& next() {
    take(1);
    return rho_;
  }
  void take(std::uint64_t k) {
    if (k > budget_ - consumed_) {
      throw BudgetError("CopySource: copy budget of " + std::to_string(budget_) + " exhausted");
    }
    consumed_ += k;
  }
  [[nodiscard]] std::uint64_t consumed() const { return consumed_; }
  [[nodiscard]] std::uint64_t budget() const { return budget_; }
  [[nodiscard]] std::uint64_t remaining() const { return budget_ - consumed_; }
  [[nodiscard]] const State& state() const { return rho_; }

private:
  State rho_;
  std::uint64_t budget_;
  std::uint64_t consumed_ = 0;
};

struct DistillReport {
  std::string distiller;
  std::map<std::string, double> params;
  std::uint64_t copies = 0;
  std::uint64_t steps = 0;  //!< swap tests or LMR steps performed
  bool success = false;
  bool budget_exhausted = false;
  double overlap = 0.0;  //!< <Xi| rho_out |Xi>
  double success_probability = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
  std::size_t peak_slots = 0;
  std::uint64_t restarts = 0;
  std::optional<DensityMatrix> output;
  RVec output_spectrum;  //!< output weights in the input eigenbasis, when known
};

// ---------------------------------------------------------------------------
// Swap test

struct SwapTestResult {
  double p_pass = 1.0;
  DensityMatrix rho_out;
};
struct SpectralSwapTestResult {
  double p_pass = 1.0;
  SpectralState rho_out;
};

//! Two copies of rho in, one swap test, postselect on pass.
inline SwapTestResult swap_test_step(const DensityMatrix& rho) {
  const Mat& m = rho.matrix();
  const Mat sq = m * m;
  const double purity = sq.trace().real();
  Mat out = (m + sq) / (1.0 + purity);
  out = 0.5 * (out + out.adjoint()).eval();
  return {(1.0 + purity) / 2.0, DensityMatrix(std::move(out))};
}

inline SpectralSwapTestResult swap_test_step(const SpectralState& rho) {
  const double purity = rho.purity();
  RVec w = (rho.weights + rho.weights.cwiseAbs2()) / (1.0 + purity);
  return {(1.0 + purity) / 2.0, SpectralState{std::move(w), rho.principal}};
}

/**
 * Explicit two-copy swap-test circuit on d x d: H on the ancilla, controlled
 * swap, H, then postselect the ancilla on |0> and trace out the second copy.
 * Quadratic in d^2, so only for cross-checking the closed form at small d.
 */
inline SwapTestResult swap_test_circuit(const DensityMatrix& rho) {
  const Eigen::Index d = rho.dim();
  const Eigen::Index dd = d * d;
  Mat swap = Mat::Zero(dd, dd);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) swap(j * d + i, i * d + j) = 1.0;
  // Ancilla is the leading factor. After H, CSWAP, H the |0> block is (I + S)/2.
  Mat h(2, 2);
  h << 1, 1, 1, -1;
  h /= std::sqrt(2.0);
  Mat cswap = Mat::Zero(2 * dd, 2 * dd);
  cswap.topLeftCorner(dd, dd) = Mat::Identity(dd, dd);
  cswap.bottomRightCorner(dd, dd) = swap;
  const Mat hh = kron(h, Mat::Identity(dd, dd));
  const Mat u = hh * cswap * hh;
  Mat anc0 = Mat::Zero(2, 2);
  anc0(0, 0) = 1.0;
  const Mat in = kron(anc0, kron(rho.matrix(), rho.matrix()));
  const Mat out = u * in * u.adjoint();
  const Mat block = out.topLeftCorner(dd, dd);
  const double p = block.trace().real();
  Mat reduced = trace_out_second(block, d, d) / p;
  reduced = 0.5 * (reduced + reduced.adjoint()).eval();
  return {p, DensityMatrix(std::move(reduced))};
}

namespace detail {

inline double principal_overlap(const DensityMatrix& out, const Vec& xi) { return fidelity_pure(out.matrix(), xi); }
inline double principal_overlap(const SpectralState& out, const Vec&) { return out.principal_weight(); }

inline Vec principal_vector(const DensityMatrix& rho) { return principal_eig(rho).vector; }
inline Vec principal_vector(const SpectralState&) { return Vec(); }

inline void store_output(DistillReport& rep, const DensityMatrix& s) { rep.output = s; }
inline void store_output(DistillReport& rep, const SpectralState& s) { rep.output_spectrum = s.weights; }

inline auto swap_step(const DensityMatrix& s) { return swap_test_step(s); }
inline auto swap_step(const SpectralState& s) { return swap_test_step(s); }

}  // namespace detail

/**
 * Exact ladder rho_0 = rho_in, rho_{l+1} = swap-test output of rho_l, with
 * the pass probability p_{l+1} of each rung. Because every swap test at a
 * given level sees two copies of the same rho_l, the streaming run below only
 * needs these k+1 states plus coin flips.
 */
template <class State>
struct SwapLadder {
  std::vector<State> states;  //!< rho_0 .. rho_k
  std::vector<double> p_pass;  //!< p_pass[l] is the pass probability on rho_l
};

template <class State>
SwapLadder<State> swap_ladder(const State& rho_in, int k) {
  if (k < 0) throw PreconditionError("swap_ladder: k must be >= 0");
  SwapLadder<State> lad;
  lad.states.push_back(rho_in);
  for (int l = 0; l < k; ++l) {
    auto r = detail::swap_step(lad.states.back());
    lad.p_pass.push_back(r.p_pass);
    lad.states.push_back(std::move(r.rho_out));
  }
  return lad;
}

//! Expected copies for k successful levels: c_0 = 1, c_{l+1} = 2 c_l / p_l.
template <class State>
double expected_swap_copies(const SwapLadder<State>& lad) {
  double c = 1.0;
  for (double p : lad.p_pass) c = 2.0 * c / p;
  return c;
}

/**
 * Streaming iterated swap test.
 *
 * Storage holds at most one state per level 0..k-1 plus the one in hand.
 * A fresh copy enters at level 0; a state at level l either parks in the
 * empty slot l, or is swap-tested against the parked one. A pass promotes a
 * single state to level l+1, a fail discards both. The run ends when a state
 * reaches level k or the copy budget runs out.
 */
template <class State>
DistillReport iterated_swap_test(CopySource<State>& src, int k, CounterRng& rng) {
  const auto lad = swap_ladder(src.state(), k);
  DistillReport rep;
  rep.distiller = "swap_test";
  rep.params = {{"k", static_cast<double>(k)}};
  const auto start = src.consumed();
  const Vec xi = detail::principal_vector(src.state());

  std::vector<bool> parked(static_cast<std::size_t>(std::max(k, 0)), false);
  std::size_t occupied = 0;
  try {
    int level = 0;
    src.next();
    rep.peak_slots = 1;
    while (level < k) {
      const auto slot = static_cast<std::size_t>(level);
      if (!parked[slot]) {
        parked[slot] = true;
        ++occupied;
        src.next();
        level = 0;
        rep.peak_slots = std::max(rep.peak_slots, occupied + 1);
        continue;
      }
      parked[slot] = false;
      --occupied;
      ++rep.steps;
      if (rng.bernoulli(lad.p_pass[static_cast<std::size_t>(level)])) {
        ++level;
      } else {
        src.next();
        level = 0;
      }
    }
    rep.success = true;
  } catch (const BudgetError&) {
    rep.budget_exhausted = true;
  }
  rep.copies = src.consumed() - start;
  if (rep.success) {
    const State& out = lad.states.back();
    detail::store_output(rep, out);
    rep.overlap = detail::principal_overlap(out, xi);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Fractional swap and its block encoding

//! Swap of two d-level registers in kron order.
inline Mat swap_matrix(Eigen::Index d) {
  Mat s = Mat::Zero(d * d, d * d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) s(j * d + i, i * d + j) = 1.0;
  return s;
}

inline void check_time(double t) {
  if (!(t >= 0.0 && t <= std::numbers::pi / 2 + 1e-15)) throw PreconditionError("fractional swap: t must lie in [0, pi/2]");
}

//! exp(-i S t) = cos(t) I - i sin(t) S.
inline Mat fractional_swap_unitary(double t, Eigen::Index d) {
  check_time(t);
  return std::cos(t) * Mat::Identity(d * d, d * d) - cd(0, std::sin(t)) * swap_matrix(d);
}

struct ThetaAngles {
  double plus = 0.0;
  double minus = 0.0;
};

inline ThetaAngles theta_angles(double t) {
  check_time(t);
  const double a = std::acos((std::cos(t) - std::sin(t)) / 2.0);
  const double b = std::acos((std::cos(t) + std::sin(t)) / 2.0);
  return {(a + b) / 2.0, (a - b) / 2.0};
}

struct BlockGate {
  enum class Kind { Ancilla, ControlledSwap };
  Kind kind = Kind::Ancilla;
  Mat ancilla;  //!< 2x2 single-qubit gate when kind == Ancilla
  std::string label;
};

namespace detail {
inline Mat expi_pauli(double theta, char axis) {
  // exp(i theta P) = cos I + i sin P
  Mat p(2, 2);
  if (axis == 'X') p << 0, 1, 1, 0;
  else p << 0, cd(0, -1), cd(0, 1), 0;
  return std::cos(theta) * Mat::Identity(2, 2) + cd(0, std::sin(theta)) * p;
}
inline Mat pauli_z() {
  Mat z = Mat::Zero(2, 2);
  z(0, 0) = 1;
  z(1, 1) = -1;
  return z;
}
}  // namespace detail

/**
 * Gates of the oblivious-amplitude-amplification sequence in the order they
 * are applied: 4 single-qubit ancilla gates interleaved with 3 controlled
 * swaps. With the ancilla starting and ending in |0> the sequence acts as
 * exp(-i S t) on the two registers, up to a global sign that
 * block_encoding_unitary folds in.
 */
inline std::vector<BlockGate> block_encoding_sequence(double t) {
  const auto th = theta_angles(t);
  using detail::expi_pauli;
  const Mat z = detail::pauli_z();
  return {
      {BlockGate::Kind::Ancilla, expi_pauli(-th.minus, 'X'), "exp(-i theta- X)"},
      {BlockGate::Kind::ControlledSwap, {}, "CSWAP"},
      {BlockGate::Kind::Ancilla, expi_pauli(-th.plus, 'Y') * z * expi_pauli(th.plus, 'Y'), "exp(-i theta+ Y) Z exp(i theta+ Y)"},
      {BlockGate::Kind::ControlledSwap, {}, "CSWAP"},
      {BlockGate::Kind::Ancilla, expi_pauli(-th.minus, 'X') * z * expi_pauli(th.minus, 'X'), "exp(-i theta- X) Z exp(i theta- X)"},
      {BlockGate::Kind::ControlledSwap, {}, "CSWAP"},
      {BlockGate::Kind::Ancilla, expi_pauli(th.plus, 'Y'), "exp(i theta+ Y)"},
  };
}

//! Dense product of the sequence on ancilla (leading factor) x d x d, times -1.
inline Mat block_encoding_unitary(double t, Eigen::Index d) {
  const Eigen::Index dd = d * d;
  Mat cswap = Mat::Zero(2 * dd, 2 * dd);
  cswap.topLeftCorner(dd, dd) = Mat::Identity(dd, dd);
  cswap.bottomRightCorner(dd, dd) = swap_matrix(d);
  Mat u = Mat::Identity(2 * dd, 2 * dd);
  for (const auto& g : block_encoding_sequence(t)) {
    if (g.kind == BlockGate::Kind::ControlledSwap) u = cswap * u;
    else u = kron(g.ancilla, Mat::Identity(dd, dd)) * u;
  }
  return -u;
}

// ---------------------------------------------------------------------------
// LMR density-matrix exponentiation

/**
 * One LMR step: fractional swap of S1 with a fresh copy on S2, then discard
 * S2. `varsigma` lives on A x S1 (A leading), `varrho` on S2 with
 * dim(S2) = dim(S1); dim(A) = dim(varsigma) / dim(varrho).
 */
inline Mat lmr_step(const Mat& varsigma, const Mat& varrho, double t) {
  check_time(t);
  const Eigen::Index ds = varrho.rows();
  if (ds == 0 || varsigma.rows() % ds != 0) throw DimensionError("lmr_step: S1 and S2 dimensions differ");
  const Eigen::Index da = varsigma.rows() / ds;
  const double c = std::cos(t), s = std::sin(t);
  const cd ics(0, c * s);
  Mat out(varsigma.rows(), varsigma.cols());
  // (I_A x varrho) acts blockwise, so avoid forming it when A is trivial.
  Mat sr, rs;
  if (da == 1) {
    sr = varsigma * varrho;
    rs = varrho * varsigma;
  } else {
    const Mat lifted = kron(Mat::Identity(da, da), varrho);
    sr = varsigma * lifted;
    rs = lifted * varsigma;
  }
  out = c * c * varsigma + ics * sr - ics * rs;
  out += s * s * kron(trace_out_second(varsigma, da, ds), varrho);
  return out;
}

inline DensityMatrix lmr_step(const DensityMatrix& varsigma, const DensityMatrix& varrho, double t) {
  Mat m = lmr_step(varsigma.matrix(), varrho.matrix(), t);
  m = 0.5 * (m + m.adjoint()).eval();
  return DensityMatrix(std::move(m));
}

/**
 * Per-eigencomponent LMR map on the 2x2 control block, in column-major vec
 * form, for a single copy with eigenvalue lambda:
 *   sigma -> cos^2 sigma + i cs lambda (sigma P1 - P1 sigma) + sin^2 lambda Tr[total] P1
 * The last term is constant when the whole register has unit trace, so the
 * map is affine; the 5x5 augmented matrix carries the constant in its last
 * column.
 */
inline Eigen::Matrix<cd, 5, 5> lmr_component_affine(double lambda, double t) {
  const double c = std::cos(t), s = std::sin(t);
  Eigen::Matrix<cd, 5, 5> m = Eigen::Matrix<cd, 5, 5>::Zero();
  // vec index: (0,0)->0, (1,0)->1, (0,1)->2, (1,1)->3
  m(0, 0) = c * c;
  m(1, 1) = c * c - cd(0, c * s * lambda);  // sigma_10 (P1 sigma term)
  m(2, 2) = c * c + cd(0, c * s * lambda);  // sigma_01 (sigma P1 term)
  m(3, 3) = c * c;
  m(3, 4) = s * s * lambda;
  m(4, 4) = 1.0;
  return m;
}

//! Same component map for a normalized component (no external trace), i.e. a linear channel.
inline Eigen::Matrix<cd, 4, 4> lmr_component_channel(double lambda, double t) {
  const double c = std::cos(t), s = std::sin(t);
  Eigen::Matrix<cd, 4, 4> m = Eigen::Matrix<cd, 4, 4>::Zero();
  m(0, 0) = c * c;
  m(1, 1) = c * c - cd(0, c * s * lambda);
  m(2, 2) = c * c + cd(0, c * s * lambda);
  m(3, 3) = 1.0;
  m(3, 0) = s * s;
  return m;
}

template <class M>
M matrix_power(M base, std::uint64_t e) {
  M acc = M::Identity(base.rows(), base.cols());
  while (e > 0) {
    if (e & 1U) acc = acc * base;
    base = base * base;
    e >>= 1U;
  }
  return acc;
}

inline Eigen::Matrix2cd unvec2(const Eigen::Matrix<cd, 4, 1>& v) {
  Eigen::Matrix2cd m;
  m << v(0), v(2), v(1), v(3);
  return m;
}

// ---------------------------------------------------------------------------
// Simple QPCA

struct SimpleQpcaParams {
  std::uint64_t r = 0;
  double t = 0.0;
};

inline SimpleQpcaParams simple_qpca_params(double gamma, double eps_dist) {
  const double pi2 = std::numbers::pi * std::numbers::pi;
  const double raw = 3.0 * pi2 * (1.0 - gamma) / (2.0 * gamma * gamma * gamma * eps_dist);
  const auto r = static_cast<std::uint64_t>(std::ceil(raw - 1e-12));
  return {r, std::numbers::pi / (2.0 * static_cast<double>(r) * gamma)};
}

//! Largest lambda_2 the simple protocol tolerates.
inline double simple_qpca_lambda2_bound(double gamma, double eps_dist) {
  const double pi2 = std::numbers::pi * std::numbers::pi;
  return gamma * std::sqrt(8.0 * gamma * eps_dist / (3.0 * pi2 * (1.0 - gamma)));
}

inline void check_simple_qpca(const RVec& ascending, double gamma, double eps_dist) {
  if (!(gamma > 0 && gamma < 1 && eps_dist > 0 && eps_dist < 1)) throw PreconditionError("qpca_simple: gamma and eps_dist must lie in (0,1)");
  if (eps_dist > 1 - gamma) throw PreconditionError("qpca_simple: eps_dist must be <= 1 - gamma");
  const Eigen::Index d = ascending.size();
  const double l1 = ascending(d - 1);
  if (l1 < gamma - 1e-12 || l1 > 3 * gamma + 1e-12) throw PreconditionError("qpca_simple: lambda_1 outside [gamma, 3 gamma]");
  if (d > 1 && ascending(d - 2) > simple_qpca_lambda2_bound(gamma, eps_dist) + 1e-12) {
    throw PreconditionError("qpca_simple: lambda_2 exceeds the admissible bound");
  }
}

/**
 * Simple QPCA by dense propagation: the control qubit (leading factor) and
 * the qudit start in |+><+| x rho_in and receive r LMR steps with amended
 * copies |1><1| x rho_in. The ancilla is then measured in the +/- basis and
 * only |-> is kept. The success probability is exact; the success flag is a
 * single draw from it.
 */
inline DistillReport qpca_simple(CopySource<DensityMatrix>& src, double gamma, double eps_dist, CounterRng& rng) {
  const Mat& rho = src.state().matrix();
  const Eigen::Index d = rho.rows();
  check_simple_qpca(spectrum(rho), gamma, eps_dist);
  const auto par = simple_qpca_params(gamma, eps_dist);

  DistillReport rep;
  rep.distiller = "qpca_simple";
  rep.params = {{"gamma", gamma}, {"eps_dist", eps_dist}, {"r", static_cast<double>(par.r)}, {"t", par.t}};
  const auto start = src.consumed();

  Mat plus = Mat::Constant(2, 2, 0.5);
  Mat one = Mat::Zero(2, 2);
  one(1, 1) = 1.0;
  const Mat amended = kron(one, rho);
  try {
    src.next();
    Mat state = kron(plus, rho);
    for (std::uint64_t k = 0; k < par.r; ++k) {
      src.next();
      state = lmr_step(state, amended, par.t);
      ++rep.steps;
    }
    // <-| x I on the leading qubit.
    const Mat minus_block = 0.5 * (state.topLeftCorner(d, d) - state.topRightCorner(d, d) - state.bottomLeftCorner(d, d) +
                                   state.bottomRightCorner(d, d));
    const double p = minus_block.trace().real();
    rep.success_probability = p;
    Mat out = minus_block / p;
    out = 0.5 * (out + out.adjoint()).eval();
    rep.output = DensityMatrix(std::move(out));
    rep.overlap = fidelity_pure(rep.output->matrix(), principal_eig(rho).vector);
    rep.success = rng.bernoulli(p);
  } catch (const BudgetError&) {
    rep.budget_exhausted = true;
  }
  rep.copies = src.consumed() - start;
  return rep;
}

struct SimpleQpcaSpectral {
  double success_probability = 0.0;
  RVec postselected_weights;  //!< in the input eigenbasis, normalized
};

/**
 * Same protocol evaluated per eigencomponent: sigma_j(r) = Phi_j^r(|+><+|)
 * and the |-> outcome weight of component j is lambda_j <-|sigma_j(r)|->.
 */
inline SimpleQpcaSpectral qpca_simple_spectral(const RVec& lambdas, std::uint64_t r, double t) {
  SimpleQpcaSpectral out;
  out.postselected_weights.resize(lambdas.size());
  Eigen::Matrix<cd, 4, 1> plus;
  plus << 0.5, 0.5, 0.5, 0.5;
  for (Eigen::Index j = 0; j < lambdas.size(); ++j) {
    const auto sig = unvec2(matrix_power(lmr_component_channel(lambdas(j), t), r) * plus);
    const double minus = 0.5 * (sig(0, 0) - sig(0, 1) - sig(1, 0) + sig(1, 1)).real();
    out.postselected_weights(j) = lambdas(j) * minus;
  }
  out.success_probability = out.postselected_weights.sum();
  out.postselected_weights /= out.success_probability;
  return out;
}

// ---------------------------------------------------------------------------
// Recursive QPCA

struct QpcaIteration {
  double eps = 0.0;    //!< allowed phase-estimation failure probability
  double zeta = 0.0;   //!< step-size budget
  std::uint64_t reps = 0;   //!< Hadamard tests per basis
  std::uint64_t steps = 0;  //!< LMR steps per Hadamard test
  double t = 0.0;
};

struct QpcaSchedule {
  double delta = 0.0;
  double threshold = 0.0;
  double tau = 0.0;
  std::vector<QpcaIteration> iterations;
  int coarse_count = 0;
};

/**
 * Iteration schedule for recursive filtering.
 *
 * Coarse phase (only when gamma < 2/3): l = ceil(log2(1/(3 gamma))) + 1
 * rounds with eps_i = zeta_i = 2^((1-i)/2) / 16. Fine phase (only when
 * eps_dist <= 1/3): l = ceil(log2((1-gamma)/eps_dist)) rounds with
 * zeta_i = 2^(-3-i), eps_i = 2^(-4-l+i).
 *
 * Each round estimates the eigenvalue by R = ceil(32 ln(2/eps_i) / delta^2)
 * Hadamard tests in each of the X and Y bases at evolution time
 * tau = pi / (1 + delta), so phases of eigenvalues in [0, 1] never wrap.
 * Total evolution time T = 2 R tau, step t_i = zeta_i / (3T), and
 * r = ceil(tau / t_i) LMR steps per test.
 */
inline QpcaSchedule qpca_recursive_schedule(double gamma, double alpha, double eps_dist) {
  if (!(gamma > 0 && gamma < 1 && alpha > 0 && alpha < 1 && eps_dist > 0 && eps_dist < 1)) {
    throw PreconditionError("qpca_recursive: gamma, alpha, eps_dist must lie in (0,1)");
  }
  if (!(eps_dist < 1 - gamma)) throw PreconditionError("qpca_recursive: eps_dist must be < 1 - gamma");
  QpcaSchedule s;
  s.delta = (1 - alpha) * gamma / 2;
  s.threshold = (1 + alpha) * gamma / 2;
  s.tau = std::numbers::pi / (1 + s.delta);
  auto push = [&](double eps, double zeta) {
    QpcaIteration it;
    it.eps = eps;
    it.zeta = zeta;
    it.reps = static_cast<std::uint64_t>(std::ceil(32.0 * std::log(2.0 / eps) / (s.delta * s.delta)));
    const double total_time = 2.0 * static_cast<double>(it.reps) * s.tau;
    const double t = zeta / (3.0 * total_time);
    it.steps = static_cast<std::uint64_t>(std::ceil(s.tau / t));
    it.t = s.tau / static_cast<double>(it.steps);
    s.iterations.push_back(it);
  };
  if (gamma < 2.0 / 3.0) {
    const int l = static_cast<int>(std::ceil(std::log2(1.0 / (3.0 * gamma)))) + 1;
    for (int i = 1; i <= l; ++i) {
      const double e = std::pow(2.0, (1.0 - i) / 2.0) / 16.0;
      push(e, e);
    }
    s.coarse_count = l;
  }
  if (eps_dist <= 1.0 / 3.0) {
    const int l = std::max(1, static_cast<int>(std::ceil(std::log2((1 - gamma) / eps_dist))));
    for (int i = 1; i <= l; ++i) push(std::pow(2.0, -4.0 - l + i), std::pow(2.0, -3.0 - i));
  }
  return s;
}

//! Unit-constant copy formula, for logging against measured copies.
inline double qpca_recursive_copy_formula(double gamma, double alpha, double eps_dist) {
  return (1 - gamma) / ((1 - alpha) * (1 - alpha) * gamma * gamma) * (1 / eps_dist + 1 / gamma);
}

namespace detail {

/**
 * Exact outcome statistics of one Hadamard test with r LMR steps, as affine
 * functions of the current weights: component j ends in
 * p_j * lin[j] + con[j] (2x2 blocks on the control qubit).
 */
struct HadamardTestModel {
  std::vector<Eigen::Matrix2cd> lin, con;
};

inline HadamardTestModel hadamard_test_model(const RVec& lambdas, double t, std::uint64_t r) {
  HadamardTestModel m;
  Eigen::Matrix<cd, 5, 1> plus, unit;
  plus << 0.5, 0.5, 0.5, 0.5, 0.0;
  unit << 0, 0, 0, 0, 1.0;
  for (Eigen::Index j = 0; j < lambdas.size(); ++j) {
    const auto pw = matrix_power(lmr_component_affine(lambdas(j), t), r);
    const Eigen::Matrix<cd, 5, 1> a = pw * plus, b = pw * unit;
    m.lin.push_back(unvec2(a.head<4>()));
    m.con.push_back(unvec2(b.head<4>()));
  }
  return m;
}

//! Projector expectation <o| M |o> for o in {+,-} (X basis) or {+i,-i} (Y basis).
inline double basis_weight(const Eigen::Matrix2cd& m, bool y_basis, bool positive) {
  const double sgn = positive ? 1.0 : -1.0;
  if (!y_basis) return 0.5 * (m(0, 0) + m(1, 1) + sgn * (m(0, 1) + m(1, 0))).real();
  // |+i> = (|0> + i|1>)/sqrt2: <+i|M|+i> = (M00 + M11 + i M01 - i M10)/2
  return 0.5 * (m(0, 0) + m(1, 1) + sgn * cd(0, 1) * (m(0, 1) - m(1, 0))).real();
}

}  // namespace detail

/**
 * Recursive QPCA filtering as an exact trajectory on the eigen-weights.
 *
 * All operations keep the register diagonal in the eigenbasis of rho_in, so
 * the state is the weight vector p. Each Hadamard test samples its outcome
 * from the exact LMR-evolved statistics and then conditions p on it. After
 * 2R tests a round compares atan2(sin_hat, cos_hat) / tau with the
 * threshold; a round below threshold restarts the whole protocol from rho_in.
 * Copies are charged arithmetically (one per LMR step plus one per restart).
 */
inline DistillReport qpca_recursive(CopySource<SpectralState>& src, double gamma, double alpha, double eps_dist,
                                    CounterRng& rng, std::uint64_t max_restarts = 10'000) {
  const SpectralState& in = src.state();
  const auto sched = qpca_recursive_schedule(gamma, alpha, eps_dist);
  DistillReport rep;
  rep.distiller = "qpca_recursive";
  rep.params = {{"gamma", gamma},
                {"alpha", alpha},
                {"eps_dist", eps_dist},
                {"delta", sched.delta},
                {"tau", sched.tau},
                {"iterations", static_cast<double>(sched.iterations.size())}};
  const auto start = src.consumed();

  std::vector<detail::HadamardTestModel> models;
  for (const auto& it : sched.iterations) models.push_back(detail::hadamard_test_model(in.weights, it.t, it.steps));

  try {
    for (;;) {
      src.take(1);
      RVec p = in.weights;
      bool ok = true;
      for (std::size_t i = 0; i < sched.iterations.size() && ok; ++i) {
        const auto& it = sched.iterations[i];
        const auto& mod = models[i];
        std::int64_t sums[2] = {0, 0};
        for (int basis = 0; basis < 2; ++basis) {
          for (std::uint64_t rep_i = 0; rep_i < it.reps; ++rep_i) {
            src.take(it.steps);
            rep.steps += it.steps;
            RVec wp(p.size()), wm(p.size());
            for (Eigen::Index j = 0; j < p.size(); ++j) {
              const Eigen::Matrix2cd m = p(j) * mod.lin[static_cast<std::size_t>(j)] + mod.con[static_cast<std::size_t>(j)];
              wp(j) = std::max(0.0, detail::basis_weight(m, basis == 1, true));
              wm(j) = std::max(0.0, detail::basis_weight(m, basis == 1, false));
            }
            const double pp = wp.sum(), pm = wm.sum();
            const bool plus = rng.uniform() * (pp + pm) < pp;
            p = plus ? RVec(wp / pp) : RVec(wm / pm);
            sums[basis] += plus ? 1 : -1;
          }
        }
        const double reps = static_cast<double>(it.reps);
        // Ideal outcome statistics: <X> = cos(lambda tau), <Y> = -sin(lambda tau).
        const double lam_hat = std::atan2(-static_cast<double>(sums[1]) / reps, static_cast<double>(sums[0]) / reps) / sched.tau;
        ok = lam_hat > sched.threshold;
      }
      if (ok) {
        rep.success = true;
        rep.output_spectrum = p;
        rep.overlap = p(in.principal);
        break;
      }
      if (++rep.restarts > max_restarts) throw BudgetError("qpca_recursive: restart limit reached");
    }
  } catch (const BudgetError&) {
    rep.budget_exhausted = true;
  }
  rep.copies = src.consumed() - start;
  return rep;
}

//! Dense front end: diagonalize rho_in once, run on the spectrum, rebuild the output.
inline DistillReport qpca_recursive(CopySource<DensityMatrix>& src, double gamma, double alpha, double eps_dist,
                                    CounterRng& rng, std::uint64_t max_restarts = 10'000) {
  Eigen::SelfAdjointEigenSolver<Mat> es(src.state().matrix());
  RVec w = es.eigenvalues().cwiseMax(0.0);
  CopySource<SpectralState> spec(SpectralState{w, w.size() - 1}, src.remaining());
  auto rep = qpca_recursive(spec, gamma, alpha, eps_dist, rng, max_restarts);
  src.take(spec.consumed());
  if (rep.success) {
    Mat out = es.eigenvectors() * rep.output_spectrum.cast<cd>().asDiagonal() * es.eigenvectors().adjoint();
    out = 0.5 * (out + out.adjoint()).eval();
    rep.output = DensityMatrix(std::move(out));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Helpers for picking distillation depth

//! Smallest k whose exact swap-test ladder reaches principal weight >= 1 - eps.
template <class State>
int swap_levels_for(const State& rho_in, double eps, int max_k = 30) {
  const Vec xi = detail::principal_vector(rho_in);
  State cur = rho_in;
  for (int k = 0; k <= max_k; ++k) {
    if (detail::principal_overlap(cur, xi) >= 1 - eps) return k;
    cur = detail::swap_step(cur).rho_out;
  }
  throw BudgetError("swap_levels_for: target not reached within max_k levels");
}

}  // namespace qramsim
