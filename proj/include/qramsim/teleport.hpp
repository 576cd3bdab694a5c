#pragma once

// Gate teleportation of QRAM resource states and the adaptive multi-round
// protocol built on it.
//
// Register layout.  A teleportation output is written as (address register)
// low, (classical outcome m) high: output index = x + 2^n * m.  The joint
// circuit register holds the address low and the resource high.
//
// Every Kraus operator the protocol applies to the address register is
// diagonal, so the composed adaptive channel is a Schur multiplier
// rho -> M o rho.  Branch enumeration works with these d x d multipliers
// directly.

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "qramsim/boolfn.hpp"
#include "qramsim/device.hpp"
#include "qramsim/distill.hpp"
#include "qramsim/qcore.hpp"
#include "qramsim/twirlset.hpp"

namespace qramsim {

inline constexpr int kBranchAddressCap = 3;
inline constexpr int kBranchWorkCap = 4;

namespace detail {

inline Eigen::Index dim_of(int n) { return Eigen::Index{1} << n; }

inline BitString outcome_bits(int n, std::uint64_t m) { return {n, m}; }

//! Permutation |w>|z> -> |w>|z xor w> on two n-qubit registers, w low.
inline Mat transversal_cnot(int n) {
  const Eigen::Index d = dim_of(n);
  Mat p = Mat::Zero(d * d, d * d);
  for (Eigen::Index w = 0; w < d; ++w)
    for (Eigen::Index z = 0; z < d; ++z) p(w + d * (z ^ w), w + d * z) = 1.0;
  return p;
}

//! Eigen-decomposition with each eigenvector's phase fixed against `ref`.
//!
//! Vectors overlapping `ref` get a real positive overlap; the rest get a real
//! positive largest entry.  This only picks a gauge: the mixture is unchanged.
struct AlignedEigen {
  RVec values;
  Mat vectors;
};

inline AlignedEigen aligned_eigen(const Mat& rho, const Vec& ref) {
  Eigen::SelfAdjointEigenSolver<Mat> es(rho);
  AlignedEigen out{es.eigenvalues().cwiseMax(0.0), es.eigenvectors()};
  for (Eigen::Index j = 0; j < out.vectors.cols(); ++j) {
    auto col = out.vectors.col(j);
    cd anchor = ref.dot(col);
    if (std::abs(anchor) < 1e-9) {
      Eigen::Index top = 0;
      col.cwiseAbs().maxCoeff(&top);
      anchor = std::conj(col(top));
    }
    col *= std::conj(anchor) / std::abs(anchor);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Single-round teleportation

//! (1/2^n) sum_m V(g^{+m}) rho V(g^{+m})^dagger (x) |m><m|.
inline QuantumChannel ideal_teleport_channel(const DataTable& g) {
  check_register(g.n());
  const int n = g.n();
  const Eigen::Index d = detail::dim_of(n);
  const double amp = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<Mat> ks;
  for (std::uint64_t m = 0; m < static_cast<std::uint64_t>(d); ++m) {
    const RVec v = qram_unitary(shift(g, detail::outcome_bits(n, m)));
    Mat k = Mat::Zero(d * d, d);
    for (Eigen::Index x = 0; x < d; ++x) k(x + d * static_cast<Eigen::Index>(m), x) = v(x) * amp;
    ks.push_back(std::move(k));
  }
  return {d, d * d, std::move(ks)};
}

struct TeleportOutcome {
  std::uint64_t m = 0;
  double probability = 0;
  DensityMatrix state;  //!< post-measurement address register
};

/*! \brief One run of the teleportation circuit on dense matrices.
 *
 * Builds addr (x) resource, applies CNOTs from address qubit i onto resource
 * qubit i, measures the resource register and returns the sampled outcome
 * together with the reduced address state.
 */
inline TeleportOutcome teleport_once(const DensityMatrix& addr, const DensityMatrix& resource, CounterRng& rng) {
  const int n = addr.num_qubits();
  if (n < 0 || resource.num_qubits() != n) throw DimensionError("teleport_once: registers must have the same qubit count");
  check_register(2 * n, kJointCap);
  const Eigen::Index d = detail::dim_of(n);
  const Mat cx = detail::transversal_cnot(n);
  const DensityMatrix joint(cx * tensor(addr.matrix(), resource.matrix()) * cx.transpose());
  std::vector<int> res_qubits;
  for (int i = 0; i < n; ++i) res_qubits.push_back(n + i);
  const auto outs = measure_computational(joint, res_qubits);
  const double u = rng.uniform();
  double acc = 0;
  const MeasurementOutcome* pick = nullptr;
  for (const auto& o : outs) {
    if (o.probability <= 0) continue;
    pick = &o;
    acc += o.probability;
    if (u < acc) break;
  }
  if (!pick) throw InvariantError("teleport_once: no outcome with positive probability");
  return {pick->outcome, pick->probability, DensityMatrix(trace_out_first(pick->post_state->matrix(), d, d))};
}

//! Teleportation channel when phi replaces the ideal resource state.
inline QuantumChannel teleport_channel_from_resource(const DensityMatrix& phi) {
  const int n = phi.num_qubits();
  if (n < 0) throw DimensionError("teleport_channel_from_resource: dimension is not a power of two");
  check_register(n);
  const Eigen::Index d = detail::dim_of(n);
  Eigen::SelfAdjointEigenSolver<Mat> es(phi.matrix());
  std::vector<Mat> ks;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double lam = es.eigenvalues()(j);
    if (lam <= 1e-15) continue;
    const Vec psi = es.eigenvectors().col(j) * std::sqrt(lam);
    for (Eigen::Index m = 0; m < d; ++m) {
      Mat k = Mat::Zero(d * d, d);
      for (Eigen::Index x = 0; x < d; ++x) k(x + d * m, x) = psi(x ^ m);
      ks.push_back(std::move(k));
    }
  }
  return {d, d * d, std::move(ks)};
}

/*! \brief Choi block of a channel whose output carries a classical record m.
 *
 * For output index o = data + d*m the Choi matrix has no entries between
 * different m, so it splits into d blocks of size d^2 indexed by
 * (data + d * input).
 */
inline Mat classical_block_choi(const QuantumChannel& ch, Eigen::Index m) {
  const Eigen::Index d = ch.in_dim;
  if (ch.out_dim != d * d) throw DimensionError("classical_block_choi: output must be register (x) record");
  Mat j = Mat::Zero(d * d, d * d);
  Vec v(d * d);
  for (const auto& k : ch.kraus) {
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index x = 0; x < d; ++x) v(x + d * i) = k(x + d * m, i);
    j.noalias() += v * v.adjoint();
  }
  return j / static_cast<double>(d);
}

//! (1/2) || Choi(ideal teleport of g) - Choi(teleport with phi) ||_1.
inline double choi_gap(const DensityMatrix& phi, const DataTable& g) {
  if (phi.num_qubits() != g.n()) throw DimensionError("choi_gap: resource and dataset sizes differ");
  const auto ideal = ideal_teleport_channel(g);
  const auto appr = teleport_channel_from_resource(phi);
  double total = 0;
  for (Eigen::Index m = 0; m < ideal.in_dim; ++m)
    total += trace_norm(classical_block_choi(ideal, m) - classical_block_choi(appr, m));
  return 0.5 * total;
}

// ---------------------------------------------------------------------------
// Protocol configuration and trace

enum class BranchMode { Trajectory, EnumerateBranches };

inline const char* to_string(BranchMode m) { return m == BranchMode::Trajectory ? "trajectory" : "enumerate_branches"; }

struct DistillerSpec {
  enum class Kind { None, SwapTest, QpcaSimple, QpcaRecursive };
  Kind kind = Kind::SwapTest;
  double eps_dist = 0.01;
  int levels = -1;      //!< swap-test depth; -1 picks the smallest depth reaching 1 - eps_dist overlap
  double gamma = 0;     //!< QPCA principal-weight bound; 0 uses the resource fidelity
  double alpha = 0.1;   //!< recursive QPCA slack
  std::uint64_t budget = kDefaultCopyBudget;
};

inline const char* to_string(DistillerSpec::Kind k) {
  switch (k) {
    case DistillerSpec::Kind::None: return "none";
    case DistillerSpec::Kind::SwapTest: return "swap_test";
    case DistillerSpec::Kind::QpcaSimple: return "qpca_simple";
    case DistillerSpec::Kind::QpcaRecursive: return "qpca_recursive";
  }
  return "?";
}

/*! \brief Everything one protocol run needs.
 *
 * The device and encoding noise act on the whole work register of n + b
 * qubits (address plus bus when b > 0).
 */
struct ProtocolConfig {
  int n = 1;
  int b = 0;
  NoisyDevice device = noiseless_device(1);
  std::optional<EncodingNoise> encoding;
  std::optional<TwirlMode> twirl;
  DistillerSpec distiller;
  int max_rounds = 1;
  std::uint64_t seed = 0;
  BranchMode branch_mode = BranchMode::Trajectory;

  [[nodiscard]] int work_qubits() const { return n + b; }

  void validate() const {
    if (n < 1 || b < 0) throw PreconditionError("ProtocolConfig: need n >= 1 and b >= 0");
    check_register(work_qubits());
    if (max_rounds < (b > 0 ? n + 1 : n)) throw PreconditionError("ProtocolConfig: max_rounds must be at least n (n + 1 when b > 0)");
    if (!(distiller.eps_dist > 0 && distiller.eps_dist < 1)) throw PreconditionError("ProtocolConfig: eps_dist must lie in (0, 1)");
    if (device.n != work_qubits()) throw DimensionError("ProtocolConfig: device size must equal n + b");
    if (encoding) {
      if (encoding->n != work_qubits()) throw DimensionError("ProtocolConfig: encoding noise size must equal n + b");
      encoding->validate();
    }
    if (branch_mode == BranchMode::EnumerateBranches && (n > kBranchAddressCap || work_qubits() > kBranchWorkCap))
      throw CapError("ProtocolConfig: branch enumeration is limited to n <= 3 and n + b <= 4");
  }

  static ProtocolConfig noiseless(int n, int b = 0, BranchMode mode = BranchMode::Trajectory) {
    ProtocolConfig c;
    c.n = n;
    c.b = b;
    c.device = noiseless_device(n + b);
    c.max_rounds = b > 0 ? n + 1 : n;
    c.branch_mode = mode;
    return c;
  }
};

struct RoundRecord {
  int round = 0;
  int degree = 0;  //!< degree of the dataset before the round
  std::uint64_t m = 0;
  std::uint64_t copies = 0;
  double overlap = 0;  //!< <Psi(g)| resource |Psi(g)> of the state actually teleported
};

enum class ProtocolStatus { Completed, BudgetExhausted, MaxRoundsReached };

inline const char* to_string(ProtocolStatus s) {
  switch (s) {
    case ProtocolStatus::Completed: return "completed";
    case ProtocolStatus::BudgetExhausted: return "budget_exhausted";
    case ProtocolStatus::MaxRoundsReached: return "max_rounds_reached";
  }
  return "?";
}

struct ProtocolTrace {
  int n = 0;
  int b = 0;
  std::uint64_t seed = 0;
  std::vector<RoundRecord> rounds;
  int terminal = -1;  //!< value of the final constant dataset, -1 if the run stopped early
  std::uint64_t q_used = 0;
  std::uint64_t gates_used = 0;
  ProtocolStatus status = ProtocolStatus::Completed;

  [[nodiscard]] bool degrees_strictly_decrease() const {
    for (std::size_t i = 1; i < rounds.size(); ++i)
      if (rounds[i].degree >= rounds[i - 1].degree) return false;
    return true;
  }

  static std::string csv_header() { return "round,degree,m_hex,copies,overlap"; }

  [[nodiscard]] std::string csv() const {
    std::ostringstream os;
    os << csv_header() << '\n';
    os.precision(17);
    for (const auto& r : rounds)
      os << r.round << ',' << r.degree << ",0x" << std::hex << r.m << std::dec << ',' << r.copies << ',' << r.overlap << '\n';
    return os.str();
  }
};

/*! \brief What the protocol did to the work register.
 *
 * Trajectory mode fills `diagonal` with the product of the diagonal Kraus
 * operators applied in each round (normalized by their branch weight); the
 * ideal value is V(f) times the tracked global sign.  Enumeration fills
 * `schur` with the Schur multiplier of the composed channel averaged over all
 * outcome branches.
 */
struct EffectiveAction {
  int n = 0;
  int b = 0;
  BranchMode mode = BranchMode::Trajectory;
  Vec diagonal;
  int global_sign = 1;
  bool matches_with_sign = false;   //!< diagonal == global_sign * V(f)
  bool matches_up_to_sign = false;  //!< diagonal == +V(f) or -V(f)
  double target_fidelity = 0;       //!< |<V(f), diagonal>|^2 / d^2, blind to the global sign
  Mat schur;
  std::uint64_t branches = 0;
  int max_rounds_used = 0;
  double outcome_uniformity_defect = 0;  //!< max_{g,m,x} |Pr[m | x] - 2^-(n+b)| over visited nodes
};

struct ProtocolResult {
  EffectiveAction action;
  ProtocolTrace trace;
};

// ---------------------------------------------------------------------------
// Resource pipeline: device, encoding noise, twirl, distillation

struct DistilledResource {
  Mat state;
  std::uint64_t copies = 0;
  std::uint64_t steps = 0;
  double overlap = 0;
  bool ok = false;
};

/*! \brief Per-dataset resource preparation shared by all rounds and trials.
 *
 * The twirled input state and the swap-test depth are cached per dataset.
 * Thread safe.
 */
class ResourcePipeline {
public:
  explicit ResourcePipeline(const ProtocolConfig& cfg) : cfg_(cfg), prep_(cfg.device, cfg.encoding) {}

  //! State handed to the distiller: noisy, encoded and (optionally) twirled.
  Mat input_state(const DataTable& g) {
    {
      std::lock_guard lock(mu_);
      auto it = inputs_.find(g.words());
      if (it != inputs_.end()) return it->second;
    }
    Mat rho = cfg_.twirl ? twirled_state(g, prep_, *cfg_.twirl, 1).state.matrix() : prep_(g);
    std::lock_guard lock(mu_);
    inputs_.emplace(g.words(), rho);
    return rho;
  }

  int swap_levels(const DataTable& g) {
    if (cfg_.distiller.levels >= 0) return cfg_.distiller.levels;
    {
      std::lock_guard lock(mu_);
      auto it = levels_.find(g.words());
      if (it != levels_.end()) return it->second;
    }
    const int k = swap_levels_for(DensityMatrix(input_state(g)), cfg_.distiller.eps_dist);
    std::lock_guard lock(mu_);
    levels_.emplace(g.words(), k);
    return k;
  }

  //! One distillation run with its random copy count.
  DistilledResource distill(const DataTable& g, CounterRng& rng) {
    const auto& spec = cfg_.distiller;
    const Mat rho = input_state(g);
    const Vec psi = resource_state(g).amplitudes;
    DistilledResource out;
    if (spec.kind == DistillerSpec::Kind::None) {
      out = {rho, 1, 0, fidelity_pure(rho, psi), true};
      return out;
    }
    CopySource<DensityMatrix> src(DensityMatrix(rho), spec.budget);
    DistillReport rep;
    const double gamma = spec.gamma > 0 ? spec.gamma : fidelity_pure(rho, psi);
    switch (spec.kind) {
      case DistillerSpec::Kind::SwapTest: rep = iterated_swap_test(src, swap_levels(g), rng); break;
      case DistillerSpec::Kind::QpcaSimple: rep = qpca_simple(src, gamma, spec.eps_dist, rng); break;
      case DistillerSpec::Kind::QpcaRecursive: rep = qpca_recursive(src, gamma, spec.alpha, spec.eps_dist, rng); break;
      case DistillerSpec::Kind::None: break;
    }
    out.copies = rep.copies;
    out.steps = rep.steps;
    out.ok = rep.success && rep.output.has_value();
    if (out.ok) {
      out.state = rep.output->matrix();
      out.overlap = fidelity_pure(out.state, psi);
    }
    return out;
  }

  /*! \brief Distilled state used by branch enumeration.
   *
   * For the swap test this is the exact ladder output, independent of the
   * copy count.  Other distillers are run once on a stream derived from the
   * seed and the dataset.
   */
  Mat enumerated_state(const DataTable& g) {
    const auto& spec = cfg_.distiller;
    if (spec.kind == DistillerSpec::Kind::None) return input_state(g);
    if (spec.kind == DistillerSpec::Kind::SwapTest)
      return swap_ladder(DensityMatrix(input_state(g)), swap_levels(g)).states.back().matrix();
    std::uint64_t h = 0;
    for (auto w : g.words()) h = h * 0x100000001b3ULL ^ w;
    CounterRng rng = CounterRng(cfg_.seed).split(h);
    const auto r = distill(g, rng);
    if (!r.ok) throw BudgetError("enumerated_state: distillation failed for a branch dataset");
    return r.state;
  }

  [[nodiscard]] const ProtocolConfig& config() const { return cfg_; }

private:
  ProtocolConfig cfg_;
  ResourcePreparer prep_;
  std::map<std::vector<std::uint64_t>, Mat> inputs_;
  std::map<std::vector<std::uint64_t>, int> levels_;
  std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Protocol runs

namespace detail {

/*! Unit-constant gate tally for one round: n_w CSWAPs and two Hadamards per
 * swap test (or LMR step), n_w CNOTs and n_w measurements for teleportation,
 * and n_w^2 Clifford gates per twirled copy. */
inline std::uint64_t round_gates(const ProtocolConfig& cfg, const DistilledResource& r) {
  const auto nw = static_cast<std::uint64_t>(cfg.work_qubits());
  std::uint64_t g = r.steps * (nw + 2) + 2 * nw;
  if (cfg.twirl) g += r.copies * nw * nw;
  return g;
}

inline bool close_to(const Vec& a, const RVec& b, double s, double tol = 1e-8) {
  return (a - (s * b).cast<cd>()).cwiseAbs().maxCoeff() <= tol;
}

inline ProtocolResult run_trajectory(const DataTable& f, ResourcePipeline& pipe, CounterRng rng, std::uint64_t seed) {
  const auto& cfg = pipe.config();
  const int nw = cfg.work_qubits();
  const Eigen::Index d = dim_of(nw);
  const double sqrt_d = std::sqrt(static_cast<double>(d));
  ProtocolResult res;
  auto& tr = res.trace;
  auto& act = res.action;
  tr.n = cfg.n;
  tr.b = cfg.b;
  tr.seed = seed;
  act.n = cfg.n;
  act.b = cfg.b;
  act.diagonal = Vec::Ones(d);

  DataTable g = f;
  int round = 0;
  while (!g.is_constant()) {
    if (round == cfg.max_rounds) {
      tr.status = ProtocolStatus::MaxRoundsReached;
      break;
    }
    ++round;
    const auto r = pipe.distill(g, rng);
    tr.q_used += r.copies;
    if (!r.ok) {
      tr.status = ProtocolStatus::BudgetExhausted;
      break;
    }
    tr.gates_used += round_gates(cfg, r);
    // Kraus branch (j, m) of the teleportation channel with the distilled
    // resource has weight lambda_j / 2^nw on a maximally mixed address.
    const auto eig = aligned_eigen(r.state, resource_state(g).amplitudes);
    double u = rng.uniform() * eig.values.sum();
    Eigen::Index j = d - 1;
    for (Eigen::Index k = 0; k < d; ++k) {
      if (u < eig.values(k)) {
        j = k;
        break;
      }
      u -= eig.values(k);
    }
    const std::uint64_t m = rng.below(static_cast<std::uint64_t>(d));
    for (Eigen::Index x = 0; x < d; ++x)
      act.diagonal(x) *= sqrt_d * eig.vectors(x ^ static_cast<Eigen::Index>(m), j);
    tr.rounds.push_back({round, degree(g).value(), m, r.copies, r.overlap});
    g = update_rule(g, outcome_bits(nw, m));
  }
  act.max_rounds_used = round;
  if (g.is_constant() && tr.status == ProtocolStatus::Completed) {
    tr.terminal = g(0) ? 1 : 0;
    act.global_sign = g(0) ? -1 : 1;
    const RVec v = qram_unitary(f);
    act.matches_with_sign = close_to(act.diagonal, v, act.global_sign);
    act.matches_up_to_sign = close_to(act.diagonal, v, 1.0) || close_to(act.diagonal, v, -1.0);
    act.target_fidelity = std::norm(v.cast<cd>().dot(act.diagonal)) / static_cast<double>(d * d);
  }
  return res;
}

struct BranchNode {
  Mat schur;
  std::uint64_t paths = 1;
  int height = 0;
};

inline const BranchNode& enumerate_node(const DataTable& g, ResourcePipeline& pipe,
                                        std::map<std::vector<std::uint64_t>, BranchNode>& memo, double& defect) {
  auto it = memo.find(g.words());
  if (it != memo.end()) return it->second;
  const int nw = g.n();
  const Eigen::Index d = dim_of(nw);
  BranchNode node;
  if (g.is_constant()) {
    node.schur = Mat::Ones(d, d);
    return memo.emplace(g.words(), std::move(node)).first->second;
  }
  const Mat phi = pipe.enumerated_state(g);
  node.schur = Mat::Zero(d, d);
  node.paths = 0;
  const double uniform = 1.0 / static_cast<double>(d);
  for (Eigen::Index m = 0; m < d; ++m) {
    const auto& child = enumerate_node(update_rule(g, outcome_bits(nw, static_cast<std::uint64_t>(m))), pipe, memo, defect);
    for (Eigen::Index x = 0; x < d; ++x) {
      defect = std::max(defect, std::abs(phi(x ^ m, x ^ m).real() - uniform));
      for (Eigen::Index y = 0; y < d; ++y) node.schur(x, y) += phi(x ^ m, y ^ m) * child.schur(x, y);
    }
    node.paths += child.paths;
    node.height = std::max(node.height, child.height + 1);
  }
  return memo.emplace(g.words(), std::move(node)).first->second;
}

inline ProtocolResult run_enumeration(const DataTable& f, ResourcePipeline& pipe) {
  const auto& cfg = pipe.config();
  ProtocolResult res;
  res.trace.n = res.action.n = cfg.n;
  res.trace.b = res.action.b = cfg.b;
  res.trace.seed = cfg.seed;
  res.action.mode = BranchMode::EnumerateBranches;
  std::map<std::vector<std::uint64_t>, BranchNode> memo;
  double defect = 0;
  try {
    const auto& root = enumerate_node(f, pipe, memo, defect);
    res.action.schur = root.schur;
    res.action.branches = root.paths;
    res.action.max_rounds_used = root.height;
    res.action.outcome_uniformity_defect = defect;
    if (root.height > cfg.max_rounds) res.trace.status = ProtocolStatus::MaxRoundsReached;
  } catch (const BudgetError&) {
    res.trace.status = ProtocolStatus::BudgetExhausted;
  }
  return res;
}

}  // namespace detail

//! Dataset on the whole work register: f itself, or f-hat when b > 0.
inline DataTable work_dataset(const SignedDataTable& f) { return f.b > 0 ? hat_function(f) : f.sign; }

/*! \brief Run the adaptive protocol on f (plain, b = 0).
 *
 * Trajectory mode samples one outcome per round; enumeration composes the
 * exact adaptive channel over all outcomes.
 */
inline ProtocolResult run_protocol(const DataTable& f, const ProtocolConfig& cfg, ResourcePipeline& pipe) {
  cfg.validate();
  if (f.n() != cfg.work_qubits()) throw DimensionError("run_protocol: dataset size must equal n + b");
  if (cfg.branch_mode == BranchMode::EnumerateBranches) return detail::run_enumeration(f, pipe);
  return detail::run_trajectory(f, pipe, CounterRng(cfg.seed), cfg.seed);
}

inline ProtocolResult run_protocol(const DataTable& f, const ProtocolConfig& cfg) {
  if (cfg.b != 0) throw DimensionError("run_protocol: a plain dataset needs b = 0");
  ResourcePipeline pipe(cfg);
  return run_protocol(f, cfg, pipe);
}

//! Signed multi-bit dataset: runs on f-hat; the bus Hadamards enter through composed_channel().
inline ProtocolResult run_protocol(const SignedDataTable& f, const ProtocolConfig& cfg) {
  if (f.n != cfg.n || f.b != cfg.b) throw DimensionError("run_protocol: dataset does not match (n, b)");
  ResourcePipeline pipe(cfg);
  return run_protocol(work_dataset(f), cfg, pipe);
}

/*! \brief Independent trajectories; trial t uses stream split(t) of the seed.
 *
 * Results do not depend on the thread count.
 */
inline std::vector<ProtocolResult> run_trajectories(const DataTable& f, const ProtocolConfig& cfg, std::uint64_t trials,
                                                    unsigned threads = std::max(1U, std::thread::hardware_concurrency())) {
  cfg.validate();
  if (f.n() != cfg.work_qubits()) throw DimensionError("run_trajectories: dataset size must equal n + b");
  ResourcePipeline pipe(cfg);
  std::vector<ProtocolResult> out(trials);
  const CounterRng base(cfg.seed);
  auto work = [&](std::uint64_t t) { out[t] = detail::run_trajectory(f, pipe, base.split(t), cfg.seed); };
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, std::max<std::uint64_t>(trials, 1)));
  if (threads <= 1) {
    for (std::uint64_t t = 0; t < trials; ++t) work(t);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        for (std::uint64_t t = w; t < trials; t += threads) work(t);
      });
    for (auto& th : pool) th.join();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Channels for checking enumerated runs

//! Hadamards on the b bus qubits, which sit above the n address qubits.
inline Mat bus_hadamard(int n, int b) {
  Mat h1(2, 2);
  h1 << 1, 1, 1, -1;
  h1 /= std::sqrt(2.0);
  Mat h = Mat::Identity(1, 1);
  for (int i = 0; i < b; ++i) h = kron(h1, h);
  return kron(h, Mat::Identity(detail::dim_of(n), detail::dim_of(n)));
}

//! Kraus form of rho -> M o rho for a positive semidefinite M with unit diagonal.
inline QuantumChannel schur_channel(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.adjoint()));
  std::vector<Mat> ks;
  for (Eigen::Index j = 0; j < m.rows(); ++j) {
    const double lam = es.eigenvalues()(j);
    if (lam <= 1e-14) continue;
    ks.push_back((std::sqrt(lam) * es.eigenvectors().col(j)).asDiagonal().toDenseMatrix());
  }
  return {m.rows(), m.rows(), std::move(ks)};
}

//! Channel of an enumerated run on the work register, bus Hadamards included.
inline QuantumChannel composed_channel(const EffectiveAction& a) {
  if (a.mode != BranchMode::EnumerateBranches) throw PreconditionError("composed_channel: needs an enumerated run");
  QuantumChannel ch = schur_channel(a.schur);
  if (a.b > 0) {
    const Mat w = bus_hadamard(a.n, a.b);
    for (auto& k : ch.kraus) k = w * k * w;
  }
  return ch;
}

//! Unitary U(f): |x>|y> -> (-1)^{f_sign(x)} |x>|y xor f_data(x)>, bus high.
inline Mat signed_qram_unitary(const SignedDataTable& f) {
  check_register(f.n + f.b);
  const Eigen::Index dx = detail::dim_of(f.n), dy = detail::dim_of(f.b);
  Mat u = Mat::Zero(dx * dy, dx * dy);
  for (Eigen::Index x = 0; x < dx; ++x) {
    const auto data = static_cast<Eigen::Index>(f.data(static_cast<std::uint64_t>(x)));
    const double s = f.sign(static_cast<std::uint64_t>(x)) ? -1.0 : 1.0;
    for (Eigen::Index y = 0; y < dy; ++y) u(x + dx * (y ^ data), x + dx * y) = s;
  }
  return u;
}

//! (1/2) || Choi(enumerated channel) - Choi(target unitary) ||_1.
inline double choi_distance_to_unitary(const EffectiveAction& a, const Mat& target) {
  return trace_distance(choi(composed_channel(a)), choi(QuantumChannel::unitary(target)));
}

// ---------------------------------------------------------------------------
// Clifford hierarchy

namespace detail {

inline bool is_pauli_up_to_phase(const Mat& u, int n) {
  Eigen::Index bi = 0;
  u.col(0).cwiseAbs().maxCoeff(&bi);
  const auto b = static_cast<std::uint64_t>(bi);
  const double d = static_cast<double>(u.rows());
  for (std::uint64_t a = 0; a < (std::uint64_t{1} << n); ++a)
    if (std::abs((pauli_matrix({n, 0, a, b}).adjoint() * u).trace()) > d * (1 - 1e-9)) return true;
  return false;
}

inline bool in_hierarchy(const Mat& u, int k, int n) {
  if (k == 1) return is_pauli_up_to_phase(u, n);
  for (int q = 0; q < n; ++q)
    for (const auto& p : {PauliString::x_on(n, q), PauliString::z_on(n, q)}) {
      const Mat pm = pauli_matrix(p);
      if (!in_hierarchy(u * pm * u.adjoint(), k - 1, n)) return false;
    }
  return true;
}

}  // namespace detail

/*! \brief Smallest k with V(f) in C_k by recursive dense conjugation.
 *
 * C_1 is the signed Pauli group up to phase; U is in C_k when U P U^dagger
 * is in C_{k-1} for every generator X_i, Z_i.
 */
inline int verify_clifford_hierarchy(const DataTable& f) {
  const int n = f.n();
  if (n > 3) throw CapError("verify_clifford_hierarchy: limited to n <= 3");
  const Mat u = qram_unitary(f).cast<cd>().asDiagonal().toDenseMatrix();
  for (int k = 1; k <= n + 1; ++k)
    if (detail::in_hierarchy(u, k, n)) return k;
  throw InvariantError("verify_clifford_hierarchy: V(f) not found below level n + 1");
}

// ---------------------------------------------------------------------------
// Cost estimates (all constants set to 1; these are scalings, not guarantees)

struct CostEstimate {
  double queries = 0;      //!< Q
  double ft_ops = 0;       //!< Q'
  double nonclifford = 0;
};

inline CostEstimate estimate_costs(int n, int b, double fidelity, double eps) {
  if (n < 1 || b < 0) throw PreconditionError("estimate_costs: need n >= 1 and b >= 0");
  if (!(fidelity > 0 && fidelity <= 1)) throw PreconditionError("estimate_costs: F must lie in (0, 1]");
  if (!(eps > 0 && eps < 1)) throw PreconditionError("estimate_costs: eps must lie in (0, 1)");
  const double nn = n, nb = n + b;
  CostEstimate c;
  c.queries = nn * (1 - fidelity) / (fidelity * fidelity) * (nn / eps + 1 / fidelity);
  c.ft_ops = nb * nb * c.queries;
  c.nonclifford = nn * nn * nb / (2 * eps);
  return c;
}

}  // namespace qramsim
