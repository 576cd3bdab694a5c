#pragma once

// The partial Clifford twirl set: elements C = Z^v Q_B M_A^dagger X^u built
// from X, Z, CNOT and CZ gates, the dataset map g -> g_C, closed-form Pauli
// conjugation and the twirled resource state.
//
// Conventions.  M_A|x> = |Ax>, Q_B = prod_{i<j} CZ_ij^{B_ij}.  The matrix
// returned by clifford_matrix() is C itself.  With g_C(x) = g(Ax + u) + x.v +
// x^T B x one has C|Psi(g)> = |Psi(g_C)>, so the state of g is recovered from
// the state of g_C by the restoring unitary C^dagger.

#include <algorithm>
#include <functional>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

#include "qramsim/boolfn.hpp"
#include "qramsim/device.hpp"
#include "qramsim/qcore.hpp"
#include "qramsim/rng.hpp"

namespace qramsim {

//! Square matrix over F2; bit j of rows[i] is entry (i, j).
struct F2Matrix {
  int n = 0;
  std::vector<std::uint64_t> rows;

  F2Matrix() = default;
  explicit F2Matrix(int size) : n(size), rows(static_cast<std::size_t>(size), 0) {}

  static F2Matrix identity(int size) {
    F2Matrix m(size);
    for (int i = 0; i < size; ++i) m.rows[static_cast<std::size_t>(i)] = std::uint64_t{1} << i;
    return m;
  }

  [[nodiscard]] int at(int i, int j) const { return static_cast<int>((rows[static_cast<std::size_t>(i)] >> j) & 1U); }
  void set(int i, int j, int v) {
    auto& r = rows[static_cast<std::size_t>(i)];
    if (v) r |= std::uint64_t{1} << j; else r &= ~(std::uint64_t{1} << j);
  }

  [[nodiscard]] std::uint64_t apply(std::uint64_t x) const {
    std::uint64_t y = 0;
    for (int i = 0; i < n; ++i) y |= static_cast<std::uint64_t>(parity(rows[static_cast<std::size_t>(i)] & x)) << i;
    return y;
  }

  [[nodiscard]] F2Matrix transpose() const {
    F2Matrix t(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) t.set(j, i, at(i, j));
    return t;
  }

  [[nodiscard]] int rank() const {
    std::vector<std::uint64_t> r = rows;
    int rk = 0;
    for (int c = 0; c < n && rk < n; ++c) {
      auto it = std::find_if(r.begin() + rk, r.end(), [c](std::uint64_t v) { return (v >> c) & 1U; });
      if (it == r.end()) continue;
      std::iter_swap(r.begin() + rk, it);
      for (std::size_t i = 0; i < r.size(); ++i)
        if (static_cast<int>(i) != rk && ((r[i] >> c) & 1U)) r[i] ^= r[static_cast<std::size_t>(rk)];
      ++rk;
    }
    return rk;
  }
  [[nodiscard]] bool invertible() const { return rank() == n; }

  //! x^T M x over F2.
  [[nodiscard]] int quadratic_form(std::uint64_t x) const {
    int acc = 0;
    for (int i = 0; i < n; ++i)
      if ((x >> i) & 1U) acc ^= parity(rows[static_cast<std::size_t>(i)] & x);
    return acc;
  }

  friend bool operator==(const F2Matrix&, const F2Matrix&) = default;
};

//! One CNOT as a row operation on a matrix: row target ^= row control.
struct RowOp {
  int control;
  int target;
};

//! Gauss-Jordan elimination without swaps; returns ops E_1..E_k with E_k...E_1 M = I.
inline std::vector<RowOp> eliminate(const F2Matrix& m) {
  F2Matrix w = m;
  std::vector<RowOp> ops;
  auto add = [&](int control, int target) {
    w.rows[static_cast<std::size_t>(target)] ^= w.rows[static_cast<std::size_t>(control)];
    ops.push_back({control, target});
  };
  for (int c = 0; c < w.n; ++c) {
    if (!w.at(c, c)) {
      int r = c + 1;
      while (r < w.n && !w.at(r, c)) ++r;
      if (r == w.n) throw PreconditionError("eliminate: matrix is singular over F2");
      add(r, c);
    }
    for (int r = 0; r < w.n; ++r)
      if (r != c && w.at(r, c)) add(c, r);
  }
  return ops;
}

inline F2Matrix inverse(const F2Matrix& m) {
  F2Matrix inv = F2Matrix::identity(m.n);
  for (const auto& op : eliminate(m)) inv.rows[static_cast<std::size_t>(op.target)] ^= inv.rows[static_cast<std::size_t>(op.control)];
  return inv;
}

/*! \brief Uniform element of GL(n, F2).
 *
 * Rows are drawn one at a time, each uniformly among the vectors outside the
 * span of the previous rows (the span is kept in reduced echelon form).
 */
inline F2Matrix sample_gl(int n, CounterRng& rng) {
  F2Matrix a(n);
  std::vector<std::uint64_t> basis;  // echelon basis, pivot = highest set bit
  auto reduce = [&](std::uint64_t v) {
    for (std::uint64_t e : basis)
      if ((v >> (63 - std::countl_zero(e))) & 1U) v ^= e;
    return v;
  };
  const std::uint64_t space = std::uint64_t{1} << n;
  for (int i = 0; i < n; ++i) {
    std::uint64_t row, red;
    do {
      row = rng.below(space);
      red = reduce(row);
    } while (red == 0);
    a.rows[static_cast<std::size_t>(i)] = row;
    const int pivot = 63 - std::countl_zero(red);
    for (auto& e : basis)
      if ((e >> pivot) & 1U) e ^= red;
    basis.push_back(red);
    std::sort(basis.begin(), basis.end(), std::greater<>());
  }
  return a;
}

struct TwirlElement {
  int n = 0;
  F2Matrix A;
  F2Matrix B;  //!< strictly upper triangular: B(i, j) = 0 unless i < j
  std::uint64_t u = 0;
  std::uint64_t v = 0;

  static TwirlElement identity(int n) { return {n, F2Matrix::identity(n), F2Matrix(n), 0, 0}; }

  void validate() const {
    if (A.n != n || B.n != n) throw DimensionError("TwirlElement: matrix size mismatch");
    if (!A.invertible()) throw InvariantError("TwirlElement: A is singular over F2");
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j)
        if (B.at(i, j)) throw InvariantError("TwirlElement: B is not strictly upper triangular");
    const std::uint64_t mask = n >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << n) - 1;
    if ((u & ~mask) || (v & ~mask)) throw DimensionError("TwirlElement: u or v wider than n");
  }

  friend bool operator==(const TwirlElement&, const TwirlElement&) = default;
};

inline TwirlElement sample_twirl(int n, CounterRng& rng) {
  if (n < 1) throw PreconditionError("sample_twirl: n must be positive");
  TwirlElement c{n, sample_gl(n, rng), F2Matrix(n), 0, 0};
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) c.B.set(i, j, static_cast<int>(rng() & 1U));
  c.u = rng.below(std::uint64_t{1} << n);
  c.v = rng.below(std::uint64_t{1} << n);
  return c;
}

//! Every element of the twirl set (size |GL(n)| * 2^{n(n-1)/2} * 4^n); n <= 3.
inline std::vector<TwirlElement> all_twirl_elements(int n) {
  if (n < 1 || n > 3) throw CapError("all_twirl_elements: enumeration limited to 1 <= n <= 3");
  std::vector<F2Matrix> gl;
  for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << (n * n)); ++bits) {
    F2Matrix a(n);
    for (int i = 0; i < n; ++i) a.rows[static_cast<std::size_t>(i)] = (bits >> (i * n)) & ((std::uint64_t{1} << n) - 1);
    if (a.invertible()) gl.push_back(a);
  }
  std::vector<std::pair<int, int>> upper;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) upper.emplace_back(i, j);
  std::vector<TwirlElement> out;
  for (const auto& a : gl)
    for (std::uint64_t bb = 0; bb < (std::uint64_t{1} << upper.size()); ++bb) {
      F2Matrix b(n);
      for (std::size_t k = 0; k < upper.size(); ++k) b.set(upper[k].first, upper[k].second, static_cast<int>((bb >> k) & 1U));
      for (std::uint64_t u = 0; u < (std::uint64_t{1} << n); ++u)
        for (std::uint64_t v = 0; v < (std::uint64_t{1} << n); ++v) out.push_back({n, a, b, u, v});
    }
  return out;
}

//! g_C(x) = g(Ax + u) + x.v + x^T B x.
inline DataTable twirl_dataset(const DataTable& g, const TwirlElement& c) {
  if (g.n() != c.n) throw DimensionError("twirl_dataset: dataset and twirl element sizes differ");
  DataTable out(g.n());
  for (std::uint64_t x = 0; x < g.size(); ++x)
    out.set(x, g(c.A.apply(x) ^ c.u) ^ static_cast<bool>(parity(x & c.v)) ^ static_cast<bool>(c.B.quadratic_form(x)));
  return out;
}

// ---------------------------------------------------------------------------
// Gate-level and dense realizations

struct CliffordGate {
  enum class Kind { X, Z, CZ, CNOT };
  Kind kind;
  int q0;       //!< target for X/Z, control for CNOT, first qubit for CZ
  int q1 = -1;  //!< target for CNOT, second qubit for CZ
};

//! Gates in time order: X^u, then CNOTs realizing M_A^dagger, then CZs of Q_B, then Z^v.
inline std::vector<CliffordGate> clifford_gate_list(const TwirlElement& c) {
  std::vector<CliffordGate> gates;
  for (int q = 0; q < c.n; ++q)
    if ((c.u >> q) & 1U) gates.push_back({CliffordGate::Kind::X, q});
  // M_A^dagger = M_{A^{-1}}; elimination of A yields A^{-1} = E_k ... E_1.
  for (const auto& op : eliminate(c.A)) gates.push_back({CliffordGate::Kind::CNOT, op.control, op.target});
  for (int i = 0; i < c.n; ++i)
    for (int j = i + 1; j < c.n; ++j)
      if (c.B.at(i, j)) gates.push_back({CliffordGate::Kind::CZ, i, j});
  for (int q = 0; q < c.n; ++q)
    if ((c.v >> q) & 1U) gates.push_back({CliffordGate::Kind::Z, q});
  return gates;
}

inline Mat gate_matrix(const CliffordGate& g, int n) {
  const Eigen::Index d = Eigen::Index{1} << n;
  Mat m = Mat::Zero(d, d);
  for (std::uint64_t x = 0; x < static_cast<std::uint64_t>(d); ++x) {
    std::uint64_t y = x;
    double s = 1.0;
    const auto bit = [&](int q) { return (x >> q) & 1U; };
    switch (g.kind) {
      case CliffordGate::Kind::X: y ^= std::uint64_t{1} << g.q0; break;
      case CliffordGate::Kind::Z: s = bit(g.q0) ? -1.0 : 1.0; break;
      case CliffordGate::Kind::CZ: s = (bit(g.q0) && bit(g.q1)) ? -1.0 : 1.0; break;
      case CliffordGate::Kind::CNOT: y ^= bit(g.q0) << g.q1; break;
    }
    m(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) = s;
  }
  return m;
}

//! Dense C as the ordered product of clifford_gate_list(c).
inline Mat clifford_matrix(const TwirlElement& c) {
  check_register(c.n);
  const Eigen::Index d = Eigen::Index{1} << c.n;
  Mat u = Mat::Identity(d, d);
  for (const auto& g : clifford_gate_list(c)) u = gate_matrix(g, c.n) * u;
  return u;
}

/*! \brief C as a signed permutation: C|x> = sign[x] |image[x]>.
 *
 * image[x] = A^{-1}(x + u) and sign[x] = (-1)^{y^T B y + v.y} with y = image[x].
 */
struct MonomialForm {
  std::vector<std::uint64_t> image;
  std::vector<double> sign;
};

inline MonomialForm monomial_form(const TwirlElement& c) {
  const F2Matrix ainv = inverse(c.A);
  const std::uint64_t d = std::uint64_t{1} << c.n;
  MonomialForm f{std::vector<std::uint64_t>(d), std::vector<double>(d)};
  for (std::uint64_t x = 0; x < d; ++x) {
    const std::uint64_t y = ainv.apply(x ^ c.u);
    f.image[x] = y;
    f.sign[x] = (c.B.quadratic_form(y) ^ parity(c.v & y)) ? -1.0 : 1.0;
  }
  return f;
}

//! C^dagger rho C computed from the monomial form in O(d^2).
inline Mat restore_conjugate(const MonomialForm& f, const Mat& rho) {
  const auto d = static_cast<Eigen::Index>(f.image.size());
  Mat out(d, d);
  for (Eigen::Index y = 0; y < d; ++y)
    for (Eigen::Index x = 0; x < d; ++x)
      out(x, y) = f.sign[static_cast<std::size_t>(x)] * f.sign[static_cast<std::size_t>(y)] *
                  rho(static_cast<Eigen::Index>(f.image[static_cast<std::size_t>(x)]), static_cast<Eigen::Index>(f.image[static_cast<std::size_t>(y)]));
  return out;
}

/*! \brief Closed form of C P C^dagger.
 *
 * With b' = A^{-1} b:  X part b', Z part A^T a + (B + B^T) b', sign
 * s + u.a + b'^T B b' + v.b'.  The i^{a.b} prefactor is unchanged because the
 * symplectic parity is preserved.
 */
inline PauliString conjugate_pauli(const TwirlElement& c, const PauliString& p) {
  if (p.n != c.n) throw DimensionError("conjugate_pauli: size mismatch");
  const F2Matrix ainv = inverse(c.A);
  const std::uint64_t bp = ainv.apply(p.b);
  F2Matrix bsym(c.n);
  for (int i = 0; i < c.n; ++i)
    for (int j = 0; j < c.n; ++j) bsym.set(i, j, c.B.at(i, j) ^ c.B.at(j, i));
  const std::uint64_t ap = c.A.transpose().apply(p.a) ^ bsym.apply(bp);
  const int sp = p.s ^ parity(c.u & p.a) ^ c.B.quadratic_form(bp) ^ parity(c.v & bp);
  return {c.n, sp, ap, bp};
}

// ---------------------------------------------------------------------------
// Twirled resource state

struct TwirlMode {
  enum class Kind { Exact, MonteCarlo };
  Kind kind = Kind::Exact;
  std::uint64_t samples = 0;
  std::uint64_t seed = 0;

  static TwirlMode exact() { return {}; }
  static TwirlMode monte_carlo(std::uint64_t n_samples, std::uint64_t seed) { return {Kind::MonteCarlo, n_samples, seed}; }
};

struct TwirledState {
  DensityMatrix state;
  bool exact = true;
  std::uint64_t samples = 0;  //!< number of averaged terms
  std::uint64_t seed = 0;
  double mean_term_fidelity = 0;  //!< average of <Psi(g_C)| phi(g_C) |Psi(g_C)> over the terms
};

/*! \brief Memoized map dataset -> noisy (and optionally encoded) resource matrix.
 *
 * The map is deterministic, so caching by truth table is exact.  Thread safe.
 */
class ResourcePreparer {
public:
  ResourcePreparer(NoisyDevice dev, std::optional<EncodingNoise> enc = std::nullopt)
      : dev_(std::move(dev)), enc_(std::move(enc)) {}

  Mat operator()(const DataTable& g) {
    {
      std::lock_guard lock(mu_);
      auto it = cache_.find(g.words());
      if (it != cache_.end()) return it->second;
    }
    Mat rho = noisy_resource_matrix(dev_, g);
    if (enc_) rho = apply_encoding_noise(*enc_, rho);
    std::lock_guard lock(mu_);
    if (cache_.size() < kMaxEntries) cache_.emplace(g.words(), rho);
    return rho;
  }

  [[nodiscard]] const NoisyDevice& device() const { return dev_; }
  [[nodiscard]] const std::optional<EncodingNoise>& encoding() const { return enc_; }

private:
  static constexpr std::size_t kMaxEntries = 1U << 16;
  NoisyDevice dev_;
  std::optional<EncodingNoise> enc_;
  std::map<std::vector<std::uint64_t>, Mat> cache_;
  std::mutex mu_;
};

namespace detail {

struct TwirlAccum {
  Mat sum;
  double fid = 0;
};

// Sums terms [begin, end) of either the enumeration or the sample stream.
inline TwirlAccum twirl_chunk(const DataTable& g, ResourcePreparer& prep, const std::vector<TwirlElement>* all,
                              const CounterRng* base, std::uint64_t begin, std::uint64_t end) {
  const Eigen::Index d = Eigen::Index{1} << g.n();
  TwirlAccum acc{Mat::Zero(d, d), 0.0};
  for (std::uint64_t k = begin; k < end; ++k) {
    TwirlElement c;
    if (all) {
      c = (*all)[k];
    } else {
      CounterRng r = base->split(k);
      c = sample_twirl(g.n(), r);
    }
    const DataTable gc = twirl_dataset(g, c);
    const Mat phi = prep(gc);
    acc.fid += fidelity_pure(phi, resource_state(gc).amplitudes);
    acc.sum += restore_conjugate(monomial_form(c), phi);
  }
  return acc;
}

}  // namespace detail

/*! \brief Average over C of the restored twirled copies C^dagger phi(g_C) C.
 *
 * Exact mode enumerates the whole set (n <= 2).  Monte Carlo mode draws sample
 * k from stream split(k) of the seed; terms are summed in fixed chunks that
 * are combined by a fixed-order pairwise reduction, so the result does not
 * depend on the number of worker threads.
 */
inline TwirledState twirled_state(const DataTable& g, ResourcePreparer& prep, const TwirlMode& mode,
                                  unsigned threads = std::max(1U, std::thread::hardware_concurrency())) {
  if (g.n() != prep.device().n) throw DimensionError("twirled_state: dataset size does not match the device");
  std::vector<TwirlElement> all;
  std::uint64_t total = mode.samples;
  if (mode.kind == TwirlMode::Kind::Exact) {
    if (g.n() > 2) throw CapError("twirled_state: exact enumeration is limited to n <= 2");
    all = all_twirl_elements(g.n());
    total = all.size();
  }
  if (total == 0) throw PreconditionError("twirled_state: need at least one sample");
  const CounterRng base(mode.seed);
  const std::uint64_t chunks = std::min<std::uint64_t>(64, total);
  std::vector<detail::TwirlAccum> parts(chunks);
  auto run_chunk = [&](std::uint64_t ci) {
    const std::uint64_t b = total * ci / chunks, e = total * (ci + 1) / chunks;
    parts[ci] = detail::twirl_chunk(g, prep, all.empty() ? nullptr : &all, &base, b, e);
  };
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, chunks));
  if (threads <= 1) {
    for (std::uint64_t ci = 0; ci < chunks; ++ci) run_chunk(ci);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::uint64_t ci = t; ci < chunks; ci += threads) run_chunk(ci);
      });
    for (auto& th : pool) th.join();
  }
  for (std::uint64_t width = 1; width < chunks; width *= 2)
    for (std::uint64_t i = 0; i + width < chunks; i += 2 * width) {
      parts[i].sum += parts[i + width].sum;
      parts[i].fid += parts[i + width].fid;
    }
  const double inv = 1.0 / static_cast<double>(total);
  Mat rho = parts[0].sum * inv;
  rho = 0.5 * (rho + rho.adjoint());
  return {DensityMatrix(rho), mode.kind == TwirlMode::Kind::Exact, total, mode.seed, parts[0].fid * inv};
}

inline TwirledState twirled_state(const DataTable& g, const NoisyDevice& dev, const TwirlMode& mode,
                                  const std::optional<EncodingNoise>& enc = std::nullopt) {
  ResourcePreparer prep(dev, enc);
  return twirled_state(g, prep, mode);
}

}  // namespace qramsim
