#pragma once

// Classical engines for the update rule h(x) = g(x) xor g(x xor m):
// a direct table pass, a layered bit-level circuit of depth 2n+1 with a 1D
// layout for wire accounting, and the two reductions between the update rule
// and the Walsh-Hadamard transform.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "qramsim/boolfn.hpp"
#include "qramsim/errors.hpp"

namespace qramsim {

inline constexpr int kCircuitCap = 12;

//! Update rule by one pass over the addresses, packing each output word.
inline DataTable ur_naive(const DataTable& g, const BitString& m) {
  if (m.len != g.n()) throw DimensionError("ur_naive: |m| must equal n");
  DataTable h(g.n());
  auto& out = h.mutable_words();
  const std::uint64_t size = g.size();
  for (std::uint64_t base = 0; base < size; base += 64) {
    std::uint64_t word = 0;
    const std::uint64_t end = std::min<std::uint64_t>(size, base + 64);
    for (std::uint64_t x = base; x < end; ++x)
      word |= static_cast<std::uint64_t>(g(x) ^ g(x ^ m.value)) << (x - base);
    out[base >> 6] = word;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Shallow circuit

struct ClassicalGate {
  enum class Kind { Copy, XorInto, CSwap, Negate };
  Kind kind = Kind::Copy;
  //! Copy/XorInto: {src, dst}; CSwap: {control, a, b}; Negate: {cell}.
  std::array<int, 3> cells{-1, -1, -1};

  [[nodiscard]] int arity() const {
    switch (kind) {
      case Kind::Copy:
      case Kind::XorInto: return 2;
      case Kind::CSwap: return 3;
      case Kind::Negate: return 1;
    }
    return 0;
  }
};

/*! \brief Layered circuit on bit cells with a fixed 1D placement.
 *
 * Cell roles for the update-rule circuit: data g(x), work copy of g(x),
 * and 2^(n-1) holders per bit m_i (the first holder is the input bit).
 * `step_end[s]` is the number of layers completed after construction step
 * s + 1.
 */
struct ClassicalCircuit {
  int n = 0;
  int width = 0;
  std::vector<std::vector<ClassicalGate>> layers;
  std::vector<long> position;
  std::vector<std::size_t> step_end;

  [[nodiscard]] int data_cell(std::uint64_t x) const { return static_cast<int>(2 * x); }
  [[nodiscard]] int work_cell(std::uint64_t x) const { return static_cast<int>(2 * x + 1); }
  //! k-th holder of m_i, i in [0, n).
  [[nodiscard]] int m_cell(int i, std::uint64_t k) const {
    return static_cast<int>((std::uint64_t{2} << n) + static_cast<std::uint64_t>(i) * (std::uint64_t{1} << (n - 1)) + k);
  }

  //! Throws InvariantError when a layer touches a cell twice or a cell is out of range.
  void validate() const {
    std::vector<std::size_t> seen(static_cast<std::size_t>(width), std::numeric_limits<std::size_t>::max());
    for (std::size_t l = 0; l < layers.size(); ++l)
      for (const auto& g : layers[l])
        for (int a = 0; a < g.arity(); ++a) {
          const int c = g.cells[static_cast<std::size_t>(a)];
          if (c < 0 || c >= width) throw InvariantError("ClassicalCircuit: cell index out of range");
          if (seen[static_cast<std::size_t>(c)] == l) throw InvariantError("ClassicalCircuit: cell used twice in one layer");
          seen[static_cast<std::size_t>(c)] = l;
        }
  }
};

/*! \brief The four-step circuit for UR with depth 1 + (n-1) + n + 1.
 *
 * Layout: data g(x) at position 2x with its work copy at 2x + 1, then the
 * holders of m_1, ..., m_n in consecutive blocks of 2^(n-1).
 */
inline ClassicalCircuit build_shallow_ur_circuit(int n) {
  if (n < 1 || n > kCircuitCap) throw CapError("build_shallow_ur_circuit: n must be in [1, 12]");
  ClassicalCircuit c;
  c.n = n;
  const std::uint64_t size = std::uint64_t{1} << n, half = size >> 1;
  c.width = static_cast<int>(2 * size + static_cast<std::uint64_t>(n) * half);
  c.position.resize(static_cast<std::size_t>(c.width));
  for (int k = 0; k < c.width; ++k) c.position[static_cast<std::size_t>(k)] = k;
  using K = ClassicalGate::Kind;

  std::vector<ClassicalGate> layer;
  for (std::uint64_t x = 0; x < size; ++x) layer.push_back({K::Copy, {c.data_cell(x), c.work_cell(x), -1}});
  c.layers.push_back(std::move(layer));
  c.step_end.push_back(c.layers.size());

  // Doubling tree: after layer L there are 2^L holders of each m_i.
  for (std::uint64_t have = 1; have < half; have *= 2) {
    layer.clear();
    for (int i = 0; i < n; ++i)
      for (std::uint64_t k = 0; k < have; ++k) layer.push_back({K::Copy, {c.m_cell(i, k), c.m_cell(i, k + have), -1}});
    c.layers.push_back(std::move(layer));
  }
  c.step_end.push_back(c.layers.size());

  for (int i = 0; i < n; ++i) {
    layer.clear();
    const std::uint64_t e = std::uint64_t{1} << i;
    std::uint64_t k = 0;
    for (std::uint64_t x = 0; x < size; ++x)
      if (!(x & e)) layer.push_back({K::CSwap, {c.m_cell(i, k++), c.work_cell(x), c.work_cell(x | e)}});
    c.layers.push_back(std::move(layer));
  }
  c.step_end.push_back(c.layers.size());

  layer.clear();
  for (std::uint64_t x = 0; x < size; ++x) layer.push_back({K::XorInto, {c.work_cell(x), c.data_cell(x), -1}});
  c.layers.push_back(std::move(layer));
  c.step_end.push_back(c.layers.size());
  return c;
}

using CellState = std::vector<std::uint8_t>;

/*! \brief Run the circuit on (g, m) and read the data cells.
 *
 * When `snapshots` is given it receives the input cell state followed by the
 * state after every layer.
 */
inline DataTable simulate_circuit(const ClassicalCircuit& c, const DataTable& g, const BitString& m,
                                  std::vector<CellState>* snapshots = nullptr) {
  if (g.n() != c.n || m.len != c.n) throw DimensionError("simulate_circuit: sizes do not match the circuit");
  CellState s(static_cast<std::size_t>(c.width), 0);
  const std::uint64_t size = g.size();
  for (std::uint64_t x = 0; x < size; ++x) s[static_cast<std::size_t>(c.data_cell(x))] = g(x);
  for (int i = 0; i < c.n; ++i) s[static_cast<std::size_t>(c.m_cell(i, 0))] = static_cast<std::uint8_t>(m[i]);
  if (snapshots) {
    snapshots->clear();
    snapshots->push_back(s);
  }
  using K = ClassicalGate::Kind;
  for (const auto& layer : c.layers) {
    for (const auto& gate : layer) {
      const auto a = static_cast<std::size_t>(gate.cells[0]);
      switch (gate.kind) {
        case K::Copy: s[static_cast<std::size_t>(gate.cells[1])] = s[a]; break;
        case K::XorInto: s[static_cast<std::size_t>(gate.cells[1])] ^= s[a]; break;
        case K::CSwap:
          if (s[a]) std::swap(s[static_cast<std::size_t>(gate.cells[1])], s[static_cast<std::size_t>(gate.cells[2])]);
          break;
        case K::Negate: s[a] ^= 1U; break;
      }
    }
    if (snapshots) snapshots->push_back(s);
  }
  DataTable h(c.n);
  for (std::uint64_t x = 0; x < size; ++x) h.set(x, s[static_cast<std::size_t>(c.data_cell(x))]);
  return h;
}

struct CircuitMetrics {
  std::size_t depth = 0;
  int width = 0;
  long total_wire_length = 0;  //!< sum over gates of the largest distance between two of its cells

  [[nodiscard]] double wire_density() const {
    return static_cast<double>(total_wire_length) / (static_cast<double>(width) * static_cast<double>(depth));
  }
};

inline CircuitMetrics circuit_metrics(const ClassicalCircuit& c) {
  CircuitMetrics m{c.layers.size(), c.width, 0};
  for (const auto& layer : c.layers)
    for (const auto& g : layer) {
      long lo = std::numeric_limits<long>::max(), hi = std::numeric_limits<long>::min();
      for (int a = 0; a < g.arity(); ++a) {
        const long p = c.position[static_cast<std::size_t>(g.cells[static_cast<std::size_t>(a)])];
        lo = std::min(lo, p);
        hi = std::max(hi, p);
      }
      m.total_wire_length += hi - lo;
    }
  return m;
}

// ---------------------------------------------------------------------------
// Integer vectors and the Walsh-Hadamard transform

/*! \brief Length-2^n integer vector whose entries must fit a signed w-bit word.
 *
 * The transform below is unnormalized: fwht(v)_x = sum_y (-1)^{x.y} v_y, which
 * is 2^{n/2} times the orthonormal transform.
 */
struct IntVector {
  int n = 0;
  int width = 32;
  std::vector<std::int64_t> v;

  IntVector() = default;
  IntVector(int n_, int width_ = 32) : n(n_), width(width_) {
    if (n_ < 0 || n_ > kClassicalCap) throw CapError("IntVector: n out of range");
    if (width_ < 2 || width_ > 62) throw CapError("IntVector: width must be in [2, 62]");
    v.assign(std::size_t{1} << n_, 0);
  }

  [[nodiscard]] std::int64_t max_value() const { return (std::int64_t{1} << (width - 1)) - 1; }
  [[nodiscard]] std::int64_t min_value() const { return -(std::int64_t{1} << (width - 1)); }

  void check() const {
    if (v.size() != (std::size_t{1} << n)) throw DimensionError("IntVector: length must be 2^n");
    for (auto e : v)
      if (e > max_value() || e < min_value()) throw CapError("IntVector: entry overflows the " + std::to_string(width) + "-bit width");
  }

  static IntVector from_table(const DataTable& g, int width = 32) {
    IntVector r(g.n(), width);
    for (std::uint64_t x = 0; x < g.size(); ++x) r.v[x] = g(x) ? 1 : 0;
    return r;
  }

  friend bool operator==(const IntVector&, const IntVector&) = default;
};

//! In-place butterfly over all n bits; fwht(fwht(v)) = 2^n v.
inline IntVector fwht(IntVector a) {
  a.check();
  const std::size_t size = a.v.size();
  for (std::size_t e = 1; e < size; e <<= 1) {
    for (std::size_t x = 0; x < size; ++x)
      if (!(x & e)) {
        const std::int64_t p = a.v[x], q = a.v[x | e];
        a.v[x] = p + q;
        a.v[x | e] = p - q;
      }
    a.check();
  }
  return a;
}

//! Sparse factor H^(i) (i in [0, n)) as a dense matrix: 1 at x = y xor e_i, (-1)^{x_i} on the diagonal.
inline Eigen::MatrixXd hadamard_factor(int n, int i) {
  const Eigen::Index d = Eigen::Index{1} << n, e = Eigen::Index{1} << i;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index y = 0; y < d; ++y) {
    h(y ^ e, y) = 1.0;
    h(y, y) = (y & e) ? -1.0 : 1.0;
  }
  return h;
}

struct UrViaFwhtTrace {
  IntVector transformed;  //!< W g
  IntVector masked;       //!< M^(m) W g
  IntVector back;         //!< W M^(m) W g = 2^n h
};

/*! \brief UR through two transforms: h = (W M W g) / 2^n mod 2.
 *
 * M^(m) is diagonal with 2 where m.x = 0 and 0 where m.x = 1.
 */
inline DataTable ur_via_fwht(const DataTable& g, const BitString& m, UrViaFwhtTrace* trace = nullptr, int width = 32) {
  if (m.len != g.n()) throw DimensionError("ur_via_fwht: |m| must equal n");
  const IntVector t = fwht(IntVector::from_table(g, width));
  IntVector masked = t;
  for (std::uint64_t x = 0; x < g.size(); ++x) masked.v[x] = parity(x & m.value) ? 0 : 2 * t.v[x];
  masked.check();
  const IntVector back = fwht(masked);
  DataTable h(g.n());
  for (std::uint64_t x = 0; x < g.size(); ++x) {
    const std::int64_t q = back.v[x] >> g.n();
    if ((q << g.n()) != back.v[x]) throw InvariantError("ur_via_fwht: result not divisible by 2^n");
    h.set(x, q & 1);
  }
  if (trace) *trace = {t, masked, back};
  return h;
}

using UrEngine = std::function<DataTable(const DataTable&, const BitString&)>;

struct FwhtViaUrResult {
  IntVector out;
  std::uint64_t ur_calls = 0;
};

/*! \brief Unnormalized transform using only bit-plane update rules and local arithmetic.
 *
 * For each i: copy the vector, apply UR with m = e_i to each of the w
 * two's-complement bit planes, xor the copy back in (which swaps x and
 * x xor e_i), negate entries with x_i = 1, and add.  Exactly n * w UR calls.
 */
inline FwhtViaUrResult fwht_via_ur(const IntVector& in, const UrEngine& ur) {
  in.check();
  const int n = in.n, w = in.width;
  const std::size_t size = in.v.size();
  const std::uint64_t mask = (std::uint64_t{1} << w) - 1;
  FwhtViaUrResult res{in, 0};
  IntVector& cur = res.out;
  for (int i = 0; i < n; ++i) {
    const IntVector copy = cur;
    std::vector<std::uint64_t> swapped(size, 0);
    for (int j = 0; j < w; ++j) {
      DataTable plane(n);
      for (std::size_t x = 0; x < size; ++x) plane.set(x, (static_cast<std::uint64_t>(copy.v[x]) & mask) >> j & 1U);
      const DataTable mixed = ur(plane, BitString::unit(n, i));
      ++res.ur_calls;
      for (std::size_t x = 0; x < size; ++x) swapped[x] |= static_cast<std::uint64_t>(mixed(x) ^ plane(x)) << j;
    }
    const std::uint64_t e = std::uint64_t{1} << i;
    for (std::size_t x = 0; x < size; ++x) {
      std::int64_t other = static_cast<std::int64_t>(swapped[x]);
      if (other & (std::int64_t{1} << (w - 1))) other -= std::int64_t{1} << w;
      const std::int64_t own = (x & e) ? -copy.v[x] : copy.v[x];
      cur.v[x] = other + own;
    }
    cur.check();
  }
  return res;
}

}  // namespace qramsim
