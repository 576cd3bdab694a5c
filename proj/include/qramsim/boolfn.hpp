#pragma once

// Boolean datasets over F2: packed truth tables, algebraic normal form,
// shifts, the update rule and the signed multi-bit generalization.
//
// Bit convention (shared by every module): an address x in {0,1}^n is packed
// into an integer whose bit i-1 holds x_i, so x_1 is the least significant bit.
// Qubit i-1 of a register carries x_i under the same rule.

#include <algorithm>
#include <array>
#include <bit>
#include <climits>
#include <compare>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "qramsim/errors.hpp"
#include "qramsim/rng.hpp"

namespace qramsim {

//! Largest address width for classical table operations.
inline constexpr int kClassicalCap = 24;

inline int parity(std::uint64_t x) { return std::popcount(x) & 1; }

/*! \brief Fixed-length bit string; bit i-1 of `value` is the i-th entry.
 *
 * Used for measurement outcomes m and twirl vectors u, v.  Limited to 64 bits.
 */
struct BitString {
  int len = 0;
  std::uint64_t value = 0;

  BitString() = default;
  BitString(int length, std::uint64_t v) : len(length), value(v) {
    if (length < 0 || length > 64) throw CapError("BitString length must be in [0, 64]");
    if (length < 64 && (v >> length) != 0) throw DimensionError("BitString value wider than its length");
  }

  //! Builds from entries (m_1, m_2, ...), e.g. from_entries({1,0,1}).
  static BitString from_entries(std::initializer_list<int> entries) {
    std::uint64_t v = 0;
    int i = 0;
    for (int e : entries) v |= static_cast<std::uint64_t>(e & 1) << i++;
    return {i, v};
  }

  static BitString unit(int length, int i) { return {length, std::uint64_t{1} << i}; }

  [[nodiscard]] int operator[](int i) const { return static_cast<int>((value >> i) & 1U); }

  //! Entries m_1 m_2 ... m_len as characters.
  [[nodiscard]] std::string to_string() const {
    std::string s;
    for (int i = 0; i < len; ++i) s.push_back((*this)[i] ? '1' : '0');
    return s;
  }

  friend bool operator==(const BitString&, const BitString&) = default;
};

/*! \brief ANF degree with a dedicated sentinel for the zero function.
 *
 * NEG_INF orders below every finite degree and is never produced by
 * arithmetic, so `deg(h) <= deg(g) - 1` cannot confuse the zero function with
 * the constant-one function (degree 0).
 */
class Degree {
public:
  constexpr Degree() = default;
  constexpr explicit Degree(int d) : d_(d) {}
  static constexpr Degree neg_inf() { return Degree{}; }

  [[nodiscard]] constexpr bool is_neg_inf() const { return d_ == kSentinel; }
  [[nodiscard]] constexpr int value() const {
    if (is_neg_inf()) throw std::logic_error("degree of the zero function has no finite value");
    return d_;
  }
  [[nodiscard]] std::string to_string() const { return is_neg_inf() ? "-inf" : std::to_string(d_); }

  friend constexpr auto operator<=>(const Degree&, const Degree&) = default;
  friend constexpr bool operator==(const Degree&, const Degree&) = default;
  friend constexpr bool operator<=(const Degree& a, int b) { return a.d_ <= b; }

private:
  static constexpr int kSentinel = INT_MIN;
  int d_ = kSentinel;
};

namespace detail {

inline constexpr std::array<std::uint64_t, 6> kLaneMask = {
    0xAAAAAAAAAAAAAAAAULL, 0xCCCCCCCCCCCCCCCCULL, 0xF0F0F0F0F0F0F0F0ULL,
    0xFF00FF00FF00FF00ULL, 0xFFFF0000FFFF0000ULL, 0xFFFFFFFF00000000ULL};

inline std::size_t word_count(int n) { return n <= 6 ? 1 : (std::size_t{1} << (n - 6)); }

inline std::uint64_t tail_mask(int n) {
  return n >= 6 ? ~std::uint64_t{0} : ((std::uint64_t{1} << (1U << n)) - 1);
}

}  // namespace detail

/*! \brief Dense truth table of f: {0,1}^n -> {0,1}, packed 64 entries per word.
 *
 * Entry f(x) lives at bit (x mod 64) of word x / 64.  Unused tail bits of the
 * single word used for n < 6 are kept at zero.
 */
class DataTable {
public:
  DataTable() : DataTable(0) {}
  explicit DataTable(int n) : n_(n) {
    if (n < 0 || n > kClassicalCap) throw CapError("DataTable: n must be in [0, " + std::to_string(kClassicalCap) + "]");
    words_.assign(detail::word_count(n), 0);
  }

  //! From a string of '0'/'1' characters, character x holding f(x).
  static DataTable from_string(const std::string& bits) {
    const int n = std::countr_zero(bits.size());
    if (bits.empty() || std::popcount(bits.size()) != 1) throw DimensionError("DataTable: length must be a power of two");
    DataTable t(n);
    for (std::size_t x = 0; x < bits.size(); ++x) {
      if (bits[x] != '0' && bits[x] != '1') throw DimensionError("DataTable: expected '0' or '1'");
      t.set(x, bits[x] == '1');
    }
    return t;
  }

  template <class F>
  static DataTable from_function(int n, F&& f) {
    DataTable t(n);
    for (std::uint64_t x = 0; x < t.size(); ++x) t.set(x, static_cast<bool>(f(x)));
    return t;
  }

  static DataTable random(int n, CounterRng& rng) {
    DataTable t(n);
    for (auto& w : t.words_) w = rng();
    t.words_.back() &= detail::tail_mask(n);
    return t;
  }

  static DataTable constant(int n, bool one) {
    DataTable t(n);
    if (one) {
      for (auto& w : t.words_) w = ~std::uint64_t{0};
      t.words_.back() &= detail::tail_mask(n);
    }
    return t;
  }

  [[nodiscard]] int n() const { return n_; }
  [[nodiscard]] std::uint64_t size() const { return std::uint64_t{1} << n_; }
  [[nodiscard]] bool operator()(std::uint64_t x) const { return (words_[x >> 6] >> (x & 63)) & 1U; }
  [[nodiscard]] bool get(std::uint64_t x) const { return (*this)(x); }
  void set(std::uint64_t x, bool v) {
    const std::uint64_t bit = std::uint64_t{1} << (x & 63);
    if (v) words_[x >> 6] |= bit; else words_[x >> 6] &= ~bit;
  }

  [[nodiscard]] const std::vector<std::uint64_t>& words() const { return words_; }
  std::vector<std::uint64_t>& mutable_words() { return words_; }

  [[nodiscard]] bool is_zero() const {
    return std::all_of(words_.begin(), words_.end(), [](std::uint64_t w) { return w == 0; });
  }
  [[nodiscard]] bool is_constant() const { return is_zero() || *this == constant(n_, true); }

  [[nodiscard]] std::string to_string() const {
    std::string s;
    for (std::uint64_t x = 0; x < size(); ++x) s.push_back(get(x) ? '1' : '0');
    return s;
  }

  DataTable& operator^=(const DataTable& o) {
    if (o.n_ != n_) throw DimensionError("DataTable xor: size mismatch");
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] ^= o.words_[i];
    return *this;
  }
  friend DataTable operator^(DataTable a, const DataTable& b) { return a ^= b; }
  friend bool operator==(const DataTable&, const DataTable&) = default;

private:
  int n_;
  std::vector<std::uint64_t> words_;
};

//! ANF coefficients: bit e of `coeffs` is c_e, the coefficient of x^e.
struct AnfPolynomial {
  DataTable coeffs;
  [[nodiscard]] int n() const { return coeffs.n(); }
  [[nodiscard]] bool coefficient(std::uint64_t e) const { return coeffs(e); }
};

namespace detail {

// In-place binary Moebius transform over packed words; it is an involution.
inline void moebius(std::vector<std::uint64_t>& w, int n) {
  for (int i = 0; i < std::min(n, 6); ++i) {
    const unsigned s = 1U << i;
    for (auto& word : w) word ^= (word << s) & kLaneMask[i];
  }
  for (int i = 6; i < n; ++i) {
    const std::size_t stride = std::size_t{1} << (i - 6);
    for (std::size_t j = 0; j < w.size(); ++j)
      if (j & stride) w[j] ^= w[j ^ stride];
  }
}

}  // namespace detail

inline AnfPolynomial anf_from_truth_table(const DataTable& g) {
  DataTable c = g;
  detail::moebius(c.mutable_words(), g.n());
  return {c};
}

inline DataTable truth_table_from_anf(const AnfPolynomial& p) {
  DataTable t = p.coeffs;
  detail::moebius(t.mutable_words(), t.n());
  return t;
}

inline Degree degree_of_anf(const AnfPolynomial& p) {
  int best = -1;
  const auto& w = p.coeffs.words();
  for (std::size_t j = 0; j < w.size(); ++j) {
    std::uint64_t word = w[j];
    while (word) {
      const int bit = std::countr_zero(word);
      word &= word - 1;
      best = std::max(best, std::popcount((static_cast<std::uint64_t>(j) << 6) | static_cast<std::uint64_t>(bit)));
    }
  }
  return best < 0 ? Degree::neg_inf() : Degree(best);
}

inline Degree degree(const DataTable& g) { return degree_of_anf(anf_from_truth_table(g)); }

namespace detail {

inline void check_len(const DataTable& g, const BitString& m) {
  if (m.len != g.n()) throw DimensionError("bit string length " + std::to_string(m.len) + " != n = " + std::to_string(g.n()));
}

}  // namespace detail

//! g^{(+)m}(x) = g(x xor m).
inline DataTable shift(const DataTable& g, const BitString& m) {
  detail::check_len(g, m);
  DataTable out(g.n());
  const auto& in = g.words();
  auto& w = out.mutable_words();
  const std::uint64_t high = m.value >> 6;
  for (std::size_t j = 0; j < in.size(); ++j) w[j] = in[j ^ high];
  for (int i = 0; i < std::min(g.n(), 6); ++i) {
    if (!((m.value >> i) & 1U)) continue;
    const unsigned s = 1U << i;
    const std::uint64_t hi = detail::kLaneMask[i];
    for (auto& word : w) word = ((word & hi) >> s) | ((word & ~hi) << s);
  }
  w.back() &= detail::tail_mask(g.n());
  return out;
}

//! UR(g, m) = g xor g^{(+)m}.
inline DataTable update_rule(const DataTable& g, const BitString& m) { return g ^ shift(g, m); }

/*! \brief Signed dataset f = (f_sign, f_data) with b output bits per address.
 *
 * `planes[i]` is the truth table of output bit f_{i+1}; `data(x)` packs them
 * with f_1 in the least significant bit.
 */
struct SignedDataTable {
  int n = 0;
  int b = 0;
  DataTable sign;
  std::vector<DataTable> planes;

  SignedDataTable() = default;
  SignedDataTable(int n_, int b_) : n(n_), b(b_), sign(n_), planes(static_cast<std::size_t>(b_), DataTable(n_)) {
    if (b_ < 0 || b_ > 63) throw CapError("SignedDataTable: b must be in [0, 63]");
  }

  static SignedDataTable random(int n, int b, CounterRng& rng) {
    SignedDataTable f(n, b);
    f.sign = DataTable::random(n, rng);
    for (auto& p : f.planes) p = DataTable::random(n, rng);
    return f;
  }

  [[nodiscard]] std::uint64_t data(std::uint64_t x) const {
    std::uint64_t v = 0;
    for (int i = 0; i < b; ++i) v |= static_cast<std::uint64_t>(planes[static_cast<std::size_t>(i)](x)) << i;
    return v;
  }
  void set_data(std::uint64_t x, std::uint64_t v) {
    if (b < 64 && (v >> b) != 0) throw DimensionError("SignedDataTable: value wider than b bits");
    for (int i = 0; i < b; ++i) planes[static_cast<std::size_t>(i)].set(x, (v >> i) & 1U);
  }

  [[nodiscard]] bool is_zero() const {
    return sign.is_zero() && std::all_of(planes.begin(), planes.end(), [](const DataTable& p) { return p.is_zero(); });
  }

  friend bool operator==(const SignedDataTable&, const SignedDataTable&) = default;
};

//! f^(x, u) = f_sign(x) xor (u . f_data(x)) as a table over n+b bits, z = x | (u << n).
inline DataTable hat_function(const SignedDataTable& f) {
  if (f.n + f.b > kClassicalCap) throw CapError("hat_function: n + b exceeds the classical cap");
  DataTable out(f.n + f.b);
  const std::uint64_t nx = std::uint64_t{1} << f.n;
  for (std::uint64_t x = 0; x < nx; ++x) {
    const std::uint64_t d = f.data(x);
    const bool s = f.sign(x);
    for (std::uint64_t u = 0; u < (std::uint64_t{1} << f.b); ++u)
      out.set(x | (u << f.n), s ^ static_cast<bool>(parity(u & d)));
  }
  return out;
}

//! Generalized shift: sign picks up the data bits selected by m_B; all parts shift by m_A.
inline SignedDataTable shift_signed(const SignedDataTable& f, const BitString& m) {
  if (m.len != f.n + f.b) throw DimensionError("update_rule_signed: |m| must equal n + b");
  const BitString ma(f.n, f.n == 64 ? m.value : (m.value & ((std::uint64_t{1} << f.n) - 1)));
  const std::uint64_t mb = m.value >> f.n;
  SignedDataTable out(f.n, f.b);
  out.sign = shift(f.sign, ma);
  for (int i = 0; i < f.b; ++i) {
    out.planes[static_cast<std::size_t>(i)] = shift(f.planes[static_cast<std::size_t>(i)], ma);
    if ((mb >> i) & 1U) out.sign ^= out.planes[static_cast<std::size_t>(i)];
  }
  return out;
}

inline SignedDataTable update_rule_signed(const SignedDataTable& f, const BitString& m) {
  SignedDataTable s = shift_signed(f, m);
  s.sign ^= f.sign;
  for (int i = 0; i < f.b; ++i) s.planes[static_cast<std::size_t>(i)] ^= f.planes[static_cast<std::size_t>(i)];
  return s;
}

// ---------------------------------------------------------------------------
// Dataset file: "QRAMTBL v1 n=<n> b=<b>" followed by one line per table (sign
// first, then data planes f_1..f_b).  Each line is the table's bits packed
// LSB-first into bytes, written as lowercase hex, two digits per byte.

inline void write_dataset(std::ostream& os, const SignedDataTable& f) {
  static const char* hex = "0123456789abcdef";
  os << "QRAMTBL v1 n=" << f.n << " b=" << f.b << "\n";
  auto emit = [&](const DataTable& t) {
    const std::uint64_t nbytes = std::max<std::uint64_t>(1, t.size() / 8);
    for (std::uint64_t k = 0; k < nbytes; ++k) {
      const std::uint64_t byte = (t.words()[k / 8] >> (8 * (k % 8))) & 0xFFU;
      os << hex[byte >> 4] << hex[byte & 0xF];
    }
    os << "\n";
  };
  emit(f.sign);
  for (const auto& p : f.planes) emit(p);
}

inline SignedDataTable read_dataset(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw std::runtime_error("dataset: missing header");
  int n = -1, b = -1;
  {
    std::istringstream hs(header);
    std::string magic, version, ns, bs;
    hs >> magic >> version >> ns >> bs;
    if (magic != "QRAMTBL" || version != "v1" || ns.rfind("n=", 0) != 0 || bs.rfind("b=", 0) != 0)
      throw std::runtime_error("dataset: malformed header '" + header + "'");
    n = std::stoi(ns.substr(2));
    b = std::stoi(bs.substr(2));
  }
  SignedDataTable f(n, b);
  auto parse = [&](DataTable& t) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("dataset: missing table line");
    const std::uint64_t nbytes = std::max<std::uint64_t>(1, t.size() / 8);
    if (line.size() != 2 * nbytes) throw std::runtime_error("dataset: table line has wrong length");
    auto nib = [](char c) -> std::uint64_t {
      if (c >= '0' && c <= '9') return static_cast<std::uint64_t>(c - '0');
      if (c >= 'a' && c <= 'f') return static_cast<std::uint64_t>(c - 'a' + 10);
      if (c >= 'A' && c <= 'F') return static_cast<std::uint64_t>(c - 'A' + 10);
      throw std::runtime_error("dataset: bad hex digit");
    };
    auto& w = t.mutable_words();
    std::fill(w.begin(), w.end(), 0);
    for (std::uint64_t k = 0; k < nbytes; ++k) {
      const std::uint64_t byte = (nib(line[2 * k]) << 4) | nib(line[2 * k + 1]);
      w[k / 8] |= byte << (8 * (k % 8));
    }
    if ((w.back() & ~detail::tail_mask(t.n())) != 0) throw std::runtime_error("dataset: bits set beyond table size");
  };
  parse(f.sign);
  for (auto& p : f.planes) parse(p);
  return f;
}

}  // namespace qramsim
