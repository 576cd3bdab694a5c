// qramsim: batch experiment runner over the simulation library.
//
// Each subcommand reads a JSON config (unknown keys are rejected), runs one
// experiment with a seeded counter-based generator and writes JSON or CSV.
// Exit codes: 0 ok, 2 config error, 3 budget or size cap, 4 invariant broken.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qramsim/classical.hpp"
#include "qramsim/teleport.hpp"

using json = nlohmann::json;
using namespace qramsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitBudget = 3;
constexpr int kExitInvariant = 4;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Config access

/*! \brief One JSON object of the config with a fixed set of allowed keys.
 *
 * Construction fails on any key outside `allowed`; getters check types.
 */
class Section {
public:
  Section(const json& j, std::string path, std::set<std::string> allowed) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + ": expected an object");
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!allowed.contains(it.key())) throw ConfigError(label() + ": unknown key '" + it.key() + "'");
  }

  [[nodiscard]] bool has(const std::string& k) const { return j_.contains(k); }
  [[nodiscard]] const json& raw(const std::string& k) const { return j_.at(k); }
  [[nodiscard]] std::string where(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  template <class T>
  T get(const std::string& k, T def) const {
    return has(k) ? convert<T>(j_.at(k), where(k)) : def;
  }

  template <class T>
  T need(const std::string& k) const {
    if (!has(k)) throw ConfigError(where(k) + ": required key is missing");
    return convert<T>(j_.at(k), where(k));
  }

  template <class T>
  static T convert(const json& v, const std::string& at) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(at + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(at + ": expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError(at + ": expected a number");
      return v.get<double>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned()) throw ConfigError(at + ": expected a non-negative integer");
      return v.get<std::uint64_t>();
    } else {
      static_assert(std::is_same_v<T, int>);
      if (!v.is_number_integer()) throw ConfigError(at + ": expected an integer");
      const auto x = v.get<std::int64_t>();
      if (x < -1'000'000'000 || x > 1'000'000'000) throw ConfigError(at + ": integer out of range");
      return static_cast<int>(x);
    }
  }

  //! Scalar or array of scalars, as a list.
  template <class T>
  std::vector<T> list(const std::string& k, std::vector<T> def) const {
    if (!has(k)) return def;
    const json& v = j_.at(k);
    std::vector<T> out;
    if (v.is_array()) {
      if (v.empty()) throw ConfigError(where(k) + ": empty list");
      for (std::size_t i = 0; i < v.size(); ++i) out.push_back(convert<T>(v[i], where(k) + "[" + std::to_string(i) + "]"));
    } else {
      out.push_back(convert<T>(v, where(k)));
    }
    return out;
  }

private:
  [[nodiscard]] std::string label() const { return path_.empty() ? "config" : path_; }
  const json& j_;
  std::string path_;
};

std::set<std::string> with(std::set<std::string> base, std::initializer_list<const char*> extra) {
  for (const char* e : extra) base.insert(e);
  return base;
}

const std::set<std::string> kDatasetKeys = {"seed", "n", "b", "dataset", "dataset_file"};

// ---------------------------------------------------------------------------
// Builders for library objects

Mat parse_matrix(const json& v, const std::string& at) {
  if (!v.is_array() || v.empty()) throw ConfigError(at + ": expected a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(v.size());
  Eigen::Index cols = -1;
  Mat m;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = v[static_cast<std::size_t>(r)];
    if (!row.is_array()) throw ConfigError(at + ": each row must be an array");
    if (cols < 0) {
      cols = static_cast<Eigen::Index>(row.size());
      m = Mat::Zero(rows, cols);
    }
    if (static_cast<Eigen::Index>(row.size()) != cols) throw ConfigError(at + ": ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) {
      const json& e = row[static_cast<std::size_t>(c)];
      const std::string eat = at + "[" + std::to_string(r) + "][" + std::to_string(c) + "]";
      if (e.is_number()) {
        m(r, c) = e.get<double>();
      } else if (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number()) {
        m(r, c) = cd(e[0].get<double>(), e[1].get<double>());
      } else {
        throw ConfigError(eat + ": entry must be a number or [re, im]");
      }
    }
  }
  return m;
}

QuantumChannel parse_channel(const Section& s, const std::string& key, Eigen::Index d) {
  if (!s.has(key)) return QuantumChannel::identity(d);
  const json& v = s.raw(key);
  if (!v.is_array() || v.empty()) throw ConfigError(s.where(key) + ": expected a list of Kraus matrices");
  std::vector<Mat> ks;
  for (std::size_t i = 0; i < v.size(); ++i) {
    Mat k = parse_matrix(v[i], s.where(key) + "[" + std::to_string(i) + "]");
    if (k.rows() != d || k.cols() != d) throw ConfigError(s.where(key) + ": Kraus matrices must be 2^n x 2^n");
    ks.push_back(std::move(k));
  }
  return {d, d, std::move(ks)};
}

NoisyDevice parse_device(const json* j, int n) {
  if (!j) return noiseless_device(n);
  const Section s(*j, "device", {"kind", "p", "dead", "theta", "pre", "post"});
  const auto kind = s.need<std::string>("kind");
  if (kind == "noiseless") return noiseless_device(n);
  if (kind == "global_depolarizing") return global_depolarizing_device(n, s.need<double>("p"));
  if (kind == "per_qubit_dephasing") return per_qubit_dephasing_device(n, s.need<double>("p"));
  if (kind == "coherent_rotation") return coherent_rotation_device(n, s.need<double>("theta"));
  if (kind == "dead_router") {
    const auto dead = s.list<std::uint64_t>("dead", {});
    for (auto x : dead)
      if (x >= (std::uint64_t{1} << n)) throw ConfigError("device.dead: address out of range");
    return dead_router_device(n, dead);
  }
  if (kind == "custom_kraus") {
    const Eigen::Index d = Eigen::Index{1} << n;
    return custom_kraus_device(n, parse_channel(s, "pre", d), parse_channel(s, "post", d));
  }
  throw ConfigError("device.kind: unknown device '" + kind + "'");
}

std::optional<EncodingNoise> parse_encoding(const json* j, int n, CounterRng rng) {
  if (!j) return std::nullopt;
  const Section s(*j, "encoding", {"kind", "q", "identity_weight"});
  const auto kind = s.need<std::string>("kind");
  if (kind == "identity") return EncodingNoise::identity(n);
  if (kind == "depolarizing") return EncodingNoise::depolarizing(n, s.need<double>("q"));
  if (kind == "random_tail") return EncodingNoise::random_tail(n, s.need<double>("identity_weight"), rng);
  throw ConfigError("encoding.kind: unknown encoding noise '" + kind + "'");
}

std::optional<TwirlMode> parse_twirl(const json* j, std::uint64_t seed) {
  if (!j) return std::nullopt;
  const Section s(*j, "twirl", {"mode", "samples", "seed"});
  const auto mode = s.need<std::string>("mode");
  if (mode == "exact") return TwirlMode::exact();
  if (mode == "monte_carlo") return TwirlMode::monte_carlo(s.need<std::uint64_t>("samples"), s.get<std::uint64_t>("seed", seed));
  throw ConfigError("twirl.mode: expected 'exact' or 'monte_carlo'");
}

DistillerSpec parse_distiller(const json* j) {
  DistillerSpec spec;
  if (!j) return spec;
  const Section s(*j, "distiller", {"kind", "eps_dist", "levels", "gamma", "alpha", "budget"});
  const auto kind = s.get<std::string>("kind", "swap_test");
  if (kind == "none") spec.kind = DistillerSpec::Kind::None;
  else if (kind == "swap_test") spec.kind = DistillerSpec::Kind::SwapTest;
  else if (kind == "qpca_simple") spec.kind = DistillerSpec::Kind::QpcaSimple;
  else if (kind == "qpca_recursive") spec.kind = DistillerSpec::Kind::QpcaRecursive;
  else throw ConfigError("distiller.kind: unknown distiller '" + kind + "'");
  spec.eps_dist = s.get<double>("eps_dist", spec.eps_dist);
  spec.levels = s.get<int>("levels", spec.levels);
  spec.gamma = s.get<double>("gamma", spec.gamma);
  spec.alpha = s.get<double>("alpha", spec.alpha);
  spec.budget = s.get<std::uint64_t>("budget", spec.budget);
  return spec;
}

const json* child(const json& cfg, const char* key) { return cfg.contains(key) ? &cfg.at(key) : nullptr; }

//! Dataset from a bit string, a dataset file, or random given n (and b).
SignedDataTable load_dataset(const Section& s, CounterRng rng) {
  const int given_b = s.get<int>("b", 0);
  if (given_b < 0) throw ConfigError("b: must be non-negative");
  SignedDataTable f;
  if (s.has("dataset") && s.has("dataset_file")) throw ConfigError("dataset and dataset_file are mutually exclusive");
  if (s.has("dataset")) {
    if (given_b != 0) throw ConfigError("dataset: a bit string gives a sign-only table, use dataset_file when b > 0");
    f = SignedDataTable(0, 0);
    try {
      f.sign = DataTable::from_string(s.need<std::string>("dataset"));
    } catch (const DimensionError& e) {
      throw ConfigError(std::string("dataset: ") + e.what());
    }
    f.n = f.sign.n();
  } else if (s.has("dataset_file")) {
    const auto path = s.need<std::string>("dataset_file");
    std::ifstream in(path);
    if (!in) throw ConfigError("dataset_file: cannot open '" + path + "'");
    try {
      f = read_dataset(in);
    } catch (const std::runtime_error& e) {
      throw ConfigError(std::string("dataset_file: ") + e.what());
    }
    if (s.has("b") && given_b != f.b) throw ConfigError("b: does not match the dataset file");
  } else {
    const int n = s.need<int>("n");
    if (n < 1 || n > kClassicalCap) throw ConfigError("n: out of range");
    f = SignedDataTable::random(n, given_b, rng);
  }
  if (s.has("n") && s.need<int>("n") != f.n) throw ConfigError("n: does not match the dataset");
  return f;
}

json vec_json(const RVec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

//! Eigenvalues, largest first.
json spectrum_json(const Mat& rho) {
  RVec ev = spectrum(rho);
  return vec_json(ev.reverse().eval());
}

std::string hex_of(std::uint64_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Output

struct Output {
  json doc;
  std::string csv;
  int exit_code = kExitOk;
};

std::string csv_number(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

// ---------------------------------------------------------------------------
// Subcommands

Output cmd_resource_state(const json& cfg, std::uint64_t seed) {
  const Section s(cfg, "", with(kDatasetKeys, {"device", "encoding"}));
  const CounterRng rng(seed);
  const auto f = load_dataset(s, rng.split(0));
  const DataTable g = work_dataset(f);
  const int nw = g.n();
  check_register(nw);
  ResourcePreparer prep(parse_device(child(cfg, "device"), nw), parse_encoding(child(cfg, "encoding"), nw, rng.split(1)));
  const Mat rho = prep(g);
  const double fid = fidelity_pure(rho, resource_state(g).amplitudes);
  Output out;
  out.doc = {{"command", "resource-state"}, {"seed", seed},           {"n", f.n},
             {"b", f.b},                    {"dataset", g.to_string()}, {"device", prep.device().label},
             {"fidelity", fid},             {"spectrum", spectrum_json(rho)}};
  std::ostringstream csv;
  csv << "k,eigenvalue\n";
  for (std::size_t k = 0; k < out.doc["spectrum"].size(); ++k) csv << k << ',' << csv_number(out.doc["spectrum"][k].get<double>()) << '\n';
  out.csv = csv.str();
  return out;
}

Output cmd_twirl_spectrum(const json& cfg, std::uint64_t seed) {
  const Section s(cfg, "", with(kDatasetKeys, {"device", "encoding", "twirl"}));
  const CounterRng rng(seed);
  const auto f = load_dataset(s, rng.split(0));
  const DataTable g = work_dataset(f);
  const int nw = g.n();
  check_register(nw);
  ResourcePreparer prep(parse_device(child(cfg, "device"), nw), parse_encoding(child(cfg, "encoding"), nw, rng.split(1)));
  const auto mode = parse_twirl(child(cfg, "twirl"), seed).value_or(TwirlMode::exact());
  const Vec psi = resource_state(g).amplitudes;
  const double before = fidelity_pure(prep(g), psi);
  const auto ts = twirled_state(g, prep, mode);
  const Mat& rho = ts.state.matrix();
  const double lambda = fidelity_pure(rho, psi);
  const RVec ev = spectrum(rho);
  Output out;
  out.doc = {{"command", "twirl-spectrum"},
             {"seed", seed},
             {"n", f.n},
             {"b", f.b},
             {"dataset", g.to_string()},
             {"device", prep.device().label},
             {"twirl", {{"mode", ts.exact ? "exact" : "monte_carlo"}, {"samples", ts.samples}, {"seed", ts.seed}}},
             {"fidelity_before", before},
             {"psi_eigenvalue", lambda},
             {"psi_residual", (rho * psi - lambda * psi).norm()},
             {"mean_term_fidelity", ts.mean_term_fidelity},
             {"second_eigenvalue", ev.size() > 1 ? ev(ev.size() - 2) : 0.0},
             {"spectrum", spectrum_json(rho)}};
  std::ostringstream csv;
  csv << "k,eigenvalue\n";
  for (std::size_t k = 0; k < out.doc["spectrum"].size(); ++k) csv << k << ',' << csv_number(out.doc["spectrum"][k].get<double>()) << '\n';
  out.csv = csv.str();
  return out;
}

//! Input weights for the distill command: explicit list or leading weights with a flat tail.
RVec distill_weights(const Section& s) {
  if (s.has("weights") == s.has("leading")) throw ConfigError("distill: give exactly one of weights or leading");
  RVec w;
  if (s.has("weights")) {
    const auto ws = s.list<double>("weights", {});
    w = Eigen::Map<const RVec>(ws.data(), static_cast<Eigen::Index>(ws.size()));
  } else {
    const auto lead = s.list<double>("leading", {});
    const auto d = s.need<std::uint64_t>("d");
    if (d < lead.size() + 1 || d > (std::uint64_t{1} << 20)) throw ConfigError("d: must exceed the number of leading weights");
    double used = 0;
    for (double x : lead) used += x;
    w = RVec::Constant(static_cast<Eigen::Index>(d), (1.0 - used) / static_cast<double>(d - lead.size()));
    for (std::size_t i = 0; i < lead.size(); ++i) w(static_cast<Eigen::Index>(i)) = lead[i];
  }
  if ((w.array() < 0).any() || std::abs(w.sum() - 1.0) > 1e-9) throw ConfigError("distill: weights must be non-negative and sum to 1");
  return w;
}

json report_json(const DistillReport& r) {
  json params = json::object();
  for (const auto& [k, v] : r.params) params[k] = v;
  return {{"copies", r.copies},
          {"steps", r.steps},
          {"success", r.success},
          {"budget_exhausted", r.budget_exhausted},
          {"overlap", r.overlap},
          {"success_probability", std::isnan(r.success_probability) ? json(nullptr) : json(r.success_probability)},
          {"peak_slots", r.peak_slots},
          {"restarts", r.restarts},
          {"params", params}};
}

Output cmd_distill(const json& cfg, std::uint64_t seed) {
  const Section s(cfg, "", {"seed", "distiller", "weights", "leading", "d", "basis", "representation", "trials"});
  const RVec w = distill_weights(s);
  const auto spec = parse_distiller(child(cfg, "distiller"));
  if (spec.kind == DistillerSpec::Kind::None) throw ConfigError("distiller.kind: 'none' has nothing to run");
  const auto trials = s.get<std::uint64_t>("trials", 1);
  if (trials == 0 || trials > 1'000'000) throw ConfigError("trials: must be in [1, 1e6]");
  const auto basis = s.get<std::string>("basis", "random");
  if (basis != "random" && basis != "diagonal") throw ConfigError("basis: expected 'random' or 'diagonal'");
  const auto repr = s.get<std::string>("representation", "dense");
  if (repr != "dense" && repr != "spectral") throw ConfigError("representation: expected 'dense' or 'spectral'");
  const double gamma = spec.gamma > 0 ? spec.gamma : w.maxCoeff();
  const CounterRng rng(seed);

  std::optional<DensityMatrix> dense;
  std::optional<SpectralState> spectral;
  if (repr == "dense") {
    if (w.size() > (Eigen::Index{1} << kRegisterCap)) throw CapError("distill: dense states are limited to dimension 64");
    Mat m = w.cast<cd>().asDiagonal();
    if (basis == "random") {
      auto r = rng.split(1);
      const Mat u = random_unitary(w.size(), r);
      m = u * m * u.adjoint();
      m = 0.5 * (m + m.adjoint()).eval();
    }
    dense = DensityMatrix(m);
  } else {
    if (spec.kind == DistillerSpec::Kind::QpcaSimple) throw ConfigError("representation: qpca_simple needs a dense state");
    spectral = SpectralState::from_weights(w);
  }

  auto run_one = [&](CounterRng& r) -> DistillReport {
    auto go = [&](auto& src) -> DistillReport {
      using Src = std::decay_t<decltype(src)>;
      switch (spec.kind) {
        case DistillerSpec::Kind::SwapTest: {
          int k = spec.levels;
          if (k < 0) k = swap_levels_for(src.state(), spec.eps_dist);
          return iterated_swap_test(src, k, r);
        }
        case DistillerSpec::Kind::QpcaSimple:
          if constexpr (std::is_same_v<Src, CopySource<DensityMatrix>>) return qpca_simple(src, gamma, spec.eps_dist, r);
          break;
        case DistillerSpec::Kind::QpcaRecursive: return qpca_recursive(src, gamma, spec.alpha, spec.eps_dist, r);
        case DistillerSpec::Kind::None: break;
      }
      throw ConfigError("distiller: unsupported combination");
    };
    if (dense) {
      CopySource<DensityMatrix> src(*dense, spec.budget);
      return go(src);
    }
    CopySource<SpectralState> src(*spectral, spec.budget);
    return go(src);
  };

  json runs = json::array();
  double sum = 0, sum2 = 0, min_overlap = 1;
  std::uint64_t ok = 0, exhausted = 0;
  std::ostringstream csv;
  csv << "trial,copies,steps,success,overlap\n";
  json params;
  for (std::uint64_t t = 0; t < trials; ++t) {
    auto r = rng.split(2).split(t);
    const auto rep = run_one(r);
    auto rj = report_json(rep);
    if (t == 0) params = rj["params"];
    rj.erase("params");
    runs.push_back(rj);
    const auto c = static_cast<double>(rep.copies);
    sum += c;
    sum2 += c * c;
    exhausted += rep.budget_exhausted ? 1 : 0;
    if (rep.success) {
      ++ok;
      min_overlap = std::min(min_overlap, rep.overlap);
    }
    csv << t << ',' << rep.copies << ',' << rep.steps << ',' << (rep.success ? 1 : 0) << ',' << csv_number(rep.overlap) << '\n';
  }
  const double tn = static_cast<double>(trials);
  const double mean = sum / tn;
  Output out;
  out.doc = {{"command", "distill"},
             {"seed", seed},
             {"distiller", to_string(spec.kind)},
             {"eps_dist", spec.eps_dist},
             {"gamma", gamma},
             {"dim", w.size()},
             {"principal_weight", w.maxCoeff()},
             {"representation", repr},
             {"params", params},
             {"trials", trials},
             {"runs", runs},
             {"mean_copies", mean},
             {"se_copies", std::sqrt(std::max(0.0, sum2 / tn - mean * mean) / tn)},
             {"success_rate", static_cast<double>(ok) / tn},
             {"min_overlap", ok ? json(min_overlap) : json(nullptr)}};
  if (spec.kind == DistillerSpec::Kind::SwapTest) {
    const int k = params.value("k", 0.0) > 0 ? static_cast<int>(params["k"].get<double>()) : 0;
    out.doc["expected_copies"] = dense ? expected_swap_copies(swap_ladder(*dense, k)) : expected_swap_copies(swap_ladder(*spectral, k));
  }
  out.csv = csv.str();
  if (exhausted > 0) out.exit_code = kExitBudget;
  return out;
}

Output cmd_teleport_run(const json& cfg, std::uint64_t seed) {
  const Section s(cfg, "", with(kDatasetKeys, {"device", "encoding", "twirl", "address", "trials"}));
  const CounterRng rng(seed);
  const auto f = load_dataset(s, rng.split(0));
  const DataTable g = work_dataset(f);
  const int nw = g.n();
  check_register(2 * nw, kJointCap);
  ResourcePreparer prep(parse_device(child(cfg, "device"), nw), parse_encoding(child(cfg, "encoding"), nw, rng.split(1)));
  const auto twirl = parse_twirl(child(cfg, "twirl"), seed);
  const DensityMatrix phi(twirl ? twirled_state(g, prep, *twirl).state.matrix() : prep(g));
  const auto ideal = DensityMatrix::pure(resource_state(g));
  const auto address = s.get<std::string>("address", "plus");
  const auto trials = s.get<std::uint64_t>("trials", 8);
  if (trials == 0 || trials > 100'000) throw ConfigError("trials: must be in [1, 1e5]");
  const Eigen::Index d = Eigen::Index{1} << nw;

  json runs = json::array();
  std::ostringstream csv;
  csv << "trial,m_hex,probability,fidelity\n";
  for (std::uint64_t t = 0; t < trials; ++t) {
    auto r = rng.split(2).split(t);
    Vec a;
    if (address == "plus") a = Vec::Constant(d, 1.0 / std::sqrt(static_cast<double>(d)));
    else if (address == "random") a = random_state(d, r);
    else throw ConfigError("address: expected 'plus' or 'random'");
    const auto o = teleport_once(DensityMatrix::pure(a), phi, r);
    const Vec target = qram_unitary(shift(g, BitString(nw, o.m))).cast<cd>().cwiseProduct(a);
    const double fid = fidelity_pure(o.state.matrix(), target);
    runs.push_back({{"m", o.m}, {"probability", o.probability}, {"fidelity", fid}});
    csv << t << ',' << hex_of(o.m) << ',' << csv_number(o.probability) << ',' << csv_number(fid) << '\n';
  }
  Output out;
  out.doc = {{"command", "teleport-run"},
             {"seed", seed},
             {"n", f.n},
             {"b", f.b},
             {"dataset", g.to_string()},
             {"device", prep.device().label},
             {"address", address},
             {"resource_fidelity", fidelity_pure(phi, resource_state(g))},
             {"resource_trace_distance", trace_distance(ideal, phi)},
             {"choi_gap", choi_gap(phi, g)},
             {"runs", runs}};
  out.csv = csv.str();
  return out;
}

json trace_json(const ProtocolTrace& tr) {
  json rounds = json::array();
  for (const auto& r : tr.rounds)
    rounds.push_back({{"round", r.round}, {"degree", r.degree}, {"m", r.m}, {"copies", r.copies}, {"overlap", r.overlap}});
  return {{"n", tr.n},
          {"b", tr.b},
          {"seed", tr.seed},
          {"rounds", rounds},
          {"terminal", tr.terminal},
          {"q_used", tr.q_used},
          {"gates_used", tr.gates_used},
          {"status", to_string(tr.status)},
          {"degrees_strictly_decrease", tr.degrees_strictly_decrease()}};
}

Output cmd_protocol(const json& cfg, std::uint64_t seed) {
  const Section s(cfg, "", with(kDatasetKeys, {"device", "encoding", "twirl", "distiller", "max_rounds", "branch_mode", "trials"}));
  const CounterRng rng(seed);
  const auto f = load_dataset(s, rng.split(0));
  const auto mode_name = s.get<std::string>("branch_mode", "trajectory");
  BranchMode mode;
  if (mode_name == "trajectory") mode = BranchMode::Trajectory;
  else if (mode_name == "enumerate_branches") mode = BranchMode::EnumerateBranches;
  else throw ConfigError("branch_mode: expected 'trajectory' or 'enumerate_branches'");

  ProtocolConfig pc = ProtocolConfig::noiseless(f.n, f.b, mode);
  const int nw = pc.work_qubits();
  check_register(nw);
  pc.device = parse_device(child(cfg, "device"), nw);
  pc.encoding = parse_encoding(child(cfg, "encoding"), nw, rng.split(1));
  pc.twirl = parse_twirl(child(cfg, "twirl"), seed);
  pc.distiller = parse_distiller(child(cfg, "distiller"));
  pc.max_rounds = s.get<int>("max_rounds", pc.max_rounds);
  pc.seed = seed;
  try {
    pc.validate();
  } catch (const PreconditionError& e) {
    throw ConfigError(e.what());
  } catch (const DimensionError& e) {
    throw ConfigError(e.what());
  }
  const auto trials = s.get<std::uint64_t>("trials", 1);
  if (trials == 0 || trials > 1'000'000) throw ConfigError("trials: must be in [1, 1e6]");

  Output out;
  out.doc = {{"command", "protocol"}, {"seed", seed},          {"n", f.n}, {"b", f.b}, {"dataset", work_dataset(f).to_string()},
             {"device", pc.device.label}, {"branch_mode", mode_name}, {"distiller", to_string(pc.distiller.kind)}};
  std::ostringstream csv;
  csv << "trial," << ProtocolTrace::csv_header() << '\n';
  auto add_rows = [&](std::uint64_t t, const ProtocolTrace& tr) {
    std::istringstream lines(tr.csv());
    std::string line;
    std::getline(lines, line);  // header
    while (std::getline(lines, line)) csv << t << ',' << line << '\n';
  };

  if (mode == BranchMode::EnumerateBranches) {
    const auto res = run_protocol(f, pc);
    const Mat target = signed_qram_unitary(f);
    out.doc["trials"] = 1;
    out.doc["enumeration"] = {{"choi_distance", choi_distance_to_unitary(res.action, target)},
                              {"max_rounds_used", res.action.max_rounds_used},
                              {"branches", res.action.branches},
                              {"outcome_uniformity_defect", res.action.outcome_uniformity_defect}};
    csv.str("");
    csv << "choi_distance,max_rounds_used,branches,outcome_uniformity_defect\n"
        << csv_number(out.doc["enumeration"]["choi_distance"].get<double>()) << ',' << res.action.max_rounds_used << ','
        << res.action.branches << ',' << csv_number(res.action.outcome_uniformity_defect) << '\n';
  } else {
    const auto results = run_trajectories(work_dataset(f), pc, trials);
    json traces = json::array();
    std::uint64_t exact = 0, completed = 0, decreasing = 0;
    double fid_sum = 0;
    for (std::uint64_t t = 0; t < trials; ++t) {
      const auto& r = results[t];
      json tj = trace_json(r.trace);
      tj["trial"] = t;
      tj["matches_with_sign"] = r.action.matches_with_sign;
      tj["matches_up_to_sign"] = r.action.matches_up_to_sign;
      tj["target_fidelity"] = r.action.target_fidelity;
      tj["global_sign"] = r.action.global_sign;
      traces.push_back(tj);
      exact += r.action.matches_up_to_sign ? 1 : 0;
      completed += r.trace.status == ProtocolStatus::Completed ? 1 : 0;
      decreasing += r.trace.degrees_strictly_decrease() ? 1 : 0;
      fid_sum += r.action.target_fidelity;
      add_rows(t, r.trace);
    }
    out.doc["trials"] = trials;
    out.doc["traces"] = traces;
    out.doc["summary"] = {{"completed", completed},
                          {"matches_up_to_sign", exact},
                          {"mean_target_fidelity", fid_sum / static_cast<double>(trials)},
                          {"strictly_decreasing", decreasing}};
    if (completed < trials) out.exit_code = kExitBudget;
  }
  out.csv = csv.str();
  return out;
}

Output cmd_update_rule(const json& cfg, std::uint64_t seed) {
  const Section s(cfg, "", with(kDatasetKeys, {"m", "engines"}));
  const CounterRng rng(seed);
  const auto f = load_dataset(s, rng.split(0));
  if (f.b != 0) throw ConfigError("update-rule: needs a sign-only dataset (b = 0)");
  const DataTable& g = f.sign;
  const int n = g.n();
  BitString m(n, 0);
  if (s.has("m")) {
    const json& mv = s.raw("m");
    if (mv.is_string()) {
      const auto bits = mv.get<std::string>();
      if (static_cast<int>(bits.size()) != n) throw ConfigError("m: bit string must have n characters");
      for (int i = 0; i < n; ++i) {
        if (bits[static_cast<std::size_t>(i)] != '0' && bits[static_cast<std::size_t>(i)] != '1') throw ConfigError("m: expected '0'/'1'");
        if (bits[static_cast<std::size_t>(i)] == '1') m.value |= std::uint64_t{1} << i;
      }
    } else {
      m.value = Section::convert<std::uint64_t>(mv, "m");
      if (m.value >> n) throw ConfigError("m: wider than n bits");
    }
  } else {
    auto r = rng.split(1);
    m.value = r.below(std::uint64_t{1} << n);
  }
  std::vector<std::string> engines = s.list<std::string>("engines", {});
  if (engines.empty()) {
    engines = {"naive", "fwht"};
    if (n <= kCircuitCap) engines.insert(engines.begin() + 1, "circuit");
  }
  json results = json::object();
  std::optional<DataTable> first;
  bool agree = true;
  std::ostringstream csv;
  csv << "engine,table\n";
  for (const auto& e : engines) {
    DataTable h(n);
    if (e == "naive") h = ur_naive(g, m);
    else if (e == "circuit") h = simulate_circuit(build_shallow_ur_circuit(n), g, m);
    else if (e == "fwht") h = ur_via_fwht(g, m);
    else throw ConfigError("engines: unknown engine '" + e + "'");
    if (!first) first = h;
    agree = agree && h == *first;
    results[e] = h.to_string();
    csv << e << ',' << h.to_string() << '\n';
  }
  Output out;
  out.doc = {{"command", "update-rule"},
             {"seed", seed},
             {"n", n},
             {"m", m.to_string()},
             {"dataset", g.to_string()},
             {"results", results},
             {"agree", agree},
             {"degree_before", degree(g).to_string()},
             {"degree_after", degree(*first).to_string()}};
  out.csv = csv.str();
  if (!agree) out.exit_code = kExitInvariant;
  return out;
}

Output cmd_bench_classical(const json& cfg, std::uint64_t seed) {
  const Section s(cfg, "", {"seed", "n_min", "n_max", "engines", "repeats", "timing"});
  const int n_min = s.get<int>("n_min", 4), n_max = s.get<int>("n_max", 10);
  if (n_min < 1 || n_max < n_min || n_max > kClassicalCap) throw ConfigError("n_min/n_max: need 1 <= n_min <= n_max <= 24");
  const auto engines = s.list<std::string>("engines", {"naive", "circuit", "fwht"});
  const auto repeats = s.get<std::uint64_t>("repeats", 3);
  if (repeats == 0 || repeats > 1000) throw ConfigError("repeats: must be in [1, 1000]");
  const bool timing = s.get<bool>("timing", true);
  const CounterRng rng(seed);

  json rows = json::array();
  std::ostringstream csv;
  csv << "n,engine,wall_ns,depth,width,wire_length\n";
  for (int n = n_min; n <= n_max; ++n) {
    auto r = rng.split(static_cast<std::uint64_t>(n));
    const auto g = DataTable::random(n, r);
    const BitString m(n, r.below(std::uint64_t{1} << n));
    for (const auto& e : engines) {
      std::function<DataTable()> work;
      json row = {{"n", n}, {"engine", e}, {"depth", nullptr}, {"width", nullptr}, {"wire_length", nullptr}};
      std::optional<ClassicalCircuit> circuit;
      if (e == "naive") {
        work = [&] { return ur_naive(g, m); };
      } else if (e == "fwht") {
        work = [&] { return ur_via_fwht(g, m); };
      } else if (e == "circuit") {
        if (n > kCircuitCap) continue;
        circuit = build_shallow_ur_circuit(n);
        const auto met = circuit_metrics(*circuit);
        row["depth"] = met.depth;
        row["width"] = met.width;
        row["wire_length"] = met.total_wire_length;
        work = [&] { return simulate_circuit(*circuit, g, m); };
      } else {
        throw ConfigError("engines: unknown engine '" + e + "'");
      }
      std::uint64_t best = 0;
      for (std::uint64_t k = 0; k < repeats; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto h = work();
        const auto ns = static_cast<std::uint64_t>(
            std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0).count());
        if (h != ur_naive(g, m)) throw InvariantError("bench-classical: engine '" + e + "' disagrees with ur_naive");
        best = k == 0 ? ns : std::min(best, ns);
      }
      row["wall_ns"] = timing ? best : 0;
      auto field = [&](const char* k) { return row[k].is_null() ? std::string() : row[k].dump(); };
      csv << n << ',' << e << ',' << row["wall_ns"].dump() << ',' << field("depth") << ',' << field("width") << ','
          << field("wire_length") << '\n';
      rows.push_back(row);
    }
  }
  Output out;
  out.doc = {{"command", "bench-classical"}, {"seed", seed}, {"timing", timing}, {"repeats", repeats}, {"rows", rows}};
  out.csv = csv.str();
  return out;
}

Output cmd_costs(const json& cfg, std::uint64_t seed) {
  const Section s(cfg, "", {"seed", "n", "b", "fidelity", "eps"});
  const auto ns = s.list<int>("n", {4, 8, 16, 32});
  const auto bs = s.list<int>("b", {0});
  const auto fs = s.list<double>("fidelity", {0.9, 0.99});
  const auto es = s.list<double>("eps", {0.01});
  json rows = json::array();
  std::ostringstream csv;
  csv << "n,b,fidelity,eps,queries,ft_ops,nonclifford\n";
  for (int n : ns)
    for (int b : bs)
      for (double fid : fs)
        for (double eps : es) {
          CostEstimate c;
          try {
            c = estimate_costs(n, b, fid, eps);
          } catch (const PreconditionError& e) {
            throw ConfigError(e.what());
          }
          rows.push_back({{"n", n}, {"b", b}, {"fidelity", fid}, {"eps", eps}, {"queries", c.queries}, {"ft_ops", c.ft_ops},
                          {"nonclifford", c.nonclifford}});
          csv << n << ',' << b << ',' << csv_number(fid) << ',' << csv_number(eps) << ',' << csv_number(c.queries) << ','
              << csv_number(c.ft_ops) << ',' << csv_number(c.nonclifford) << '\n';
        }
  Output out;
  out.doc = {{"command", "costs"}, {"seed", seed}, {"rows", rows}};
  out.csv = csv.str();
  return out;
}

// ---------------------------------------------------------------------------

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qramsim: adaptive distillation and teleportation experiments for QRAM"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_path, format = "json";
  std::optional<std::uint64_t> seed_flag;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed_flag, "global seed (overrides the config)");
  app.add_option("--out", out_path, "write output here instead of stdout");
  app.add_option("--format", format, "output format")->check(CLI::IsMember({"json", "csv"}));

  using Handler = Output (*)(const json&, std::uint64_t);
  const std::vector<std::tuple<const char*, const char*, Handler>> commands = {
      {"resource-state", "noisy resource state fidelity and spectrum", cmd_resource_state},
      {"twirl-spectrum", "spectrum of the twirled resource state", cmd_twirl_spectrum},
      {"distill", "run a purity-amplification distiller", cmd_distill},
      {"teleport-run", "single-round gate teleportation samples", cmd_teleport_run},
      {"protocol", "full adaptive protocol (trajectories or branch enumeration)", cmd_protocol},
      {"update-rule", "classical update rule on every engine", cmd_update_rule},
      {"bench-classical", "classical engine benchmark", cmd_bench_classical},
      {"costs", "resource estimate table", cmd_costs},
  };
  Handler chosen = nullptr;
  for (const auto& [name, help, fn] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->callback([&chosen, h = fn] { chosen = h; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    json cfg = load_config(config_path);
    std::uint64_t seed = 0;
    if (cfg.contains("seed")) seed = Section::convert<std::uint64_t>(cfg.at("seed"), "seed");
    if (seed_flag) seed = *seed_flag;
    Output out = chosen(cfg, seed);
    const std::string text = format == "csv" ? out.csv : out.doc.dump(2) + "\n";
    if (out_path.empty()) {
      std::cout << text;
    } else {
      std::ofstream os(out_path, std::ios::binary);
      if (!os) throw ConfigError("cannot write '" + out_path + "'");
      os << text;
    }
    return out.exit_code;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const PreconditionError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const CapError& e) {
    std::cerr << "size cap exceeded: " << e.what() << '\n';
    return kExitBudget;
  } catch (const BudgetError& e) {
    std::cerr << "budget exhausted: " << e.what() << '\n';
    return kExitBudget;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violated: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
