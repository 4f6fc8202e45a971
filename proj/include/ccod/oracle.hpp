#pragma once

// Bianchi fixed-point model of saturated DCF throughput, plus the simulated
// look-up table of best fixed CW per station count.
//
// `w` is the CW value in the simulator's sense: backoffs are drawn from
// {0..w}, so the first-stage window holds w+1 values. With m doubling stages
// the window of stage i holds (w+1)*2^i values.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ccod/error.hpp"
#include "ccod/medium.hpp"

namespace ccod {

struct DcfModelInput {
  int n = 1;
  int w = kCwMin;
  int m = 0;  // doubling stages; 0 means fixed CW
  MediumConfig durations{};

  void validate() const {
    if (n < 1) throw DomainError("oracle: n must be >= 1");
    if (w < 1) throw DomainError("oracle: w must be >= 1");
    if (m < 0) throw DomainError("oracle: m must be >= 0");
    durations.validate();
  }
};

struct TauSolution {
  double tau = 0.0;  // per-slot transmission probability of one station
  double p = 0.0;    // conditional collision probability seen by a transmitter
  double residual = 0.0;
  int iterations = 0;
};

namespace detail {

// tau(p) from the backoff chain. Uses the geometric sum instead of the
// (1-2p) quotient so p = 1/2 is not a removable singularity.
inline double tau_given_p(double p, int window, int m) {
  double stage_sum = 0.0;
  double term = 1.0;
  for (int i = 0; i < m; ++i) {
    stage_sum += term;
    term *= 2.0 * p;
  }
  return 2.0 / (window + 1.0 + p * window * stage_sum);
}

inline double p_given_tau(double tau, int n) { return 1.0 - std::pow(1.0 - tau, n - 1); }

}  // namespace detail

inline constexpr double kTauTolerance = 1e-10;
inline constexpr int kBisectionLimit = 200;

inline TauSolution solve_tau(const DcfModelInput& in) {
  in.validate();
  const int window = in.w + 1;
  TauSolution out;
  if (in.m == 0) {
    out.tau = 2.0 / (window + 1.0);
    out.p = detail::p_given_tau(out.tau, in.n);
    return out;
  }
  // g(tau) = tau - tau_given_p(p(tau)) is increasing; g(0) < 0 < g(1).
  auto residual = [&](double tau) {
    return tau - detail::tau_given_p(detail::p_given_tau(tau, in.n), window, in.m);
  };
  double lo = 0.0;
  double hi = 1.0;
  double mid = 0.5;
  double r = residual(mid);
  for (int it = 1; it <= kBisectionLimit; ++it) {
    mid = 0.5 * (lo + hi);
    r = residual(mid);
    out.iterations = it;
    if (std::abs(r) < kTauTolerance * 1e-3 || hi - lo < 1e-16) break;
    (r < 0.0 ? lo : hi) = mid;
  }
  if (!(std::abs(r) < kTauTolerance))
    throw NumericalError("oracle: tau fixed point did not converge", std::abs(r));
  out.tau = mid;
  out.p = detail::p_given_tau(mid, in.n);
  out.residual = std::abs(r);
  return out;
}

/// Saturation throughput in bits per second.
inline double saturation_throughput(const DcfModelInput& in) {
  const TauSolution sol = solve_tau(in);
  const double tau = sol.tau;
  const double p_tr = 1.0 - std::pow(1.0 - tau, in.n);
  const double p_s = in.n * tau * std::pow(1.0 - tau, in.n - 1) / p_tr;
  const auto& d = in.durations;
  const double slot_s = d.slot_us * 1e-6;
  const double ts = d.t_success_us * 1e-6;
  const double tc = d.t_collision_us * 1e-6;
  return (p_tr * p_s * d.payload_bits) /
         ((1.0 - p_tr) * slot_s + p_tr * p_s * ts + p_tr * (1.0 - p_s) * tc);
}

/// Number of BEB doubling stages between CW_min and CW_max (15 -> 1023: 6).
inline constexpr int beb_stages() {
  int m = 0;
  for (int cw = kCwMin; cw < kCwMax; cw = 2 * cw + 1) ++m;
  return m;
}

/// Simulated saturation throughput (bits/s) of `n` stations for `duration_s`.
inline double simulate_throughput(const MediumConfig& base, int n, AccessMode mode, int cw,
                                  double duration_s, std::uint64_t seed) {
  MediumConfig cfg = base;
  cfg.n_stations = n;
  Medium medium(cfg, seed, mode, cw);
  const PeriodCounters c = medium.run_period(duration_s * 1e6);
  return static_cast<double>(c.n_r) * cfg.payload_bits / (c.elapsed_us * 1e-6);
}

/// Best fixed CW per station count. Lookups between entries use the nearest
/// lower entry; below the first entry the first is used.
class LookupTable {
 public:
  LookupTable() = default;
  explicit LookupTable(std::map<int, int> entries) : entries_(std::move(entries)) {}

  bool empty() const { return entries_.empty(); }
  const std::map<int, int>& entries() const { return entries_; }
  void set(int n, int cw) { entries_[n] = cw; }
  bool contains(int n) const { return entries_.count(n) != 0; }

  int lookup(int n) const {
    if (entries_.empty()) throw ConfigError("lookup table is empty");
    auto it = entries_.upper_bound(n);
    if (it == entries_.begin()) return it->second;
    return std::prev(it)->second;
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "n,cw\n";
    for (const auto& [n, cw] : entries_) os << n << ',' << cw << '\n';
    return os.str();
  }

  void write_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write lookup table to " + path);
    f << to_csv();
    if (!f) throw IoError("write failed: " + path);
  }

  static LookupTable read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read lookup table " + path);
    std::string line;
    std::getline(f, line);
    if (line != "n,cw") throw ConfigError("lookup table " + path + ": bad header");
    LookupTable t;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw ConfigError("lookup table: bad row '" + line + "'");
      t.set(std::stoi(line.substr(0, comma)), std::stoi(line.substr(comma + 1)));
    }
    return t;
  }

 private:
  std::map<int, int> entries_;
};

/// Candidate CWs of the look-up table: 2^x - 1 for x in 4..10.
inline std::vector<int> power_of_two_cws() {
  std::vector<int> out;
  for (int x = 4; x <= 10; ++x) out.push_back((1 << x) - 1);
  return out;
}

/// Sweeps every candidate CW with a fixed-CW simulation per station count and
/// keeps the best; ties go to the smaller CW. All candidates for one n share
/// a seed (common random numbers).
inline LookupTable build_lookup_table(const std::vector<int>& n_values,
                                      const MediumConfig& durations = {},
                                      double duration_s = 60.0, std::uint64_t seed = 1) {
  if (n_values.empty()) throw ConfigError("lookup table: no station counts given");
  LookupTable table;
  for (int n : n_values) {
    if (n < 1) throw DomainError("lookup table: station count must be >= 1");
    int best_cw = 0;
    double best = -1.0;
    for (int cw : power_of_two_cws()) {
      const double s = simulate_throughput(durations, n, AccessMode::FixedCw, cw, duration_s,
                                           seed + static_cast<std::uint64_t>(n));
      if (s > best) {
        best = s;
        best_cw = cw;
      }
    }
    table.set(n, best_cw);
  }
  return table;
}

}  // namespace ccod
