#pragma once

// Experiment harness: static station-count sweeps, the 5 -> 50 station ramp,
// multi-seed aggregation with 95% confidence intervals, CSV output and the
// key=value configuration format.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <tuple>
#include <vector>

#include "ccod/controller.hpp"
#include "ccod/error.hpp"
#include "ccod/oracle.hpp"

namespace ccod {

//------------------------------------------------------------------------------
// CSV

struct ResultRow {
  std::string scenario;
  std::string agent;
  std::uint64_t seed = 0;
  int round = 0;
  int interaction = -1;  // -1 for per-round summary rows
  int n_stations = 0;
  double cw = 0.0;
  double p_col = 0.0;
  double throughput_mbps = 0.0;

  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

inline constexpr const char* kResultHeader =
    "scenario,agent,seed,round,interaction,n_stations,cw,p_col,throughput_mbps";

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("not a number: '" + s + "'");
  return v;
}

inline long long parse_int(const std::string& s) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("not an integer: '" + s + "'");
  return v;
}

inline void sort_rows(std::vector<ResultRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.scenario, a.agent, a.seed, a.round, a.interaction) <
           std::tie(b.scenario, b.agent, b.seed, b.round, b.interaction);
  });
}

inline std::string format_csv(std::vector<ResultRow> rows) {
  sort_rows(rows);
  std::string out = kResultHeader;
  out += '\n';
  for (const auto& r : rows) {
    out += r.scenario + ',' + r.agent + ',' + std::to_string(r.seed) + ',' +
           std::to_string(r.round) + ',' + std::to_string(r.interaction) + ',' +
           std::to_string(r.n_stations) + ',' + format_double(r.cw) + ',' +
           format_double(r.p_col) + ',' + format_double(r.throughput_mbps) + '\n';
  }
  return out;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline std::vector<ResultRow> parse_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kResultHeader) throw ConfigError("csv: bad header");
  std::vector<ResultRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 9) throw ConfigError("csv: expected 9 fields in '" + line + "'");
    ResultRow r;
    r.scenario = f[0];
    r.agent = f[1];
    r.seed = std::stoull(f[2]);
    r.round = std::stoi(f[3]);
    r.interaction = std::stoi(f[4]);
    r.n_stations = std::stoi(f[5]);
    r.cw = parse_double(f[6]);
    r.p_col = parse_double(f[7]);
    r.throughput_mbps = parse_double(f[8]);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << text;
  f.close();
  if (!f) throw IoError("write failed: " + path);
}

inline std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline void emit_csv(const std::vector<ResultRow>& rows, const std::string& path) {
  write_text(path, format_csv(rows));
}

//------------------------------------------------------------------------------
// Statistics

struct Interval {
  double mean = 0.0;
  double low = 0.0;
  double high = 0.0;
  int samples = 0;
};

/// mean +- 1.96 * standard error over the samples.
inline Interval confidence_interval(const std::vector<double>& xs) {
  Interval ci;
  ci.samples = static_cast<int>(xs.size());
  if (xs.empty()) return ci;
  double sum = 0.0;
  for (double x : xs) sum += x;
  ci.mean = sum / static_cast<double>(xs.size());
  double half = 0.0;
  if (xs.size() > 1) {
    double sq = 0.0;
    for (double x : xs) sq += (x - ci.mean) * (x - ci.mean);
    const double sd = std::sqrt(sq / static_cast<double>(xs.size() - 1));
    half = 1.96 * sd / std::sqrt(static_cast<double>(xs.size()));
  }
  ci.low = ci.mean - half;
  ci.high = ci.mean + half;
  return ci;
}

/// Mean throughput and CW per station count over the interactions of one round.
struct SegmentStats {
  double throughput_mbps = 0.0;
  double cw = 0.0;
  int interactions = 0;
};

inline std::map<int, SegmentStats> per_station_count(const std::vector<InteractionRecord>& trace,
                                                     int round) {
  std::map<int, SegmentStats> out;
  for (const auto& r : trace) {
    if (r.round != round) continue;
    auto& s = out[r.n_stations];
    s.throughput_mbps += r.throughput_mbps;
    s.cw += r.cw;
    ++s.interactions;
  }
  for (auto& [n, s] : out) {
    s.throughput_mbps /= s.interactions;
    s.cw /= s.interactions;
  }
  return out;
}

/// Least-squares slope of CW against station count over a round.
inline double cw_slope(const std::vector<InteractionRecord>& trace, int round) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  long long k = 0;
  for (const auto& r : trace) {
    if (r.round != round) continue;
    sx += r.n_stations;
    sy += r.cw;
    sxx += static_cast<double>(r.n_stations) * r.n_stations;
    sxy += r.n_stations * r.cw;
    ++k;
  }
  const double den = k * sxx - sx * sx;
  return den == 0.0 ? 0.0 : (k * sxy - sx * sy) / den;
}

//------------------------------------------------------------------------------
// Scenarios

struct ScenarioSpec {
  enum class Kind { Static, Dynamic };
  Kind kind = Kind::Static;
  int n = 5;        // Static: station count; Dynamic: final station count
  int n_start = 5;  // Dynamic only
  AgentKind agent = AgentKind::Legacy;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  std::string name() const {
    if (kind == Kind::Static) return "static-n" + std::to_string(n);
    return "dynamic-" + std::to_string(n_start) + "-" + std::to_string(n);
  }

  void validate() const {
    if (n < 1 || n > 50) throw ConfigError("station count must lie in [1, 50]");
    if (kind == Kind::Dynamic && (n_start < 1 || n_start > n))
      throw ConfigError("dynamic ramp must increase monotonically");
    if (seeds.empty()) throw ConfigError("at least one seed is required");
  }
};

struct ScenarioRun {
  ScenarioSpec spec;
  std::uint64_t seed = 0;
  ExperimentResult result;
};

inline StationSchedule schedule_for(const ScenarioSpec& spec) {
  if (spec.kind == ScenarioSpec::Kind::Static) return StationSchedule::fixed(spec.n);
  return {spec.n_start, spec.n, 5, (spec.n - spec.n_start) / 5 + 1};
}

using RunHook = std::function<void(const ScenarioSpec&, std::uint64_t, const ExperimentResult&,
                                   const Controller&)>;

/// Configures and runs one scenario for one seed.
inline ExperimentResult run_scenario(const ScenarioSpec& spec, std::uint64_t seed,
                                     ControllerConfig base, bool keep_trace,
                                     const RunHook& hook = {}) {
  spec.validate();
  base.agent = spec.agent;
  base.seed = seed;
  base.stations = schedule_for(spec);
  if (spec.agent == AgentKind::LookupTable) {
    if (base.lookup.empty()) throw ConfigError("lookup agent needs a lookup table");
    if (spec.kind == ScenarioSpec::Kind::Static && !base.lookup.contains(spec.n))
      throw ConfigError("lookup table has no entry for n = " + std::to_string(spec.n));
  }
  if (!base.learns()) base.learning_rounds = 0;
  Controller controller(base);
  ExperimentResult res = controller.run(keep_trace);
  if (hook) hook(spec, seed, res, controller);
  return res;
}

inline std::vector<ResultRow> round_rows(const ScenarioSpec& spec, std::uint64_t seed,
                                         const ExperimentResult& res) {
  std::vector<ResultRow> rows;
  for (const auto& r : res.rounds)
    rows.push_back({spec.name(), to_string(spec.agent), seed, r.round, -1, spec.n, r.mean_cw,
                    r.mean_p_col, r.mean_throughput_mbps});
  return rows;
}

inline std::vector<ResultRow> trace_rows(const ScenarioSpec& spec, std::uint64_t seed,
                                         const std::vector<InteractionRecord>& trace) {
  std::vector<ResultRow> rows;
  rows.reserve(trace.size());
  for (const auto& t : trace)
    rows.push_back({spec.name(), to_string(spec.agent), seed, t.round, t.index, t.n_stations, t.cw,
                    t.p_col, t.throughput_mbps});
  return rows;
}

struct SummaryEntry {
  std::string scenario;
  std::string agent;
  int n = 0;
  Interval throughput_mbps;
  Interval cw;
  std::vector<double> per_seed_throughput;
};

inline std::string format_summary_csv(const std::vector<SummaryEntry>& entries) {
  std::string out = "scenario,agent,n,seeds,throughput_mbps,ci_low,ci_high,cw\n";
  for (const auto& e : entries)
    out += e.scenario + ',' + e.agent + ',' + std::to_string(e.n) + ',' +
           std::to_string(e.throughput_mbps.samples) + ',' + format_double(e.throughput_mbps.mean) +
           ',' + format_double(e.throughput_mbps.low) + ',' + format_double(e.throughput_mbps.high) +
           ',' + format_double(e.cw.mean) + '\n';
  return out;
}

struct SweepResult {
  std::vector<SummaryEntry> summary;  // operational-round throughput per (n, agent)
  std::vector<ResultRow> rounds;      // per-round rows for every run
  std::vector<ResultRow> trace;       // per-interaction rows, when requested
  std::vector<ScenarioRun> runs;      // raw results, when requested
};

struct SweepOptions {
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  bool keep_trace = false;
  bool keep_runs = false;
  RunHook on_run;
};

namespace detail {

inline SummaryEntry summarize(const ScenarioSpec& spec, const std::vector<double>& thr,
                              const std::vector<double>& cw) {
  SummaryEntry e;
  e.scenario = spec.name();
  e.agent = to_string(spec.agent);
  e.n = spec.n;
  e.throughput_mbps = confidence_interval(thr);
  e.cw = confidence_interval(cw);
  e.per_seed_throughput = thr;
  return e;
}

inline void run_spec(const ScenarioSpec& spec, const ControllerConfig& base,
                     const SweepOptions& opt, SweepResult& out) {
  std::vector<double> thr;
  std::vector<double> cw;
  const bool need_trace = opt.keep_trace || opt.keep_runs;
  for (std::uint64_t seed : spec.seeds) {
    ExperimentResult res = run_scenario(spec, seed, base, need_trace, opt.on_run);
    const RoundStats& last = res.rounds.back();
    thr.push_back(last.mean_throughput_mbps);
    cw.push_back(last.mean_cw);
    auto rr = round_rows(spec, seed, res);
    out.rounds.insert(out.rounds.end(), rr.begin(), rr.end());
    if (opt.keep_trace) {
      auto tr = trace_rows(spec, seed, res.trace);
      out.trace.insert(out.trace.end(), tr.begin(), tr.end());
    }
    if (opt.keep_runs) out.runs.push_back({spec, seed, std::move(res)});
  }
  out.summary.push_back(summarize(spec, thr, cw));
}

}  // namespace detail

/// Fixed station count per run; summary reports the operational (last)
/// round. The lookup agent requires an entry for every n.
inline SweepResult run_static_sweep(const std::vector<int>& n_values,
                                    const std::vector<AgentKind>& agents,
                                    const ControllerConfig& base, const SweepOptions& opt = {}) {
  SweepResult out;
  for (AgentKind a : agents) {
    if (a != AgentKind::LookupTable) continue;
    for (int n : n_values)
      if (!base.lookup.contains(n))
        throw ConfigError("lookup table has no entry for n = " + std::to_string(n));
  }
  for (int n : n_values) {
    for (AgentKind a : agents) {
      ScenarioSpec spec;
      spec.kind = ScenarioSpec::Kind::Static;
      spec.n = n;
      spec.agent = a;
      spec.seeds = opt.seeds;
      detail::run_spec(spec, base, opt, out);
    }
  }
  return out;
}

/// Station count ramps by 5 at every equal slice of each round, from
/// `n_start` to each value in `n_end_values`.
inline SweepResult run_dynamic(const std::vector<AgentKind>& agents, const ControllerConfig& base,
                               const SweepOptions& opt = {}, std::vector<int> n_end_values = {50},
                               int n_start = 5) {
  SweepResult out;
  for (int n_end : n_end_values) {
    for (AgentKind a : agents) {
      ScenarioSpec spec;
      spec.kind = ScenarioSpec::Kind::Dynamic;
      spec.n = n_end;
      spec.n_start = n_start;
      spec.agent = a;
      spec.seeds = opt.seeds;
      detail::run_spec(spec, base, opt, out);
    }
  }
  return out;
}

/// Throughput in the first and last station-count segment of a ramp round.
struct RampDrop {
  double start_mbps = 0.0;
  double end_mbps = 0.0;
  double drop() const { return start_mbps > 0.0 ? 1.0 - end_mbps / start_mbps : 0.0; }
};

inline RampDrop ramp_drop(const std::vector<InteractionRecord>& trace, int round) {
  const auto seg = per_station_count(trace, round);
  if (seg.empty()) return {};
  return {seg.begin()->second.throughput_mbps, seg.rbegin()->second.throughput_mbps};
}

//------------------------------------------------------------------------------
// key=value configuration

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

/// Applies recognized keys to `cfg` and returns the keys it did not know.
/// `rounds` without `learning_rounds` keeps one operational round at the end.
inline std::map<std::string, std::string> apply_config(
    ControllerConfig& cfg, std::map<std::string, std::string> kv) {
  auto num = [&](const char* key, auto& field) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    using T = std::decay_t<decltype(field)>;
    if constexpr (std::is_integral_v<T>) field = static_cast<T>(parse_int(it->second));
    else field = parse_double(it->second);
    kv.erase(it);
  };
  num("interaction_period_ms", cfg.interaction_period_ms);
  num("history_length", cfg.history_length);
  num("dqn_learning_rate", cfg.dqn_lr);
  num("actor_learning_rate", cfg.actor_lr);
  num("critic_learning_rate", cfg.critic_lr);
  num("batch_size", cfg.batch_size);
  num("gamma", cfg.gamma);
  num("replay_buffer_size", cfg.replay_capacity);
  num("tau", cfg.tau);
  if (kv.count("rounds") && !kv.count("learning_rounds")) {
    cfg.rounds_total = static_cast<int>(parse_int(kv["rounds"]));
    cfg.learning_rounds = cfg.rounds_total - 1;
    kv.erase("rounds");
  }
  num("rounds", cfg.rounds_total);
  num("learning_rounds", cfg.learning_rounds);
  num("round_duration_s", cfg.round_duration_s);
  num("epsilon_initial", cfg.epsilon_initial);
  num("epsilon_final", cfg.epsilon_final);
  num("sigma_initial", cfg.sigma_initial);
  num("sigma_final", cfg.sigma_final);
  num("slot_us", cfg.medium.slot_us);
  num("t_success_us", cfg.medium.t_success_us);
  num("t_collision_us", cfg.medium.t_collision_us);
  num("payload_bits", cfg.medium.payload_bits);
  if (auto it = kv.find("max_throughput_bps"); it != kv.end()) {
    cfg.max_throughput_bps = parse_double(it->second);
    kv.erase(it);
  }
  if (auto it = kv.find("agent"); it != kv.end()) {
    cfg.agent = parse_agent_kind(it->second);
    kv.erase(it);
  }
  return kv;
}

inline std::string format_config(const ControllerConfig& c) {
  std::ostringstream os;
  os << "interaction_period_ms=" << format_double(c.interaction_period_ms) << '\n'
     << "history_length=" << c.history_length << '\n'
     << "dqn_learning_rate=" << format_double(c.dqn_lr) << '\n'
     << "actor_learning_rate=" << format_double(c.actor_lr) << '\n'
     << "critic_learning_rate=" << format_double(c.critic_lr) << '\n'
     << "batch_size=" << c.batch_size << '\n'
     << "gamma=" << format_double(c.gamma) << '\n'
     << "replay_buffer_size=" << c.replay_capacity << '\n'
     << "tau=" << format_double(c.tau) << '\n'
     << "rounds=" << c.rounds_total << '\n'
     << "learning_rounds=" << c.learning_rounds << '\n'
     << "round_duration_s=" << format_double(c.round_duration_s) << '\n';
  return os.str();
}

}  // namespace ccod
