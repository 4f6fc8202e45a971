// ccod: experiment runner for contention-window control.
//
//   ccod static          fixed station counts, per-agent operational throughput
//   ccod dynamic         station count ramping from 5 upward within each round
//   ccod lookup-build    best power-of-two CW per station count, by simulation
//   ccod validate-oracle simulator vs Bianchi model on an (n, CW) grid
//   ccod grad-check      backward pass vs central finite differences

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "ccod/experiments.hpp"
#include "ccod/gradcheck.hpp"
#include "ccod/oracle.hpp"

namespace {

using namespace ccod;

struct CommonFlags {
  std::string agents;
  std::string n_values;
  std::string seeds = "5";
  int rounds = 0;
  double round_duration_s = 0.0;
  double interaction_ms = 0.0;
  std::string out;
  std::string config_path;
  std::string lookup_path;
  std::string save_agent_dir;
  bool trace = false;
};

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  for (const auto& tok : split(s, ',')) {
    const std::string t = trim(tok);
    if (t.empty()) continue;
    const auto colon = t.find(':');
    if (colon != std::string::npos) {  // from:to:step
      const auto parts = split(t, ':');
      if (parts.size() != 3) throw ConfigError("range must be from:to:step, got '" + t + "'");
      const int from = static_cast<int>(parse_int(trim(parts[0])));
      const int to = static_cast<int>(parse_int(trim(parts[1])));
      const int step = static_cast<int>(parse_int(trim(parts[2])));
      if (step < 1) throw ConfigError("range step must be positive");
      for (int v = from; v <= to; v += step) out.push_back(v);
    } else {
      out.push_back(static_cast<int>(parse_int(t)));
    }
  }
  if (out.empty()) throw ConfigError("empty list '" + s + "'");
  return out;
}

/// "5" means seeds 1..5; "3,7,11" lists them.
std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  if (s.find(',') == std::string::npos) {
    const int count = static_cast<int>(parse_int(trim(s)));
    if (count < 1) throw ConfigError("--seeds must be positive");
    for (int i = 1; i <= count; ++i) out.push_back(static_cast<std::uint64_t>(i));
  } else {
    for (int v : parse_int_list(s)) out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<AgentKind> parse_agents(const std::string& s) {
  if (s.empty() || s == "all")
    return {AgentKind::Legacy, AgentKind::LookupTable, AgentKind::Dqn, AgentKind::Ddpg};
  std::vector<AgentKind> out;
  for (const auto& tok : split(s, ','))
    if (!trim(tok).empty()) out.push_back(parse_agent_kind(trim(tok)));
  return out;
}

bool needs_lookup(const std::vector<AgentKind>& agents) {
  for (auto a : agents)
    if (a == AgentKind::LookupTable) return true;
  return false;
}

ControllerConfig base_config(const CommonFlags& f) {
  ControllerConfig cfg;
  if (!f.config_path.empty()) {
    const auto rest = apply_config(cfg, parse_key_values(read_text(f.config_path)));
    if (!rest.empty()) throw ConfigError("unknown config key '" + rest.begin()->first + "'");
  }
  if (f.rounds > 0) {
    cfg.rounds_total = f.rounds;
    cfg.learning_rounds = f.rounds - 1;
  }
  if (f.round_duration_s > 0.0) cfg.round_duration_s = f.round_duration_s;
  if (f.interaction_ms > 0.0) cfg.interaction_period_ms = f.interaction_ms;
  return cfg;
}

/// `out.csv` -> `out_<suffix>.csv`
std::string sibling(const std::string& out, const std::string& suffix) {
  std::filesystem::path p(out);
  const std::string ext = p.has_extension() ? p.extension().string() : ".csv";
  return (p.parent_path() / (p.stem().string() + "_" + suffix + ext)).string();
}

void print_summary(const std::vector<SummaryEntry>& entries) {
  for (const auto& e : entries)
    std::printf("%-16s %-7s n=%-3d thr %8.3f Mb/s  [%8.3f, %8.3f]  cw %7.1f\n",
                e.scenario.c_str(), e.agent.c_str(), e.n, e.throughput_mbps.mean,
                e.throughput_mbps.low, e.throughput_mbps.high, e.cw.mean);
}

SweepOptions sweep_options(const CommonFlags& f) {
  SweepOptions opt;
  opt.seeds = parse_seeds(f.seeds);
  opt.keep_trace = f.trace;
  const std::string dir = f.save_agent_dir;
  if (!dir.empty()) std::filesystem::create_directories(dir);
  opt.on_run = [dir](const ScenarioSpec& spec, std::uint64_t seed, const ExperimentResult& r,
                     const Controller& c) {
    std::fprintf(stderr, "  %s %s seed %llu: operational %.3f Mb/s\n", spec.name().c_str(),
                 to_string(spec.agent), static_cast<unsigned long long>(seed),
                 r.rounds.back().mean_throughput_mbps);
    if (dir.empty() || !c.config().learns()) return;
    const auto path = std::filesystem::path(dir) / (spec.name() + "_" + to_string(spec.agent) +
                                                   "_seed" + std::to_string(seed) + ".ckpt");
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    c.save_checkpoint(os);
  };
  return opt;
}

int cmd_static(const CommonFlags& f) {
  ControllerConfig cfg = base_config(f);
  const auto agents = parse_agents(f.agents);
  const auto n_values = parse_int_list(f.n_values.empty() ? "5:50:5" : f.n_values);
  if (needs_lookup(agents)) {
    cfg.lookup = f.lookup_path.empty() ? build_lookup_table(n_values, cfg.medium)
                                       : LookupTable::read_csv(f.lookup_path);
  }
  const SweepResult res = run_static_sweep(n_values, agents, cfg, sweep_options(f));
  print_summary(res.summary);
  if (!f.out.empty()) {
    write_text(f.out, format_summary_csv(res.summary));
    emit_csv(res.rounds, sibling(f.out, "rounds"));
    if (f.trace) emit_csv(res.trace, sibling(f.out, "trace"));
  }
  return 0;
}

int cmd_dynamic(const CommonFlags& f) {
  ControllerConfig cfg = base_config(f);
  const auto agents = parse_agents(f.agents);
  const auto n_end = parse_int_list(f.n_values.empty() ? "50" : f.n_values);
  if (needs_lookup(agents)) {
    std::vector<int> grid;
    for (int n = 5; n <= *std::max_element(n_end.begin(), n_end.end()); n += 5) grid.push_back(n);
    cfg.lookup = f.lookup_path.empty() ? build_lookup_table(grid, cfg.medium)
                                       : LookupTable::read_csv(f.lookup_path);
  }
  SweepOptions opt = sweep_options(f);
  opt.keep_runs = true;
  const SweepResult res = run_dynamic(agents, cfg, opt, n_end);
  print_summary(res.summary);

  // CW and throughput per station count in the operational round.
  std::string seg = "scenario,agent,seed,n_stations,throughput_mbps,cw\n";
  for (const auto& run : res.runs) {
    const int last = run.result.rounds.back().round;
    for (const auto& [n, s] : per_station_count(run.result.trace, last))
      seg += run.spec.name() + ',' + to_string(run.spec.agent) + ',' + std::to_string(run.seed) +
             ',' + std::to_string(n) + ',' + format_double(s.throughput_mbps) + ',' +
             format_double(s.cw) + '\n';
    const RampDrop d = ramp_drop(run.result.trace, last);
    std::fprintf(stderr, "  %s %s seed %llu: %.3f -> %.3f Mb/s (drop %.1f%%)\n",
                 run.spec.name().c_str(), to_string(run.spec.agent),
                 static_cast<unsigned long long>(run.seed), d.start_mbps, d.end_mbps,
                 100.0 * d.drop());
  }
  if (!f.out.empty()) {
    write_text(f.out, format_summary_csv(res.summary));
    emit_csv(res.rounds, sibling(f.out, "rounds"));
    write_text(sibling(f.out, "segments"), seg);
    if (f.trace) emit_csv(res.trace, sibling(f.out, "trace"));
  }
  return 0;
}

int cmd_lookup_build(const CommonFlags& f) {
  const ControllerConfig cfg = base_config(f);
  const auto n_values = parse_int_list(f.n_values.empty() ? "5:50:5" : f.n_values);
  const auto seeds = parse_seeds(f.seeds);
  const double duration = f.round_duration_s > 0.0 ? f.round_duration_s : 60.0;
  const LookupTable t = build_lookup_table(n_values, cfg.medium, duration, seeds.front());
  std::cout << t.to_csv();
  if (!f.out.empty()) t.write_csv(f.out);
  return 0;
}

int cmd_validate_oracle(const CommonFlags& f, const std::string& cw_list) {
  const ControllerConfig cfg = base_config(f);
  const auto n_values = parse_int_list(f.n_values.empty() ? "5,10,20,30,50" : f.n_values);
  const auto cws = parse_int_list(cw_list);
  const double duration = f.round_duration_s > 0.0 ? f.round_duration_s : 60.0;
  const auto seeds = parse_seeds(f.seeds);
  std::string csv = "n,cw,oracle_mbps,sim_mbps,rel_error\n";
  double worst = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int n : n_values) {
    for (int cw : cws) {
      DcfModelInput in{n, cw, 0, cfg.medium};
      const double s_or = saturation_throughput(in);
      const double s_sim =
          simulate_throughput(cfg.medium, n, AccessMode::FixedCw, cw, duration, seeds.front());
      const double err = std::abs(s_or - s_sim) / s_or;
      worst = std::max(worst, err);
      std::printf("n=%-3d cw=%-5d oracle %8.3f  sim %8.3f  err %.3f%%\n", n, cw, s_or * 1e-6,
                  s_sim * 1e-6, 100.0 * err);
      csv += std::to_string(n) + ',' + std::to_string(cw) + ',' + format_double(s_or * 1e-6) +
             ',' + format_double(s_sim * 1e-6) + ',' + format_double(err) + '\n';
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("max relative error %.4f%% (limit 3%%), %.1f s\n", 100.0 * worst, secs);
  if (!f.out.empty()) write_text(f.out, csv);
  return worst < 0.03 ? 0 : 1;
}

int cmd_grad_check(int instances, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const nn::GradCheckReport r = nn::gradient_check(instances, seed);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("checked %lld derivatives over %d instances in %.2f s\n", r.checked, instances, secs);
  std::printf("max relative error: parameters %.3e, critic action input %.3e (limit 1e-4)\n",
              r.max_rel_error, r.max_extra_rel_error);
  return r.max_rel_error < 1e-4 && r.max_extra_rel_error < 1e-4 ? 0 : 1;
}

void add_common(CLI::App* app, CommonFlags& f, bool with_agents) {
  if (with_agents) {
    app->add_option("--agent", f.agents, "legacy, lookup, dqn, ddpg (comma list) or all")
        ->default_str("all");
    app->add_option("--save-agent", f.save_agent_dir, "directory for trained agent checkpoints");
    app->add_flag("--trace", f.trace, "also write per-interaction rows to <out>_trace.csv");
    app->add_option("--lookup", f.lookup_path, "look-up table CSV (n,cw); built by simulation if absent");
  }
  app->add_option("--n", f.n_values, "station counts: list or from:to:step");
  app->add_option("--seeds", f.seeds, "seed count (1..N) or comma list")->default_str("5");
  app->add_option("--rounds", f.rounds, "rounds per experiment (last one operational)");
  app->add_option("--round-duration", f.round_duration_s, "seconds per round");
  app->add_option("--interaction-ms", f.interaction_ms, "interaction period in milliseconds");
  app->add_option("--out", f.out, "output CSV path");
  app->add_option("--config", f.config_path, "key=value configuration file");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contention-window optimization experiments"};
  app.require_subcommand(1);

  CommonFlags st_flags, dyn_flags, lut_flags, val_flags;
  auto* st = app.add_subcommand("static", "static topology sweep");
  add_common(st, st_flags, true);
  auto* dyn = app.add_subcommand("dynamic", "dynamic topology: 5 -> n stations per round");
  add_common(dyn, dyn_flags, true);
  auto* lut = app.add_subcommand("lookup-build", "simulate the best power-of-two CW per n");
  add_common(lut, lut_flags, false);
  auto* val = app.add_subcommand("validate-oracle", "compare simulator and analytic throughput");
  add_common(val, val_flags, false);
  std::string cw_list = "15,63,255";
  val->add_option("--cw", cw_list, "fixed CW values")->default_str("15,63,255");
  auto* gc = app.add_subcommand("grad-check", "finite-difference check of backpropagation");
  int instances = 10;
  std::uint64_t gc_seed = 2024;
  gc->add_option("--instances", instances, "random instances")->default_str("10");
  gc->add_option("--seed", gc_seed, "seed")->default_str("2024");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*st) return cmd_static(st_flags);
    if (*dyn) return cmd_dynamic(dyn_flags);
    if (*lut) return cmd_lookup_build(lut_flags);
    if (*val) return cmd_validate_oracle(val_flags, cw_list);
    if (*gc) return cmd_grad_check(instances, gc_seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ccod: error: %s\n", e.what());
    return 2;
  }
  return 0;
}
