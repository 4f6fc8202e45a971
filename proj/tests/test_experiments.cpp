#include <gtest/gtest.h>

#include <filesystem>

#include "ccod/experiments.hpp"

using namespace ccod;

namespace {

ControllerConfig short_rounds(double seconds = 2.0, int rounds = 2) {
  ControllerConfig c;
  c.round_duration_s = seconds;
  c.rounds_total = rounds;
  c.learning_rounds = rounds - 1;
  c.history_length = 20;
  c.lookup = LookupTable({{5, 31}, {50, 511}});
  return c;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST(Csv, EmptyResultIsHeaderOnly) {
  EXPECT_EQ(format_csv({}), std::string(kResultHeader) + "\n");
  const std::string path = temp_path("ccod_empty.csv");
  emit_csv({}, path);
  EXPECT_EQ(read_text(path), std::string(kResultHeader) + "\n");
  std::filesystem::remove(path);
}

TEST(Csv, RoundTripIsExact) {
  std::vector<ResultRow> rows{
      {"static-n30", "dqn", 2, 14, -1, 30, 255.0, 0.19837261, 42.579000000000001},
      {"dynamic-5-50", "ddpg", 1, 3, 17, 5, 64.125, 1.0 / 3.0, 40.85},
      {"static-n5", "legacy", 5, 0, 0, 5, 15.0, 0.0, 0.1 + 0.2},
  };
  const auto parsed = parse_csv(format_csv(rows));
  sort_rows(rows);
  EXPECT_EQ(parsed, rows);
}

TEST(Csv, RowOrderIsCanonical) {
  std::vector<ResultRow> rows{
      {"b", "dqn", 1, 0, -1, 5, 0, 0, 0},
      {"a", "legacy", 2, 1, 3, 5, 0, 0, 0},
      {"a", "legacy", 2, 1, -1, 5, 0, 0, 0},
      {"a", "legacy", 1, 4, -1, 5, 0, 0, 0},
  };
  const auto parsed = parse_csv(format_csv(rows));
  EXPECT_EQ(parsed[0].seed, 1u);
  EXPECT_EQ(parsed[1].interaction, -1);
  EXPECT_EQ(parsed[2].interaction, 3);
  EXPECT_EQ(parsed[3].scenario, "b");
}

TEST(Csv, RejectsMalformedInput) {
  EXPECT_THROW(parse_csv("wrong,header\n"), ConfigError);
  EXPECT_THROW(parse_csv(std::string(kResultHeader) + "\na,b,1\n"), ConfigError);
  EXPECT_THROW(emit_csv({}, "/nonexistent-dir/x.csv"), IoError);
}

TEST(Csv, RepeatedRunsAreByteIdentical) {
  SweepOptions opt;
  opt.seeds = {1, 2};
  opt.keep_trace = true;
  const ControllerConfig base = short_rounds();
  const auto a = run_static_sweep({5}, {AgentKind::Legacy, AgentKind::Dqn}, base, opt);
  const auto b = run_static_sweep({5}, {AgentKind::Legacy, AgentKind::Dqn}, base, opt);
  const std::string pa = temp_path("ccod_a.csv"), pb = temp_path("ccod_b.csv");
  emit_csv(a.trace, pa);
  emit_csv(b.trace, pb);
  EXPECT_EQ(read_text(pa), read_text(pb));
  EXPECT_EQ(format_csv(a.rounds), format_csv(b.rounds));
  EXPECT_EQ(format_summary_csv(a.summary), format_summary_csv(b.summary));
  std::filesystem::remove(pa);
  std::filesystem::remove(pb);
}

TEST(Stats, ConfidenceInterval) {
  const Interval ci = confidence_interval({1.0, 2.0, 3.0, 4.0});
  // sample sd = sqrt(5/3), sem = sd / 2
  const double half = 1.96 * std::sqrt(5.0 / 3.0) / 2.0;
  EXPECT_DOUBLE_EQ(ci.mean, 2.5);
  EXPECT_NEAR(ci.low, 2.5 - half, 1e-12);
  EXPECT_NEAR(ci.high, 2.5 + half, 1e-12);
  const Interval one = confidence_interval({7.0});
  EXPECT_EQ(one.low, 7.0);
  EXPECT_EQ(one.high, 7.0);
}

TEST(Stats, CwSlope) {
  std::vector<InteractionRecord> t;
  for (int n = 5; n <= 50; n += 5) {
    InteractionRecord r;
    r.n_stations = n;
    r.cw = 3.0 * n + 7.0;
    t.push_back(r);
  }
  EXPECT_NEAR(cw_slope(t, 0), 3.0, 1e-12);
  EXPECT_EQ(cw_slope(t, 1), 0.0);
}

TEST(Sweep, LegacyDegradesWithStationCount) {
  SweepOptions opt;
  opt.seeds = {1, 2};
  const auto r = run_static_sweep({5, 50}, {AgentKind::Legacy}, short_rounds(5.0, 1), opt);
  ASSERT_EQ(r.summary.size(), 2u);
  EXPECT_GT(r.summary[0].throughput_mbps.mean, r.summary[1].throughput_mbps.mean);
  EXPECT_EQ(r.summary[0].scenario, "static-n5");
  EXPECT_EQ(r.rounds.size(), 4u);
}

TEST(Sweep, MissingLookupEntryIsAConfigError) {
  EXPECT_THROW(run_static_sweep({5, 30}, {AgentKind::LookupTable}, short_rounds()), ConfigError);
  ControllerConfig no_table = short_rounds();
  no_table.lookup = {};
  EXPECT_THROW(run_dynamic({AgentKind::LookupTable}, no_table), ConfigError);
}

TEST(Sweep, DynamicRampCoversFiveToFifty) {
  SweepOptions opt;
  opt.seeds = {3};
  opt.keep_runs = true;
  const auto r = run_dynamic({AgentKind::Legacy, AgentKind::LookupTable}, short_rounds(5.0, 1), opt);
  ASSERT_EQ(r.runs.size(), 2u);
  const auto seg = per_station_count(r.runs[0].result.trace, 0);
  ASSERT_EQ(seg.size(), 10u);
  EXPECT_EQ(seg.begin()->first, 5);
  EXPECT_EQ(seg.rbegin()->first, 50);
  for (const auto& [n, s] : seg) EXPECT_EQ(s.interactions, 50);
  EXPECT_GT(ramp_drop(r.runs[0].result.trace, 0).drop(), 0.1);
  EXPECT_GT(cw_slope(r.runs[1].result.trace, 0), 0.0);
  EXPECT_EQ(r.runs[0].spec.name(), "dynamic-5-50");
}

TEST(Sweep, HookSeesEveryRun) {
  SweepOptions opt;
  opt.seeds = {1, 2, 3};
  int calls = 0;
  opt.on_run = [&](const ScenarioSpec& spec, std::uint64_t seed, const ExperimentResult& res,
                   const Controller& c) {
    ++calls;
    EXPECT_EQ(spec.agent, AgentKind::Legacy);
    EXPECT_EQ(c.config().seed, seed);
    EXPECT_EQ(res.rounds.size(), 1u);
  };
  run_static_sweep({10}, {AgentKind::Legacy}, short_rounds(1.0, 1), opt);
  EXPECT_EQ(calls, 3);
}

TEST(Config, KeyValueParsing) {
  const auto kv = parse_key_values(
      "# comment\n"
      "gamma = 0.5\n"
      "\n"
      "batch_size=16   # trailing\n"
      "rounds=4\n"
      "agent=ddpg\n"
      "t_success_us=183.68\n"
      "mystery=1\n");
  ControllerConfig c;
  const auto unknown = apply_config(c, kv);
  EXPECT_EQ(c.gamma, 0.5);
  EXPECT_EQ(c.batch_size, 16);
  EXPECT_EQ(c.rounds_total, 4);
  EXPECT_EQ(c.learning_rounds, 3);
  EXPECT_EQ(c.agent, AgentKind::Ddpg);
  EXPECT_EQ(c.medium.t_success_us, 183.68);
  ASSERT_EQ(unknown.size(), 1u);
  EXPECT_EQ(unknown.begin()->first, "mystery");
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, ErrorsAreConfigErrors) {
  EXPECT_THROW(parse_key_values("no equals sign\n"), ConfigError);
  ControllerConfig c;
  EXPECT_THROW(apply_config(c, {{"batch_size", "lots"}}), ConfigError);
  EXPECT_THROW(apply_config(c, {{"gamma", "0.7x"}}), ConfigError);
  EXPECT_THROW(apply_config(c, {{"agent", "sarsa"}}), ConfigError);
}

TEST(Config, FormatRoundTrips) {
  ControllerConfig c;
  c.tau = 0.01;
  c.batch_size = 64;
  ControllerConfig back;
  EXPECT_TRUE(apply_config(back, parse_key_values(format_config(c))).empty());
  EXPECT_EQ(back.tau, 0.01);
  EXPECT_EQ(back.batch_size, 64);
  EXPECT_EQ(back.learning_rounds, c.learning_rounds);
}
