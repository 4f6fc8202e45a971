#include <gtest/gtest.h>

#include "ccod/medium.hpp"

using namespace ccod;

namespace {

MediumConfig config_for(int n) {
  MediumConfig c;
  c.n_stations = n;
  return c;
}

}  // namespace

TEST(Medium, SingleStationNeverCollides) {
  Medium m(config_for(1), 7);
  const PeriodCounters c = m.run_period(2e6);
  EXPECT_GT(c.n_t, 0);
  EXPECT_EQ(c.n_t, c.n_r);
}

TEST(Medium, SingleStationThroughputMatchesRenewalFormula) {
  const MediumConfig cfg = config_for(1);
  Medium m(cfg, 11);
  const PeriodCounters c = m.run_period(20e6);
  // One frame per (mean backoff of 7.5 slots + success time).
  const double cycle_us = 7.5 * cfg.slot_us + cfg.t_success_us;
  const double expected = cfg.payload_bits / (cycle_us * 1e-6);
  const double measured = static_cast<double>(c.n_r) * cfg.payload_bits / (c.elapsed_us * 1e-6);
  EXPECT_NEAR(measured / expected, 1.0, 0.02);
}

TEST(Medium, BebDoublesOnCollisionAndResetsOnSuccess) {
  Medium m(config_for(2), 3);
  auto& st = m.mutable_stations();
  st[0].backoff_counter = 0;
  st[1].backoff_counter = 0;
  SlotOutcome o = m.step_slot();
  ASSERT_EQ(o.kind, SlotOutcome::Kind::Collision);
  EXPECT_EQ(o.colliders, 2);
  for (const auto& s : m.stations()) {
    EXPECT_EQ(s.cw_current, 31);
    EXPECT_GE(s.backoff_counter, 0);
    EXPECT_LE(s.backoff_counter, 31);
  }
  st[0].backoff_counter = 0;
  st[1].backoff_counter = 4;
  o = m.step_slot();
  ASSERT_EQ(o.kind, SlotOutcome::Kind::Success);
  EXPECT_EQ(o.station, 0);
  EXPECT_EQ(m.stations()[0].cw_current, kCwMin);
  EXPECT_EQ(m.stations()[1].cw_current, 31);
  EXPECT_EQ(m.stations()[1].backoff_counter, 3);
}

TEST(Medium, BebWindowIsCappedAt1023) {
  Medium m(config_for(2), 5);
  for (int i = 0; i < 10; ++i) {
    for (auto& s : m.mutable_stations()) s.backoff_counter = 0;
    m.step_slot();
  }
  for (const auto& s : m.stations()) EXPECT_EQ(s.cw_current, kCwMax);
}

TEST(Medium, IdleSlotDecrementsEveryCounter) {
  Medium m(config_for(3), 1);
  auto& st = m.mutable_stations();
  st[0].backoff_counter = 2;
  st[1].backoff_counter = 5;
  st[2].backoff_counter = 1;
  const double before = m.clock_us();
  EXPECT_EQ(m.step_slot().kind, SlotOutcome::Kind::Idle);
  EXPECT_EQ(m.stations()[0].backoff_counter, 1);
  EXPECT_EQ(m.stations()[1].backoff_counter, 4);
  EXPECT_EQ(m.stations()[2].backoff_counter, 0);
  EXPECT_DOUBLE_EQ(m.clock_us() - before, m.config().slot_us);
}

TEST(Medium, FixedCwStationsKeepTheirWindow) {
  Medium m(config_for(4), 9, AccessMode::FixedCw, 63);
  for (int i = 0; i < 2000; ++i) m.step_slot();
  for (const auto& s : m.stations()) {
    EXPECT_EQ(s.cw_current, 63);
    EXPECT_LE(s.backoff_counter, 63);
  }
}

TEST(Medium, SetCwRedrawsOnlyLargerBackoffs) {
  Medium m(config_for(3), 2, AccessMode::FixedCw, 1023);
  auto& st = m.mutable_stations();
  st[0].backoff_counter = 900;
  st[1].backoff_counter = 10;
  st[2].backoff_counter = 31;
  m.set_cw(31);
  EXPECT_LE(m.stations()[0].backoff_counter, 31);
  EXPECT_EQ(m.stations()[1].backoff_counter, 10);
  EXPECT_EQ(m.stations()[2].backoff_counter, 31);
  for (const auto& s : m.stations()) EXPECT_EQ(s.cw_current, 31);
  EXPECT_EQ(m.fixed_cw(), 31);
}

TEST(Medium, SetCwLeavesBebStationsAlone) {
  Medium m(config_for(2), 2);
  m.set_cw(255);
  for (const auto& s : m.stations()) EXPECT_EQ(s.cw_current, kCwMin);
}

TEST(Medium, AccessModeSwitch) {
  Medium m(config_for(3), 4);
  m.set_access_mode(AccessMode::FixedCw, 127);
  for (const auto& s : m.stations()) {
    EXPECT_EQ(s.mode, AccessMode::FixedCw);
    EXPECT_EQ(s.cw_current, 127);
  }
  m.set_access_mode(AccessMode::Beb);
  for (const auto& s : m.stations()) {
    EXPECT_EQ(s.mode, AccessMode::Beb);
    EXPECT_EQ(s.cw_current, kCwMin);
  }
}

TEST(Medium, StationCountChanges) {
  Medium m(config_for(5), 8, AccessMode::FixedCw, 255);
  m.set_station_count(12);
  EXPECT_EQ(m.station_count(), 12);
  for (const auto& s : m.stations()) {
    EXPECT_EQ(s.cw_current, 255);
    EXPECT_LE(s.backoff_counter, 255);
  }
  const StationState first = m.stations()[0];
  m.set_station_count(2);
  EXPECT_EQ(m.station_count(), 2);
  EXPECT_EQ(m.stations()[0].backoff_counter, first.backoff_counter);
  EXPECT_THROW(m.set_station_count(0), DomainError);
}

TEST(Medium, CollisionAccountingIsConserved) {
  Medium m(config_for(12), 21);
  std::int64_t collided_frames = 0;
  std::int64_t successes = 0;
  for (int i = 0; i < 50000; ++i) {
    const SlotOutcome o = m.step_slot();
    if (o.kind == SlotOutcome::Kind::Collision) collided_frames += o.colliders;
    if (o.kind == SlotOutcome::Kind::Success) ++successes;
  }
  const PeriodCounters& c = m.counters();
  EXPECT_EQ(c.n_r, successes);
  EXPECT_EQ(c.n_t - c.n_r, collided_frames);
  EXPECT_GT(collided_frames, 0);
}

TEST(Medium, RunPeriodMatchesSlotBySlotStepping) {
  Medium bulk(config_for(6), 99);
  Medium fine(config_for(6), 99);
  const PeriodCounters c = bulk.run_period(5e5);
  while (fine.clock_us() < bulk.clock_us()) fine.step_slot();
  EXPECT_DOUBLE_EQ(fine.clock_us(), bulk.clock_us());
  EXPECT_EQ(fine.counters().n_t, c.n_t);
  EXPECT_EQ(fine.counters().n_r, c.n_r);
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(fine.stations()[i].backoff_counter, bulk.stations()[i].backoff_counter);
    EXPECT_EQ(fine.stations()[i].cw_current, bulk.stations()[i].cw_current);
  }
}

TEST(Medium, PeriodsTileTheClock) {
  Medium m(config_for(10), 3);
  double total = 0.0;
  for (int i = 0; i < 100; ++i) total += m.run_period(10e3).elapsed_us;
  // Overshoot of each boundary is bounded by one frame exchange and is paid
  // back by the following period.
  EXPECT_NEAR(m.clock_us(), 100 * 10e3, m.config().t_collision_us + m.config().slot_us);
  EXPECT_DOUBLE_EQ(total, m.clock_us());
}

TEST(Medium, SameSeedSameTrajectory) {
  Medium a(config_for(20), 42, AccessMode::FixedCw, 15);
  Medium b(config_for(20), 42, AccessMode::FixedCw, 15);
  for (int i = 0; i < 50; ++i) {
    const int cw = (1 << (4 + i % 7)) - 1;
    a.set_cw(cw);
    b.set_cw(cw);
    const PeriodCounters ca = a.run_period(10e3);
    const PeriodCounters cb = b.run_period(10e3);
    ASSERT_EQ(ca.n_t, cb.n_t);
    ASSERT_EQ(ca.n_r, cb.n_r);
    ASSERT_EQ(ca.elapsed_us, cb.elapsed_us);
  }
}

TEST(Medium, InvalidArguments) {
  EXPECT_THROW(Medium(config_for(0), 1), ConfigError);
  MediumConfig bad = config_for(2);
  bad.slot_us = 0.0;
  EXPECT_THROW(Medium(bad, 1), ConfigError);
  Medium m(config_for(2), 1);
  EXPECT_THROW(m.set_cw(0), DomainError);
  EXPECT_THROW(m.run_period(0.0), DomainError);
  EXPECT_THROW(m.run_period(-5.0), DomainError);
}

TEST(AxTiming, FrameExchangeDuration) {
  const AxTiming t;
  // 12000 + 528 header bits + 22 service/tail: 12550 bits -> 7 symbols.
  EXPECT_DOUBLE_EQ(t.data_ppdu_us(1500), 44.0 + 7 * 13.6);
  // 134 bits at 96 bits/symbol -> 2 symbols.
  EXPECT_DOUBLE_EQ(t.ack_us(), 28.0);
  EXPECT_DOUBLE_EQ(t.difs_us(), 34.0);
  EXPECT_NEAR(t.success_us(1500), 217.2, 1e-9);
}
