#pragma once

// Slot-level saturation model of single-channel 802.11 DCF contention.
//
// Time advances in generic slots: an idle backoff slot, a successful frame
// exchange, or a collision. Every station always has a frame queued. A station
// transmits when its backoff counter reaches zero; every other station counts
// the generic slot down by one, whether it was idle or busy. This is the slot
// discipline of the Bianchi Markov chain, so the analytic model in oracle.hpp
// predicts this simulator exactly up to sampling noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "ccod/error.hpp"

namespace ccod {

inline constexpr int kCwMin = 15;
inline constexpr int kCwMax = 1023;

enum class AccessMode { Beb, FixedCw };

struct StationState {
  int cw_current = kCwMin;
  int backoff_counter = 0;
  AccessMode mode = AccessMode::Beb;
};

/// Frame-exchange durations of an 802.11ax single-user uplink transmission.
///
/// HE-MCS11 (1024-QAM, rate 5/6), 20 MHz, one spatial stream, 0.8 us GI:
/// 1950 data bits per 13.6 us OFDM symbol (143.4 Mb/s). The MPDU carries the
/// application payload plus LLC/SNAP, IPv4, UDP and the QoS MAC header with
/// FCS. ACKs go out as non-HT OFDM at 24 Mb/s.
struct AxTiming {
  double slot_us = 9.0;
  double sifs_us = 16.0;
  double he_preamble_us = 44.0;  // L-STF..L-SIG, RL-SIG, HE-SIG-A, HE-STF, one HE-LTF
  double he_symbol_us = 13.6;
  double he_bits_per_symbol = 1950.0;
  double legacy_preamble_us = 20.0;
  double legacy_symbol_us = 4.0;
  double legacy_bits_per_symbol = 96.0;  // 24 Mb/s
  int header_bytes = 8 + 20 + 8 + 26 + 4;
  int ack_bytes = 14;

  double difs_us() const { return sifs_us + 2.0 * slot_us; }

  double data_ppdu_us(int payload_bytes) const {
    const double bits = 16.0 + 8.0 * (payload_bytes + header_bytes) + 6.0;
    return he_preamble_us + std::ceil(bits / he_bits_per_symbol) * he_symbol_us;
  }

  double ack_us() const {
    const double bits = 16.0 + 8.0 * ack_bytes + 6.0;
    return legacy_preamble_us + std::ceil(bits / legacy_bits_per_symbol) * legacy_symbol_us;
  }

  /// DATA + SIFS + ACK + DIFS.
  double success_us(int payload_bytes) const {
    return data_ppdu_us(payload_bytes) + sifs_us + ack_us() + difs_us();
  }
};

struct MediumConfig {
  int n_stations = 1;
  double slot_us = 9.0;
  double t_success_us = AxTiming{}.success_us(1500);
  // A collided sender waits out the ACK timeout, which costs about as long as
  // the ACK exchange itself.
  double t_collision_us = AxTiming{}.success_us(1500);
  double payload_bits = 1500.0 * 8.0;

  void validate() const {
    if (n_stations < 1) throw ConfigError("medium: at least one station is required");
    if (!(slot_us > 0.0) || !(t_success_us > 0.0) || !(t_collision_us > 0.0))
      throw ConfigError("medium: all durations must be positive");
    if (!(payload_bits > 0.0)) throw ConfigError("medium: payload_bits must be positive");
  }
};

struct PeriodCounters {
  std::int64_t n_t = 0;  // frames put on the air
  std::int64_t n_r = 0;  // frames delivered
  double elapsed_us = 0.0;
};

struct SlotOutcome {
  enum class Kind { Idle, Success, Collision };
  Kind kind = Kind::Idle;
  int station = -1;     // winner, Success only
  int colliders = 0;    // k >= 2, Collision only
};

/// Hidden state of the simulated network: per-station backoff state, the
/// random source, and the clock. Identical seeds and identical CW action
/// sequences give identical trajectories.
class Medium {
 public:
  using Rng = std::mt19937_64;

  /// Starts every station in `mode`; `fixed_cw` is used only for FixedCw.
  Medium(const MediumConfig& config, std::uint64_t seed, AccessMode mode = AccessMode::Beb,
         int fixed_cw = kCwMin)
      : config_(config), rng_(seed), mode_(mode), fixed_cw_(fixed_cw) {
    config_.validate();
    if (fixed_cw < 1) throw DomainError("medium: cw must be >= 1");
    slot_ns_ = to_ns(config_.slot_us);
    success_ns_ = to_ns(config_.t_success_us);
    collision_ns_ = to_ns(config_.t_collision_us);
    stations_.reserve(static_cast<std::size_t>(config_.n_stations));
    for (int i = 0; i < config_.n_stations; ++i) stations_.push_back(fresh_station());
  }

  const MediumConfig& config() const { return config_; }
  const std::vector<StationState>& stations() const { return stations_; }
  std::vector<StationState>& mutable_stations() { return stations_; }
  int station_count() const { return static_cast<int>(stations_.size()); }
  AccessMode mode() const { return mode_; }
  int fixed_cw() const { return fixed_cw_; }
  double clock_us() const { return static_cast<double>(clock_ns_) * 1e-3; }

  /// Counters accumulated since the last run_period (or construction).
  const PeriodCounters& counters() const { return counters_; }

  /// Advances one generic slot.
  SlotOutcome step_slot() {
    if (stations_.empty()) throw ConfigError("medium: empty station list");
    transmitters_.clear();
    for (std::size_t i = 0; i < stations_.size(); ++i)
      if (stations_[i].backoff_counter == 0) transmitters_.push_back(static_cast<int>(i));

    if (transmitters_.empty()) {
      for (auto& s : stations_) --s.backoff_counter;
      advance(slot_ns_);
      return {SlotOutcome::Kind::Idle, -1, 0};
    }

    for (auto& s : stations_)
      if (s.backoff_counter > 0) --s.backoff_counter;

    const int k = static_cast<int>(transmitters_.size());
    counters_.n_t += k;
    if (k == 1) {
      const int winner = transmitters_.front();
      auto& s = stations_[static_cast<std::size_t>(winner)];
      ++counters_.n_r;
      if (s.mode == AccessMode::Beb) s.cw_current = kCwMin;
      s.backoff_counter = draw(s.cw_current);
      advance(success_ns_);
      return {SlotOutcome::Kind::Success, winner, 0};
    }
    for (int idx : transmitters_) {
      auto& s = stations_[static_cast<std::size_t>(idx)];
      if (s.mode == AccessMode::Beb) s.cw_current = std::min(2 * s.cw_current + 1, kCwMax);
      s.backoff_counter = draw(s.cw_current);
    }
    advance(collision_ns_);
    return {SlotOutcome::Kind::Collision, -1, k};
  }

  /// Runs generic slots until the clock reaches the end of the interaction
  /// period. Periods tile the clock: each ends `delta_t_us` after the previous
  /// period's end, so a frame exchange overshooting one boundary shortens the
  /// next period instead of drifting the schedule.
  PeriodCounters run_period(double delta_t_us) {
    if (!(delta_t_us > 0.0)) throw DomainError("medium: interaction period must be positive");
    if (stations_.empty()) throw ConfigError("medium: empty station list");
    counters_ = {};
    const std::int64_t start = clock_ns_;
    const std::int64_t span = to_ns(delta_t_us);
    if (period_end_ns_ + span <= clock_ns_) period_end_ns_ = clock_ns_;
    period_end_ns_ += span;
    while (clock_ns_ < period_end_ns_) {
      // Skip runs of idle slots in one go; equivalent to repeated step_slot().
      int min_backoff = std::numeric_limits<int>::max();
      for (const auto& s : stations_) min_backoff = std::min(min_backoff, s.backoff_counter);
      if (min_backoff > 0) {
        const std::int64_t remaining = period_end_ns_ - clock_ns_;
        const std::int64_t to_boundary = (remaining + slot_ns_ - 1) / slot_ns_;
        const int skip = static_cast<int>(std::min<std::int64_t>(min_backoff, to_boundary));
        for (auto& s : stations_) s.backoff_counter -= skip;
        advance(slot_ns_ * skip);
        continue;
      }
      step_slot();
    }
    counters_.elapsed_us = static_cast<double>(clock_ns_ - start) * 1e-3;
    return counters_;
  }

  /// Assigns `cw` to every FixedCw station. Pending backoffs above the new
  /// window are redrawn from {0..cw}; smaller ones are kept.
  void set_cw(int cw) {
    if (cw < 1) throw DomainError("medium: cw must be >= 1, got " + std::to_string(cw));
    fixed_cw_ = cw;
    for (auto& s : stations_) {
      if (s.mode != AccessMode::FixedCw) continue;
      s.cw_current = cw;
      if (s.backoff_counter > cw) s.backoff_counter = draw(cw);
    }
  }

  /// Switches every station to `mode`. Entering FixedCw applies `cw` as in
  /// set_cw; entering Beb restarts each station at CW_min.
  void set_access_mode(AccessMode mode, int cw = kCwMin) {
    if (cw < 1) throw DomainError("medium: cw must be >= 1");
    mode_ = mode;
    for (auto& s : stations_) {
      s.mode = mode;
      if (mode == AccessMode::Beb) s.cw_current = kCwMin;
    }
    if (mode == AccessMode::FixedCw) set_cw(cw);
  }

  /// Adds fresh stations or removes the highest-indexed ones.
  void set_station_count(int n) {
    if (n < 1) throw DomainError("medium: station count must be >= 1");
    while (station_count() > n) stations_.pop_back();
    while (station_count() < n) stations_.push_back(fresh_station());
    config_.n_stations = n;
  }

 private:
  static std::int64_t to_ns(double us) { return std::llround(us * 1e3); }

  int draw(int cw) { return std::uniform_int_distribution<int>(0, cw)(rng_); }

  StationState fresh_station() {
    StationState s;
    s.mode = mode_;
    s.cw_current = mode_ == AccessMode::FixedCw ? fixed_cw_ : kCwMin;
    s.backoff_counter = draw(s.cw_current);
    return s;
  }

  void advance(std::int64_t ns) {
    clock_ns_ += ns;
    counters_.elapsed_us += static_cast<double>(ns) * 1e-3;
  }

  MediumConfig config_;
  Rng rng_;
  AccessMode mode_;
  int fixed_cw_;
  std::vector<StationState> stations_;
  std::vector<int> transmitters_;
  PeriodCounters counters_;
  std::int64_t slot_ns_ = 0;
  std::int64_t success_ns_ = 0;
  std::int64_t collision_ns_ = 0;
  std::int64_t clock_ns_ = 0;
  std::int64_t period_end_ns_ = 0;
};

}  // namespace ccod
