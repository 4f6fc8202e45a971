#pragma once

// The CCOD control loop. Each interaction period the medium runs for
// delta t, the collision probability lands in the history buffer, and (once
// the warm-up under legacy BEB has filled the buffer) the agent maps the
// preprocessed history to a new CW for every station. During learning the
// transition is stored and one minibatch is trained per interaction.

#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "ccod/agents.hpp"
#include "ccod/error.hpp"
#include "ccod/medium.hpp"
#include "ccod/observation.hpp"
#include "ccod/oracle.hpp"

namespace ccod {

enum class AgentKind { Legacy, LookupTable, Dqn, Ddpg };
enum class Phase { PreLearning, Learning, Operational };

inline const char* to_string(AgentKind k) {
  switch (k) {
    case AgentKind::Legacy: return "legacy";
    case AgentKind::LookupTable: return "lookup";
    case AgentKind::Dqn: return "dqn";
    case AgentKind::Ddpg: return "ddpg";
  }
  return "?";
}

inline AgentKind parse_agent_kind(const std::string& s) {
  if (s == "legacy" || s == "802.11" || s == "beb") return AgentKind::Legacy;
  if (s == "lookup" || s == "lut") return AgentKind::LookupTable;
  if (s == "dqn") return AgentKind::Dqn;
  if (s == "ddpg") return AgentKind::Ddpg;
  throw ConfigError("unknown agent '" + s + "' (legacy, lookup, dqn, ddpg)");
}

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::PreLearning: return "pre-learning";
    case Phase::Learning: return "learning";
    case Phase::Operational: return "operational";
  }
  return "?";
}

/// CW = floor(2^(a+4)) - 1 for a in [0, 6].
inline int action_to_cw(double a) {
  if (!(a >= 0.0 && a <= kActionMax))
    throw ContractViolation("action_to_cw: action outside [0, 6]: " + std::to_string(a));
  return static_cast<int>(std::floor(std::exp2(a + 4.0))) - 1;
}

/// Station count over a round. Static topologies have n_start == n_end; a
/// ramp adds `step` stations at each of `segments` equal slices of a round.
struct StationSchedule {
  int n_start = 5;
  int n_end = 5;
  int step = 5;
  int segments = 10;

  static StationSchedule fixed(int n) { return {n, n, 0, 1}; }
  static StationSchedule ramp(int from = 5, int to = 50) { return {from, to, 5, 10}; }

  bool dynamic() const { return n_end != n_start; }

  void validate() const {
    if (n_start < 1 || n_end < n_start) throw ConfigError("station schedule must ramp upward from >= 1");
    if (dynamic() && (step < 1 || segments < 1)) throw ConfigError("station ramp needs step, segments >= 1");
  }

  int at(int interaction, int per_round) const {
    if (!dynamic()) return n_start;
    const long long seg = static_cast<long long>(interaction) * segments / per_round;
    return static_cast<int>(std::min<long long>(n_end, n_start + seg * step));
  }
};

struct ControllerConfig {
  AgentKind agent = AgentKind::Legacy;
  double interaction_period_ms = 10.0;
  int rounds_total = 15;
  double round_duration_s = 60.0;
  int learning_rounds = 14;
  int history_length = kHistoryLength;
  int batch_size = 32;
  std::size_t replay_capacity = 18000;
  double gamma = 0.7;
  double dqn_lr = 4e-4;
  double actor_lr = 4e-4;
  double critic_lr = 4e-3;
  double tau = 4e-3;
  double epsilon_initial = 1.0;
  double epsilon_final = 0.001;
  double sigma_initial = 0.4;
  double sigma_final = 0.001;
  std::optional<double> max_throughput_bps;
  MediumConfig medium{};
  StationSchedule stations = StationSchedule::fixed(5);
  LookupTable lookup{};
  std::uint64_t seed = 1;

  long long period_us() const { return std::llround(interaction_period_ms * 1e3); }
  long long round_us() const { return std::llround(round_duration_s * 1e6); }
  int interactions_per_round() const { return static_cast<int>(round_us() / period_us()); }
  bool learns() const { return agent == AgentKind::Dqn || agent == AgentKind::Ddpg; }

  void validate() const {
    if (period_us() <= 0 || round_us() <= 0) throw ConfigError("durations must be positive");
    if (round_us() % period_us() != 0)
      throw ConfigError("interaction period must divide the round duration");
    if (rounds_total < 1) throw ConfigError("rounds_total must be >= 1");
    if (learns() && !(learning_rounds >= 0 && learning_rounds < rounds_total))
      throw ConfigError("learning_rounds must be below rounds_total");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in [0, 1]");
    if (max_throughput_bps && !(*max_throughput_bps > 0.0))
      throw ConfigError("reward normalizer must be positive");
    medium.validate();
    stations.validate();
    if (agent == AgentKind::LookupTable && lookup.empty())
      throw ConfigError("lookup agent needs a lookup table");
  }
};

struct InteractionRecord {
  int round = 0;
  int index = 0;
  int n_stations = 0;
  double cw = 0.0;  // CW governing the period (station mean under BEB)
  double p_col = 0.0;
  double throughput_mbps = 0.0;
  double noise = 0.0;
  Phase phase = Phase::Operational;
};

struct RoundStats {
  int round = 0;
  Phase phase = Phase::Operational;  // phase at the end of the round
  double mean_throughput_mbps = 0.0;
  double mean_cw = 0.0;
  double mean_p_col = 0.0;
  int interactions = 0;
  long long train_steps = 0;
  long long failed_train_steps = 0;
};

struct ExperimentResult {
  std::vector<RoundStats> rounds;
  std::vector<InteractionRecord> trace;
};

class Controller {
 public:
  explicit Controller(ControllerConfig cfg)
      : cfg_((cfg.validate(), std::move(cfg))),
        medium_(with_n(cfg_.medium, cfg_.stations.n_start), cfg_.seed,
                cfg_.agent == AgentKind::LookupTable ? AccessMode::FixedCw : AccessMode::Beb,
                cfg_.agent == AgentKind::LookupTable ? cfg_.lookup.lookup(cfg_.stations.n_start)
                                                     : kCwMin),
        history_(cfg_.history_length),
        shape_(WindowShape::for_history(cfg_.history_length)),
        replay_(cfg_.replay_capacity),
        rng_(cfg_.seed * 0x9E3779B97F4A7C15ULL + 0x5851F42D4C957F2DULL),
        prev_obs_(shape_.windows()),
        max_thr_(cfg_.max_throughput_bps.value_or(default_max_throughput(cfg_.medium))),
        phase_(cfg_.learns() ? Phase::PreLearning : Phase::Operational),
        cw_(medium_.fixed_cw()) {
    if (cfg_.agent == AgentKind::Dqn) {
      dqn_.emplace(DqnConfig{cfg_.dqn_lr, cfg_.gamma, cfg_.tau}, rng_);
      schedule_ = {cfg_.epsilon_initial, cfg_.epsilon_final, 1, NoiseSchedule::Kind::EpsilonGreedy};
    } else if (cfg_.agent == AgentKind::Ddpg) {
      ddpg_.emplace(DdpgConfig{cfg_.actor_lr, cfg_.critic_lr, cfg_.gamma, cfg_.tau}, rng_);
      schedule_ = {cfg_.sigma_initial, cfg_.sigma_final, 1, NoiseSchedule::Kind::Gaussian};
    }
    const long long learning = static_cast<long long>(cfg_.learning_rounds) *
                                   cfg_.interactions_per_round() -
                               cfg_.history_length;
    schedule_.steps = std::max<long long>(1, learning);
  }

  const ControllerConfig& config() const { return cfg_; }
  const Medium& medium() const { return medium_; }
  Medium& mutable_medium() { return medium_; }
  const HistoryBuffer& history() const { return history_; }
  const ReplayBuffer& replay() const { return replay_; }
  Phase phase() const { return phase_; }
  int round() const { return round_; }
  int cw() const { return cw_; }
  long long noise_step() const { return noise_step_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const Observation& state() const { return prev_obs_; }
  const DqnAgent* dqn() const { return dqn_ ? &*dqn_ : nullptr; }
  const DdpgAgent* ddpg() const { return ddpg_ ? &*ddpg_ : nullptr; }
  DqnAgent* mutable_dqn() { return dqn_ ? &*dqn_ : nullptr; }
  DdpgAgent* mutable_ddpg() { return ddpg_ ? &*ddpg_ : nullptr; }
  long long train_steps() const { return train_steps_; }
  long long failed_train_steps() const { return failed_steps_; }

  /// Current exploration level (zero outside learning).
  double noise() const {
    return phase_ == Phase::Learning ? noise_level(schedule_, noise_step_) : 0.0;
  }

  /// Agent checkpoint: every network dump plus the noise schedule position.
  void save_checkpoint(std::ostream& os) const {
    if (!cfg_.learns()) throw ConfigError("checkpoint: agent has no trainable networks");
    os << "ccod-agent 1\nkind " << to_string(cfg_.agent) << "\nstep " << noise_step_ << '\n';
    if (dqn_) dqn_->save(os);
    else ddpg_->save(os);
  }

  void load_checkpoint(std::istream& is) {
    std::string tag, kind;
    int version = 0;
    long long step = 0;
    is >> tag >> version;
    if (tag != "ccod-agent" || version != 1) throw IoError("checkpoint: bad header");
    is >> tag >> kind;
    if (tag != "kind" || kind != to_string(cfg_.agent)) throw IoError("checkpoint: agent kind mismatch");
    is >> tag >> step;
    if (tag != "step" || !is) throw IoError("checkpoint: bad step line");
    if (dqn_) dqn_->load(is);
    else if (ddpg_) ddpg_->load(is);
    noise_step_ = step;
  }

  /// Forces a phase; used to start in learning or to freeze an agent.
  void set_phase(Phase p) { phase_ = p; }

  /// Called at the start of each round: resets the station schedule and
  /// moves a learning agent to the operational phase after its last
  /// learning round.
  void begin_round(int round) {
    round_ = round;
    index_ = 0;
    if (cfg_.learns() && round >= cfg_.learning_rounds) phase_ = Phase::Operational;
    apply_station_count();
  }

  /// One iteration of the control loop.
  InteractionRecord run_interaction() {
    apply_station_count();
    InteractionRecord rec;
    rec.round = round_;
    rec.index = index_++;
    rec.n_stations = medium_.station_count();

    const PeriodCounters counters = medium_.run_period(static_cast<double>(cfg_.period_us()));
    rec.cw = governing_cw();
    rec.p_col = record_period(history_, counters);
    const double delivered_bits = static_cast<double>(counters.n_r) * cfg_.medium.payload_bits;
    const double thr_bps = delivered_bits / (static_cast<double>(cfg_.period_us()) * 1e-6);
    rec.throughput_mbps = thr_bps * 1e-6;

    if (phase_ == Phase::PreLearning && history_.pushed() >= cfg_.history_length)
      phase_ = Phase::Learning;
    rec.phase = phase_;
    rec.noise = noise();

    if (!cfg_.learns() || phase_ == Phase::PreLearning) return rec;

    const Observation obs = preprocess(history_, shape_);
    const bool learning = phase_ == Phase::Learning;
    if (learning) {
      const double r = normalize_reward(thr_bps, max_thr_);
      replay_.push({prev_obs_, prev_action_, r, obs});
    }

    double a = 0.0;
    if (dqn_) a = dqn_->act(obs, rec.noise, rng_);
    else a = ddpg_->act(obs, rec.noise, rng_);
    apply_cw(action_to_cw(a));

    if (learning) {
      prev_obs_ = obs;
      prev_action_ = a;
      if (replay_.size() >= static_cast<std::size_t>(cfg_.batch_size)) train_once();
      ++noise_step_;
    }
    return rec;
  }

  RoundStats run_round(int round, std::vector<InteractionRecord>* trace = nullptr) {
    begin_round(round);
    RoundStats st;
    st.round = round;
    const long long steps_before = train_steps_;
    const long long failed_before = failed_steps_;
    double thr = 0.0;
    double cw = 0.0;
    double p = 0.0;
    const int per_round = cfg_.interactions_per_round();
    for (int i = 0; i < per_round; ++i) {
      const InteractionRecord rec = run_interaction();
      thr += rec.throughput_mbps;
      cw += rec.cw;
      p += rec.p_col;
      if (trace) trace->push_back(rec);
    }
    st.interactions = per_round;
    st.mean_throughput_mbps = thr / per_round;
    st.mean_cw = cw / per_round;
    st.mean_p_col = p / per_round;
    st.phase = phase_;
    st.train_steps = train_steps_ - steps_before;
    st.failed_train_steps = failed_steps_ - failed_before;
    return st;
  }

  ExperimentResult run(bool keep_trace = true) {
    ExperimentResult res;
    if (keep_trace)
      res.trace.reserve(static_cast<std::size_t>(cfg_.rounds_total) * cfg_.interactions_per_round());
    for (int r = 0; r < cfg_.rounds_total; ++r)
      res.rounds.push_back(run_round(r, keep_trace ? &res.trace : nullptr));
    return res;
  }

 private:
  static MediumConfig with_n(MediumConfig m, int n) {
    m.n_stations = n;
    return m;
  }

  void apply_station_count() {
    const int n = cfg_.stations.at(index_, cfg_.interactions_per_round());
    if (n != medium_.station_count()) medium_.set_station_count(n);
    if (cfg_.agent == AgentKind::LookupTable) apply_cw(cfg_.lookup.lookup(n));
  }

  void apply_cw(int cw) {
    if (cw < kCwMin || cw > kCwMax) throw ContractViolation("controller: CW outside [15, 1023]");
    cw_ = cw;
    if (medium_.mode() != AccessMode::FixedCw) medium_.set_access_mode(AccessMode::FixedCw, cw);
    else if (medium_.fixed_cw() != cw) medium_.set_cw(cw);
  }

  double governing_cw() const {
    if (medium_.mode() == AccessMode::FixedCw) return cw_;
    double sum = 0.0;
    for (const auto& s : medium_.stations()) sum += s.cw_current;
    return sum / medium_.station_count();
  }

  void train_once() {
    const auto batch = replay_.sample(static_cast<std::size_t>(cfg_.batch_size), rng_);
    try {
      if (dqn_) dqn_->train_step(batch);
      else ddpg_->train_step(batch);
      ++train_steps_;
    } catch (const TrainingError&) {
      ++failed_steps_;
    }
  }

  ControllerConfig cfg_;
  Medium medium_;
  HistoryBuffer history_;
  WindowShape shape_;
  ReplayBuffer replay_;
  std::mt19937_64 rng_;
  Observation prev_obs_;
  double prev_action_ = 0.0;  // a = 0 is CW 15, the initial CW
  double max_thr_;
  Phase phase_;
  int cw_;
  int round_ = 0;
  int index_ = 0;
  long long noise_step_ = 0;
  long long train_steps_ = 0;
  long long failed_steps_ = 0;
  NoiseSchedule schedule_{};
  std::optional<DqnAgent> dqn_;
  std::optional<DdpgAgent> ddpg_;
};

inline ExperimentResult run_experiment(const ControllerConfig& cfg, bool keep_trace = true) {
  Controller c(cfg);
  return c.run(keep_trace);
}

}  // namespace ccod
