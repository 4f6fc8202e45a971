#pragma once

// DQN and DDPG agents over the recurrent network, with replay buffer and
// decaying exploration noise. Actions live in [0, 6]; DQN uses the integers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ccod/error.hpp"
#include "ccod/nn.hpp"
#include "ccod/observation.hpp"

namespace ccod {

inline constexpr int kActionCount = 7;
inline constexpr double kActionMax = 6.0;

struct Transition {
  Observation state;
  double action = 0.0;
  double reward = 0.0;
  Observation next_state;
};

/// FIFO store of transitions; evicts the oldest at capacity.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 18000) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
    data_.reserve(std::min<std::size_t>(capacity, 1 << 15));
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }

  void push(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  /// i-th stored transition counting from the oldest.
  const Transition& at(std::size_t i) const { return data_[(head_ + i) % data_.size()]; }

  /// `batch` distinct transitions drawn uniformly.
  template <class Rng>
  std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const {
    if (batch > data_.size()) throw ContractViolation("replay buffer: fewer entries than batch");
    std::vector<std::size_t> picked;
    picked.reserve(batch);
    std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
    while (picked.size() < batch) {
      const std::size_t i = pick(rng);
      if (std::find(picked.begin(), picked.end(), i) == picked.end()) picked.push_back(i);
    }
    std::vector<const Transition*> out;
    out.reserve(batch);
    for (std::size_t i : picked) out.push_back(&data_[i]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::vector<Transition> data_;
  std::size_t head_ = 0;
};

struct NoiseSchedule {
  enum class Kind { EpsilonGreedy, Gaussian };
  double initial = 1.0;
  double final = 0.001;
  long long steps = 1;
  Kind kind = Kind::EpsilonGreedy;
};

/// Linear from initial to final over `steps`, then held at final.
inline double noise_level(const NoiseSchedule& s, long long step) {
  if (step < 0) throw DomainError("noise_level: negative step");
  if (s.steps <= 0 || step >= s.steps) return s.final;
  const double frac = static_cast<double>(step) / static_cast<double>(s.steps);
  return s.initial + (s.final - s.initial) * frac;
}

namespace detail {

inline std::vector<Observation> states_of(std::span<const Transition* const> batch) {
  std::vector<Observation> out;
  out.reserve(batch.size());
  for (const auto* t : batch) out.push_back(t->state);
  return out;
}

inline std::vector<Observation> next_states_of(std::span<const Transition* const> batch) {
  std::vector<Observation> out;
  out.reserve(batch.size());
  for (const auto* t : batch) out.push_back(t->next_state);
  return out;
}

inline void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw TrainingError(std::string(what) + " is not finite");
}

}  // namespace detail

struct DqnConfig {
  double lr = 4e-4;
  double gamma = 0.7;
  double tau = 4e-3;
};

/// Value-based agent: the head predicts one Q-value per discrete action.
class DqnAgent {
 public:
  template <class Rng>
  DqnAgent(const DqnConfig& cfg, Rng& init_rng, nn::NetShape shape = {})
      : cfg_(cfg), shape_(with_outputs(shape)),
        local_(nn::NetworkParams::random(shape_, init_rng)), target_(local_), adam_(shape_) {}

  const DqnConfig& config() const { return cfg_; }
  DqnConfig& config() { return cfg_; }
  const nn::NetworkParams& local() const { return local_; }
  const nn::NetworkParams& target() const { return target_; }
  nn::NetworkParams& mutable_local() { return local_; }
  nn::NetworkParams& mutable_target() { return target_; }

  nn::Vector q_values(const Observation& obs) const { return nn::forward(local_, obs); }

  /// Index of the largest entry; ties go to the smallest index.
  static int argmax(const nn::Vector& q) {
    int best = 0;
    for (int i = 1; i < q.size(); ++i)
      if (q(i) > q(best)) best = i;
    return best;
  }

  template <class Rng>
  int act(const Observation& obs, double epsilon, Rng& rng) const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw DomainError("dqn: epsilon outside [0, 1]");
    if (epsilon > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < epsilon)
      return std::uniform_int_distribution<int>(0, kActionCount - 1)(rng);
    return argmax(q_values(obs));
  }

  /// One Adam step on the TD regression; returns the loss before the step.
  double train_step(std::span<const Transition* const> batch) {
    if (batch.empty()) throw ContractViolation("dqn: empty batch");
    const auto bsz = static_cast<Eigen::Index>(batch.size());
    const auto states = detail::states_of(batch);
    const auto next = detail::next_states_of(batch);

    const nn::Matrix q_next = nn::forward(target_, next);
    nn::ForwardCache cache;
    const nn::Matrix q = nn::forward(local_, states, nullptr, &cache);

    nn::Matrix upstream = nn::Matrix::Zero(shape_.outputs, bsz);
    double loss = 0.0;
    for (Eigen::Index b = 0; b < bsz; ++b) {
      const Transition& t = *batch[static_cast<std::size_t>(b)];
      const int a = static_cast<int>(std::lround(t.action));
      if (a < 0 || a >= shape_.outputs) throw ContractViolation("dqn: action index out of range");
      const double y = t.reward + cfg_.gamma * q_next.col(b).maxCoeff();
      const double diff = q(a, b) - y;
      loss += diff * diff;
      upstream(a, b) = 2.0 * diff / static_cast<double>(bsz);
    }
    loss /= static_cast<double>(bsz);
    detail::check_finite(loss, "dqn loss");

    adam_.step(local_, nn::backward(local_, cache, upstream), cfg_.lr);
    nn::soft_update(target_, local_, cfg_.tau);
    return loss;
  }

  void save(std::ostream& os) const {
    nn::save(os, local_);
    nn::save(os, target_);
  }

  void load(std::istream& is) {
    local_ = nn::load(is);
    target_ = nn::load(is);
    if (!(local_.shape == shape_) || !(target_.shape == shape_))
      throw IoError("dqn checkpoint: network shape mismatch");
  }

 private:
  static nn::NetShape with_outputs(nn::NetShape s) {
    s.outputs = kActionCount;
    s.extra = 0;
    return s;
  }

  DqnConfig cfg_;
  nn::NetShape shape_;
  nn::NetworkParams local_;
  nn::NetworkParams target_;
  nn::Adam adam_;
};

struct DdpgConfig {
  double actor_lr = 4e-4;
  double critic_lr = 4e-3;
  double gamma = 0.7;
  double tau = 4e-3;
};

/// Q-values and their action derivatives for a batch of (state, action).
struct CriticProbe {
  nn::Vector q;
  nn::Vector dq_da;
};

using CriticFn = std::function<CriticProbe(std::span<const Observation>, const nn::Vector&)>;

struct DdpgLosses {
  double critic_loss = 0.0;
  double actor_objective = 0.0;  // mean Q(s, mu(s)) before the actor step
};

/// Actor-critic agent. The actor head is squashed to [0, 6] by 6*sigmoid;
/// the critic sees the action rescaled to [0, 1] as its extra input.
class DdpgAgent {
 public:
  template <class Rng>
  DdpgAgent(const DdpgConfig& cfg, Rng& init_rng, nn::NetShape shape = {})
      : cfg_(cfg), actor_shape_(actor_shape(shape)), critic_shape_(critic_shape(shape)),
        actor_local_(nn::NetworkParams::random(actor_shape_, init_rng)),
        actor_target_(actor_local_),
        critic_local_(nn::NetworkParams::random(critic_shape_, init_rng)),
        critic_target_(critic_local_), actor_adam_(actor_shape_), critic_adam_(critic_shape_) {}

  const DdpgConfig& config() const { return cfg_; }
  DdpgConfig& config() { return cfg_; }
  const nn::NetworkParams& actor_local() const { return actor_local_; }
  const nn::NetworkParams& actor_target() const { return actor_target_; }
  const nn::NetworkParams& critic_local() const { return critic_local_; }
  const nn::NetworkParams& critic_target() const { return critic_target_; }
  nn::NetworkParams& mutable_actor_local() { return actor_local_; }
  nn::NetworkParams& mutable_critic_local() { return critic_local_; }
  nn::NetworkParams& mutable_critic_target() { return critic_target_; }

  static double squash(double raw) { return kActionMax / (1.0 + std::exp(-raw)); }

  double policy_action(const Observation& obs) const {
    return squash(nn::forward(actor_local_, obs)(0));
  }

  template <class Rng>
  double act(const Observation& obs, double sigma, Rng& rng) const {
    if (!(sigma >= 0.0)) throw DomainError("ddpg: negative noise level");
    double a = policy_action(obs);
    if (sigma > 0.0) a += std::normal_distribution<double>(0.0, sigma)(rng);
    return std::clamp(a, 0.0, kActionMax);
  }

  /// Q(s, a) and dQ/da from the local critic.
  CriticProbe probe_critic(std::span<const Observation> states, const nn::Vector& actions) const {
    const nn::Matrix extra = (actions / kActionMax).transpose();
    nn::ForwardCache cache;
    const nn::Matrix q = nn::forward(critic_local_, states, &extra, &cache);
    nn::Matrix d_extra;
    nn::backward(critic_local_, cache, nn::Matrix::Ones(1, q.cols()), &d_extra);
    return {q.row(0).transpose(), d_extra.row(0).transpose() / kActionMax};
  }

  /// Moves the actor up the gradient of mean critic(s, mu(s)); returns the
  /// mean critic value before the step.
  double actor_step(std::span<const Observation> states, const CriticFn& critic) {
    const auto bsz = static_cast<Eigen::Index>(states.size());
    nn::ForwardCache cache;
    const nn::Matrix raw = nn::forward(actor_local_, states, nullptr, &cache);
    nn::Vector mu(bsz);
    for (Eigen::Index b = 0; b < bsz; ++b) mu(b) = squash(raw(0, b));
    const CriticProbe probe = critic(states, mu);
    const double objective = probe.q.mean();
    detail::check_finite(objective, "ddpg actor objective");

    nn::Matrix upstream(1, bsz);
    for (Eigen::Index b = 0; b < bsz; ++b) {
      const double s = mu(b) / kActionMax;
      upstream(0, b) = -probe.dq_da(b) * kActionMax * s * (1.0 - s) / static_cast<double>(bsz);
    }
    actor_adam_.step(actor_local_, nn::backward(actor_local_, cache, upstream), cfg_.actor_lr);
    return objective;
  }

  /// Critic regression step, actor step through the updated critic, then
  /// soft updates of both target networks.
  DdpgLosses train_step(std::span<const Transition* const> batch) {
    if (batch.empty()) throw ContractViolation("ddpg: empty batch");
    const auto bsz = static_cast<Eigen::Index>(batch.size());
    const auto states = detail::states_of(batch);
    const auto next = detail::next_states_of(batch);

    const nn::Matrix next_raw = nn::forward(actor_target_, next);
    const nn::Matrix next_extra = next_raw.unaryExpr([](double r) { return squash(r) / kActionMax; });
    const nn::Matrix q_next = nn::forward(critic_target_, next, &next_extra);

    nn::Matrix extra(1, bsz);
    for (Eigen::Index b = 0; b < bsz; ++b)
      extra(0, b) = batch[static_cast<std::size_t>(b)]->action / kActionMax;
    nn::ForwardCache cache;
    const nn::Matrix q = nn::forward(critic_local_, states, &extra, &cache);

    nn::Matrix upstream(1, bsz);
    double loss = 0.0;
    for (Eigen::Index b = 0; b < bsz; ++b) {
      const double y = batch[static_cast<std::size_t>(b)]->reward + cfg_.gamma * q_next(0, b);
      const double diff = q(0, b) - y;
      loss += diff * diff;
      upstream(0, b) = 2.0 * diff / static_cast<double>(bsz);
    }
    loss /= static_cast<double>(bsz);
    detail::check_finite(loss, "ddpg critic loss");
    critic_adam_.step(critic_local_, nn::backward(critic_local_, cache, upstream), cfg_.critic_lr);

    const double objective = actor_step(
        states, [this](std::span<const Observation> s, const nn::Vector& a) {
          return probe_critic(s, a);
        });

    nn::soft_update(actor_target_, actor_local_, cfg_.tau);
    nn::soft_update(critic_target_, critic_local_, cfg_.tau);
    return {loss, objective};
  }

  void save(std::ostream& os) const {
    nn::save(os, actor_local_);
    nn::save(os, actor_target_);
    nn::save(os, critic_local_);
    nn::save(os, critic_target_);
  }

  void load(std::istream& is) {
    actor_local_ = nn::load(is);
    actor_target_ = nn::load(is);
    critic_local_ = nn::load(is);
    critic_target_ = nn::load(is);
    if (!(actor_local_.shape == actor_shape_) || !(critic_local_.shape == critic_shape_))
      throw IoError("ddpg checkpoint: network shape mismatch");
  }

 private:
  static nn::NetShape actor_shape(nn::NetShape s) {
    s.outputs = 1;
    s.extra = 0;
    return s;
  }
  static nn::NetShape critic_shape(nn::NetShape s) {
    s.outputs = 1;
    s.extra = 1;
    return s;
  }

  DdpgConfig cfg_;
  nn::NetShape actor_shape_;
  nn::NetShape critic_shape_;
  nn::NetworkParams actor_local_;
  nn::NetworkParams actor_target_;
  nn::NetworkParams critic_local_;
  nn::NetworkParams critic_target_;
  nn::Adam actor_adam_;
  nn::Adam critic_adam_;
};

}  // namespace ccod
