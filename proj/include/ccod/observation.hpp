#pragma once

// Observation and reward pipeline: per-period collision probability history,
// windowed (mean, std) time series, and throughput normalization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "ccod/error.hpp"
#include "ccod/medium.hpp"

namespace ccod {

inline constexpr int kHistoryLength = 300;

/// Fixed-capacity ring of p_col values, zero-filled at construction.
class HistoryBuffer {
 public:
  explicit HistoryBuffer(int capacity = kHistoryLength) {
    if (capacity < 4) throw ConfigError("history length must be >= 4");
    data_.assign(static_cast<std::size_t>(capacity), 0.0);
  }

  int capacity() const { return static_cast<int>(data_.size()); }
  /// Number of values pushed so far (not capped at capacity).
  long long pushed() const { return pushed_; }

  void push(double p) {
    data_[head_] = p;
    head_ = (head_ + 1) % data_.size();
    ++pushed_;
  }

  /// i-th entry counting from the oldest.
  double at(int i) const { return data_[(head_ + static_cast<std::size_t>(i)) % data_.size()]; }

  std::vector<double> to_vector() const {
    std::vector<double> out(data_.size());
    for (int i = 0; i < capacity(); ++i) out[static_cast<std::size_t>(i)] = at(i);
    return out;
  }

 private:
  std::vector<double> data_;
  std::size_t head_ = 0;
  long long pushed_ = 0;
};

/// Row-major (n_windows x 2) series of (mean, std), oldest window first.
struct Observation {
  std::vector<double> values;

  Observation() = default;
  explicit Observation(int windows) : values(static_cast<std::size_t>(2 * windows), 0.0) {}

  int windows() const { return static_cast<int>(values.size() / 2); }
  double mean(int w) const { return values[static_cast<std::size_t>(2 * w)]; }
  double stddev(int w) const { return values[static_cast<std::size_t>(2 * w + 1)]; }

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct WindowShape {
  int history = kHistoryLength;
  int window = kHistoryLength / 2;
  int stride = kHistoryLength / 4;

  static WindowShape for_history(int h) { return {h, h / 2, h / 4}; }
  int windows() const { return (history - window) / stride + 1; }
};

/// p_col = (N_t - N_r) / N_t; an empty period counts as collision-free.
inline double collision_probability(const PeriodCounters& c) {
  if (c.n_t <= 0) return 0.0;
  return static_cast<double>(c.n_t - c.n_r) / static_cast<double>(c.n_t);
}

inline double record_period(HistoryBuffer& buf, const PeriodCounters& counters) {
  const double p = collision_probability(counters);
  buf.push(p);
  return p;
}

/// Population mean and std of each window.
inline Observation preprocess(const HistoryBuffer& buf, WindowShape shape = {}) {
  if (shape.history != buf.capacity())
    throw ContractViolation("preprocess: window shape does not match history length");
  Observation obs(shape.windows());
  for (int w = 0; w < shape.windows(); ++w) {
    const int begin = w * shape.stride;
    // Offsets from the first sample keep a constant window exact.
    const double x0 = buf.at(begin);
    double sum = 0.0;
    for (int i = 0; i < shape.window; ++i) sum += buf.at(begin + i) - x0;
    const double dmean = sum / shape.window;
    double sq = 0.0;
    for (int i = 0; i < shape.window; ++i) {
      const double d = (buf.at(begin + i) - x0) - dmean;
      sq += d * d;
    }
    const double mean = x0 + dmean;
    obs.values[static_cast<std::size_t>(2 * w)] = mean;
    obs.values[static_cast<std::size_t>(2 * w + 1)] = std::sqrt(sq / shape.window);
  }
  return obs;
}

inline double normalize_reward(double throughput_bps, double max_throughput_bps) {
  if (!(max_throughput_bps > 0.0)) throw ConfigError("reward normalizer must be positive");
  return std::clamp(throughput_bps / max_throughput_bps, 0.0, 1.0);
}

/// Channel capacity with zero backoff and no collisions: one payload per
/// successful exchange.
inline double default_max_throughput(const MediumConfig& cfg) {
  return cfg.payload_bits / (cfg.t_success_us * 1e-6);
}

}  // namespace ccod
