#pragma once

// Central finite-difference check of nn::backward. Uses forward() only.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ccod/nn.hpp"

namespace ccod::nn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_extra_rel_error = 0.0;  // d output / d extra input
  long long checked = 0;
};

/// |a - b| / max(|a|, |b|, floor). The floor keeps round-off in near-zero
/// gradients from dominating.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Random observation with means in [0,1] and stds in [0,0.5].
template <class Rng>
Observation random_observation(const NetShape& s, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Observation o(s.steps);
  o.values.resize(static_cast<std::size_t>(s.steps * s.input));
  for (std::size_t i = 0; i < o.values.size(); ++i) o.values[i] = i % 2 ? 0.5 * u(rng) : u(rng);
  return o;
}

/// Checks every parameter of one random instance, loss = sum(upstream .* out).
inline GradCheckReport gradient_check_instance(const NetShape& shape, std::uint64_t seed,
                                               int batch = 2, double eps = 1e-5) {
  std::mt19937_64 rng(seed);
  NetworkParams p = NetworkParams::random(shape, rng);
  std::vector<Observation> obs;
  for (int b = 0; b < batch; ++b) obs.push_back(random_observation(shape, rng));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix extra(shape.extra, batch);
  for (Eigen::Index k = 0; k < extra.size(); ++k) extra.data()[k] = gauss(rng);
  Matrix upstream(shape.outputs, batch);
  for (Eigen::Index k = 0; k < upstream.size(); ++k) upstream.data()[k] = gauss(rng);
  const Matrix* ex = shape.extra > 0 ? &extra : nullptr;

  auto loss = [&](const NetworkParams& q, const Matrix* e) {
    return forward(q, obs, e).cwiseProduct(upstream).sum();
  };

  ForwardCache cache;
  forward(p, obs, ex, &cache);
  Matrix d_extra;
  const GradientSet g = backward(p, cache, upstream, &d_extra);

  GradCheckReport rep;
  for (int id = 0; id < kTensorCount; ++id) {
    for (Eigen::Index k = 0; k < p[id].size(); ++k) {
      const double orig = p[id].data()[k];
      p[id].data()[k] = orig + eps;
      const double up = loss(p, ex);
      p[id].data()[k] = orig - eps;
      const double down = loss(p, ex);
      p[id].data()[k] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      rep.max_rel_error = std::max(rep.max_rel_error, relative_error(g[id].data()[k], numeric));
      ++rep.checked;
    }
  }
  for (Eigen::Index k = 0; k < extra.size(); ++k) {
    const double orig = extra.data()[k];
    extra.data()[k] = orig + eps;
    const double up = loss(p, ex);
    extra.data()[k] = orig - eps;
    const double down = loss(p, ex);
    extra.data()[k] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    rep.max_extra_rel_error =
        std::max(rep.max_extra_rel_error, relative_error(d_extra.data()[k], numeric));
    ++rep.checked;
  }
  return rep;
}

/// Runs `instances` random instances, alternating between a Q-network head
/// (7 outputs) and a critic with one extra input.
inline GradCheckReport gradient_check(int instances = 10, std::uint64_t seed = 2024) {
  GradCheckReport total;
  for (int i = 0; i < instances; ++i) {
    NetShape s;
    if (i % 2 == 0) {
      s.outputs = 7;
    } else {
      s.extra = 1;
      s.outputs = 1;
    }
    const GradCheckReport r = gradient_check_instance(s, seed + static_cast<std::uint64_t>(i));
    total.max_rel_error = std::max(total.max_rel_error, r.max_rel_error);
    total.max_extra_rel_error = std::max(total.max_extra_rel_error, r.max_extra_rel_error);
    total.checked += r.checked;
  }
  return total;
}

}  // namespace ccod::nn
