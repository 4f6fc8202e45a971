#pragma once

// Small recurrent network: one LSTM layer over the observation windows, then
// two ReLU dense layers and a linear head. Optionally an extra input vector
// (the critic's action) is concatenated to the final hidden state before the
// first dense layer.
//
// All passes are batched: a batch of B samples is a matrix with B columns.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ccod/error.hpp"
#include "ccod/observation.hpp"

namespace ccod::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct NetShape {
  int input = 2;    // features per time step: (mean, std)
  int steps = 3;    // time steps per observation
  int hidden = 8;   // LSTM units
  int extra = 0;    // inputs appended after the LSTM
  int dense1 = 128;
  int dense2 = 64;
  int outputs = 1;

  friend bool operator==(const NetShape&, const NetShape&) = default;
};

enum TensorId : int {
  kLstmWx,  // 4H x D, gate order i, f, g, o
  kLstmWh,  // 4H x H
  kLstmB,   // 4H x 1
  kDense1W,
  kDense1B,
  kDense2W,
  kDense2B,
  kHeadW,
  kHeadB,
  kTensorCount
};

inline const char* tensor_name(int id) {
  static constexpr std::array<const char*, kTensorCount> names = {
      "lstm.wx", "lstm.wh", "lstm.b", "dense1.w", "dense1.b",
      "dense2.w", "dense2.b", "head.w", "head.b"};
  return names[static_cast<std::size_t>(id)];
}

inline std::array<std::pair<int, int>, kTensorCount> tensor_shapes(const NetShape& s) {
  const int g = 4 * s.hidden;
  return {{{g, s.input},
           {g, s.hidden},
           {g, 1},
           {s.dense1, s.hidden + s.extra},
           {s.dense1, 1},
           {s.dense2, s.dense1},
           {s.dense2, 1},
           {s.outputs, s.dense2},
           {s.outputs, 1}}};
}

/// A set of shape-congruent tensors, one per network parameter block.
struct TensorSet {
  NetShape shape;
  std::array<Matrix, kTensorCount> t;

  TensorSet() = default;
  explicit TensorSet(const NetShape& s) : shape(s) {
    const auto shapes = tensor_shapes(s);
    for (int i = 0; i < kTensorCount; ++i)
      t[i] = Matrix::Zero(shapes[i].first, shapes[i].second);
  }

  Matrix& operator[](int id) { return t[static_cast<std::size_t>(id)]; }
  const Matrix& operator[](int id) const { return t[static_cast<std::size_t>(id)]; }

  Eigen::Index size() const {
    Eigen::Index n = 0;
    for (const auto& m : t) n += m.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& m : t)
      if (!m.allFinite()) return false;
    return true;
  }

  bool congruent(const TensorSet& o) const {
    for (int i = 0; i < kTensorCount; ++i)
      if (t[i].rows() != o.t[i].rows() || t[i].cols() != o.t[i].cols()) return false;
    return true;
  }

  void set_zero() {
    for (auto& m : t) m.setZero();
  }

  /// Euclidean norm over all tensors.
  double norm() const {
    double sq = 0.0;
    for (const auto& m : t) sq += m.squaredNorm();
    return std::sqrt(sq);
  }

  friend bool operator==(const TensorSet& a, const TensorSet& b) {
    if (!(a.shape == b.shape)) return false;
    for (int i = 0; i < kTensorCount; ++i)
      if (a.t[i] != b.t[i]) return false;
    return true;
  }
};

struct NetworkParams : TensorSet {
  using TensorSet::TensorSet;

  /// Uniform in +-1/sqrt(fan_in) per layer.
  template <class Rng>
  static NetworkParams random(const NetShape& s, Rng& rng) {
    NetworkParams p(s);
    auto fill = [&](int id, int fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index k = 0; k < p[id].size(); ++k) p[id].data()[k] = u(rng);
    };
    fill(kLstmWx, s.input + s.hidden);
    fill(kLstmWh, s.input + s.hidden);
    fill(kLstmB, s.input + s.hidden);
    fill(kDense1W, s.hidden + s.extra);
    fill(kDense1B, s.hidden + s.extra);
    fill(kDense2W, s.dense1);
    fill(kDense2B, s.dense1);
    fill(kHeadW, s.dense2);
    fill(kHeadB, s.dense2);
    return p;
  }
};

struct GradientSet : TensorSet {
  using TensorSet::TensorSet;
};

/// Activations kept from forward() for backward().
struct ForwardCache {
  bool valid = false;
  Eigen::Index batch = 0;
  std::vector<Matrix> x;      // per step, D x B
  std::vector<Matrix> gates;  // per step, 4H x B, post-activation
  std::vector<Matrix> c;      // steps + 1 entries, c[0] = 0
  std::vector<Matrix> h;      // steps + 1 entries, h[0] = 0
  Matrix z0;                  // (H + E) x B
  Matrix a1;                  // dense1 x B, post-ReLU
  Matrix a2;                  // dense2 x B, post-ReLU
};

namespace detail {

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline Matrix stack_inputs(const NetShape& s, std::span<const Observation> batch, int step) {
  Matrix x(s.input, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& v = batch[b].values;
    for (int d = 0; d < s.input; ++d)
      x(d, static_cast<Eigen::Index>(b)) = v[static_cast<std::size_t>(step * s.input + d)];
  }
  return x;
}

}  // namespace detail

/// Raw (linear) head outputs, one column per sample. `extra` must be
/// E x B when the shape declares extra inputs.
inline Matrix forward(const NetworkParams& p, std::span<const Observation> batch,
                      const Matrix* extra = nullptr, ForwardCache* cache = nullptr) {
  const NetShape& s = p.shape;
  const auto bsz = static_cast<Eigen::Index>(batch.size());
  if (bsz == 0) throw ContractViolation("forward: empty batch");
  for (const auto& o : batch)
    if (static_cast<int>(o.values.size()) != s.steps * s.input)
      throw ContractViolation("forward: observation shape mismatch");
  if (s.extra > 0 && (extra == nullptr || extra->rows() != s.extra || extra->cols() != bsz))
    throw ContractViolation("forward: extra input shape mismatch");

  const int hd = s.hidden;
  ForwardCache local;
  ForwardCache& fc = cache ? *cache : local;
  fc = ForwardCache{};
  fc.batch = bsz;
  fc.c.push_back(Matrix::Zero(hd, bsz));
  fc.h.push_back(Matrix::Zero(hd, bsz));

  for (int step = 0; step < s.steps; ++step) {
    Matrix x = detail::stack_inputs(s, batch, step);
    Matrix a = p[kLstmWx] * x + p[kLstmWh] * fc.h.back();
    a.colwise() += p[kLstmB].col(0);
    a.topRows(2 * hd) = a.topRows(2 * hd).unaryExpr(&detail::sigmoid);
    a.middleRows(2 * hd, hd) = a.middleRows(2 * hd, hd).array().tanh();
    a.bottomRows(hd) = a.bottomRows(hd).unaryExpr(&detail::sigmoid);
    Matrix c = a.middleRows(hd, hd).cwiseProduct(fc.c.back()) +
               a.topRows(hd).cwiseProduct(a.middleRows(2 * hd, hd));
    Matrix h = a.bottomRows(hd).cwiseProduct(Matrix(c.array().tanh()));
    fc.x.push_back(std::move(x));
    fc.gates.push_back(std::move(a));
    fc.c.push_back(std::move(c));
    fc.h.push_back(std::move(h));
  }

  fc.z0.resize(hd + s.extra, bsz);
  fc.z0.topRows(hd) = fc.h.back();
  if (s.extra > 0) fc.z0.bottomRows(s.extra) = *extra;

  fc.a1 = p[kDense1W] * fc.z0;
  fc.a1.colwise() += p[kDense1B].col(0);
  fc.a1 = fc.a1.cwiseMax(0.0);
  fc.a2 = p[kDense2W] * fc.a1;
  fc.a2.colwise() += p[kDense2B].col(0);
  fc.a2 = fc.a2.cwiseMax(0.0);
  Matrix out = p[kHeadW] * fc.a2;
  out.colwise() += p[kHeadB].col(0);
  fc.valid = true;
  return out;
}

inline Vector forward(const NetworkParams& p, const Observation& obs,
                      const Vector* extra = nullptr) {
  Matrix e;
  if (extra) e = *extra;
  const Matrix out = forward(p, std::span<const Observation>(&obs, 1), extra ? &e : nullptr);
  return out.col(0);
}

/// Gradients of sum_b upstream(:, b) . output(:, b) with respect to every
/// parameter, back-propagated through all LSTM steps. When `d_extra` is
/// given it receives the gradient with respect to the extra input.
inline GradientSet backward(const NetworkParams& p, const ForwardCache& fc,
                            const Matrix& upstream, Matrix* d_extra = nullptr) {
  if (!fc.valid) throw ContractViolation("backward: no forward pass cached");
  const NetShape& s = p.shape;
  if (upstream.rows() != s.outputs || upstream.cols() != fc.batch)
    throw ContractViolation("backward: upstream gradient shape mismatch");
  const int hd = s.hidden;
  GradientSet g(s);

  g[kHeadW] = upstream * fc.a2.transpose();
  g[kHeadB] = upstream.rowwise().sum();
  Matrix d2 = (p[kHeadW].transpose() * upstream).cwiseProduct(
      Matrix((fc.a2.array() > 0.0).cast<double>()));
  g[kDense2W] = d2 * fc.a1.transpose();
  g[kDense2B] = d2.rowwise().sum();
  Matrix d1 = (p[kDense2W].transpose() * d2).cwiseProduct(
      Matrix((fc.a1.array() > 0.0).cast<double>()));
  g[kDense1W] = d1 * fc.z0.transpose();
  g[kDense1B] = d1.rowwise().sum();
  Matrix dz0 = p[kDense1W].transpose() * d1;
  if (d_extra) *d_extra = s.extra > 0 ? Matrix(dz0.bottomRows(s.extra)) : Matrix();

  Matrix dh = dz0.topRows(hd);
  Matrix dc = Matrix::Zero(hd, fc.batch);
  Matrix da(4 * hd, fc.batch);
  for (int step = s.steps - 1; step >= 0; --step) {
    const Matrix& a = fc.gates[static_cast<std::size_t>(step)];
    const Matrix& c = fc.c[static_cast<std::size_t>(step + 1)];
    const Matrix& c_prev = fc.c[static_cast<std::size_t>(step)];
    const Matrix& h_prev = fc.h[static_cast<std::size_t>(step)];
    const auto gi = a.topRows(hd).array();
    const auto gf = a.middleRows(hd, hd).array();
    const auto gg = a.middleRows(2 * hd, hd).array();
    const auto go = a.bottomRows(hd).array();
    const Eigen::ArrayXXd tc = c.array().tanh();

    dc.array() += dh.array() * go * (1.0 - tc * tc);
    da.topRows(hd) = (dc.array() * gg * gi * (1.0 - gi)).matrix();
    da.middleRows(hd, hd) = (dc.array() * c_prev.array() * gf * (1.0 - gf)).matrix();
    da.middleRows(2 * hd, hd) = (dc.array() * gi * (1.0 - gg * gg)).matrix();
    da.bottomRows(hd) = (dh.array() * tc * go * (1.0 - go)).matrix();

    g[kLstmWx] += da * fc.x[static_cast<std::size_t>(step)].transpose();
    g[kLstmWh] += da * h_prev.transpose();
    g[kLstmB] += da.rowwise().sum();
    dh = p[kLstmWh].transpose() * da;
    dc = (dc.array() * gf).matrix();
  }
  return g;
}

/// Adam with per-parameter first and second moments.
class Adam {
 public:
  explicit Adam(const NetShape& shape, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8)
      : m_(shape), v_(shape), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  long long steps() const { return t_; }

  void step(NetworkParams& params, const GradientSet& grads, double lr) {
    if (!params.congruent(grads) || !params.congruent(m_))
      throw ContractViolation("adam: gradient shape mismatch");
    if (!grads.all_finite()) throw TrainingError("adam: non-finite gradient, step skipped");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (int i = 0; i < kTensorCount; ++i) {
      auto m = m_[i].array();
      auto v = v_[i].array();
      const auto g = grads[i].array();
      m = beta1_ * m + (1.0 - beta1_) * g;
      v = beta2_ * v + (1.0 - beta2_) * g * g;
      params[i].array() -= lr * (m / c1) / ((v / c2).sqrt() + epsilon_);
    }
  }

 private:
  TensorSet m_;
  TensorSet v_;
  double beta1_;
  double beta2_;
  double epsilon_;
  long long t_ = 0;
};

/// target <- tau * local + (1 - tau) * target
inline void soft_update(NetworkParams& target, const NetworkParams& local, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("soft_update: tau must lie in [0, 1]");
  if (!target.congruent(local)) throw ContractViolation("soft_update: shape mismatch");
  if (tau == 1.0) {
    target.t = local.t;
    return;
  }
  if (tau == 0.0) return;
  for (int i = 0; i < kTensorCount; ++i) target[i] = tau * local[i] + (1.0 - tau) * target[i];
}

// Text dump: a manifest line per tensor followed by its values in hexfloat,
// so a save/load round trip reproduces every bit.

inline void save(std::ostream& os, const NetworkParams& p) {
  const NetShape& s = p.shape;
  os << "ccod-net 1\n";
  os << "shape " << s.input << ' ' << s.steps << ' ' << s.hidden << ' ' << s.extra << ' '
     << s.dense1 << ' ' << s.dense2 << ' ' << s.outputs << '\n';
  os << std::hexfloat;
  for (int i = 0; i < kTensorCount; ++i) {
    os << "tensor " << tensor_name(i) << ' ' << p[i].rows() << ' ' << p[i].cols() << '\n';
    for (Eigen::Index k = 0; k < p[i].size(); ++k)
      os << p[i].data()[k] << (k + 1 == p[i].size() ? '\n' : ' ');
  }
  os << std::defaultfloat;
}

inline NetworkParams load(std::istream& is) {
  std::string tag;
  int version = 0;
  is >> tag >> version;
  if (tag != "ccod-net" || version != 1) throw IoError("network dump: bad header");
  NetShape s;
  is >> tag >> s.input >> s.steps >> s.hidden >> s.extra >> s.dense1 >> s.dense2 >> s.outputs;
  if (!is || tag != "shape") throw IoError("network dump: bad shape line");
  NetworkParams p(s);
  for (int i = 0; i < kTensorCount; ++i) {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    is >> tag >> name >> rows >> cols;
    if (!is || tag != "tensor" || name != tensor_name(i) || rows != p[i].rows() ||
        cols != p[i].cols())
      throw IoError("network dump: manifest mismatch at tensor " + std::string(tensor_name(i)));
    for (Eigen::Index k = 0; k < p[i].size(); ++k) {
      std::string token;
      is >> token;
      if (!is) throw IoError("network dump: truncated tensor " + name);
      p[i].data()[k] = std::strtod(token.c_str(), nullptr);
    }
  }
  return p;
}

inline void save_file(const std::string& path, const NetworkParams& p) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  save(f, p);
  if (!f) throw IoError("write failed: " + path);
}

inline NetworkParams load_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  return load(f);
}

}  // namespace ccod::nn
