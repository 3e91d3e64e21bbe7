#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nestopt {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// Checkpoints are endianness-fixed: explicit little-endian byte order.
inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {
      static_cast<unsigned char>(v & 0xff),
      static_cast<unsigned char>((v >> 8) & 0xff),
      static_cast<unsigned char>((v >> 16) & 0xff),
      static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t take_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw CheckpointError("truncated checkpoint");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float f) { put_u32(os, std::bit_cast<std::uint32_t>(f)); }
inline float take_f32(std::istream& is) { return std::bit_cast<float>(take_u32(is)); }

inline constexpr char kCheckpointMagic[8] = {'N', 'E', 'S', 'T', 'M', 'L', 'P', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace detail

/// Fully connected network: rectifier hidden layers, linear output.
/// Parameters are stored as 32-bit floats on disk; the in-memory scalar is
/// a template so numeric tests can instantiate a double version.
template <typename Scalar = float>
class Mlp {
 public:
  Mlp() = default;

  Mlp(std::vector<int> dims, std::uint64_t seed) : dims_(std::move(dims)) {
    if (dims_.size() < 2) throw std::invalid_argument("need at least input and output dims");
    for (int d : dims_) {
      if (d <= 0) throw std::invalid_argument("layer dims must be positive");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      const int fan_in = dims_[l];
      const int fan_out = dims_[l + 1];
      const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
      std::vector<Scalar> w(static_cast<std::size_t>(fan_in) * static_cast<std::size_t>(fan_out));
      for (auto& x : w) x = static_cast<Scalar>(normal(rng) * scale);
      w_.push_back(std::move(w));
      b_.emplace_back(static_cast<std::size_t>(fan_out), Scalar(0));
    }
  }

  const std::vector<int>& dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  std::size_t layer_count() const { return w_.size(); }

  std::vector<std::vector<Scalar>>& weights() { return w_; }
  std::vector<std::vector<Scalar>>& biases() { return b_; }
  const std::vector<std::vector<Scalar>>& weights() const { return w_; }
  const std::vector<std::vector<Scalar>>& biases() const { return b_; }

  /// Post-activation values per layer, recorded for backprop.
  struct Workspace {
    std::vector<std::vector<Scalar>> act;
  };

  std::vector<Scalar> forward(std::span<const Scalar> x) const {
    Workspace ws;
    return forward(x, ws);
  }

  std::vector<Scalar> forward(std::span<const Scalar> x, Workspace& ws) const {
    if (static_cast<int>(x.size()) != dims_.front()) {
      throw std::invalid_argument("input dimension mismatch");
    }
    ws.act.assign(w_.size(), {});
    std::vector<Scalar> cur(x.begin(), x.end());
    for (std::size_t l = 0; l < w_.size(); ++l) {
      const int in = dims_[l];
      const int out = dims_[l + 1];
      std::vector<Scalar> next(static_cast<std::size_t>(out));
      const Scalar* w = w_[l].data();
      for (int o = 0; o < out; ++o) {
        Scalar acc = b_[l][static_cast<std::size_t>(o)];
        const Scalar* row = w + static_cast<std::size_t>(o) * static_cast<std::size_t>(in);
        for (int i = 0; i < in; ++i) acc += row[i] * cur[static_cast<std::size_t>(i)];
        if (l + 1 < w_.size() && acc < Scalar(0)) acc = Scalar(0);  // rectifier on hidden
        next[static_cast<std::size_t>(o)] = acc;
      }
      ws.act[l] = next;
      cur = std::move(next);
    }
    return cur;
  }

  struct Gradients {
    std::vector<std::vector<Scalar>> w, b;

    void init_like(const Mlp& net) {
      w.clear();
      b.clear();
      for (const auto& layer : net.w_) w.emplace_back(layer.size(), Scalar(0));
      for (const auto& layer : net.b_) b.emplace_back(layer.size(), Scalar(0));
    }
  };

  /// Accumulates dLoss/dparams into `g` given dLoss/doutput for one input;
  /// `ws` must come from forward() on the same input.
  void backward(std::span<const Scalar> x, const Workspace& ws,
                std::span<const Scalar> dout, Gradients& g) const {
    std::vector<Scalar> delta(dout.begin(), dout.end());
    for (std::size_t l = w_.size(); l-- > 0;) {
      const int in = dims_[l];
      const int out = dims_[l + 1];
      const Scalar* prev = l == 0 ? x.data() : ws.act[l - 1].data();
      Scalar* gw = g.w[l].data();
      for (int o = 0; o < out; ++o) {
        const Scalar d = delta[static_cast<std::size_t>(o)];
        g.b[l][static_cast<std::size_t>(o)] += d;
        Scalar* row = gw + static_cast<std::size_t>(o) * static_cast<std::size_t>(in);
        for (int i = 0; i < in; ++i) row[i] += d * prev[i];
      }
      if (l == 0) break;
      std::vector<Scalar> prev_delta(static_cast<std::size_t>(in), Scalar(0));
      const Scalar* w = w_[l].data();
      for (int o = 0; o < out; ++o) {
        const Scalar d = delta[static_cast<std::size_t>(o)];
        const Scalar* row = w + static_cast<std::size_t>(o) * static_cast<std::size_t>(in);
        for (int i = 0; i < in; ++i) prev_delta[static_cast<std::size_t>(i)] += d * row[i];
      }
      for (int i = 0; i < in; ++i) {
        if (ws.act[l - 1][static_cast<std::size_t>(i)] <= Scalar(0)) {
          prev_delta[static_cast<std::size_t>(i)] = Scalar(0);
        }
      }
      delta = std::move(prev_delta);
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& w : w_) n += w.size();
    for (const auto& b : b_) n += b.size();
    return n;
  }

  // Flat parameter view (weights then bias, layer by layer); used by the
  // finite-difference tests.
  Scalar get_param(std::size_t idx) const {
    for (std::size_t l = 0; l < w_.size(); ++l) {
      if (idx < w_[l].size()) return w_[l][idx];
      idx -= w_[l].size();
      if (idx < b_[l].size()) return b_[l][idx];
      idx -= b_[l].size();
    }
    throw std::out_of_range("parameter index");
  }

  void set_param(std::size_t idx, Scalar v) {
    for (std::size_t l = 0; l < w_.size(); ++l) {
      if (idx < w_[l].size()) {
        w_[l][idx] = v;
        return;
      }
      idx -= w_[l].size();
      if (idx < b_[l].size()) {
        b_[l][idx] = v;
        return;
      }
      idx -= b_[l].size();
    }
    throw std::out_of_range("parameter index");
  }

  void save(std::ostream& os) const {
    os.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
    detail::put_u32(os, detail::kCheckpointVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(dims_.size()));
    for (int d : dims_) detail::put_u32(os, static_cast<std::uint32_t>(d));
    for (std::size_t l = 0; l < w_.size(); ++l) {
      for (Scalar v : w_[l]) detail::put_f32(os, static_cast<float>(v));
      for (Scalar v : b_[l]) detail::put_f32(os, static_cast<float>(v));
    }
    if (!os) throw CheckpointError("checkpoint write failed");
  }

  static Mlp load(std::istream& is) {
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0) {
      throw CheckpointError("not a policy checkpoint");
    }
    const std::uint32_t version = detail::take_u32(is);
    if (version != detail::kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t ndims = detail::take_u32(is);
    if (ndims < 2 || ndims > 64) throw CheckpointError("corrupt checkpoint header");
    Mlp net;
    for (std::uint32_t i = 0; i < ndims; ++i) {
      const std::uint32_t d = detail::take_u32(is);
      if (d == 0 || d > (1u << 24)) throw CheckpointError("corrupt layer dimension");
      net.dims_.push_back(static_cast<int>(d));
    }
    for (std::size_t l = 0; l + 1 < net.dims_.size(); ++l) {
      const auto in = static_cast<std::size_t>(net.dims_[l]);
      const auto out = static_cast<std::size_t>(net.dims_[l + 1]);
      std::vector<Scalar> w(in * out);
      for (auto& v : w) v = static_cast<Scalar>(detail::take_f32(is));
      std::vector<Scalar> b(out);
      for (auto& v : b) v = static_cast<Scalar>(detail::take_f32(is));
      net.w_.push_back(std::move(w));
      net.b_.push_back(std::move(b));
    }
    return net;
  }

  void save_file(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot open '" + path + "' for writing");
    save(os);
  }

  static Mlp load_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open '" + path + "'");
    return load(is);
  }

  bool operator==(const Mlp&) const = default;

 private:
  std::vector<int> dims_;
  std::vector<std::vector<Scalar>> w_;
  std::vector<std::vector<Scalar>> b_;
};

/// Adam with double-precision moment estimates regardless of the network
/// scalar type.
template <typename Scalar = float>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(Mlp<Scalar>& net, const typename Mlp<Scalar>::Gradients& g) {
    if (m_.empty()) {
      for (const auto& w : net.weights()) m_.emplace_back(w.size(), 0.0);
      for (const auto& b : net.biases()) m_.emplace_back(b.size(), 0.0);
      v_ = m_;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    std::size_t slot = 0;
    auto update = [&](std::vector<Scalar>& params, const std::vector<Scalar>& grads) {
      auto& m = m_[slot];
      auto& v = v_[slot];
      ++slot;
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double gi = static_cast<double>(grads[i]);
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
        const double mh = m[i] / bc1;
        const double vh = v[i] / bc2;
        params[i] -= static_cast<Scalar>(lr_ * mh / (std::sqrt(vh) + eps_));
      }
    };
    for (std::size_t l = 0; l < net.weights().size(); ++l) update(net.weights()[l], g.w[l]);
    for (std::size_t l = 0; l < net.biases().size(); ++l) update(net.biases()[l], g.b[l]);
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace nestopt
