#ifndef GONBA_NN_HPP
#define GONBA_NN_HPP

#include <cmath>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "gonba/common.hpp"

namespace gonba::nn {

/// Fully connected network: tanh on hidden layers, identity on the output.
/// Parameters live in one flat array, layer by layer, each layer as a
/// row-major (out x in) weight block followed by its bias.
class Mlp {
 public:
  /// Activations of every layer from one forward pass; index 0 is the input.
  struct Tape {
    std::vector<std::vector<double>> layers;
  };

  Mlp() = default;

  /// Glorot-uniform weights, zero biases. The last layer's weights are scaled
  /// by `output_scale`.
  Mlp(std::vector<std::size_t> sizes, Rng& rng, double output_scale = 1.0) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw UsageError("an MLP needs at least an input and an output layer");
    params_.resize(count_params(sizes_));
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const std::size_t in = sizes_[l], out = sizes_[l + 1];
      const double bound = std::sqrt(6.0 / static_cast<double>(in + out)) * (l + 2 == sizes_.size() ? output_scale : 1.0);
      for (std::size_t i = 0; i < in * out; ++i) params_[off + i] = rng.uniform(-bound, bound);
      off += in * out + out;
    }
  }

  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  const std::vector<std::size_t>& sizes() const { return sizes_; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }

  std::vector<double> forward(std::span<const double> x) const {
    Tape tape;
    return forward(x, tape);
  }

  std::vector<double> forward(std::span<const double> x, Tape& tape) const {
    if (x.size() != input_size()) throw UsageError("MLP input has the wrong size");
    tape.layers.resize(sizes_.size());
    tape.layers[0].assign(x.begin(), x.end());
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const std::size_t in = sizes_[l], out = sizes_[l + 1];
      const double* w = params_.data() + off;
      const double* b = w + in * out;
      const auto& a = tape.layers[l];
      auto& z = tape.layers[l + 1];
      z.assign(out, 0.0);
      const bool hidden = l + 2 < sizes_.size();
      for (std::size_t o = 0; o < out; ++o) {
        double s = b[o];
        const double* row = w + o * in;
        for (std::size_t i = 0; i < in; ++i) s += row[i] * a[i];
        z[o] = hidden ? std::tanh(s) : s;
      }
      off += in * out + out;
    }
    return tape.layers.back();
  }

  /// Adds dLoss/dparams to `grad` given dLoss/doutput for the pass in `tape`.
  void backward(const Tape& tape, std::span<const double> grad_out, std::span<double> grad) const {
    if (grad.size() != params_.size()) throw UsageError("gradient buffer has the wrong size");
    std::vector<double> delta(grad_out.begin(), grad_out.end());
    std::size_t off = params_.size();
    for (std::size_t l = sizes_.size() - 1; l > 0; --l) {
      const std::size_t in = sizes_[l - 1], out = sizes_[l];
      off -= in * out + out;
      const double* w = params_.data() + off;
      double* gw = grad.data() + off;
      double* gb = gw + in * out;
      const auto& a = tape.layers[l - 1];
      std::vector<double> prev(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta[o];
        gb[o] += d;
        if (d == 0.0) continue;
        const double* row = w + o * in;
        double* grow = gw + o * in;
        for (std::size_t i = 0; i < in; ++i) {
          grow[i] += d * a[i];
          prev[i] += d * row[i];
        }
      }
      if (l > 1) {
        // a = tanh(z)  =>  da/dz = 1 - a^2
        for (std::size_t i = 0; i < in; ++i) prev[i] *= 1.0 - a[i] * a[i];
      }
      delta = std::move(prev);
    }
  }

  nlohmann::json to_json() const { return {{"sizes", sizes_}, {"params", params_}}; }

  static Mlp from_json(const nlohmann::json& j) {
    Mlp m;
    m.sizes_ = j.at("sizes").get<std::vector<std::size_t>>();
    m.params_ = j.at("params").get<std::vector<double>>();
    if (m.sizes_.size() < 2 || m.params_.size() != count_params(m.sizes_))
      throw DataError("network parameter count does not match its layer sizes");
    if (!all_finite(m.params_)) throw DataError("network parameters are not finite");
    return m;
  }

  bool operator==(const Mlp&) const = default;

 private:
  static std::size_t count_params(const std::vector<std::size_t>& sizes) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += sizes[l] * sizes[l + 1] + sizes[l + 1];
    return n;
  }

  std::vector<std::size_t> sizes_;
  std::vector<double> params_;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
  }

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

inline void sgd_step(std::span<double> params, std::span<const double> grad, double lr) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
}

/// Scales `grad` so its Euclidean norm is at most `max_norm`.
inline void clip_norm(std::span<double> grad, double max_norm) {
  double ss = 0.0;
  for (double g : grad) ss += g * g;
  const double norm = std::sqrt(ss);
  if (norm > max_norm && norm > 0.0)
    for (double& g : grad) g *= max_norm / norm;
}

}  // namespace gonba::nn

#endif  // GONBA_NN_HPP
