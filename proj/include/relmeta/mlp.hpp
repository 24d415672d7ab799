#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "relmeta/common.hpp"
#include "relmeta/linalg.hpp"
#include "relmeta/rng.hpp"

namespace relmeta {

enum class Activation { Tanh, Relu };

// Fully connected network: given widths {w0, w1, ..., wL}, layer l maps
// w_{l-1} -> w_l through an affine map; hidden layers apply the activation,
// the output layer is linear.
struct MlpSpec {
  std::vector<int> widths;
  Activation activation = Activation::Tanh;

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  int n_layers() const { return static_cast<int>(widths.size()) - 1; }

  // Parameters are a single flat vector: per layer, the weight matrix
  // (out x in, row-major) followed by the bias (out).
  std::size_t param_count() const {
    std::size_t n = 0;
    for (int l = 1; l < static_cast<int>(widths.size()); ++l)
      n += static_cast<std::size_t>(widths[l]) * (widths[l - 1] + 1);
    return n;
  }
  std::size_t weight_offset(int layer) const {  // layer in [1, L]
    std::size_t off = 0;
    for (int l = 1; l < layer; ++l)
      off += static_cast<std::size_t>(widths[l]) * (widths[l - 1] + 1);
    return off;
  }
  std::size_t bias_offset(int layer) const {
    return weight_offset(layer) + static_cast<std::size_t>(widths[layer]) * widths[layer - 1];
  }

  void validate() const {
    require(widths.size() >= 2, "MlpSpec: need at least input and output widths");
    for (int w : widths) require(w >= 1, "MlpSpec: all widths must be >= 1");
  }

  bool operator==(const MlpSpec&) const = default;
};

using ParamVector = std::vector<double>;

// Glorot-uniform weights, zero biases. Draws consume the stream in layer
// order, weights row-major.
inline ParamVector init_params(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  ParamVector p(spec.param_count(), 0.0);
  for (int l = 1; l <= spec.n_layers(); ++l) {
    int fan_in = spec.widths[l - 1], fan_out = spec.widths[l];
    double limit = std::sqrt(6.0 / (fan_in + fan_out));
    double* w = p.data() + spec.weight_offset(l);
    for (int i = 0; i < fan_out * fan_in; ++i) w[i] = rng.uniform(-limit, limit);
  }
  return p;
}

// Primal record of one batched forward pass; owns copies of everything the
// backward pass needs. Single use.
struct BatchTape {
  MlpSpec spec;
  ParamVector params;
  int rows = 0;
  std::vector<std::vector<double>> acts;  // acts[0] = input, acts[l] = layer l output
  bool used = false;
};

// Y[rows x out] = network(X[rows x in]); rows are independent instances.
// Pass a tape to record primals for a later backward pass.
inline void mlp_forward_batch(const MlpSpec& spec, const ParamVector& params,
                              const double* x, int rows, double* y,
                              BatchTape* tape = nullptr) {
  require(params.size() == spec.param_count(), "mlp_forward_batch: param size mismatch");
  require(rows >= 1, "mlp_forward_batch: rows must be >= 1");
  const int L = spec.n_layers();

  std::vector<std::vector<double>> acts(L + 1);
  acts[0].assign(x, x + static_cast<std::size_t>(rows) * spec.widths[0]);
  for (int l = 1; l <= L; ++l) {
    const int in = spec.widths[l - 1], out = spec.widths[l];
    acts[l].resize(static_cast<std::size_t>(rows) * out);
    matmul_nt(acts[l - 1].data(), params.data() + spec.weight_offset(l), acts[l].data(),
              rows, in, out);
    const double* b = params.data() + spec.bias_offset(l);
    double* a = acts[l].data();
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < out; ++j) a[static_cast<std::size_t>(r) * out + j] += b[j];
    if (l < L) {
      if (spec.activation == Activation::Tanh) {
        for (auto& v : acts[l]) v = std::tanh(v);
      } else {
        for (auto& v : acts[l]) v = v > 0.0 ? v : 0.0;
      }
    }
  }
  std::copy(acts[L].begin(), acts[L].end(), y);
  if (tape) {
    tape->spec = spec;
    tape->params = params;
    tape->rows = rows;
    tape->acts = std::move(acts);
    tape->used = false;
  }
}

// Reverse pass for one recorded forward. Accumulates parameter gradients
// into grad_params (+=) and, when dx is non-null, writes input gradients.
// Consumes the tape.
inline void mlp_backward_batch(BatchTape& tape, const double* dy,
                               ParamVector& grad_params, double* dx = nullptr) {
  require(!tape.used, "mlp_backward_batch: tape already consumed");
  tape.used = true;
  const MlpSpec& spec = tape.spec;
  require(grad_params.size() == spec.param_count(), "mlp_backward_batch: grad size mismatch");
  const int L = spec.n_layers();
  const int rows = tape.rows;

  std::vector<double> delta(dy, dy + static_cast<std::size_t>(rows) * spec.widths[L]);
  std::vector<double> prev;
  for (int l = L; l >= 1; --l) {
    const int in = spec.widths[l - 1], out = spec.widths[l];
    // dW += delta^T * a_{l-1}; db += column sums of delta
    matmul_tn_acc(delta.data(), tape.acts[l - 1].data(),
                  grad_params.data() + spec.weight_offset(l), rows, out, in);
    double* db = grad_params.data() + spec.bias_offset(l);
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < out; ++j) db[j] += delta[static_cast<std::size_t>(r) * out + j];
    if (l == 1 && !dx) break;
    prev.resize(static_cast<std::size_t>(rows) * in);
    matmul_nn(delta.data(), tape.params.data() + spec.weight_offset(l), prev.data(),
              rows, out, in);
    if (l > 1) {
      const double* a = tape.acts[l - 1].data();
      if (spec.activation == Activation::Tanh) {
        for (std::size_t i = 0; i < prev.size(); ++i) prev[i] *= 1.0 - a[i] * a[i];
      } else {
        for (std::size_t i = 0; i < prev.size(); ++i) prev[i] *= a[i] > 0.0 ? 1.0 : 0.0;
      }
    }
    delta.swap(prev);
  }
  if (dx) std::copy(delta.begin(), delta.end(), dx);
}

// Single-instance wrappers.

struct Tape {
  BatchTape batch;
};

inline std::pair<std::vector<double>, Tape> mlp_forward(const MlpSpec& spec,
                                                        const ParamVector& params,
                                                        std::span<const double> input) {
  require(static_cast<int>(input.size()) == spec.input_dim(),
          "mlp_forward: input length != first width");
  std::vector<double> out(spec.output_dim());
  Tape tape;
  mlp_forward_batch(spec, params, input.data(), 1, out.data(), &tape.batch);
  return {std::move(out), std::move(tape)};
}

struct BackwardResult {
  ParamVector grad_params;
  std::vector<double> grad_input;
};

inline BackwardResult backward(Tape& tape, std::span<const double> upstream) {
  require(static_cast<int>(upstream.size()) == tape.batch.spec.output_dim(),
          "backward: upstream length != output width");
  BackwardResult res;
  res.grad_params.assign(tape.batch.spec.param_count(), 0.0);
  res.grad_input.resize(tape.batch.spec.input_dim());
  mlp_backward_batch(tape.batch, upstream.data(), res.grad_params, res.grad_input.data());
  return res;
}

}  // namespace relmeta
