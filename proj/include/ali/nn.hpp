#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ali/autodiff.hpp"
#include "ali/rng.hpp"
#include "ali/tensor.hpp"

namespace ali {

// Fully connected net. Parameter count is fixed at construction; layer l maps
// widths[l] -> widths[l+1].
struct Mlp {
  std::vector<std::size_t> widths;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  Activation act = Activation::ELU;
  std::optional<Activation> output_act;

  std::size_t layer_count() const { return weights.size(); }
  std::size_t in_width() const { return widths.front(); }
  std::size_t out_width() const { return widths.back(); }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const Tensor& w : weights) n += w.size();
    for (const Tensor& b : biases) n += b.size();
    return n;
  }

  // W0, b0, W1, b1, ... - the canonical parameter order everywhere.
  std::vector<Tensor*> params() {
    std::vector<Tensor*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(&weights[l]);
      out.push_back(&biases[l]);
    }
    return out;
  }
  std::vector<const Tensor*> params() const {
    std::vector<const Tensor*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(&weights[l]);
      out.push_back(&biases[l]);
    }
    return out;
  }
};

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); biases start at zero.
inline Mlp make_mlp(std::vector<std::size_t> widths, Activation act, Rng& rng,
                    std::optional<Activation> output_act = std::nullopt) {
  if (widths.size() < 2) throw std::invalid_argument("make_mlp: need at least two widths");
  for (std::size_t w : widths)
    if (w == 0) throw std::invalid_argument("make_mlp: zero layer width");
  Mlp net;
  net.widths = std::move(widths);
  net.act = act;
  net.output_act = output_act;
  for (std::size_t l = 0; l + 1 < net.widths.size(); ++l) {
    const std::size_t fin = net.widths[l], fout = net.widths[l + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(fin + fout));
    Tensor w({fin, fout});
    for (double& v : w.data) v = rng.uniform(-a, a);
    net.weights.push_back(std::move(w));
    net.biases.push_back(Tensor({fout}));
  }
  return net;
}

// Net parameters staged onto a tape as leaves, so backward reaches them.
struct TapedMlp {
  const Mlp* net = nullptr;
  std::vector<Var> weights;
  std::vector<Var> biases;
};

inline TapedMlp stage(const Mlp& net, Tape& tape) {
  TapedMlp t;
  t.net = &net;
  for (const Tensor& w : net.weights) t.weights.push_back(tape.leaf(w));
  for (const Tensor& b : net.biases) t.biases.push_back(tape.leaf(b));
  return t;
}

inline Var forward(const TapedMlp& tn, Var input) {
  const Mlp& net = *tn.net;
  const Tensor& x = input.tape->value(input);
  if (x.cols() != net.in_width())
    throw std::invalid_argument("forward: input width " + std::to_string(x.cols()) +
                                " != net input width " + std::to_string(net.in_width()));
  Var h = input;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    h = add_rowvec(matmul(h, tn.weights[l]), tn.biases[l]);
    if (l + 1 < net.layer_count())
      h = activation(h, net.act);
    else if (net.output_act)
      h = activation(h, *net.output_act);
  }
  return h;
}

inline Tensor forward(const Mlp& net, const Tensor& input, Tape& tape) {
  TapedMlp tn = stage(net, tape);
  return tape.value(forward(tn, tape.leaf(input)));
}

// Tape-free forward for evaluation paths.
inline Tensor forward_plain(const Mlp& net, const Tensor& input) {
  if (input.cols() != net.in_width())
    throw std::invalid_argument("forward_plain: input width " + std::to_string(input.cols()) +
                                " != net input width " + std::to_string(net.in_width()));
  Tensor h = input;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    Tensor y({h.rows(), net.widths[l + 1]});
    matmul_nn(h, net.weights[l], y);
    const std::size_t n = y.rows(), m = y.cols();
    const Tensor& b = net.biases[l];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) y.data[i * m + j] += b[j];
    if (l + 1 < net.layer_count())
      for (double& v : y.data) v = act_apply(net.act, v);
    else if (net.output_act)
      for (double& v : y.data) v = act_apply(*net.output_act, v);
    h = std::move(y);
  }
  return h;
}

// Bias-corrected Adam. Moment buffers are allocated on first use and stay
// shaped like the parameters.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

inline void adam_step(AdamState& state, const std::vector<Tensor*>& params,
                      const std::vector<const Tensor*>& grads) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: params/grads count mismatch");
  for (std::size_t p = 0; p < grads.size(); ++p) {
    if (!grads[p]->same_shape(*params[p]))
      throw std::invalid_argument("adam_step: grad shape mismatch");
    if (!grads[p]->all_finite())
      throw std::runtime_error("adam_step: non-finite gradient, step rejected");
  }
  if (state.m.empty()) {
    for (Tensor* p : params) {
      state.m.push_back(Tensor(p->shape));
      state.v.push_back(Tensor(p->shape));
    }
  }
  state.step += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& th = *params[p];
    const Tensor& g = *grads[p];
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    for (std::size_t i = 0; i < th.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      th[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

inline void adam_step(AdamState& state, Mlp& net, const TapedMlp& staged, const Tape& tape) {
  std::vector<Tensor*> params = net.params();
  std::vector<const Tensor*> grads;
  for (std::size_t l = 0; l < staged.weights.size(); ++l) {
    grads.push_back(&tape.grad(staged.weights[l]));
    grads.push_back(&tape.grad(staged.biases[l]));
  }
  adam_step(state, params, grads);
}

}  // namespace ali
