#pragma once

#include <algorithm>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ali/activations.hpp"
#include "ali/tensor.hpp"

namespace ali {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
};

// Record of primitive operations in execution order. Backward replays the
// record once, in reverse, accumulating adjoints into per-node buffers.
class Tape {
 public:
  Var leaf(Tensor v) {
    nodes_.push_back(Node{std::move(v), Tensor{}, {}, nullptr});
    return Var{this, nodes_.size() - 1};
  }

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse pass from a scalar loss node.
  void backward(Var loss) {
    if (!value(loss).is_scalar())
      throw std::invalid_argument("backward: loss must be a scalar node");
    backward_seeded(loss, Tensor::scalar(1.0));
  }

  // Reverse pass with an explicit output adjoint; used for Jacobian columns.
  void backward_seeded(Var out, const Tensor& seed) {
    if (!value(out).same_shape(seed))
      throw std::invalid_argument("backward_seeded: seed shape mismatch");
    for (std::size_t i = 0; i <= out.id; ++i) {
      Node& n = nodes_[i];
      if (n.grad.shape != n.value.shape)
        n.grad = Tensor(n.value.shape);
      else
        std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
    }
    nodes_[out.id].grad = seed;
    for (std::size_t i = out.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward) n.backward(*this, i);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    std::function<void(Tape&, std::size_t)> backward;
  };
  std::vector<Node> nodes_;

  Var record(Tensor value, std::vector<std::size_t> parents,
             std::function<void(Tape&, std::size_t)> bwd) {
    nodes_.push_back(Node{std::move(value), Tensor{}, std::move(parents), std::move(bwd)});
    return Var{this, nodes_.size() - 1};
  }

  Tensor& grad_mut(std::size_t id) { return nodes_[id].grad; }
  const Tensor& val(std::size_t id) const { return nodes_[id].value; }
  const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id].parents; }

  friend Var matmul(Var, Var);
  friend Var add(Var, Var);
  friend Var sub(Var, Var);
  friend Var mul(Var, Var);
  friend Var add_rowvec(Var, Var);
  friend Var mul_colvec(Var, Var);
  friend Var scale(Var, double);
  friend Var add_const(Var, double);
  friend Var neg_add_const(Var, double);
  friend Var activation(Var, Activation);
  friend Var log_of(Var);
  friend Var clamp(Var, double, double);
  friend Var concat_cols(const std::vector<Var>&);
  friend Var sum_all(Var);
};

inline void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("vars live on different tapes");
}

inline Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.cols() != bv.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree " + av.shape_str() +
                                " x " + bv.shape_str());
  Tensor out({av.rows(), bv.cols()});
  matmul_nn(av, bv, out);
  return t.record(std::move(out), {a.id, b.id}, [](Tape& tp, std::size_t id) {
    const auto& ps = tp.parents(id);
    const Tensor& g = tp.grad_mut(id);
    const Tensor& av2 = tp.val(ps[0]);
    const Tensor& bv2 = tp.val(ps[1]);
    Tensor da(av2.shape), db(bv2.shape);
    matmul_nt(g, bv2, da);
    matmul_tn(av2, g, db);
    Tensor& ga = tp.grad_mut(ps[0]);
    Tensor& gb = tp.grad_mut(ps[1]);
    for (std::size_t i = 0; i < da.size(); ++i) ga[i] += da[i];
    for (std::size_t i = 0; i < db.size(); ++i) gb[i] += db[i];
  });
}

inline Var add(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (!av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return t.record(std::move(out), {a.id, b.id}, [](Tape& tp, std::size_t id) {
    const auto& ps = tp.parents(id);
    const Tensor& g = tp.grad_mut(id);
    Tensor& ga = tp.grad_mut(ps[0]);
    Tensor& gb = tp.grad_mut(ps[1]);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
}

inline Var sub(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (!av.same_shape(bv)) throw std::invalid_argument("sub: shape mismatch");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return t.record(std::move(out), {a.id, b.id}, [](Tape& tp, std::size_t id) {
    const auto& ps = tp.parents(id);
    const Tensor& g = tp.grad_mut(id);
    Tensor& ga = tp.grad_mut(ps[0]);
    Tensor& gb = tp.grad_mut(ps[1]);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  });
}

inline Var mul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (!av.same_shape(bv)) throw std::invalid_argument("mul: shape mismatch");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return t.record(std::move(out), {a.id, b.id}, [](Tape& tp, std::size_t id) {
    const auto& ps = tp.parents(id);
    const Tensor& g = tp.grad_mut(id);
    const Tensor& av2 = tp.val(ps[0]);
    const Tensor& bv2 = tp.val(ps[1]);
    Tensor& ga = tp.grad_mut(ps[0]);
    Tensor& gb = tp.grad_mut(ps[1]);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * bv2[i];
      gb[i] += g[i] * av2[i];
    }
  });
}

// x + b with b broadcast over rows; b is a length-m vector (or 1 x m).
inline Var add_rowvec(Var x, Var b) {
  check_same_tape(x, b);
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  const Tensor& bv = t.value(b);
  if (bv.size() != xv.cols()) throw std::invalid_argument("add_rowvec: width mismatch");
  Tensor out = xv;
  const std::size_t n = xv.rows(), m = xv.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.data[i * m + j] += bv[j];
  return t.record(std::move(out), {x.id, b.id}, [](Tape& tp, std::size_t id) {
    const auto& ps = tp.parents(id);
    const Tensor& g = tp.grad_mut(id);
    Tensor& gx = tp.grad_mut(ps[0]);
    Tensor& gb = tp.grad_mut(ps[1]);
    const std::size_t n = g.rows(), m = g.cols();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        gx.data[i * m + j] += g.data[i * m + j];
        gb[j] += g.data[i * m + j];
      }
  });
}

// x * c with c an n x 1 column broadcast across columns.
inline Var mul_colvec(Var x, Var c) {
  check_same_tape(x, c);
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  const Tensor& cv = t.value(c);
  if (cv.size() != xv.rows()) throw std::invalid_argument("mul_colvec: height mismatch");
  Tensor out = xv;
  const std::size_t n = xv.rows(), m = xv.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.data[i * m + j] *= cv[i];
  return t.record(std::move(out), {x.id, c.id}, [](Tape& tp, std::size_t id) {
    const auto& ps = tp.parents(id);
    const Tensor& g = tp.grad_mut(id);
    const Tensor& xv2 = tp.val(ps[0]);
    const Tensor& cv2 = tp.val(ps[1]);
    Tensor& gx = tp.grad_mut(ps[0]);
    Tensor& gc = tp.grad_mut(ps[1]);
    const std::size_t n = g.rows(), m = g.cols();
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        gx.data[i * m + j] += g.data[i * m + j] * cv2[i];
        acc += g.data[i * m + j] * xv2.data[i * m + j];
      }
      gc[i] += acc;
    }
  });
}

inline Var scale(Var a, double s) {
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  for (double& v : out.data) v *= s;
  return t.record(std::move(out), {a.id}, [s](Tape& tp, std::size_t id) {
    const Tensor& g = tp.grad_mut(id);
    Tensor& ga = tp.grad_mut(tp.parents(id)[0]);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

inline Var add_const(Var a, double c) {
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  for (double& v : out.data) v += c;
  return t.record(std::move(out), {a.id}, [](Tape& tp, std::size_t id) {
    const Tensor& g = tp.grad_mut(id);
    Tensor& ga = tp.grad_mut(tp.parents(id)[0]);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

// c - a, elementwise.
inline Var neg_add_const(Var a, double c) {
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  for (double& v : out.data) v = c - v;
  return t.record(std::move(out), {a.id}, [](Tape& tp, std::size_t id) {
    const Tensor& g = tp.grad_mut(id);
    Tensor& ga = tp.grad_mut(tp.parents(id)[0]);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
  });
}

inline Var activation(Var a, Activation act) {
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  for (double& v : out.data) v = act_apply(act, v);
  return t.record(std::move(out), {a.id}, [act](Tape& tp, std::size_t id) {
    const Tensor& g = tp.grad_mut(id);
    const Tensor& y = tp.val(id);
    const Tensor& x = tp.val(tp.parents(id)[0]);
    Tensor& ga = tp.grad_mut(tp.parents(id)[0]);
    for (std::size_t i = 0; i < g.size(); ++i)
      ga[i] += g[i] * act_deriv(act, x[i], y[i]);
  });
}

inline Var log_of(Var a) {
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  for (double& v : out.data) v = std::log(v);
  return t.record(std::move(out), {a.id}, [](Tape& tp, std::size_t id) {
    const Tensor& g = tp.grad_mut(id);
    const Tensor& x = tp.val(tp.parents(id)[0]);
    Tensor& ga = tp.grad_mut(tp.parents(id)[0]);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
  });
}

// Elementwise clamp; gradient is pass-through strictly inside [lo, hi].
inline Var clamp(Var a, double lo, double hi) {
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  for (double& v : out.data) v = std::min(hi, std::max(lo, v));
  return t.record(std::move(out), {a.id}, [lo, hi](Tape& tp, std::size_t id) {
    const Tensor& g = tp.grad_mut(id);
    const Tensor& x = tp.val(tp.parents(id)[0]);
    Tensor& ga = tp.grad_mut(tp.parents(id)[0]);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > lo && x[i] < hi) ga[i] += g[i];
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  Tape& t = *parts[0].tape;
  const std::size_t n = t.value(parts[0]).rows();
  std::size_t m = 0;
  std::vector<std::size_t> widths, ids;
  for (Var p : parts) {
    check_same_tape(parts[0], p);
    const Tensor& v = t.value(p);
    if (v.rows() != n) throw std::invalid_argument("concat_cols: row count mismatch");
    widths.push_back(v.cols());
    ids.push_back(p.id);
    m += v.cols();
  }
  Tensor out({n, m});
  std::size_t off = 0;
  for (std::size_t p = 0; p < ids.size(); ++p) {
    const Tensor& v = t.value(Var{&t, ids[p]});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < widths[p]; ++j)
        out.data[i * m + off + j] = v.data[i * widths[p] + j];
    off += widths[p];
  }
  return t.record(std::move(out), ids, [widths](Tape& tp, std::size_t id) {
    const Tensor& g = tp.grad_mut(id);
    const auto& ps = tp.parents(id);
    const std::size_t n = g.rows(), m = g.cols();
    std::size_t off = 0;
    for (std::size_t p = 0; p < ps.size(); ++p) {
      Tensor& gp = tp.grad_mut(ps[p]);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < widths[p]; ++j)
          gp.data[i * widths[p] + j] += g.data[i * m + off + j];
      off += widths[p];
    }
  });
}

inline Var sum_all(Var a) {
  Tape& t = *a.tape;
  double s = 0.0;
  for (double v : t.value(a).data) s += v;
  return t.record(Tensor::scalar(s), {a.id}, [](Tape& tp, std::size_t id) {
    const double g = tp.grad_mut(id)[0];
    Tensor& ga = tp.grad_mut(tp.parents(id)[0]);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

inline Var mean_all(Var a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.tape->value(a).size()));
}

// Mean over rows of the squared row norms: (1/n) sum_i ||x_i||^2.
inline Var mean_row_sqnorm(Var a) {
  const std::size_t n = a.tape->value(a).rows();
  return scale(sum_all(mul(a, a)), 1.0 / static_cast<double>(n));
}

}  // namespace ali
