#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "sei/common.hpp"
#include "sei/tensor.hpp"

namespace sei {

// Reverse-mode tape. Nodes are appended in topological order by
// construction; backward walks the tape once in reverse.
class Graph {
 public:
  using ValueId = std::size_t;
  using BackwardFn = std::function<void(Graph&, ValueId)>;

  ValueId leaf(Tensor t, bool requires_grad = false) {
    slots_.push_back(Slot{std::move(t), Tensor{}, requires_grad, {}, nullptr});
    return slots_.size() - 1;
  }

  ValueId node(Tensor value, std::vector<ValueId> parents, BackwardFn backward) {
    bool rg = false;
    for (ValueId p : parents) rg = rg || slots_[p].requires_grad;
    slots_.push_back(Slot{std::move(value), Tensor{}, rg, std::move(parents), rg ? std::move(backward) : nullptr});
    return slots_.size() - 1;
  }

  const Tensor& value(ValueId id) const { return slots_[id].value; }
  bool requires_grad(ValueId id) const { return slots_[id].requires_grad; }

  // Gradient of the last backward() root w.r.t. this value. Empty tensor if
  // the value does not participate.
  const Tensor& grad(ValueId id) const { return slots_[id].grad; }

  // Allocate-on-demand accumulation buffer, zero initialized.
  Tensor& grad_buffer(ValueId id) {
    Slot& s = slots_[id];
    if (s.grad.data.empty()) s.grad = Tensor(s.value.shape);
    return s.grad;
  }

  void backward(ValueId root) {
    if (slots_[root].value.size() != 1) throw config_error("backward root must be scalar, got " + shape_str(slots_[root].value.shape));
    for (Slot& s : slots_) s.grad = Tensor{};
    grad_buffer(root).data[0] = 1.0;
    for (std::size_t i = root + 1; i-- > 0;) {
      Slot& s = slots_[i];
      if (s.backward && !s.grad.data.empty()) s.backward(*this, i);
    }
  }

  std::size_t size() const { return slots_.size(); }

 private:
  struct Slot {
    Tensor value;
    Tensor grad;
    bool requires_grad;
    std::vector<ValueId> parents;
    BackwardFn backward;
  };
  std::vector<Slot> slots_;
};

namespace ops {

using ValueId = Graph::ValueId;

inline ValueId add(Graph& g, ValueId a, ValueId b) {
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  if (!ta.same_shape(tb)) throw config_error("add: shape " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
  return g.node(std::move(out), {a, b}, [a, b](Graph& g, ValueId self) {
    const Tensor& go = g.grad(self);
    for (ValueId p : {a, b}) {
      if (!g.requires_grad(p)) continue;
      Tensor& gp = g.grad_buffer(p);
      for (std::size_t i = 0; i < go.data.size(); ++i) gp.data[i] += go.data[i];
    }
  });
}

inline ValueId scale(Graph& g, ValueId a, double c) {
  Tensor out = g.value(a);
  for (double& v : out.data) v *= c;
  return g.node(std::move(out), {a}, [a, c](Graph& g, ValueId self) {
    const Tensor& go = g.grad(self);
    if (!g.requires_grad(a)) return;
    Tensor& ga = g.grad_buffer(a);
    for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += c * go.data[i];
  });
}

inline ValueId mul(Graph& g, ValueId a, ValueId b) {
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  if (!ta.same_shape(tb)) throw config_error("mul: shape " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
  return g.node(std::move(out), {a, b}, [a, b](Graph& g, ValueId self) {
    const Tensor& go = g.grad(self);
    const Tensor& ta = g.value(a);
    const Tensor& tb = g.value(b);
    if (g.requires_grad(a)) {
      Tensor& ga = g.grad_buffer(a);
      for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i] * tb.data[i];
    }
    if (g.requires_grad(b)) {
      Tensor& gb = g.grad_buffer(b);
      for (std::size_t i = 0; i < go.data.size(); ++i) gb.data[i] += go.data[i] * ta.data[i];
    }
  });
}

// {n,k} x {k,m} -> {n,m}
inline ValueId matmul(Graph& g, ValueId a, ValueId b) {
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0))
    throw config_error("matmul: shape " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  int n = ta.dim(0), k = ta.dim(1), m = tb.dim(1);
  Tensor out({n, m});
  for (int i = 0; i < n; ++i)
    for (int kk = 0; kk < k; ++kk) {
      double av = ta.data[static_cast<std::size_t>(i) * k + kk];
      const double* bp = &tb.data[static_cast<std::size_t>(kk) * m];
      double* op = &out.data[static_cast<std::size_t>(i) * m];
      for (int j = 0; j < m; ++j) op[j] += av * bp[j];
    }
  return g.node(std::move(out), {a, b}, [a, b, n, k, m](Graph& g, ValueId self) {
    const Tensor& go = g.grad(self);
    const Tensor& ta = g.value(a);
    const Tensor& tb = g.value(b);
    if (g.requires_grad(a)) {
      Tensor& ga = g.grad_buffer(a);  // dA = dY * B^T
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          double gv = go.data[static_cast<std::size_t>(i) * m + j];
          const double* bp = &tb.data[j];
          double* gp = &ga.data[static_cast<std::size_t>(i) * k];
          for (int kk = 0; kk < k; ++kk) gp[kk] += gv * bp[static_cast<std::size_t>(kk) * m];
        }
    }
    if (g.requires_grad(b)) {
      Tensor& gb = g.grad_buffer(b);  // dB = A^T * dY
      for (int i = 0; i < n; ++i)
        for (int kk = 0; kk < k; ++kk) {
          double av = ta.data[static_cast<std::size_t>(i) * k + kk];
          const double* gp = &go.data[static_cast<std::size_t>(i) * m];
          double* bp = &gb.data[static_cast<std::size_t>(kk) * m];
          for (int j = 0; j < m; ++j) bp[j] += av * gp[j];
        }
    }
  });
}

// {n,k} x {m,k}^T -> {n,m}
inline ValueId matmul_nt(Graph& g, ValueId a, ValueId b) {
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(1))
    throw config_error("matmul_nt: shape " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  int n = ta.dim(0), k = ta.dim(1), m = tb.dim(0);
  Tensor out({n, m});
  for (int i = 0; i < n; ++i) {
    const double* ap = &ta.data[static_cast<std::size_t>(i) * k];
    double* op = &out.data[static_cast<std::size_t>(i) * m];
    for (int j = 0; j < m; ++j) {
      const double* bp = &tb.data[static_cast<std::size_t>(j) * k];
      double acc = 0;
      for (int kk = 0; kk < k; ++kk) acc += ap[kk] * bp[kk];
      op[j] = acc;
    }
  }
  return g.node(std::move(out), {a, b}, [a, b, n, k, m](Graph& g, ValueId self) {
    const Tensor& go = g.grad(self);
    const Tensor& ta = g.value(a);
    const Tensor& tb = g.value(b);
    if (g.requires_grad(a)) {
      Tensor& ga = g.grad_buffer(a);  // dA = dY * B
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          double gv = go.data[static_cast<std::size_t>(i) * m + j];
          const double* bp = &tb.data[static_cast<std::size_t>(j) * k];
          double* gp = &ga.data[static_cast<std::size_t>(i) * k];
          for (int kk = 0; kk < k; ++kk) gp[kk] += gv * bp[kk];
        }
    }
    if (g.requires_grad(b)) {
      Tensor& gb = g.grad_buffer(b);  // dB = dY^T * A
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          double gv = go.data[static_cast<std::size_t>(i) * m + j];
          const double* ap = &ta.data[static_cast<std::size_t>(i) * k];
          double* bp = &gb.data[static_cast<std::size_t>(j) * k];
          for (int kk = 0; kk < k; ++kk) bp[kk] += gv * ap[kk];
        }
    }
  });
}

// Affine layer: x {n,in}, w {out,in}, bias {out} -> {n,out}.
inline ValueId dense(Graph& g, ValueId x, ValueId w, ValueId bias) {
  const Tensor& tx = g.value(x);
  const Tensor& tw = g.value(w);
  const Tensor& tb = g.value(bias);
  if (tx.rank() != 2 || tw.rank() != 2 || tx.dim(1) != tw.dim(1) || tb.rank() != 1 || tb.dim(0) != tw.dim(0))
    throw config_error("dense: input " + shape_str(tx.shape) + " incompatible with weights " + shape_str(tw.shape) +
                       ", bias " + shape_str(tb.shape));
  int n = tx.dim(0), in = tx.dim(1), out_dim = tw.dim(0);
  Tensor out({n, out_dim});
  for (int i = 0; i < n; ++i) {
    const double* xp = &tx.data[static_cast<std::size_t>(i) * in];
    double* op = &out.data[static_cast<std::size_t>(i) * out_dim];
    for (int o = 0; o < out_dim; ++o) {
      const double* wp = &tw.data[static_cast<std::size_t>(o) * in];
      double acc = tb.data[o];
      for (int k = 0; k < in; ++k) acc += xp[k] * wp[k];
      op[o] = acc;
    }
  }
  return g.node(std::move(out), {x, w, bias}, [x, w, bias, n, in, out_dim](Graph& g, ValueId self) {
    const Tensor& go = g.grad(self);
    const Tensor& tx = g.value(x);
    const Tensor& tw = g.value(w);
    if (g.requires_grad(x)) {
      Tensor& gx = g.grad_buffer(x);
      for (int i = 0; i < n; ++i)
        for (int o = 0; o < out_dim; ++o) {
          double gv = go.data[static_cast<std::size_t>(i) * out_dim + o];
          const double* wp = &tw.data[static_cast<std::size_t>(o) * in];
          double* gp = &gx.data[static_cast<std::size_t>(i) * in];
          for (int k = 0; k < in; ++k) gp[k] += gv * wp[k];
        }
    }
    if (g.requires_grad(w)) {
      Tensor& gw = g.grad_buffer(w);
      for (int i = 0; i < n; ++i)
        for (int o = 0; o < out_dim; ++o) {
          double gv = go.data[static_cast<std::size_t>(i) * out_dim + o];
          const double* xp = &tx.data[static_cast<std::size_t>(i) * in];
          double* wp = &gw.data[static_cast<std::size_t>(o) * in];
          for (int k = 0; k < in; ++k) wp[k] += gv * xp[k];
        }
    }
    if (g.requires_grad(bias)) {
      Tensor& gb = g.grad_buffer(bias);
      for (int i = 0; i < n; ++i)
        for (int o = 0; o < out_dim; ++o) gb.data[o] += go.data[static_cast<std::size_t>(i) * out_dim + o];
    }
  });
}

// Valid-mode cross-correlation: x {n,ci,t}, kernels {co,ci,w}, bias {co}.
inline ValueId conv1d(Graph& g, ValueId x, ValueId kernels, ValueId bias, int stride = 1) {
  const Tensor& tx = g.value(x);
  const Tensor& tk = g.value(kernels);
  const Tensor& tb = g.value(bias);
  if (stride < 1) throw config_error("conv1d: stride must be >= 1");
  if (tx.rank() != 3 || tk.rank() != 3 || tx.dim(1) != tk.dim(1) || tk.dim(2) > tx.dim(2) || tb.rank() != 1 ||
      tb.dim(0) != tk.dim(0))
    throw config_error("conv1d: input " + shape_str(tx.shape) + " incompatible with kernels " + shape_str(tk.shape) +
                       ", bias " + shape_str(tb.shape));
  int n = tx.dim(0), ci = tx.dim(1), t_in = tx.dim(2);
  int co = tk.dim(0), w = tk.dim(2);
  int t_out = (t_in - w) / stride + 1;
  Tensor out({n, co, t_out});
  for (int b = 0; b < n; ++b)
    for (int o = 0; o < co; ++o) {
      double* op = &out.data[(static_cast<std::size_t>(b) * co + o) * t_out];
      for (int t = 0; t < t_out; ++t) op[t] = tb.data[o];
      for (int c = 0; c < ci; ++c) {
        const double* xp = &tx.data[(static_cast<std::size_t>(b) * ci + c) * t_in];
        const double* kp = &tk.data[(static_cast<std::size_t>(o) * ci + c) * w];
        for (int k = 0; k < w; ++k) {
          double kv = kp[k];
          if (stride == 1) {
            const double* xk = xp + k;
            for (int t = 0; t < t_out; ++t) op[t] += kv * xk[t];
          } else {
            for (int t = 0; t < t_out; ++t) op[t] += kv * xp[t * stride + k];
          }
        }
      }
    }
  return g.node(std::move(out), {x, kernels, bias},
                [x, kernels, bias, n, ci, t_in, co, w, t_out, stride](Graph& g, ValueId self) {
                  const Tensor& go = g.grad(self);
                  const Tensor& tx = g.value(x);
                  const Tensor& tk = g.value(kernels);
                  if (g.requires_grad(x)) {
                    Tensor& gx = g.grad_buffer(x);
                    for (int b = 0; b < n; ++b)
                      for (int o = 0; o < co; ++o) {
                        const double* __restrict__ gp = &go.data[(static_cast<std::size_t>(b) * co + o) * t_out];
                        for (int c = 0; c < ci; ++c) {
                          double* __restrict__ xp = &gx.data[(static_cast<std::size_t>(b) * ci + c) * t_in];
                          const double* kp = &tk.data[(static_cast<std::size_t>(o) * ci + c) * w];
                          for (int k = 0; k < w; ++k) {
                            double kv = kp[k];
                            if (stride == 1) {
                              double* __restrict__ xk = xp + k;
                              for (int t = 0; t < t_out; ++t) xk[t] += kv * gp[t];
                            } else {
                              for (int t = 0; t < t_out; ++t) xp[t * stride + k] += kv * gp[t];
                            }
                          }
                        }
                      }
                  }
                  if (g.requires_grad(kernels)) {
                    Tensor& gk = g.grad_buffer(kernels);
                    for (int o = 0; o < co; ++o)
                      for (int c = 0; c < ci; ++c) {
                        double* kp = &gk.data[(static_cast<std::size_t>(o) * ci + c) * w];
                        for (int b = 0; b < n; ++b) {
                          const double* __restrict__ gp = &go.data[(static_cast<std::size_t>(b) * co + o) * t_out];
                          const double* __restrict__ xp = &tx.data[(static_cast<std::size_t>(b) * ci + c) * t_in];
                          for (int k = 0; k < w; ++k) {
                            double acc = 0;
                            if (stride == 1) {
                              const double* __restrict__ xk = xp + k;
                              for (int t = 0; t < t_out; ++t) acc += xk[t] * gp[t];
                            } else {
                              for (int t = 0; t < t_out; ++t) acc += xp[t * stride + k] * gp[t];
                            }
                            kp[k] += acc;
                          }
                        }
                      }
                  }
                  if (g.requires_grad(bias)) {
                    Tensor& gb = g.grad_buffer(bias);
                    for (int b = 0; b < n; ++b)
                      for (int o = 0; o < co; ++o) {
                        const double* gp = &go.data[(static_cast<std::size_t>(b) * co + o) * t_out];
                        double acc = 0;
                        for (int t = 0; t < t_out; ++t) acc += gp[t];
                        gb.data[o] += acc;
                      }
                  }
                });
}

inline ValueId relu(Graph& g, ValueId x) {
  Tensor out = g.value(x);
  for (double& v : out.data) v = v > 0 ? v : 0.0;
  return g.node(std::move(out), {x}, [x](Graph& g, ValueId self) {
    if (!g.requires_grad(x)) return;
    const Tensor& go = g.grad(self);
    const Tensor& tx = g.value(x);
    Tensor& gx = g.grad_buffer(x);
    for (std::size_t i = 0; i < go.data.size(); ++i)
      if (tx.data[i] > 0) gx.data[i] += go.data[i];
  });
}

inline ValueId maxpool1d(Graph& g, ValueId x, int window = 2, int stride = 2) {
  const Tensor& tx = g.value(x);
  if (tx.rank() != 3) throw config_error("maxpool1d: expected rank-3 input, got " + shape_str(tx.shape));
  if (window < 1 || stride < 1) throw config_error("maxpool1d: window and stride must be >= 1");
  int n = tx.dim(0), c = tx.dim(1), t_in = tx.dim(2);
  if (t_in < window)
    throw config_error("maxpool1d: window " + std::to_string(window) + " exceeds length in " + shape_str(tx.shape));
  int t_out = (t_in - window) / stride + 1;
  Tensor out({n, c, t_out});
  auto argmax = std::make_shared<std::vector<int>>(out.size());
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const double* xp = &tx.data[(static_cast<std::size_t>(b) * c + ch) * t_in];
      std::size_t base = (static_cast<std::size_t>(b) * c + ch) * t_out;
      for (int t = 0; t < t_out; ++t) {
        int best = t * stride;
        for (int k = 1; k < window; ++k)
          if (xp[t * stride + k] > xp[best]) best = t * stride + k;
        out.data[base + t] = xp[best];
        (*argmax)[base + t] = best;
      }
    }
  return g.node(std::move(out), {x}, [x, argmax, n, c, t_in, t_out](Graph& g, ValueId self) {
    if (!g.requires_grad(x)) return;
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad_buffer(x);
    for (int b = 0; b < n; ++b)
      for (int ch = 0; ch < c; ++ch) {
        std::size_t base = (static_cast<std::size_t>(b) * c + ch) * t_out;
        double* xp = &gx.data[(static_cast<std::size_t>(b) * c + ch) * t_in];
        for (int t = 0; t < t_out; ++t) xp[(*argmax)[base + t]] += go.data[base + t];
      }
  });
}

struct BatchNormContext {
  Tensor* running_mean = nullptr;
  Tensor* running_var = nullptr;
  bool use_batch_stats = true;   // false: normalize with running stats
  bool update_running = true;    // only honored when use_batch_stats
  double momentum = 0.1;
  double eps = 1e-5;
};

// Per-channel normalization of x {n,c,t}; gamma/beta {c}. Variance is the
// biased estimate over the n*t entries of each channel.
inline ValueId batchnorm1d(Graph& g, ValueId x, ValueId gamma, ValueId beta, const BatchNormContext& ctx) {
  const Tensor& tx = g.value(x);
  const Tensor& tg = g.value(gamma);
  const Tensor& tb = g.value(beta);
  if (tx.rank() != 3 || tg.rank() != 1 || tg.dim(0) != tx.dim(1) || !tg.same_shape(tb))
    throw config_error("batchnorm1d: input " + shape_str(tx.shape) + " incompatible with gamma " + shape_str(tg.shape) +
                       ", beta " + shape_str(tb.shape));
  int n = tx.dim(0), c = tx.dim(1), t = tx.dim(2);
  std::size_t per_channel = static_cast<std::size_t>(n) * t;
  auto mean = std::make_shared<std::vector<double>>(c);
  auto inv_std = std::make_shared<std::vector<double>>(c);
  auto xhat = std::make_shared<std::vector<double>>(tx.size());
  bool batch_stats = ctx.use_batch_stats;
  for (int ch = 0; ch < c; ++ch) {
    double mu, var;
    if (batch_stats) {
      double s = 0, sq = 0;
      for (int b = 0; b < n; ++b) {
        const double* xp = &tx.data[(static_cast<std::size_t>(b) * c + ch) * t];
        for (int i = 0; i < t; ++i) {
          s += xp[i];
          sq += xp[i] * xp[i];
        }
      }
      mu = s / static_cast<double>(per_channel);
      var = std::max(0.0, sq / static_cast<double>(per_channel) - mu * mu);
      if (ctx.update_running && ctx.running_mean && ctx.running_var) {
        ctx.running_mean->data[ch] = (1 - ctx.momentum) * ctx.running_mean->data[ch] + ctx.momentum * mu;
        ctx.running_var->data[ch] = (1 - ctx.momentum) * ctx.running_var->data[ch] + ctx.momentum * var;
      }
    } else {
      if (!ctx.running_mean || !ctx.running_var) throw config_error("batchnorm1d: eval mode requires running stats");
      mu = ctx.running_mean->data[ch];
      var = ctx.running_var->data[ch];
    }
    (*mean)[ch] = mu;
    (*inv_std)[ch] = 1.0 / std::sqrt(var + ctx.eps);
  }
  Tensor out({n, c, t});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const double* xp = &tx.data[(static_cast<std::size_t>(b) * c + ch) * t];
      double* hp = &(*xhat)[(static_cast<std::size_t>(b) * c + ch) * t];
      double* op = &out.data[(static_cast<std::size_t>(b) * c + ch) * t];
      double mu = (*mean)[ch], is = (*inv_std)[ch], gv = tg.data[ch], bv = tb.data[ch];
      for (int i = 0; i < t; ++i) {
        hp[i] = (xp[i] - mu) * is;
        op[i] = gv * hp[i] + bv;
      }
    }
  return g.node(std::move(out), {x, gamma, beta},
                [x, gamma, beta, n, c, t, per_channel, inv_std, xhat, batch_stats](Graph& g, ValueId self) {
                  const Tensor& go = g.grad(self);
                  const Tensor& tg = g.value(gamma);
                  if (g.requires_grad(gamma)) {
                    Tensor& gg = g.grad_buffer(gamma);
                    for (int b = 0; b < n; ++b)
                      for (int ch = 0; ch < c; ++ch) {
                        const double* gp = &go.data[(static_cast<std::size_t>(b) * c + ch) * t];
                        const double* hp = &(*xhat)[(static_cast<std::size_t>(b) * c + ch) * t];
                        double acc = 0;
                        for (int i = 0; i < t; ++i) acc += gp[i] * hp[i];
                        gg.data[ch] += acc;
                      }
                  }
                  if (g.requires_grad(beta)) {
                    Tensor& gb = g.grad_buffer(beta);
                    for (int b = 0; b < n; ++b)
                      for (int ch = 0; ch < c; ++ch) {
                        const double* gp = &go.data[(static_cast<std::size_t>(b) * c + ch) * t];
                        double acc = 0;
                        for (int i = 0; i < t; ++i) acc += gp[i];
                        gb.data[ch] += acc;
                      }
                  }
                  if (!g.requires_grad(x)) return;
                  Tensor& gx = g.grad_buffer(x);
                  if (batch_stats) {
                    // dx = gamma*inv_std*(dy - mean(dy) - xhat*mean(dy*xhat))
                    for (int ch = 0; ch < c; ++ch) {
                      double sum_g = 0, sum_gh = 0;
                      for (int b = 0; b < n; ++b) {
                        const double* gp = &go.data[(static_cast<std::size_t>(b) * c + ch) * t];
                        const double* hp = &(*xhat)[(static_cast<std::size_t>(b) * c + ch) * t];
                        for (int i = 0; i < t; ++i) {
                          sum_g += gp[i];
                          sum_gh += gp[i] * hp[i];
                        }
                      }
                      double m_g = sum_g / static_cast<double>(per_channel);
                      double m_gh = sum_gh / static_cast<double>(per_channel);
                      double scale = tg.data[ch] * (*inv_std)[ch];
                      for (int b = 0; b < n; ++b) {
                        const double* gp = &go.data[(static_cast<std::size_t>(b) * c + ch) * t];
                        const double* hp = &(*xhat)[(static_cast<std::size_t>(b) * c + ch) * t];
                        double* xp = &gx.data[(static_cast<std::size_t>(b) * c + ch) * t];
                        for (int i = 0; i < t; ++i) xp[i] += scale * (gp[i] - m_g - hp[i] * m_gh);
                      }
                    }
                  } else {
                    for (int b = 0; b < n; ++b)
                      for (int ch = 0; ch < c; ++ch) {
                        double scale = tg.data[ch] * (*inv_std)[ch];
                        const double* gp = &go.data[(static_cast<std::size_t>(b) * c + ch) * t];
                        double* xp = &gx.data[(static_cast<std::size_t>(b) * c + ch) * t];
                        for (int i = 0; i < t; ++i) xp[i] += scale * gp[i];
                      }
                  }
                });
}

// Inverted dropout. Inactive (eval) mode is the identity.
inline ValueId dropout(Graph& g, ValueId x, double keep, Rng& rng, bool active) {
  if (!(keep > 0.0 && keep <= 1.0)) throw config_error("dropout: keep probability must be in (0,1], got " + std::to_string(keep));
  if (!active || keep == 1.0) return x;
  const Tensor& tx = g.value(x);
  auto mask = std::make_shared<std::vector<double>>(tx.size());
  double inv = 1.0 / keep;
  for (double& m : *mask) m = rng.uniform() < keep ? inv : 0.0;
  Tensor out = tx;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= (*mask)[i];
  return g.node(std::move(out), {x}, [x, mask](Graph& g, ValueId self) {
    if (!g.requires_grad(x)) return;
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad_buffer(x);
    for (std::size_t i = 0; i < go.data.size(); ++i) gx.data[i] += go.data[i] * (*mask)[i];
  });
}

// Row-wise softmax of {n,m} with max subtraction.
inline ValueId softmax_rows(Graph& g, ValueId x) {
  const Tensor& tx = g.value(x);
  if (tx.rank() != 2) throw config_error("softmax_rows: expected rank-2 input, got " + shape_str(tx.shape));
  int n = tx.dim(0), m = tx.dim(1);
  Tensor out({n, m});
  for (int i = 0; i < n; ++i) {
    const double* xp = &tx.data[static_cast<std::size_t>(i) * m];
    double* op = &out.data[static_cast<std::size_t>(i) * m];
    double mx = xp[0];
    for (int j = 1; j < m; ++j) mx = std::max(mx, xp[j]);
    double s = 0;
    for (int j = 0; j < m; ++j) {
      op[j] = std::exp(xp[j] - mx);
      s += op[j];
    }
    for (int j = 0; j < m; ++j) op[j] /= s;
  }
  return g.node(std::move(out), {x}, [x, n, m](Graph& g, ValueId self) {
    if (!g.requires_grad(x)) return;
    const Tensor& go = g.grad(self);
    const Tensor& p = g.value(self);
    Tensor& gx = g.grad_buffer(x);
    for (int i = 0; i < n; ++i) {
      const double* gp = &go.data[static_cast<std::size_t>(i) * m];
      const double* pp = &p.data[static_cast<std::size_t>(i) * m];
      double dot = 0;
      for (int j = 0; j < m; ++j) dot += gp[j] * pp[j];
      double* xp = &gx.data[static_cast<std::size_t>(i) * m];
      for (int j = 0; j < m; ++j) xp[j] += pp[j] * (gp[j] - dot);
    }
  });
}

// Rows scaled to unit Euclidean norm.
inline ValueId l2_normalize_rows(Graph& g, ValueId x) {
  const Tensor& tx = g.value(x);
  if (tx.rank() != 2) throw config_error("l2_normalize_rows: expected rank-2 input, got " + shape_str(tx.shape));
  int n = tx.dim(0), m = tx.dim(1);
  auto inv_norm = std::make_shared<std::vector<double>>(n);
  Tensor out({n, m});
  for (int i = 0; i < n; ++i) {
    const double* xp = &tx.data[static_cast<std::size_t>(i) * m];
    double s = 0;
    for (int j = 0; j < m; ++j) s += xp[j] * xp[j];
    double nrm = std::sqrt(s);
    if (nrm < 1e-30) throw numeric_error("l2_normalize_rows: zero vector at row " + std::to_string(i));
    (*inv_norm)[i] = 1.0 / nrm;
    double* op = &out.data[static_cast<std::size_t>(i) * m];
    for (int j = 0; j < m; ++j) op[j] = xp[j] * (*inv_norm)[i];
  }
  return g.node(std::move(out), {x}, [x, inv_norm, n, m](Graph& g, ValueId self) {
    if (!g.requires_grad(x)) return;
    const Tensor& go = g.grad(self);
    const Tensor& y = g.value(self);
    Tensor& gx = g.grad_buffer(x);
    for (int i = 0; i < n; ++i) {
      const double* gp = &go.data[static_cast<std::size_t>(i) * m];
      const double* yp = &y.data[static_cast<std::size_t>(i) * m];
      double dot = 0;
      for (int j = 0; j < m; ++j) dot += gp[j] * yp[j];
      double* xp = &gx.data[static_cast<std::size_t>(i) * m];
      for (int j = 0; j < m; ++j) xp[j] += (gp[j] - yp[j] * dot) * (*inv_norm)[i];
    }
  });
}

// {n,c,t} -> {n,c}, mean over the time axis.
inline ValueId global_avg_pool(Graph& g, ValueId x) {
  const Tensor& tx = g.value(x);
  if (tx.rank() != 3) throw config_error("global_avg_pool: expected rank-3 input, got " + shape_str(tx.shape));
  int n = tx.dim(0), c = tx.dim(1), t = tx.dim(2);
  Tensor out({n, c});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const double* xp = &tx.data[(static_cast<std::size_t>(b) * c + ch) * t];
      double s = 0;
      for (int i = 0; i < t; ++i) s += xp[i];
      out.data[static_cast<std::size_t>(b) * c + ch] = s / t;
    }
  return g.node(std::move(out), {x}, [x, n, c, t](Graph& g, ValueId self) {
    if (!g.requires_grad(x)) return;
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad_buffer(x);
    for (int b = 0; b < n; ++b)
      for (int ch = 0; ch < c; ++ch) {
        double gv = go.data[static_cast<std::size_t>(b) * c + ch] / t;
        double* xp = &gx.data[(static_cast<std::size_t>(b) * c + ch) * t];
        for (int i = 0; i < t; ++i) xp[i] += gv;
      }
  });
}

// {n,k},{n,k} -> {n,1}, per-row inner product.
inline ValueId rowwise_dot(Graph& g, ValueId a, ValueId b) {
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  if (ta.rank() != 2 || !ta.same_shape(tb))
    throw config_error("rowwise_dot: shape " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  int n = ta.dim(0), k = ta.dim(1);
  Tensor out({n, 1});
  for (int i = 0; i < n; ++i) {
    const double* ap = &ta.data[static_cast<std::size_t>(i) * k];
    const double* bp = &tb.data[static_cast<std::size_t>(i) * k];
    double s = 0;
    for (int j = 0; j < k; ++j) s += ap[j] * bp[j];
    out.data[i] = s;
  }
  return g.node(std::move(out), {a, b}, [a, b, n, k](Graph& g, ValueId self) {
    const Tensor& go = g.grad(self);
    const Tensor& ta = g.value(a);
    const Tensor& tb = g.value(b);
    if (g.requires_grad(a)) {
      Tensor& ga = g.grad_buffer(a);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) ga.data[static_cast<std::size_t>(i) * k + j] += go.data[i] * tb.data[static_cast<std::size_t>(i) * k + j];
    }
    if (g.requires_grad(b)) {
      Tensor& gb = g.grad_buffer(b);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) gb.data[static_cast<std::size_t>(i) * k + j] += go.data[i] * ta.data[static_cast<std::size_t>(i) * k + j];
    }
  });
}

// {n,p},{n,q} -> {n,p+q}
inline ValueId concat_cols(Graph& g, ValueId a, ValueId b) {
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(0) != tb.dim(0))
    throw config_error("concat_cols: shape " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  int n = ta.dim(0), p = ta.dim(1), q = tb.dim(1);
  Tensor out({n, p + q});
  for (int i = 0; i < n; ++i) {
    double* op = &out.data[static_cast<std::size_t>(i) * (p + q)];
    const double* ap = &ta.data[static_cast<std::size_t>(i) * p];
    const double* bp = &tb.data[static_cast<std::size_t>(i) * q];
    for (int j = 0; j < p; ++j) op[j] = ap[j];
    for (int j = 0; j < q; ++j) op[p + j] = bp[j];
  }
  return g.node(std::move(out), {a, b}, [a, b, n, p, q](Graph& g, ValueId self) {
    const Tensor& go = g.grad(self);
    if (g.requires_grad(a)) {
      Tensor& ga = g.grad_buffer(a);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) ga.data[static_cast<std::size_t>(i) * p + j] += go.data[static_cast<std::size_t>(i) * (p + q) + j];
    }
    if (g.requires_grad(b)) {
      Tensor& gb = g.grad_buffer(b);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < q; ++j) gb.data[static_cast<std::size_t>(i) * q + j] += go.data[static_cast<std::size_t>(i) * (p + q) + p + j];
    }
  });
}

inline ValueId mean_all(Graph& g, ValueId x) {
  const Tensor& tx = g.value(x);
  double s = 0;
  for (double v : tx.data) s += v;
  std::size_t n = tx.size();
  return g.node(Tensor::scalar(s / static_cast<double>(n)), {x}, [x, n](Graph& g, ValueId self) {
    if (!g.requires_grad(x)) return;
    double gv = g.grad(self).data[0] / static_cast<double>(n);
    Tensor& gx = g.grad_buffer(x);
    for (double& v : gx.data) v += gv;
  });
}

inline constexpr double kProbClamp = 1e-12;

// Mean negative log-likelihood of the true class; probs {n,m} must hold
// probabilities, classes are 0-based. Entries below kProbClamp are clamped
// (with a warning) so a hard zero cannot produce -inf.
inline ValueId cross_entropy(Graph& g, ValueId probs, const std::vector<int>& classes) {
  const Tensor& tp = g.value(probs);
  if (tp.rank() != 2) throw config_error("cross_entropy: expected rank-2 probabilities, got " + shape_str(tp.shape));
  int n = tp.dim(0), m = tp.dim(1);
  if (static_cast<int>(classes.size()) != n)
    throw config_error("cross_entropy: " + std::to_string(classes.size()) + " labels for " + std::to_string(n) + " rows");
  double s = 0;
  bool clamped = false;
  for (int i = 0; i < n; ++i) {
    int cls = classes[i];
    if (cls < 0 || cls >= m) throw config_error("cross_entropy: class " + std::to_string(cls) + " out of range [0," + std::to_string(m) + ")");
    double p = tp.data[static_cast<std::size_t>(i) * m + cls];
    if (p < kProbClamp) {
      p = kProbClamp;
      clamped = true;
    }
    s -= std::log(p);
  }
  if (clamped) log_warn("cross_entropy: probability clamped at 1e-12");
  auto cls = std::make_shared<std::vector<int>>(classes);
  return g.node(Tensor::scalar(s / n), {probs}, [probs, cls, n, m](Graph& g, ValueId self) {
    if (!g.requires_grad(probs)) return;
    double gv = g.grad(self).data[0];
    const Tensor& tp = g.value(probs);
    Tensor& gp = g.grad_buffer(probs);
    for (int i = 0; i < n; ++i) {
      double p = tp.data[static_cast<std::size_t>(i) * m + (*cls)[i]];
      if (p >= kProbClamp) gp.data[static_cast<std::size_t>(i) * m + (*cls)[i]] -= gv / (n * p);
    }
  });
}

}  // namespace ops
}  // namespace sei
