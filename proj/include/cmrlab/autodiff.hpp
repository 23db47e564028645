#pragma once

// Tape-based reverse-mode differentiation over NCHW double tensors, with the
// layer set the correction network needs. Convolutions lower to im2col + GEMM.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cmrlab/error.hpp"
#include "cmrlab/tensor.hpp"

namespace cmrlab {

class TapeError : public Error {
 public:
  explicit TapeError(const std::string& what) : Error(ErrorCode::config, what) {}
};

class Tape;

// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that never receives a gradient.
  Var constant(Tensor value) { return push(std::move(value), false, {}); }

  // Leaf whose gradient is readable through grad() after backward().
  Var variable(Tensor value) { return push(std::move(value), true, {}); }

  // Leaf bound to a Parameter: backward() accumulates into param.grad.
  Var parameter(Parameter& param) {
    Var v = push(param.value, true, {});
    nodes_[v.id].param = &param;
    return v;
  }

  Var push(Tensor value, bool requires_grad, Backward backward) {
    if (spent_) throw TapeError("tape already ran backward; start a new tape for a new forward pass");
    nodes_.push_back(Node{std::move(value), Tensor(), requires_grad, nullptr, std::move(backward)});
    return Var{this, nodes_.size() - 1};
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor& value(Var v) const { return value(v.id); }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id); }

  // Gradient of the last backward() root w.r.t. this node (zeros if it had no influence).
  Tensor grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.grad.empty() ? Tensor(n.value.shape()) : n.grad;
  }

  // Accumulates into the gradient buffer of node id; used by backward closures.
  Tensor& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
    return n.grad;
  }

  const Tensor* grad_if_any(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.grad.empty() ? nullptr : &n.grad;
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  bool spent() const noexcept { return spent_; }

  // Reverse sweep from a single-element root. A tape supports exactly one sweep.
  void backward(Var root) {
    if (root.tape != this) throw TapeError("backward root belongs to another tape");
    if (spent_) throw TapeError("backward called twice on the same tape");
    if (nodes_.at(root.id).value.size() != 1) {
      throw ShapeError("backward root must be a scalar, got shape " + nodes_[root.id].value.shape().str());
    }
    spent_ = true;
    grad_buffer(root.id)[0] = 1.0;
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.requires_grad) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param != nullptr) {
        auto& g = n.param->grad;
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
      }
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    Backward backward;
  };

  std::vector<Node> nodes_;
  bool spent_ = false;
};

inline const Tensor& Var::value() const { return tape->value(id); }

namespace detail {

// When set, non-smooth ops append one branch id per element (which side of each kink
// the input fell on). Used by the gradient checker to spot perturbations that cross a kink.
inline thread_local std::vector<std::uint8_t>* branch_log = nullptr;

template <class Classify>
void log_branches(const Tensor& in, Classify classify) {
  if (branch_log == nullptr) return;
  for (double v : in.values()) branch_log->push_back(static_cast<std::uint8_t>(classify(v)));
}


using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

inline void require_same_tape(const Var& a, const Var& b) {
  if (a.tape != b.tape || a.tape == nullptr) throw TapeError("operands recorded on different tapes");
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (!(a == b)) throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

struct ConvGeometry {
  std::size_t channels, height, width;  // image side
  std::size_t kernel, stride, pad;
  std::size_t out_h, out_w;              // sliding-window grid
};

// cols[(c*K + ki)*K + kj][oh*out_w + ow] = img[c][oh*s - p + ki][ow*s - p + kj], zero outside.
inline void im2col(const double* img, const ConvGeometry& g, double* cols) {
  const std::size_t positions = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * positions;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long long ih = static_cast<long long>(oh * g.stride + ki) - static_cast<long long>(g.pad);
          double* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<long long>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = img + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long long iw = static_cast<long long>(ow * g.stride + kj) - static_cast<long long>(g.pad);
            dst[ow] = (iw < 0 || iw >= static_cast<long long>(g.width)) ? 0.0 : src[iw];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back onto the image.
inline void col2im(const double* cols, const ConvGeometry& g, double* img) {
  const std::size_t positions = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * positions;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long long ih = static_cast<long long>(oh * g.stride + ki) - static_cast<long long>(g.pad);
          if (ih < 0 || ih >= static_cast<long long>(g.height)) continue;
          double* dst = img + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
          const double* src = row + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long long iw = static_cast<long long>(ow * g.stride + kj) - static_cast<long long>(g.pad);
            if (iw >= 0 && iw < static_cast<long long>(g.width)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

template <class F, class DF>
Var unary(Var x, F f, DF df) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const std::size_t xid = x.id;
  const bool rg = x.tape->requires_grad(x);
  return x.tape->push(std::move(out), rg, [xid, df](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_if_any(self);
    const Tensor& in = t.value(xid);
    const Tensor& outv = t.value(self);
    Tensor& gx = t.grad_buffer(xid);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(in[i], outv[i]);
  });
}

inline Tensor scalar_tensor(double v) { return Tensor(Shape{1, 1, 1, 1}, v); }

}  // namespace detail

// Cross-correlation. x: (N, Cin, H, W); w: (Cout, Cin, K, K); b: (1, Cout, 1, 1).
inline Var conv2d(Var x, Var w, Var b, std::size_t stride = 1, std::size_t pad = 0) {
  detail::require_same_tape(x, w);
  detail::require_same_tape(x, b);
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  const Shape bs = b.shape();
  if (ws.c != xs.c || ws.h != ws.w || stride == 0 || bs.count() != ws.n) {
    throw ShapeError("conv2d: incompatible input " + xs.str() + ", weight " + ws.str() + ", bias " + bs.str());
  }
  const std::size_t k = ws.h;
  if (xs.h + 2 * pad < k || xs.w + 2 * pad < k) {
    throw ShapeError("conv2d: kernel " + ws.str() + " larger than padded input " + xs.str());
  }
  const detail::ConvGeometry g{xs.c, xs.h, xs.w, k, stride, pad, (xs.h + 2 * pad - k) / stride + 1,
                               (xs.w + 2 * pad - k) / stride + 1};
  const Shape os{xs.n, ws.n, g.out_h, g.out_w};
  const std::size_t ckk = xs.c * k * k;
  const std::size_t pos = g.out_h * g.out_w;
  Tensor out(os);
  std::vector<double> cols(ckk * pos);
  const detail::ConstMatMap wm(w.value().data(), static_cast<Eigen::Index>(ws.n), static_cast<Eigen::Index>(ckk));
  for (std::size_t n = 0; n < xs.n; ++n) {
    detail::im2col(x.value().data() + n * xs.c * xs.plane(), g, cols.data());
    detail::MatMap om(out.data() + n * os.c * pos, static_cast<Eigen::Index>(os.c), static_cast<Eigen::Index>(pos));
    om.noalias() = wm * detail::ConstMatMap(cols.data(), static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(pos));
    for (std::size_t co = 0; co < os.c; ++co) om.row(static_cast<Eigen::Index>(co)).array() += b.value()[co];
  }
  Tape& tape = *x.tape;
  const bool rg = tape.requires_grad(x) || tape.requires_grad(w) || tape.requires_grad(b);
  const std::size_t xid = x.id, wid = w.id, bid = b.id;
  return tape.push(std::move(out), rg, [=](Tape& t, std::size_t self) {
    const Tensor& gout = *t.grad_if_any(self);
    const Tensor& xv = t.value(xid);
    const Tensor& wv = t.value(wid);
    const bool need_x = t.requires_grad(xid);
    const bool need_w = t.requires_grad(wid);
    if (t.requires_grad(bid)) {
      Tensor& gb = t.grad_buffer(bid);
      for (std::size_t n = 0; n < os.n; ++n) {
        for (std::size_t co = 0; co < os.c; ++co) {
          const double* p = gout.data() + (n * os.c + co) * pos;
          double s = 0.0;
          for (std::size_t i = 0; i < pos; ++i) s += p[i];
          gb[co] += s;
        }
      }
    }
    if (!need_x && !need_w) return;
    std::vector<double> buf(ckk * pos);
    const detail::ConstMatMap wm2(wv.data(), static_cast<Eigen::Index>(ws.n), static_cast<Eigen::Index>(ckk));
    for (std::size_t n = 0; n < os.n; ++n) {
      const detail::ConstMatMap go(gout.data() + n * os.c * pos, static_cast<Eigen::Index>(os.c),
                                   static_cast<Eigen::Index>(pos));
      detail::MatMap cm(buf.data(), static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(pos));
      if (need_w) {
        detail::im2col(xv.data() + n * xs.c * xs.plane(), g, buf.data());
        detail::MatMap gw(t.grad_buffer(wid).data(), static_cast<Eigen::Index>(ws.n), static_cast<Eigen::Index>(ckk));
        gw.noalias() += go * cm.transpose();
      }
      if (need_x) {
        cm.noalias() = wm2.transpose() * go;
        detail::col2im(buf.data(), g, t.grad_buffer(xid).data() + n * xs.c * xs.plane());
      }
    }
  });
}

// Adjoint (fractionally strided) convolution. x: (N, Cin, H, W); w: (Cin, Cout, K, K);
// output extent (H - 1) * stride - 2 * pad + K + output_padding.
inline Var conv_transpose2d(Var x, Var w, Var b, std::size_t stride = 1, std::size_t pad = 0,
                            std::size_t output_padding = 0) {
  detail::require_same_tape(x, w);
  detail::require_same_tape(x, b);
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  const Shape bs = b.shape();
  if (ws.n != xs.c || ws.h != ws.w || stride == 0 || bs.count() != ws.c || output_padding >= stride) {
    throw ShapeError("conv_transpose2d: incompatible input " + xs.str() + ", weight " + ws.str() + ", bias " +
                     bs.str());
  }
  const std::size_t k = ws.h;
  const long long oh_signed = static_cast<long long>((xs.h - 1) * stride + k + output_padding) - 2 * static_cast<long long>(pad);
  const long long ow_signed = static_cast<long long>((xs.w - 1) * stride + k + output_padding) - 2 * static_cast<long long>(pad);
  if (oh_signed <= 0 || ow_signed <= 0) throw ShapeError("conv_transpose2d: empty output for input " + xs.str());
  const Shape os{xs.n, ws.c, static_cast<std::size_t>(oh_signed), static_cast<std::size_t>(ow_signed)};
  // Geometry of the forward convolution whose adjoint this is: image = output, windows = input grid.
  const detail::ConvGeometry g{os.c, os.h, os.w, k, stride, pad, xs.h, xs.w};
  const std::size_t ckk = os.c * k * k;
  const std::size_t pos = xs.plane();
  Tensor out(os);
  std::vector<double> cols(ckk * pos);
  const detail::ConstMatMap wm(w.value().data(), static_cast<Eigen::Index>(ws.n), static_cast<Eigen::Index>(ckk));
  for (std::size_t n = 0; n < xs.n; ++n) {
    const detail::ConstMatMap xm(x.value().data() + n * xs.c * pos, static_cast<Eigen::Index>(xs.c),
                                 static_cast<Eigen::Index>(pos));
    detail::MatMap cm(cols.data(), static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(pos));
    cm.noalias() = wm.transpose() * xm;
    double* o = out.data() + n * os.c * os.plane();
    detail::col2im(cols.data(), g, o);
    for (std::size_t co = 0; co < os.c; ++co) {
      for (std::size_t i = 0; i < os.plane(); ++i) o[co * os.plane() + i] += b.value()[co];
    }
  }
  Tape& tape = *x.tape;
  const bool rg = tape.requires_grad(x) || tape.requires_grad(w) || tape.requires_grad(b);
  const std::size_t xid = x.id, wid = w.id, bid = b.id;
  return tape.push(std::move(out), rg, [=](Tape& t, std::size_t self) {
    const Tensor& gout = *t.grad_if_any(self);
    const Tensor& xv = t.value(xid);
    const Tensor& wv = t.value(wid);
    const bool need_x = t.requires_grad(xid);
    const bool need_w = t.requires_grad(wid);
    if (t.requires_grad(bid)) {
      Tensor& gb = t.grad_buffer(bid);
      for (std::size_t n = 0; n < os.n; ++n) {
        for (std::size_t co = 0; co < os.c; ++co) {
          const double* p = gout.data() + (n * os.c + co) * os.plane();
          double s = 0.0;
          for (std::size_t i = 0; i < os.plane(); ++i) s += p[i];
          gb[co] += s;
        }
      }
    }
    if (!need_x && !need_w) return;
    std::vector<double> buf(ckk * pos);
    const detail::ConstMatMap wm2(wv.data(), static_cast<Eigen::Index>(ws.n), static_cast<Eigen::Index>(ckk));
    for (std::size_t n = 0; n < os.n; ++n) {
      detail::im2col(gout.data() + n * os.c * os.plane(), g, buf.data());
      const detail::ConstMatMap gc(buf.data(), static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(pos));
      if (need_x) {
        detail::MatMap gx(t.grad_buffer(xid).data() + n * xs.c * pos, static_cast<Eigen::Index>(xs.c),
                          static_cast<Eigen::Index>(pos));
        gx.noalias() += wm2 * gc;
      }
      if (need_w) {
        const detail::ConstMatMap xm(xv.data() + n * xs.c * pos, static_cast<Eigen::Index>(xs.c),
                                     static_cast<Eigen::Index>(pos));
        detail::MatMap gw(t.grad_buffer(wid).data(), static_cast<Eigen::Index>(ws.n), static_cast<Eigen::Index>(ckk));
        gw.noalias() += xm * gc.transpose();
      }
    }
  });
}

// Per-(sample, channel) standardization over H x W followed by a per-channel affine map.
inline Var instance_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
  detail::require_same_tape(x, gain);
  detail::require_same_tape(x, bias);
  const Shape xs = x.shape();
  if (gain.shape().count() != xs.c || bias.shape().count() != xs.c) {
    throw ShapeError("instance_norm: affine parameters must have " + std::to_string(xs.c) + " elements");
  }
  const std::size_t m = xs.plane();
  Tensor out(xs);
  std::vector<double> inv_std(xs.n * xs.c);
  Tensor xhat(xs);
  for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
    const std::size_t c = nc % xs.c;
    const double* p = x.value().data() + nc * m;
    double mean = 0.0;
    for (std::size_t i = 0; i < m; ++i) mean += p[i];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t i = 0; i < m; ++i) var += (p[i] - mean) * (p[i] - mean);
    var /= static_cast<double>(m);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[nc] = is;
    for (std::size_t i = 0; i < m; ++i) {
      const double h = (p[i] - mean) * is;
      xhat[nc * m + i] = h;
      out[nc * m + i] = gain.value()[c] * h + bias.value()[c];
    }
  }
  Tape& tape = *x.tape;
  const bool rg = tape.requires_grad(x) || tape.requires_grad(gain) || tape.requires_grad(bias);
  const std::size_t xid = x.id, gid = gain.id, bid = bias.id;
  return tape.push(std::move(out), rg,
                   [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
                     const Tensor& gout = *t.grad_if_any(self);
                     const Tensor& gv = t.value(gid);
                     const bool need_x = t.requires_grad(xid);
                     const bool need_g = t.requires_grad(gid);
                     const bool need_b = t.requires_grad(bid);
                     const double md = static_cast<double>(m);
                     for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
                       const std::size_t c = nc % xs.c;
                       const double* go = gout.data() + nc * m;
                       const double* h = xhat.data() + nc * m;
                       double sum_g = 0.0, sum_gh = 0.0;
                       for (std::size_t i = 0; i < m; ++i) {
                         sum_g += go[i];
                         sum_gh += go[i] * h[i];
                       }
                       if (need_g) t.grad_buffer(gid)[c] += sum_gh;
                       if (need_b) t.grad_buffer(bid)[c] += sum_g;
                       if (need_x) {
                         double* gx = t.grad_buffer(xid).data() + nc * m;
                         const double scale = gv[c] * inv_std[nc] / md;
                         for (std::size_t i = 0; i < m; ++i) gx[i] += scale * (md * go[i] - sum_g - h[i] * sum_gh);
                       }
                     }
                   });
}

inline Var relu(Var x) {
  detail::log_branches(x.value(), [](double v) { return v > 0.0; });
  return detail::unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

inline Var leaky_relu(Var x, double slope = 0.2) {
  detail::log_branches(x.value(), [](double v) { return v > 0.0; });
  return detail::unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double in, double) { return in > 0.0 ? 1.0 : slope; });
}

inline Var tanh(Var x) {
  return detail::unary(
      x, [](double v) { return std::tanh(v); }, [](double, double out) { return 1.0 - out * out; });
}

inline Var sigmoid(Var x) {
  return detail::unary(
      x,
      [](double v) {
        // Split by sign so neither branch overflows.
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double out) { return out * (1.0 - out); });
}

// Elementwise clamp; the gradient is zero where the bound is active.
inline Var clamp(Var x, double lo, double hi) {
  detail::log_branches(x.value(), [lo, hi](double v) { return v <= lo ? 0 : (v < hi ? 1 : 2); });
  return detail::unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double in, double) { return (in > lo && in < hi) ? 1.0 : 0.0; });
}

inline Var scale(Var x, double s) {
  return detail::unary(x, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

inline Var add_scalar(Var x, double s) {
  return detail::unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

// a + alpha * b for equal shapes.
inline Var axpy(Var a, Var b, double alpha) {
  detail::require_same_tape(a, b);
  detail::require_same_shape(a.shape(), b.shape(), "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + alpha * bv[i];
  Tape& tape = *a.tape;
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  const std::size_t aid = a.id, bid = b.id;
  return tape.push(std::move(out), rg, [aid, bid, alpha](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_if_any(self);
    if (t.requires_grad(aid)) {
      Tensor& ga = t.grad_buffer(aid);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(bid)) {
      Tensor& gb = t.grad_buffer(bid);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += alpha * g[i];
    }
  });
}

inline Var add(Var a, Var b) { return axpy(a, b, 1.0); }
inline Var sub(Var a, Var b) { return axpy(a, b, -1.0); }

// Mean over H x W per (sample, channel): (N, C, H, W) -> (N, C, 1, 1).
inline Var global_avg_pool(Var x) {
  const Shape xs = x.shape();
  const std::size_t m = xs.plane();
  Tensor out(Shape{xs.n, xs.c, 1, 1});
  for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += x.value()[nc * m + i];
    out[nc] = s / static_cast<double>(m);
  }
  const std::size_t xid = x.id;
  return x.tape->push(std::move(out), x.tape->requires_grad(x), [xid, m](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_if_any(self);
    Tensor& gx = t.grad_buffer(xid);
    for (std::size_t nc = 0; nc < g.size(); ++nc) {
      const double share = g[nc] / static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i) gx[nc * m + i] += share;
    }
  });
}

// Mean of all elements -> scalar.
inline Var mean(Var x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.values()) s += v;
  const double n = static_cast<double>(xv.size());
  const std::size_t xid = x.id;
  return x.tape->push(detail::scalar_tensor(s / n), x.tape->requires_grad(x), [xid, n](Tape& t, std::size_t self) {
    const double g = (*t.grad_if_any(self))[0] / n;
    Tensor& gx = t.grad_buffer(xid);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

// Elementwise |x|; subgradient 0 at 0.
inline Var abs(Var x) {
  detail::log_branches(x.value(), [](double v) { return v > 0.0 ? 2 : (v < 0.0 ? 0 : 1); });
  return detail::unary(
      x, [](double v) { return std::abs(v); },
      [](double in, double) { return in > 0.0 ? 1.0 : (in < 0.0 ? -1.0 : 0.0); });
}

// sum_i w_i * x_i against a constant weight tensor -> scalar.
inline Var inner_product(Var x, const Tensor& weights) {
  detail::require_same_shape(x.shape(), weights.shape(), "inner_product");
  const Tensor& xv = x.value();
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += weights[i] * xv[i];
  const std::size_t xid = x.id;
  return x.tape->push(detail::scalar_tensor(s), x.tape->requires_grad(x), [xid, weights](Tape& t, std::size_t self) {
    const double g = (*t.grad_if_any(self))[0];
    Tensor& gx = t.grad_buffer(xid);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * weights[i];
  });
}

// (1/N) sum |a - b| over all elements; the subgradient at a tie is 0.
inline Var mean_abs_diff(Var a, Var b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape(a.shape(), b.shape(), "mean_abs_diff");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += std::abs(av[i] - bv[i]);
  if (detail::branch_log != nullptr) {
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double d = av[i] - bv[i];
      detail::branch_log->push_back(d > 0.0 ? 2 : (d < 0.0 ? 0 : 1));
    }
  }
  const double n = static_cast<double>(av.size());
  Tape& tape = *a.tape;
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  const std::size_t aid = a.id, bid = b.id;
  return tape.push(detail::scalar_tensor(s / n), rg, [aid, bid, n](Tape& t, std::size_t self) {
    const double g = (*t.grad_if_any(self))[0] / n;
    const Tensor& av2 = t.value(aid);
    const Tensor& bv2 = t.value(bid);
    const bool need_a = t.requires_grad(aid);
    const bool need_b = t.requires_grad(bid);
    for (std::size_t i = 0; i < av2.size(); ++i) {
      const double d = av2[i] - bv2[i];
      const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      if (need_a) t.grad_buffer(aid)[i] += g * sgn;
      if (need_b) t.grad_buffer(bid)[i] -= g * sgn;
    }
  });
}

// Probability clamp used by the trainer so log terms stay finite.
inline constexpr double kProbabilityFloor = 1e-7;

// Binary cross-entropy averaged over all elements, natural log:
// label 1 -> -ln p, label 0 -> -ln(1 - p). Without `clamp`, p must lie in (0, 1).
inline Var bce(Var p, double label, bool clamp_probabilities = false) {
  if (label != 0.0 && label != 1.0) throw ConfigError("bce label must be 0 or 1");
  const Tensor& pv = p.value();
  std::vector<double> used(pv.size());
  std::vector<std::uint8_t> active(pv.size(), 1);
  double s = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    double q = pv[i];
    if (clamp_probabilities) {
      const double c = std::clamp(q, kProbabilityFloor, 1.0 - kProbabilityFloor);
      if (c != q) active[i] = 0;
      q = c;
    } else if (!(q > 0.0 && q < 1.0)) {
      throw DomainError("bce: probability " + std::to_string(q) + " outside (0, 1)");
    }
    used[i] = q;
    if (detail::branch_log != nullptr) detail::branch_log->push_back(active[i]);
    s -= label == 1.0 ? std::log(q) : std::log1p(-q);
  }
  const double n = static_cast<double>(pv.size());
  const std::size_t pid = p.id;
  return p.tape->push(detail::scalar_tensor(s / n), p.tape->requires_grad(p),
                      [pid, n, label, used = std::move(used), active = std::move(active)](Tape& t, std::size_t self) {
                        const double g = (*t.grad_if_any(self))[0] / n;
                        Tensor& gp = t.grad_buffer(pid);
                        for (std::size_t i = 0; i < used.size(); ++i) {
                          if (!active[i]) continue;
                          gp[i] += label == 1.0 ? -g / used[i] : g / (1.0 - used[i]);
                        }
                      });
}

// Elementwise sum of scalars with weights: sum_i w_i * s_i.
inline Var weighted_sum(const std::vector<std::pair<Var, double>>& terms) {
  if (terms.empty()) throw ConfigError("weighted_sum needs at least one term");
  Var acc = scale(terms.front().first, terms.front().second);
  for (std::size_t i = 1; i < terms.size(); ++i) acc = axpy(acc, terms[i].first, terms[i].second);
  return acc;
}

}  // namespace cmrlab
