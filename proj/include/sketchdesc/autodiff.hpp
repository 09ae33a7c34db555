#pragma once

// Reverse-mode differentiation over a linear tape. Every op appends a node
// holding its output and a closure that pushes the node's gradient to its
// inputs. A tape supports one backward pass per forward recording.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "sketchdesc/error.hpp"
#include "sketchdesc/tensor.hpp"

namespace sketchdesc {

using Var = int;

template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Non-differentiable input.
  Var input(Tensor<T> value) { return push(std::move(value), nullptr, false); }

  /// Leaf bound to a parameter; backward accumulates into param.grad.
  Var parameter(Parameter<T>& p) {
    require(p.grad.shape == p.value.shape, "parameter gradient shape mismatch for " + p.name);
    nodes_.push_back(Node{p.value, {}, nullptr, &p, true});
    consumed_ = false;
    return static_cast<Var>(nodes_.size() - 1);
  }

  Var push(Tensor<T> value, std::function<void()> backward, bool needs_grad) {
    nodes_.push_back(Node{std::move(value), {}, std::move(backward), nullptr, needs_grad});
    consumed_ = false;
    return static_cast<Var>(nodes_.size() - 1);
  }

  /// Id the next pushed node will receive, for closures that refer to their own output.
  Var next_id() const { return static_cast<Var>(nodes_.size()); }

  const Tensor<T>& value(Var v) const { return nodes_.at(v).value; }
  bool needs_grad(Var v) const { return nodes_.at(v).needs_grad; }

  /// Gradient buffer of a node, allocated (zero) on first use.
  Tensor<T>& grad(Var v) {
    Node& n = nodes_.at(v);
    if (n.grad.shape != n.value.shape) n.grad = Tensor<T>(n.value.shape);
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  void backward(Var loss) {
    require(!nodes_.empty(), "backward called without a recorded forward pass");
    if (consumed_) throw precondition_error("backward called twice on the same forward pass");
    require(loss >= 0 && static_cast<std::size_t>(loss) < nodes_.size(), "loss node is not on this tape");
    require(nodes_[loss].value.size() == 1, "backward needs a scalar loss");
    consumed_ = true;
    grad(loss).values[0] = T(1);
    for (Var i = loss; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.shape != n.value.shape) continue;  // no gradient reached this node
      if (n.backward) n.backward();
      if (n.param) {
        auto& g = n.param->grad.values;
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad.values[k];
      }
    }
  }

  void clear() {
    nodes_.clear();
    consumed_ = false;
  }

  /// When set, piecewise-linear ops append their branch choices, so callers
  /// can tell whether two evaluations took the same linear piece.
  std::vector<std::uint8_t>* kink_log = nullptr;

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void()> backward;
    Parameter<T>* param = nullptr;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

/// Normalization statistics of one layer, kept outside the tape.
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;

  explicit BatchNormState(int channels = 0) : running_mean({channels}, T(0)), running_var({channels}, T(1)) {}
};

/// Train: batch statistics, running averages updated. BatchStats: batch
/// statistics only. Inference: running averages.
enum class Mode { Train, BatchStats, Inference };

namespace ops {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

namespace detail {

struct ConvGeometry {
  int n, c, h, w, o, k, stride, pad, ho, wo;
  std::size_t patch_len() const { return static_cast<std::size_t>(c) * k * k; }
  std::size_t spatial() const { return static_cast<std::size_t>(ho) * wo; }
};

// col is row-major [c*k*k, count*ho*wo] for images [first, first + count).
template <typename T>
void im2col(const T* x, const ConvGeometry& g, int first, int count, T* col) {
  const std::size_t cols = static_cast<std::size_t>(count) * g.spatial();
  for (int ch = 0; ch < g.c; ++ch) {
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        T* row = col + (static_cast<std::size_t>(ch * g.k + ki) * g.k + kj) * cols;
        for (int b = 0; b < count; ++b) {
          const T* img = x + (static_cast<std::size_t>(first + b) * g.c + ch) * g.h * g.w;
          T* out = row + static_cast<std::size_t>(b) * g.spatial();
          for (int oy = 0; oy < g.ho; ++oy) {
            const int iy = oy * g.stride - g.pad + ki;
            T* o = out + static_cast<std::size_t>(oy) * g.wo;
            if (iy < 0 || iy >= g.h) {
              std::fill(o, o + g.wo, T(0));
              continue;
            }
            const T* src = img + static_cast<std::size_t>(iy) * g.w;
            for (int ox = 0; ox < g.wo; ++ox) {
              const int ix = ox * g.stride - g.pad + kj;
              o[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, int first, int count, T* dx) {
  const std::size_t cols = static_cast<std::size_t>(count) * g.spatial();
  for (int ch = 0; ch < g.c; ++ch) {
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        const T* row = col + (static_cast<std::size_t>(ch * g.k + ki) * g.k + kj) * cols;
        for (int b = 0; b < count; ++b) {
          T* img = dx + (static_cast<std::size_t>(first + b) * g.c + ch) * g.h * g.w;
          const T* in = row + static_cast<std::size_t>(b) * g.spatial();
          for (int oy = 0; oy < g.ho; ++oy) {
            const int iy = oy * g.stride - g.pad + ki;
            if (iy < 0 || iy >= g.h) continue;
            T* dst = img + static_cast<std::size_t>(iy) * g.w;
            const T* i = in + static_cast<std::size_t>(oy) * g.wo;
            for (int ox = 0; ox < g.wo; ++ox) {
              const int ix = ox * g.stride - g.pad + kj;
              if (ix >= 0 && ix < g.w) dst[ix] += i[ox];
            }
          }
        }
      }
    }
  }
}

// Images per im2col chunk, keeping the column buffer near 4M elements.
inline int conv_chunk(const ConvGeometry& g) {
  const std::size_t per_image = g.patch_len() * g.spatial();
  return static_cast<int>(std::clamp<std::size_t>((std::size_t{1} << 22) / std::max<std::size_t>(per_image, 1), 1, g.n));
}

}  // namespace detail

/// x [N, C, H, W], weight [O, C, k, k], no bias.
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var weight, int stride, int pad) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(weight);
  require(xv.rank() == 4 && wv.rank() == 4, "conv2d expects 4-d input and weight");
  require(xv.dim(1) == wv.dim(1) && wv.dim(2) == wv.dim(3), "conv2d channel or kernel mismatch");
  detail::ConvGeometry g{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0), wv.dim(2), stride, pad, 0, 0};
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;
  require(g.ho > 0 && g.wo > 0, "conv2d output would be empty");
  Tensor<T> out({g.n, g.o, g.ho, g.wo});
  const int chunk = detail::conv_chunk(g);
  std::vector<T> col;
  std::vector<T> res;
  ConstMatMap<T> wm(wv.data(), g.o, static_cast<Eigen::Index>(g.patch_len()));
  for (int first = 0; first < g.n; first += chunk) {
    const int count = std::min(chunk, g.n - first);
    const auto cols = static_cast<Eigen::Index>(count * g.spatial());
    col.resize(g.patch_len() * cols);
    res.resize(static_cast<std::size_t>(g.o) * cols);
    detail::im2col(xv.data(), g, first, count, col.data());
    MatMap<T>(res.data(), g.o, cols).noalias() = wm * ConstMatMap<T>(col.data(), static_cast<Eigen::Index>(g.patch_len()), cols);
    for (int b = 0; b < count; ++b)
      for (int o = 0; o < g.o; ++o)
        std::copy_n(res.data() + static_cast<std::size_t>(o) * cols + static_cast<std::size_t>(b) * g.spatial(), g.spatial(),
                    out.data() + (static_cast<std::size_t>(first + b) * g.o + o) * g.spatial());
  }
  const Var self = tape.next_id();
  return tape.push(std::move(out), [&tape, x, weight, g, chunk, self]() {
    const Tensor<T>& dy = tape.grad(self);
    const Tensor<T>& xv = tape.value(x);
    const Tensor<T>& wv = tape.value(weight);
    const bool need_dx = tape.needs_grad(x), need_dw = tape.needs_grad(weight);
    T* dx = need_dx ? tape.grad(x).data() : nullptr;
    T* dw = need_dw ? tape.grad(weight).data() : nullptr;
    std::vector<T> col, dres;
    ConstMatMap<T> wm(wv.data(), g.o, static_cast<Eigen::Index>(g.patch_len()));
    for (int first = 0; first < g.n; first += chunk) {
      const int count = std::min(chunk, g.n - first);
      const auto cols = static_cast<Eigen::Index>(count * g.spatial());
      dres.resize(static_cast<std::size_t>(g.o) * cols);
      for (int b = 0; b < count; ++b)
        for (int o = 0; o < g.o; ++o)
          std::copy_n(dy.data() + (static_cast<std::size_t>(first + b) * g.o + o) * g.spatial(), g.spatial(),
                      dres.data() + static_cast<std::size_t>(o) * cols + static_cast<std::size_t>(b) * g.spatial());
      ConstMatMap<T> dm(dres.data(), g.o, cols);
      col.resize(g.patch_len() * cols);
      if (need_dw) {
        detail::im2col(xv.data(), g, first, count, col.data());
        MatMap<T>(dw, g.o, static_cast<Eigen::Index>(g.patch_len())).noalias() +=
            dm * ConstMatMap<T>(col.data(), static_cast<Eigen::Index>(g.patch_len()), cols).transpose();
      }
      if (need_dx) {
        MatMap<T>(col.data(), static_cast<Eigen::Index>(g.patch_len()), cols).noalias() = wm.transpose() * dm;
        detail::col2im_add(col.data(), g, first, count, dx);
      }
    }
  }, tape.needs_grad(x) || tape.needs_grad(weight));
}


/// Per-channel normalization of x [N, C, ...] without affine terms.
template <typename T>
Var batch_norm(Tape<T>& tape, Var x, BatchNormState<T>& state, Mode mode, double momentum = 0.1, double eps = 1e-5) {
  const Tensor<T>& xv = tape.value(x);
  require(xv.rank() >= 2, "batch_norm expects at least 2 dimensions");
  const int n = xv.dim(0), c = xv.dim(1);
  require(state.running_mean.size() == static_cast<std::size_t>(c), "batch_norm channel count mismatch");
  const std::size_t inner = xv.size() / (static_cast<std::size_t>(n) * c);
  const std::size_t m = static_cast<std::size_t>(n) * inner;
  Tensor<T> out(xv.shape);
  std::vector<T> inv_std(c);
  for (int ch = 0; ch < c; ++ch) {
    double mean, var;
    if (mode == Mode::Inference) {
      mean = state.running_mean[ch];
      var = state.running_var[ch];
    } else {
      require(m > 1, "batch_norm needs more than one value per channel in training");
      double sum = 0.0;
      for (int b = 0; b < n; ++b) {
        const T* p = xv.data() + (static_cast<std::size_t>(b) * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) sum += p[i];
      }
      mean = sum / static_cast<double>(m);
      double sq = 0.0;
      for (int b = 0; b < n; ++b) {
        const T* p = xv.data() + (static_cast<std::size_t>(b) * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) sq += (p[i] - mean) * (p[i] - mean);
      }
      var = sq / static_cast<double>(m);
      if (mode == Mode::Train) {
        state.running_mean[ch] = static_cast<T>((1.0 - momentum) * state.running_mean[ch] + momentum * mean);
        state.running_var[ch] = static_cast<T>((1.0 - momentum) * state.running_var[ch] +
                                               momentum * var * static_cast<double>(m) / static_cast<double>(m - 1));
      }
    }
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[ch] = static_cast<T>(is);
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) out[off + i] = static_cast<T>((xv[off + i] - mean) * is);
    }
  }
  const Var self = tape.next_id();
  const bool batch_stats = mode != Mode::Inference;
  return tape.push(std::move(out), [&tape, x, self, n, c, inner, m, inv_std = std::move(inv_std), batch_stats]() {
    const Tensor<T>& dy = tape.grad(self);
    const Tensor<T>& y = tape.value(self);
    Tensor<T>& dx = tape.grad(x);
    for (int ch = 0; ch < c; ++ch) {
      double mean_dy = 0.0, mean_dyy = 0.0;
      if (batch_stats) {
        for (int b = 0; b < n; ++b) {
          const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * inner;
          for (std::size_t i = 0; i < inner; ++i) {
            mean_dy += dy[off + i];
            mean_dyy += static_cast<double>(dy[off + i]) * y[off + i];
          }
        }
        mean_dy /= static_cast<double>(m);
        mean_dyy /= static_cast<double>(m);
      }
      const double is = inv_std[ch];
      for (int b = 0; b < n; ++b) {
        const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i)
          dx[off + i] += static_cast<T>(is * (dy[off + i] - mean_dy - y[off + i] * mean_dyy));
      }
    }
  }, tape.needs_grad(x));
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> out(xv.shape);
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  if (tape.kink_log)
    for (std::size_t i = 0; i < xv.size(); ++i) tape.kink_log->push_back(xv[i] > T(0));
  const Var self = tape.next_id();
  return tape.push(std::move(out), [&tape, x, self]() {
    const Tensor<T>& dy = tape.grad(self);
    const Tensor<T>& xv = tape.value(x);
    Tensor<T>& dx = tape.grad(x);
    for (std::size_t i = 0; i < xv.size(); ++i)
      if (xv[i] > T(0)) dx[i] += dy[i];
  }, tape.needs_grad(x));
}

/// Same values, new shape.
template <typename T>
Var reshape(Tape<T>& tape, Var x, std::vector<int> shape) {
  Tensor<T> out = tape.value(x);
  out.reshape(std::move(shape));
  const Var self = tape.next_id();
  return tape.push(std::move(out), [&tape, x, self]() {
    const Tensor<T>& dy = tape.grad(self);
    Tensor<T>& dx = tape.grad(x);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
  }, tape.needs_grad(x));
}

/// x [N, D], weight [O, D], bias [O] -> [N, O].
template <typename T>
Var linear(Tape<T>& tape, Var x, Var weight, Var bias) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(weight);
  const Tensor<T>& bv = tape.value(bias);
  require(xv.rank() == 2 && wv.rank() == 2 && xv.dim(1) == wv.dim(1), "linear shape mismatch");
  require(bv.size() == static_cast<std::size_t>(wv.dim(0)), "linear bias size mismatch");
  const int n = xv.dim(0), d = xv.dim(1), o = wv.dim(0);
  Tensor<T> out({n, o});
  MatMap<T> om(out.data(), n, o);
  om.noalias() = ConstMatMap<T>(xv.data(), n, d) * ConstMatMap<T>(wv.data(), o, d).transpose();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < o; ++j) out[static_cast<std::size_t>(i) * o + j] += bv[j];
  const Var self = tape.next_id();
  return tape.push(std::move(out), [&tape, x, weight, bias, self, n, d, o]() {
    ConstMatMap<T> dy(tape.grad(self).data(), n, o);
    if (tape.needs_grad(x))
      MatMap<T>(tape.grad(x).data(), n, d).noalias() += dy * ConstMatMap<T>(tape.value(weight).data(), o, d);
    if (tape.needs_grad(weight))
      MatMap<T>(tape.grad(weight).data(), o, d).noalias() += dy.transpose() * ConstMatMap<T>(tape.value(x).data(), n, d);
    if (tape.needs_grad(bias)) {
      Tensor<T>& db = tape.grad(bias);
      for (int j = 0; j < o; ++j) {
        T s = T(0);
        for (int i = 0; i < n; ++i) s += dy(i, j);
        db[j] += s;
      }
    }
  }, tape.needs_grad(x) || tape.needs_grad(weight) || tape.needs_grad(bias));
}

/// Concatenates tensors along the first dimension.
template <typename T>
Var stack_rows(Tape<T>& tape, const std::vector<Var>& parts) {
  require(!parts.empty(), "stack_rows needs at least one input");
  std::vector<int> shape = tape.value(parts[0]).shape;
  shape[0] = 0;
  bool ng = false;
  for (Var v : parts) {
    const auto& s = tape.value(v).shape;
    require(s.size() == shape.size() && std::equal(s.begin() + 1, s.end(), shape.begin() + 1), "stack_rows shape mismatch");
    shape[0] += s[0];
    ng = ng || tape.needs_grad(v);
  }
  Tensor<T> out(shape);
  std::size_t off = 0;
  for (Var v : parts) {
    const auto& pv = tape.value(v);
    std::copy(pv.values.begin(), pv.values.end(), out.values.begin() + static_cast<std::ptrdiff_t>(off));
    off += pv.size();
  }
  const Var self = tape.next_id();
  return tape.push(std::move(out), [&tape, parts, self]() {
    const Tensor<T>& dy = tape.grad(self);
    std::size_t off = 0;
    for (Var v : parts) {
      const std::size_t len = tape.value(v).size();
      if (tape.needs_grad(v)) {
        Tensor<T>& dx = tape.grad(v);
        for (std::size_t i = 0; i < len; ++i) dx[i] += dy[off + i];
      }
      off += len;
    }
  }, ng);
}

/// x [K*N, D] holding K row blocks -> [N, K*D] with row n = concat_k x[k*N + n].
template <typename T>
Var regroup(Tape<T>& tape, Var x, int k) {
  const Tensor<T>& xv = tape.value(x);
  require(xv.rank() == 2 && k > 0 && xv.dim(0) % k == 0, "regroup shape mismatch");
  const int n = xv.dim(0) / k, d = xv.dim(1);
  Tensor<T> out({n, k * d});
  for (int b = 0; b < k; ++b)
    for (int i = 0; i < n; ++i)
      std::copy_n(xv.data() + (static_cast<std::size_t>(b) * n + i) * d, d, out.data() + static_cast<std::size_t>(i) * k * d + static_cast<std::size_t>(b) * d);
  const Var self = tape.next_id();
  return tape.push(std::move(out), [&tape, x, self, n, k, d]() {
    const Tensor<T>& dy = tape.grad(self);
    Tensor<T>& dx = tape.grad(x);
    for (int b = 0; b < k; ++b)
      for (int i = 0; i < n; ++i) {
        const T* src = dy.data() + static_cast<std::size_t>(i) * k * d + static_cast<std::size_t>(b) * d;
        T* dst = dx.data() + (static_cast<std::size_t>(b) * n + i) * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
  }, tape.needs_grad(x));
}

/// Row-wise unit Euclidean norm of x [N, D].
template <typename T>
Var l2_normalize(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  require(xv.rank() == 2, "l2_normalize expects a matrix");
  const int n = xv.dim(0), d = xv.dim(1);
  Tensor<T> out(xv.shape);
  std::vector<T> norms(n);
  for (int i = 0; i < n; ++i) {
    const T* r = xv.data() + static_cast<std::size_t>(i) * d;
    double sq = 0.0;
    for (int j = 0; j < d; ++j) sq += static_cast<double>(r[j]) * r[j];
    const double norm = std::max(std::sqrt(sq), 1e-12);
    norms[i] = static_cast<T>(norm);
    for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(i) * d + j] = static_cast<T>(r[j] / norm);
  }
  const Var self = tape.next_id();
  return tape.push(std::move(out), [&tape, x, self, n, d, norms = std::move(norms)]() {
    const Tensor<T>& dy = tape.grad(self);
    const Tensor<T>& y = tape.value(self);
    Tensor<T>& dx = tape.grad(x);
    for (int i = 0; i < n; ++i) {
      const std::size_t off = static_cast<std::size_t>(i) * d;
      double dot = 0.0;
      for (int j = 0; j < d; ++j) dot += static_cast<double>(dy[off + j]) * y[off + j];
      for (int j = 0; j < d; ++j) dx[off + j] += static_cast<T>((dy[off + j] - y[off + j] * dot) / norms[i]);
    }
  }, tape.needs_grad(x));
}

/// Row indices (anchor, positive, negative) into a descriptor matrix.
using TripletIndex = std::array<int, 3>;

/// Mean over triplets of max(0, |a - p| - |a - n| + margin), Euclidean.
template <typename T>
Var triplet_loss(Tape<T>& tape, Var descriptors, const std::vector<TripletIndex>& triplets, double margin) {
  require(!triplets.empty(), "triplet loss over an empty batch");
  const Tensor<T>& dv = tape.value(descriptors);
  require(dv.rank() == 2, "triplet loss expects a descriptor matrix");
  const int rows = dv.dim(0), d = dv.dim(1);
  auto dist = [&](int a, int b) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
      const double diff = static_cast<double>(dv[static_cast<std::size_t>(a) * d + j]) - dv[static_cast<std::size_t>(b) * d + j];
      s += diff * diff;
    }
    return std::sqrt(s);
  };
  std::vector<std::array<double, 3>> terms;  // d(a,p), d(a,n), active
  double total = 0.0;
  for (const auto& t : triplets) {
    for (int idx : t) require(idx >= 0 && idx < rows, "triplet index out of range");
    const double dp = dist(t[0], t[1]), dn = dist(t[0], t[2]);
    const double h = dp - dn + margin;
    terms.push_back({dp, dn, h > 0.0 ? 1.0 : 0.0});
    if (h > 0.0) total += h;
    if (tape.kink_log) tape.kink_log->push_back(h > 0.0);
  }
  Tensor<T> out({1});
  out[0] = static_cast<T>(total / static_cast<double>(triplets.size()));
  const Var self = tape.next_id();
  return tape.push(std::move(out), [&tape, descriptors, self, triplets, terms = std::move(terms), d]() {
    const double g = static_cast<double>(tape.grad(self)[0]) / static_cast<double>(triplets.size());
    const Tensor<T>& dv = tape.value(descriptors);
    Tensor<T>& dd = tape.grad(descriptors);
    for (std::size_t t = 0; t < triplets.size(); ++t) {
      if (terms[t][2] == 0.0) continue;
      const auto [a, p, n] = triplets[t];
      const double dp = terms[t][0], dn = terms[t][1];
      for (int j = 0; j < d; ++j) {
        const double va = dv[static_cast<std::size_t>(a) * d + j];
        const double gp = dp > 0.0 ? (va - dv[static_cast<std::size_t>(p) * d + j]) / dp : 0.0;
        const double gn = dn > 0.0 ? (va - dv[static_cast<std::size_t>(n) * d + j]) / dn : 0.0;
        dd[static_cast<std::size_t>(a) * d + j] += static_cast<T>(g * (gp - gn));
        dd[static_cast<std::size_t>(p) * d + j] -= static_cast<T>(g * gp);
        dd[static_cast<std::size_t>(n) * d + j] += static_cast<T>(g * gn);
      }
    }
  }, tape.needs_grad(descriptors));
}

/// Sum of all elements.
template <typename T>
Var sum(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  double s = 0.0;
  for (T v : xv.values) s += v;
  Tensor<T> out({1});
  out[0] = static_cast<T>(s);
  const Var self = tape.next_id();
  return tape.push(std::move(out), [&tape, x, self]() {
    const T g = tape.grad(self)[0];
    Tensor<T>& dx = tape.grad(x);
    for (auto& v : dx.values) v += g;
  }, tape.needs_grad(x));
}

}  // namespace ops
}  // namespace sketchdesc
