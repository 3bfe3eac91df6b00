// SPDX-License-Identifier: Apache-2.0
#include "ftlab/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ftlab/error.hpp"
#include "ftlab/kernels/kernels.hpp"
#include "node.hpp"

namespace ftlab::ops {
namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr make_node(const char* op, Shape shape, std::initializer_list<const Tensor*> inputs) {
  auto node = std::make_shared<Node>();
  node->op = op;
  node->data = Buffer(ftlab::numel(shape));
  node->shape = std::move(shape);
  if (grad_enabled()) {
    bool any = false;
    for (const Tensor* t : inputs) any = any || (t->defined() && t->requires_grad());
    if (any) {
      node->requires_grad = true;
      for (const Tensor* t : inputs) {
        if (t->defined()) node->parents.push_back(t->node());
      }
    }
  }
  return node;
}

Tensor finish(NodePtr node) {
  for (double v : node->data.span()) {
    if (!std::isfinite(v)) {
      throw NonFiniteError(node->op, std::string("non-finite value produced by '") + node->op +
                                         "' " + to_string(node->shape));
    }
  }
  return Tensor(std::move(node));
}

bool wants(const NodePtr& parent) { return parent->requires_grad; }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

void require_defined(const char* op, const Tensor& t) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
}

std::size_t last_dim(const Tensor& t) { return t.shape().back(); }
std::size_t leading(const Tensor& t) { return t.numel() / last_dim(t); }

Tensor elementwise(const char* op, const Tensor& a, const Tensor& b, int kind) {
  require_defined(op, a);
  require_defined(op, b);
  require_same_shape(op, a, b);
  auto out = make_node(op, a.shape(), {&a, &b});
  const double* x = a.data().data();
  const double* y = b.data().data();
  double* o = out->data.data();
  const std::size_t n = a.numel();
  switch (kind) {
    case 0: for (std::size_t i = 0; i < n; ++i) o[i] = x[i] + y[i]; break;
    case 1: for (std::size_t i = 0; i < n; ++i) o[i] = x[i] - y[i]; break;
    default: for (std::size_t i = 0; i < n; ++i) o[i] = x[i] * y[i]; break;
  }
  if (out->requires_grad) {
    out->backward = [kind](Node& self) {
      const auto& k = kernels::active();
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      const std::size_t n = self.grad.size();
      const double* g = self.grad.data();
      if (kind == 2) {
        if (wants(pa)) {
          double* ga = pa->grad_buffer().data();
          const double* yb = pb->data.data();
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * yb[i];
        }
        if (wants(pb)) {
          double* gb = pb->grad_buffer().data();
          const double* xa = pa->data.data();
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * xa[i];
        }
        return;
      }
      if (wants(pa)) k.add(g, pa->grad_buffer().data(), n);
      if (wants(pb)) k.axpy(kind == 0 ? 1.0 : -1.0, g, pb->grad_buffer().data(), n);
    };
  }
  return finish(std::move(out));
}

void softmax_row(const double* x, double* y, std::size_t n, double inv_t) {
  double mx = x[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::exp((x[i] - mx) * inv_t);
    total += y[i];
  }
  const double inv = 1.0 / total;
  for (std::size_t i = 0; i < n; ++i) y[i] *= inv;
}

// y = (x - max) / T - log(sum exp((x - max) / T))
void log_softmax_row(const double* x, double* y, std::size_t n, double inv_t) {
  double mx = x[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = (x[i] - mx) * inv_t;
    total += std::exp(y[i]);
  }
  const double log_total = std::log(total);
  for (std::size_t i = 0; i < n; ++i) y[i] -= log_total;
}

void require_temperature(const char* op, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError(std::string(op) + ": temperature must be positive, got " +
                      std::to_string(temperature));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise("add", a, b, 0); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise("sub", a, b, 1); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise("mul", a, b, 2); }

Tensor scale(const Tensor& a, double factor) {
  require_defined("scale", a);
  auto out = make_node("scale", a.shape(), {&a});
  const double* x = a.data().data();
  double* o = out->data.data();
  for (std::size_t i = 0; i < a.numel(); ++i) o[i] = x[i] * factor;
  if (out->requires_grad) {
    out->backward = [factor](Node& self) {
      kernels::active().axpy(factor, self.grad.data(), self.parents[0]->grad_buffer().data(),
                             self.grad.size());
    };
  }
  return finish(std::move(out));
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_defined("add_bias", x);
  require_defined("add_bias", bias);
  if (bias.rank() != 1 || bias.dim(0) != last_dim(x)) {
    throw ShapeError("add_bias: bias " + to_string(bias.shape()) + " does not match " +
                     to_string(x.shape()));
  }
  auto out = make_node("add_bias", x.shape(), {&x, &bias});
  const std::size_t n = last_dim(x);
  const std::size_t rows = leading(x);
  const double* xs = x.data().data();
  const double* bs = bias.data().data();
  double* o = out->data.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) o[r * n + j] = xs[r * n + j] + bs[j];
  }
  if (out->requires_grad) {
    out->backward = [rows, n](Node& self) {
      const auto& k = kernels::active();
      auto& px = self.parents[0];
      auto& pb = self.parents[1];
      if (wants(px)) k.add(self.grad.data(), px->grad_buffer().data(), self.grad.size());
      if (wants(pb)) {
        double* gb = pb->grad_buffer().data();
        for (std::size_t r = 0; r < rows; ++r) k.add(self.grad.data() + r * n, gb, n);
      }
    };
  }
  return finish(std::move(out));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined("matmul", a);
  require_defined("matmul", b);
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: cannot multiply " + to_string(a.shape()) + " by " +
                     to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), kk = a.dim(1), n = b.dim(1);
  auto out = make_node("matmul", {m, n}, {&a, &b});
  const auto& k = kernels::active();
  const double* A = a.data().data();
  const double* B = b.data().data();
  double* C = out->data.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < kk; ++p) k.axpy(A[i * kk + p], B + p * n, C + i * n, n);
  }
  if (out->requires_grad) {
    out->backward = [m, kk, n](Node& self) {
      const auto& k = kernels::active();
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      const double* G = self.grad.data();
      if (wants(pa)) {
        double* GA = pa->grad_buffer().data();
        const double* B = pb->data.data();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < kk; ++p) GA[i * kk + p] += k.dot(G + i * n, B + p * n, n);
        }
      }
      if (wants(pb)) {
        double* GB = pb->grad_buffer().data();
        const double* A = pa->data.data();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < kk; ++p) k.axpy(A[i * kk + p], G + i * n, GB + p * n, n);
        }
      }
    };
  }
  return finish(std::move(out));
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_defined("linear", x);
  require_defined("linear", weight);
  if (weight.rank() != 2 || weight.dim(1) != last_dim(x)) {
    throw ShapeError("linear: weight " + to_string(weight.shape()) + " does not accept input " +
                     to_string(x.shape()));
  }
  const std::size_t in = weight.dim(1), outd = weight.dim(0), rows = leading(x);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != outd)) {
    throw ShapeError("linear: bias " + to_string(bias.shape()) + " does not match weight " +
                     to_string(weight.shape()));
  }
  Shape shape = x.shape();
  shape.back() = outd;
  auto out = make_node("linear", std::move(shape), {&x, &weight, &bias});
  const auto& k = kernels::active();
  const double* X = x.data().data();
  const double* W = weight.data().data();
  const double* bs = bias.defined() ? bias.data().data() : nullptr;
  double* Y = out->data.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < outd; ++o) {
      Y[r * outd + o] = k.dot(X + r * in, W + o * in, in) + (bs ? bs[o] : 0.0);
    }
  }
  if (out->requires_grad) {
    const bool has_bias = bias.defined();
    out->backward = [rows, in, outd, has_bias](Node& self) {
      const auto& k = kernels::active();
      auto& px = self.parents[0];
      auto& pw = self.parents[1];
      const double* G = self.grad.data();
      if (wants(px)) {
        double* GX = px->grad_buffer().data();
        const double* W = pw->data.data();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t o = 0; o < outd; ++o) k.axpy(G[r * outd + o], W + o * in, GX + r * in, in);
        }
      }
      if (wants(pw)) {
        double* GW = pw->grad_buffer().data();
        const double* X = px->data.data();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t o = 0; o < outd; ++o) k.axpy(G[r * outd + o], X + r * in, GW + o * in, in);
        }
      }
      if (has_bias && wants(self.parents[2])) {
        double* GB = self.parents[2]->grad_buffer().data();
        for (std::size_t r = 0; r < rows; ++r) k.add(G + r * outd, GB, outd);
      }
    };
  }
  return finish(std::move(out));
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_defined("bmm", a);
  require_defined("bmm", b);
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != (transpose_b ? b.dim(2) : b.dim(1))) {
    throw ShapeError("bmm: cannot multiply " + to_string(a.shape()) + " by " +
                     to_string(b.shape()) + (transpose_b ? "^T" : ""));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), kk = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  auto out = make_node("bmm", {batch, m, n}, {&a, &b});
  const auto& k = kernels::active();
  for (std::size_t t = 0; t < batch; ++t) {
    const double* A = a.data().data() + t * m * kk;
    const double* B = b.data().data() + t * kk * n;
    double* C = out->data.data() + t * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      if (transpose_b) {
        for (std::size_t j = 0; j < n; ++j) C[i * n + j] = k.dot(A + i * kk, B + j * kk, kk);
      } else {
        for (std::size_t p = 0; p < kk; ++p) k.axpy(A[i * kk + p], B + p * n, C + i * n, n);
      }
    }
  }
  if (out->requires_grad) {
    out->backward = [batch, m, kk, n, transpose_b](Node& self) {
      const auto& k = kernels::active();
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      double* GA = wants(pa) ? pa->grad_buffer().data() : nullptr;
      double* GB = wants(pb) ? pb->grad_buffer().data() : nullptr;
      for (std::size_t t = 0; t < batch; ++t) {
        const double* G = self.grad.data() + t * m * n;
        const double* A = pa->data.data() + t * m * kk;
        const double* B = pb->data.data() + t * kk * n;
        double* ga = GA ? GA + t * m * kk : nullptr;
        double* gb = GB ? GB + t * kk * n : nullptr;
        for (std::size_t i = 0; i < m; ++i) {
          if (transpose_b) {
            for (std::size_t j = 0; j < n; ++j) {
              const double g = G[i * n + j];
              if (ga) k.axpy(g, B + j * kk, ga + i * kk, kk);
              if (gb) k.axpy(g, A + i * kk, gb + j * kk, kk);
            }
          } else {
            for (std::size_t p = 0; p < kk; ++p) {
              if (ga) ga[i * kk + p] += k.dot(G + i * n, B + p * n, n);
              if (gb) k.axpy(A[i * kk + p], G + i * n, gb + p * n, n);
            }
          }
        }
      }
    };
  }
  return finish(std::move(out));
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined("reshape", x);
  if (ftlab::numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  auto out = make_node("reshape", std::move(shape), {&x});
  std::copy(x.data().begin(), x.data().end(), out->data.data());
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      kernels::active().add(self.grad.data(), self.parents[0]->grad_buffer().data(),
                            self.grad.size());
    };
  }
  return finish(std::move(out));
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  require_defined("permute", x);
  const std::size_t rank = x.rank();
  std::vector<bool> used(rank, false);
  if (order.size() != rank) throw ShapeError("permute: order has wrong length");
  for (std::size_t a : order) {
    if (a >= rank || used[a]) throw ShapeError("permute: invalid axis order");
    used[a] = true;
  }
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) shape[i] = x.dim(order[i]);
  // Source offset for each destination element, computed once and shared by
  // forward and backward.
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * x.dim(i);
  auto offsets = std::make_shared<std::vector<std::size_t>>(x.numel());
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < x.numel(); ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < rank; ++i) src += idx[i] * in_stride[order[i]];
    (*offsets)[flat] = src;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < shape[i]) break;
      idx[i] = 0;
    }
  }
  auto out = make_node("permute", std::move(shape), {&x});
  const double* src = x.data().data();
  double* dst = out->data.data();
  for (std::size_t i = 0; i < offsets->size(); ++i) dst[i] = src[(*offsets)[i]];
  if (out->requires_grad) {
    out->backward = [offsets](Node& self) {
      double* g = self.parents[0]->grad_buffer().data();
      for (std::size_t i = 0; i < offsets->size(); ++i) g[(*offsets)[i]] += self.grad[i];
    };
  }
  return finish(std::move(out));
}

Tensor transpose(const Tensor& x, std::size_t axis0, std::size_t axis1) {
  std::vector<std::size_t> order(x.rank());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (axis0 >= order.size() || axis1 >= order.size()) throw ShapeError("transpose: bad axis");
  std::swap(order[axis0], order[axis1]);
  return permute(x, order);
}

Tensor masked_fill(const Tensor& x, std::span<const std::uint8_t> mask, double value) {
  require_defined("masked_fill", x);
  if (mask.size() != x.numel()) {
    throw ShapeError("masked_fill: mask has " + std::to_string(mask.size()) +
                     " entries for tensor " + to_string(x.shape()));
  }
  auto out = make_node("masked_fill", x.shape(), {&x});
  const double* src = x.data().data();
  double* dst = out->data.data();
  for (std::size_t i = 0; i < mask.size(); ++i) dst[i] = mask[i] ? value : src[i];
  if (out->requires_grad) {
    out->backward = [keep = std::vector<std::uint8_t>(mask.begin(), mask.end())](Node& self) {
      double* g = self.parents[0]->grad_buffer().data();
      for (std::size_t i = 0; i < keep.size(); ++i) {
        if (!keep[i]) g[i] += self.grad[i];
      }
    };
  }
  return finish(std::move(out));
}

Tensor softmax(const Tensor& x, double temperature) {
  require_defined("softmax", x);
  require_temperature("softmax", temperature);
  const std::size_t n = last_dim(x), rows = leading(x);
  const double inv_t = 1.0 / temperature;
  auto out = make_node("softmax", x.shape(), {&x});
  for (std::size_t r = 0; r < rows; ++r) {
    softmax_row(x.data().data() + r * n, out->data.data() + r * n, n, inv_t);
  }
  if (out->requires_grad) {
    out->backward = [n, rows, inv_t](Node& self) {
      double* g = self.parents[0]->grad_buffer().data();
      const auto& k = kernels::active();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = self.data.data() + r * n;
        const double* dy = self.grad.data() + r * n;
        const double s = k.dot(dy, y, n);
        for (std::size_t i = 0; i < n; ++i) g[r * n + i] += y[i] * (dy[i] - s) * inv_t;
      }
    };
  }
  return finish(std::move(out));
}

Tensor log_softmax(const Tensor& x, double temperature) {
  require_defined("log_softmax", x);
  require_temperature("log_softmax", temperature);
  const std::size_t n = last_dim(x), rows = leading(x);
  const double inv_t = 1.0 / temperature;
  auto out = make_node("log_softmax", x.shape(), {&x});
  for (std::size_t r = 0; r < rows; ++r) {
    log_softmax_row(x.data().data() + r * n, out->data.data() + r * n, n, inv_t);
  }
  if (out->requires_grad) {
    out->backward = [n, rows, inv_t](Node& self) {
      double* g = self.parents[0]->grad_buffer().data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = self.data.data() + r * n;
        const double* dy = self.grad.data() + r * n;
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += dy[i];
        for (std::size_t i = 0; i < n; ++i) g[r * n + i] += (dy[i] - std::exp(y[i]) * s) * inv_t;
      }
    };
  }
  return finish(std::move(out));
}

Tensor gelu(const Tensor& x) {
  require_defined("gelu", x);
  auto out = make_node("gelu", x.shape(), {&x});
  const double* src = x.data().data();
  double* dst = out->data.data();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    dst[i] = 0.5 * src[i] * (1.0 + std::erf(src[i] * std::numbers::sqrt2 * 0.5));
  }
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      auto& p = self.parents[0];
      double* g = p->grad_buffer().data();
      const double* xs = p->data.data();
      constexpr double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const double v = xs[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 * 0.5));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        g[i] += self.grad[i] * (cdf + v * pdf);
      }
    };
  }
  return finish(std::move(out));
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_defined("layer_norm", x);
  const std::size_t n = last_dim(x), rows = leading(x);
  if (gamma.shape() != Shape{n} || beta.shape() != Shape{n}) {
    throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(n) + "]");
  }
  auto out = make_node("layer_norm", x.shape(), {&x, &gamma, &beta});
  auto stats = std::make_shared<std::vector<double>>(2 * rows);  // mean, rstd
  const double* src = x.data().data();
  const double* gm = gamma.data().data();
  const double* bt = beta.data().data();
  double* dst = out->data.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = src + r * n;
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += row[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(n);
    const double rstd = 1.0 / std::sqrt(var + eps);
    (*stats)[2 * r] = mu;
    (*stats)[2 * r + 1] = rstd;
    for (std::size_t i = 0; i < n; ++i) dst[r * n + i] = (row[i] - mu) * rstd * gm[i] + bt[i];
  }
  if (out->requires_grad) {
    out->backward = [stats, rows, n](Node& self) {
      auto& px = self.parents[0];
      auto& pg = self.parents[1];
      auto& pb = self.parents[2];
      const double* xs = px->data.data();
      const double* gm = pg->data.data();
      double* gx = wants(px) ? px->grad_buffer().data() : nullptr;
      double* gg = wants(pg) ? pg->grad_buffer().data() : nullptr;
      double* gb = wants(pb) ? pb->grad_buffer().data() : nullptr;
      std::vector<double> xhat(n), dxhat(n);
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t r = 0; r < rows; ++r) {
        const double mu = (*stats)[2 * r];
        const double rstd = (*stats)[2 * r + 1];
        const double* dy = self.grad.data() + r * n;
        double mean_d = 0.0, mean_dx = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          xhat[i] = (xs[r * n + i] - mu) * rstd;
          dxhat[i] = dy[i] * gm[i];
          mean_d += dxhat[i];
          mean_dx += dxhat[i] * xhat[i];
          if (gg) gg[i] += dy[i] * xhat[i];
          if (gb) gb[i] += dy[i];
        }
        mean_d *= inv_n;
        mean_dx *= inv_n;
        if (gx) {
          for (std::size_t i = 0; i < n; ++i) {
            gx[r * n + i] += rstd * (dxhat[i] - mean_d - xhat[i] * mean_dx);
          }
        }
      }
    };
  }
  return finish(std::move(out));
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids) {
  require_defined("embedding", table);
  if (table.rank() != 2) throw ShapeError("embedding: table must be 2-D");
  if (ids.empty()) throw ShapeError("embedding: no ids");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  for (std::int32_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw ShapeError("embedding: id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
  }
  auto out = make_node("embedding", {ids.size(), d}, {&table});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(table.data().data() + static_cast<std::size_t>(ids[i]) * d, d,
                out->data.data() + i * d);
  }
  if (out->requires_grad) {
    out->backward = [rows = std::vector<std::int32_t>(ids.begin(), ids.end()), d](Node& self) {
      const auto& k = kernels::active();
      double* g = self.parents[0]->grad_buffer().data();
      for (std::size_t i = 0; i < rows.size(); ++i) {
        k.add(self.grad.data() + i * d, g + static_cast<std::size_t>(rows[i]) * d, d);
      }
    };
  }
  return finish(std::move(out));
}

Tensor dropout(const Tensor& x, double p, bool train, Rng& rng) {
  require_defined("dropout", x);
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("dropout probability must be in [0, 1), got " + std::to_string(p));
  }
  if (!train || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  for (double& m : *mask) m = rng.bernoulli(p) ? 0.0 : keep_scale;
  auto out = make_node("dropout", x.shape(), {&x});
  const double* src = x.data().data();
  double* dst = out->data.data();
  for (std::size_t i = 0; i < mask->size(); ++i) dst[i] = src[i] * (*mask)[i];
  if (out->requires_grad) {
    out->backward = [mask](Node& self) {
      double* g = self.parents[0]->grad_buffer().data();
      for (std::size_t i = 0; i < mask->size(); ++i) g[i] += self.grad[i] * (*mask)[i];
    };
  }
  return finish(std::move(out));
}

Tensor sum(const Tensor& x) {
  require_defined("sum", x);
  auto out = make_node("sum", {1}, {&x});
  double total = 0.0;
  for (double v : x.data()) total += v;
  out->data[0] = total;
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
    };
  }
  return finish(std::move(out));
}

Tensor mean(const Tensor& x) {
  require_defined("mean", x);
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor select_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_defined("select_rows", x);
  const std::size_t d = last_dim(x), n = leading(x);
  if (rows.empty()) throw ShapeError("select_rows: no rows requested");
  for (std::size_t r : rows) {
    if (r >= n) throw ShapeError("select_rows: row " + std::to_string(r) + " out of range");
  }
  auto out = make_node("select_rows", {rows.size(), d}, {&x});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(x.data().data() + rows[i] * d, d, out->data.data() + i * d);
  }
  if (out->requires_grad) {
    out->backward = [picked = std::vector<std::size_t>(rows.begin(), rows.end()), d](Node& self) {
      const auto& k = kernels::active();
      double* g = self.parents[0]->grad_buffer().data();
      for (std::size_t i = 0; i < picked.size(); ++i) {
        k.add(self.grad.data() + i * d, g + picked[i] * d, d);
      }
    };
  }
  return finish(std::move(out));
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_defined("cross_entropy", logits);
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be [B x C]");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(batch));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ShapeError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
  }
  auto out = make_node("cross_entropy", {1}, {&logits});
  auto probs = std::make_shared<std::vector<double>>(batch * classes);
  double total = 0.0;
  std::vector<double> logp(classes);
  for (std::size_t b = 0; b < batch; ++b) {
    log_softmax_row(logits.data().data() + b * classes, logp.data(), classes, 1.0);
    total -= logp[static_cast<std::size_t>(labels[b])];
    for (std::size_t c = 0; c < classes; ++c) (*probs)[b * classes + c] = std::exp(logp[c]);
  }
  out->data[0] = total / static_cast<double>(batch);
  if (out->requires_grad) {
    out->backward = [probs, ys = std::vector<int>(labels.begin(), labels.end()), batch,
                     classes](Node& self) {
      double* g = self.parents[0]->grad_buffer().data();
      const double up = self.grad[0] / static_cast<double>(batch);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < classes; ++c) {
          const double target = static_cast<std::size_t>(ys[b]) == c ? 1.0 : 0.0;
          g[b * classes + c] += up * ((*probs)[b * classes + c] - target);
        }
      }
    };
  }
  return finish(std::move(out));
}

Tensor kl_divergence(const Tensor& p_logits, const Tensor& q_logits, double temperature) {
  require_defined("kl_divergence", p_logits);
  require_defined("kl_divergence", q_logits);
  require_same_shape("kl_divergence", p_logits, q_logits);
  require_temperature("kl_divergence", temperature);
  if (q_logits.rank() != 2) throw ShapeError("kl_divergence: logits must be [B x C]");
  const std::size_t batch = q_logits.dim(0), classes = q_logits.dim(1);
  const double inv_t = 1.0 / temperature;
  auto out = make_node("kl_divergence", {1}, {&q_logits});
  // Stored per element: p then q.
  auto dists = std::make_shared<std::vector<double>>(2 * batch * classes);
  std::vector<double> logp(classes), logq(classes);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    log_softmax_row(p_logits.data().data() + b * classes, logp.data(), classes, inv_t);
    log_softmax_row(q_logits.data().data() + b * classes, logq.data(), classes, inv_t);
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::exp(logp[c]);
      total += p * (logp[c] - logq[c]);
      (*dists)[2 * (b * classes + c)] = p;
      (*dists)[2 * (b * classes + c) + 1] = std::exp(logq[c]);
    }
  }
  out->data[0] = total / static_cast<double>(batch);
  if (out->requires_grad) {
    out->backward = [dists, batch, classes, inv_t](Node& self) {
      double* g = self.parents[0]->grad_buffer().data();
      const double up = self.grad[0] * inv_t / static_cast<double>(batch);
      for (std::size_t i = 0; i < batch * classes; ++i) {
        g[i] += up * ((*dists)[2 * i + 1] - (*dists)[2 * i]);
      }
    };
  }
  return finish(std::move(out));
}

Tensor low_rank_linear(const Tensor& x, const Tensor& weight, const Tensor& bias,
                       const Tensor& lora_a, const Tensor& lora_b, double scale,
                       double dropout_p, bool train, Rng& rng) {
  require_defined("low_rank_linear", x);
  require_defined("low_rank_linear", weight);
  require_defined("low_rank_linear", lora_a);
  require_defined("low_rank_linear", lora_b);
  const std::size_t in = weight.dim(1), outd = weight.dim(0), rows = leading(x);
  if (weight.rank() != 2 || last_dim(x) != in) {
    throw ShapeError("low_rank_linear: weight " + to_string(weight.shape()) +
                     " does not accept input " + to_string(x.shape()));
  }
  const std::size_t r = lora_a.dim(0);
  if (lora_a.shape() != Shape{r, in} || lora_b.shape() != Shape{outd, r}) {
    throw ShapeError("low_rank_linear: adapter shapes A" + to_string(lora_a.shape()) + " B" +
                     to_string(lora_b.shape()) + " do not fit weight " +
                     to_string(weight.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{outd}) {
    throw ShapeError("low_rank_linear: bias does not match weight");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    throw ConfigError("lora dropout must be in [0, 1), got " + std::to_string(dropout_p));
  }
  Shape shape = x.shape();
  shape.back() = outd;
  auto out = make_node("low_rank_linear", std::move(shape), {&x, &weight, &bias, &lora_a, &lora_b});
  const auto& k = kernels::active();
  const double* X = x.data().data();

  // Adapter input: x with the dropout keep-mask applied in train mode.
  const bool drop = train && dropout_p > 0.0;
  const double keep_scale = drop ? 1.0 / (1.0 - dropout_p) : 1.0;
  auto keep = std::make_shared<std::vector<std::uint8_t>>();
  std::vector<double> dropped;
  if (drop) {
    keep->resize(x.numel());
    dropped.resize(x.numel());
    for (std::size_t i = 0; i < x.numel(); ++i) {
      (*keep)[i] = rng.bernoulli(dropout_p) ? 0 : 1;
      dropped[i] = (*keep)[i] ? X[i] * keep_scale : 0.0;
    }
  }
  const double* XD = drop ? dropped.data() : X;
  auto hidden = std::make_shared<Buffer>(rows * r);
  const double* A = lora_a.data().data();
  const double* B = lora_b.data().data();
  const double* W = weight.data().data();
  const double* bs = bias.defined() ? bias.data().data() : nullptr;
  double* H = hidden->data();
  double* Y = out->data.data();
  for (std::size_t row = 0; row < rows; ++row) {
    for (std::size_t j = 0; j < r; ++j) H[row * r + j] = k.dot(XD + row * in, A + j * in, in);
    for (std::size_t o = 0; o < outd; ++o) {
      const double base = k.dot(X + row * in, W + o * in, in) + (bs ? bs[o] : 0.0);
      Y[row * outd + o] = base + scale * k.dot(H + row * r, B + o * r, r);
    }
  }
  if (out->requires_grad) {
    const bool has_bias = bias.defined();
    out->backward = [=](Node& self) {
      const auto& k = kernels::active();
      auto& px = self.parents[0];
      auto& pw = self.parents[1];
      auto& pbias = self.parents[2];
      auto& pa = self.parents[has_bias ? 3 : 2];
      auto& pb = self.parents[has_bias ? 4 : 3];
      const double* G = self.grad.data();
      const double* X = px->data.data();
      const double* H = hidden->data();
      const double* A = pa->data.data();
      const double* B = pb->data.data();
      const double* W = pw->data.data();

      std::vector<double> dh(rows * r, 0.0);
      for (std::size_t row = 0; row < rows; ++row) {
        for (std::size_t o = 0; o < outd; ++o) {
          k.axpy(scale * G[row * outd + o], B + o * r, dh.data() + row * r, r);
        }
      }
      if (wants(pb)) {
        double* GB = pb->grad_buffer().data();
        for (std::size_t row = 0; row < rows; ++row) {
          for (std::size_t o = 0; o < outd; ++o) {
            k.axpy(scale * G[row * outd + o], H + row * r, GB + o * r, r);
          }
        }
      }
      if (wants(pa)) {
        double* GA = pa->grad_buffer().data();
        std::vector<double> xd(in);
        for (std::size_t row = 0; row < rows; ++row) {
          for (std::size_t i = 0; i < in; ++i) {
            const double v = X[row * in + i];
            xd[i] = !drop ? v : ((*keep)[row * in + i] ? v * keep_scale : 0.0);
          }
          for (std::size_t j = 0; j < r; ++j) k.axpy(dh[row * r + j], xd.data(), GA + j * in, in);
        }
      }
      if (wants(pw)) {
        double* GW = pw->grad_buffer().data();
        for (std::size_t row = 0; row < rows; ++row) {
          for (std::size_t o = 0; o < outd; ++o) k.axpy(G[row * outd + o], X + row * in, GW + o * in, in);
        }
      }
      if (has_bias && wants(pbias)) {
        double* GBias = pbias->grad_buffer().data();
        for (std::size_t row = 0; row < rows; ++row) k.add(G + row * outd, GBias, outd);
      }
      if (wants(px)) {
        double* GX = px->grad_buffer().data();
        std::vector<double> adapter_in(in);
        for (std::size_t row = 0; row < rows; ++row) {
          for (std::size_t o = 0; o < outd; ++o) k.axpy(G[row * outd + o], W + o * in, GX + row * in, in);
          std::fill(adapter_in.begin(), adapter_in.end(), 0.0);
          for (std::size_t j = 0; j < r; ++j) k.axpy(dh[row * r + j], A + j * in, adapter_in.data(), in);
          for (std::size_t i = 0; i < in; ++i) {
            const double mask = !drop ? 1.0 : ((*keep)[row * in + i] ? keep_scale : 0.0);
            GX[row * in + i] += adapter_in[i] * mask;
          }
        }
      }
    };
  }
  return finish(std::move(out));
}

}  // namespace ftlab::ops
