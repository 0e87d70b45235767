// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include "eciwb/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "eciwb/error.hpp"
#include "eciwb/kernels.hpp"

namespace eciwb::ops {
namespace {

const kernels::KernelTable& K() { return kernels::active(); }

// Split of a shape around one axis: outer x len x inner.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void check_axis(const Tensor& x, std::size_t axis, const char* op) {
  if (axis >= x.rank())
    throw ValueError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(x.shape()));
}

void transpose2d(const double* src, std::size_t rows, std::size_t cols, double* dst) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.begin(), tail.end(), full.end() - static_cast<long>(tail.size()));
}

Tensor make_output(Shape shape, std::vector<double> values) {
  return Tensor::from(std::move(shape), std::move(values));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  auto mismatch = [&] {
    return ShapeError("matmul: incompatible shapes " + shape_str(as) + " and " + shape_str(bs));
  };
  if (as.size() < 2 || bs.size() < 2) throw mismatch();
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as.back();
  if (bs[bs.size() - 2] != k) throw mismatch();
  const std::size_t n = bs.back();
  const bool shared_b = bs.size() == 2;
  if (!shared_b && (bs.size() != as.size() || !std::equal(as.begin(), as.end() - 2, bs.begin())))
    throw mismatch();
  const std::size_t batch = shape_numel(as) / (m * k);

  Shape out_shape(as.begin(), as.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(batch * m * n, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t i = 0; i < batch; ++i)
    K().gemm_acc(m, n, k, ad + i * m * k, bd + (shared_b ? 0 : i * k * n), out.data() + i * m * n);
  Tensor result = make_output(std::move(out_shape), std::move(out));

  record_op("matmul", {a, b}, result, [a, b, m, n, k, batch, shared_b](std::span<const double> g) {
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    if (tracks_grad(a)) {
      std::vector<double> da(batch * m * k, 0.0);
      std::vector<double> bt(n * k);
      for (std::size_t i = 0; i < batch; ++i) {
        if (i == 0 || !shared_b) transpose2d(bd + (shared_b ? 0 : i * k * n), k, n, bt.data());
        K().gemm_acc(m, k, n, g.data() + i * m * n, bt.data(), da.data() + i * m * k);
      }
      accumulate_grad(a, da);
    }
    if (tracks_grad(b)) {
      std::vector<double> db(shared_b ? k * n : batch * k * n, 0.0);
      std::vector<double> at(k * m);
      for (std::size_t i = 0; i < batch; ++i) {
        transpose2d(ad + i * m * k, m, k, at.data());
        K().gemm_acc(k, n, m, at.data(), g.data() + i * m * n, db.data() + (shared_b ? 0 : i * k * n));
      }
      accumulate_grad(b, db);
    }
  });
  return result;
}

Tensor linear(const Tensor& x, const Tensor& w) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.empty() || ws.size() != 2 || xs.back() != ws[1])
    throw ShapeError("linear: input " + shape_str(xs) + " incompatible with weight " + shape_str(ws));
  const std::size_t in = ws[1];
  const std::size_t out_dim = ws[0];
  const std::size_t rows = x.numel() / in;

  std::vector<double> wt(in * out_dim);
  transpose2d(w.data().data(), out_dim, in, wt.data());
  std::vector<double> out(rows * out_dim, 0.0);
  K().gemm_acc(rows, out_dim, in, x.data().data(), wt.data(), out.data());
  Shape out_shape = xs;
  out_shape.back() = out_dim;
  Tensor result = make_output(std::move(out_shape), std::move(out));

  record_op("linear", {x, w}, result, [x, w, rows, in, out_dim](std::span<const double> g) {
    if (tracks_grad(x)) {
      std::vector<double> dx(rows * in, 0.0);
      K().gemm_acc(rows, in, out_dim, g.data(), w.data().data(), dx.data());
      accumulate_grad(x, dx);
    }
    if (tracks_grad(w)) {
      std::vector<double> gt(out_dim * rows);
      transpose2d(g.data(), rows, out_dim, gt.data());
      std::vector<double> dw(out_dim * in, 0.0);
      K().gemm_acc(out_dim, in, rows, gt.data(), x.data().data(), dw.data());
      accumulate_grad(w, dw);
    }
  });
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!is_suffix(a.shape(), b.shape()))
    throw ShapeError("add: cannot broadcast " + shape_str(b.shape()) + " onto " + shape_str(a.shape()));
  const std::size_t n = a.numel();
  const std::size_t nb = b.numel();
  std::vector<double> out(n);
  for (std::size_t off = 0; off < n; off += nb)
    K().add(nb, a.data().data() + off, b.data().data(), out.data() + off);
  Tensor result = make_output(a.shape(), std::move(out));

  record_op("add", {a, b}, result, [a, b, n, nb](std::span<const double> g) {
    accumulate_grad(a, g);
    if (tracks_grad(b)) {
      if (nb == n) {
        accumulate_grad(b, g);
      } else {
        std::vector<double> db(nb, 0.0);
        for (std::size_t off = 0; off < n; off += nb) K().add(nb, db.data(), g.data() + off, db.data());
        accumulate_grad(b, db);
      }
    }
  });
  return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (!is_suffix(a.shape(), b.shape()))
    throw ShapeError("mul: cannot broadcast " + shape_str(b.shape()) + " onto " + shape_str(a.shape()));
  const std::size_t n = a.numel();
  const std::size_t nb = b.numel();
  std::vector<double> out(n);
  for (std::size_t off = 0; off < n; off += nb)
    K().mul(nb, a.data().data() + off, b.data().data(), out.data() + off);
  Tensor result = make_output(a.shape(), std::move(out));

  record_op("mul", {a, b}, result, [a, b, n, nb](std::span<const double> g) {
    if (tracks_grad(a)) {
      std::vector<double> da(n);
      for (std::size_t off = 0; off < n; off += nb)
        K().mul(nb, g.data() + off, b.data().data(), da.data() + off);
      accumulate_grad(a, da);
    }
    if (tracks_grad(b)) {
      std::vector<double> db(nb, 0.0);
      std::vector<double> tmp(nb);
      for (std::size_t off = 0; off < n; off += nb) {
        K().mul(nb, g.data() + off, a.data().data() + off, tmp.data());
        K().add(nb, db.data(), tmp.data(), db.data());
      }
      accumulate_grad(b, db);
    }
  });
  return result;
}

Tensor scale(const Tensor& x, double alpha) {
  std::vector<double> out(x.numel());
  K().scale(out.size(), alpha, x.data().data(), out.data());
  Tensor result = make_output(x.shape(), std::move(out));
  record_op("scale", {x}, result, [x, alpha](std::span<const double> g) {
    std::vector<double> dx(g.size());
    K().scale(g.size(), alpha, g.data(), dx.data());
    accumulate_grad(x, dx);
  });
  return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  std::vector<double> values(x.data().begin(), x.data().end());
  Tensor result = Tensor::from(std::move(shape), std::move(values));
  record_op("reshape", {x}, result, [x](std::span<const double> g) { accumulate_grad(x, g); });
  return result;
}

Tensor flatten(const Tensor& x, std::size_t start_axis) {
  check_axis(x, start_axis, "flatten");
  Shape shape(x.shape().begin(), x.shape().begin() + static_cast<long>(start_axis));
  std::size_t tail = 1;
  for (std::size_t i = start_axis; i < x.rank(); ++i) tail *= x.shape()[i];
  shape.push_back(tail);
  return reshape(x, std::move(shape));
}

namespace {

// Index permutation for swapping two axes: out[perm[i]] = in[i].
std::vector<std::size_t> swap_permutation(const Shape& shape, std::size_t a0, std::size_t a1) {
  const std::size_t rank = shape.size();
  Shape out_shape = shape;
  std::swap(out_shape[a0], out_shape[a1]);
  std::vector<std::size_t> out_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) out_strides[i - 1] = out_strides[i] * out_shape[i];
  std::vector<std::size_t> perm(shape_numel(shape));
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < perm.size(); ++flat) {
    std::size_t dst = 0;
    for (std::size_t d = 0; d < rank; ++d) {
      std::size_t od = d == a0 ? a1 : (d == a1 ? a0 : d);
      dst += idx[d] * out_strides[od];
    }
    perm[flat] = dst;
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return perm;
}

}  // namespace

Tensor transpose(const Tensor& x, std::size_t axis0, std::size_t axis1) {
  check_axis(x, axis0, "transpose");
  check_axis(x, axis1, "transpose");
  Shape out_shape = x.shape();
  std::swap(out_shape[axis0], out_shape[axis1]);
  auto perm = std::make_shared<std::vector<std::size_t>>(swap_permutation(x.shape(), axis0, axis1));
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < in.size(); ++i) out[(*perm)[i]] = in[i];
  Tensor result = make_output(std::move(out_shape), std::move(out));
  record_op("transpose", {x}, result, [x, perm](std::span<const double> g) {
    std::vector<double> dx(g.size());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = g[(*perm)[i]];
    accumulate_grad(x, dx);
  });
  return result;
}

Tensor embedding(const Tensor& table, std::span<const std::int64_t> ids, const Shape& ids_shape) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be 2-D, got " + shape_str(table.shape()));
  if (shape_numel(ids_shape) != ids.size())
    throw ShapeError("embedding: ids shape " + shape_str(ids_shape) + " does not hold " +
                     std::to_string(ids.size()) + " ids");
  const std::size_t vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  const double* t = table.data().data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab)
      throw ValueError("embedding: id " + std::to_string(ids[i]) + " outside vocabulary of " +
                       std::to_string(vocab));
    std::copy_n(t + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  Shape out_shape = ids_shape;
  out_shape.push_back(d);
  Tensor result = make_output(std::move(out_shape), std::move(out));
  auto ids_copy = std::make_shared<std::vector<std::int64_t>>(ids.begin(), ids.end());
  record_op("embedding", {table}, result, [table, ids_copy, d](std::span<const double> g) {
    std::vector<double> dt(table.numel(), 0.0);
    for (std::size_t i = 0; i < ids_copy->size(); ++i)
      K().add(d, dt.data() + static_cast<std::size_t>((*ids_copy)[i]) * d, g.data() + i * d,
              dt.data() + static_cast<std::size_t>((*ids_copy)[i]) * d);
    accumulate_grad(table, dt);
  });
  return result;
}

Tensor silu(const Tensor& x) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] / (1.0 + std::exp(-in[i]));
  Tensor result = make_output(x.shape(), std::move(out));
  record_op("silu", {x}, result, [x](std::span<const double> g) {
    const auto in = x.data();
    std::vector<double> dx(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-in[i]));
      dx[i] = g[i] * s * (1.0 + in[i] * (1.0 - s));
    }
    accumulate_grad(x, dx);
  });
  return result;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor result = Tensor::scalar(total);
  record_op("sum", {x}, result, [x](std::span<const double> g) {
    accumulate_grad(x, std::vector<double>(x.numel(), g[0]));
  });
  return result;
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor result = Tensor::scalar(total / n);
  record_op("mean", {x}, result, [x, n](std::span<const double> g) {
    accumulate_grad(x, std::vector<double>(x.numel(), g[0] / n));
  });
  return result;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  check_axis(x, axis, "softmax");
  const AxisSplit s = split_at(x.shape(), axis);
  const auto in = x.data();
  auto out = std::make_shared<std::vector<double>>(in.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t r = 0; r < s.inner; ++r) {
      const std::size_t base = o * s.len * s.inner + r;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < s.len; ++i) mx = std::max(mx, in[base + i * s.inner]);
      double z = 0.0;
      for (std::size_t i = 0; i < s.len; ++i) {
        const double e = std::exp(in[base + i * s.inner] - mx);
        (*out)[base + i * s.inner] = e;
        z += e;
      }
      for (std::size_t i = 0; i < s.len; ++i) (*out)[base + i * s.inner] /= z;
    }
  }
  Tensor result = make_output(x.shape(), *out);
  record_op("softmax", {x}, result, [x, out, s](std::span<const double> g) {
    const auto& y = *out;
    std::vector<double> dx(y.size());
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t r = 0; r < s.inner; ++r) {
        const std::size_t base = o * s.len * s.inner + r;
        double dot = 0.0;
        for (std::size_t i = 0; i < s.len; ++i) dot += g[base + i * s.inner] * y[base + i * s.inner];
        for (std::size_t i = 0; i < s.len; ++i) {
          const std::size_t j = base + i * s.inner;
          dx[j] = y[j] * (g[j] - dot);
        }
      }
    }
    accumulate_grad(x, dx);
  });
  return result;
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets,
                     std::optional<std::int64_t> ignore_index, Reduction reduction) {
  if (logits.rank() == 0) throw ShapeError("cross_entropy: logits must have a class axis");
  const std::size_t classes = logits.shape().back();
  const std::size_t rows = logits.numel() / classes;
  if (targets.size() != rows)
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_str(logits.shape()));
  const auto in = logits.data();
  auto probs = std::make_shared<std::vector<double>>(in.size(), 0.0);
  auto tgt = std::make_shared<std::vector<std::int64_t>>(targets.begin(), targets.end());
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::int64_t t = targets[r];
    if (ignore_index && t == *ignore_index) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= classes)
      throw ValueError("cross_entropy: target " + std::to_string(t) + " outside [0, " +
                       std::to_string(classes) + ")");
    const double* row = in.data() + r * classes;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
    const double log_z = std::log(z) + mx;
    for (std::size_t c = 0; c < classes; ++c) (*probs)[r * classes + c] = std::exp(row[c] - log_z);
    total += log_z - row[static_cast<std::size_t>(t)];
    ++counted;
  }
  if (counted == 0) throw ValueError("cross_entropy: every row is ignored, the loss is undefined");
  const double denom = reduction == Reduction::kMean ? static_cast<double>(counted) : 1.0;
  Tensor result = Tensor::scalar(total / denom);

  record_op("cross_entropy", {logits}, result,
            [logits, probs, tgt, ignore_index, classes, denom](std::span<const double> g) {
              std::vector<double> dx(probs->size(), 0.0);
              const double coeff = g[0] / denom;
              for (std::size_t r = 0; r < tgt->size(); ++r) {
                const std::int64_t t = (*tgt)[r];
                if (ignore_index && t == *ignore_index) continue;
                for (std::size_t c = 0; c < classes; ++c)
                  dx[r * classes + c] = coeff * (*probs)[r * classes + c];
                dx[r * classes + static_cast<std::size_t>(t)] -= coeff;
              }
              accumulate_grad(logits, dx);
            });
  return result;
}

std::size_t pooled_length(std::size_t len, std::size_t kernel, std::size_t stride) {
  if (kernel == 0 || stride == 0) throw ValueError("pooling: kernel and stride must be >= 1");
  if (len < kernel)
    throw ShapeError("pooling: window " + std::to_string(kernel) + " larger than axis length " +
                     std::to_string(len));
  return (len - kernel) / stride + 1;
}

Tensor max_pool_1d(const Tensor& x, std::size_t axis, std::size_t kernel, std::size_t stride) {
  check_axis(x, axis, "max_pool_1d");
  const AxisSplit s = split_at(x.shape(), axis);
  const std::size_t out_len = pooled_length(s.len, kernel, stride);
  Shape out_shape = x.shape();
  out_shape[axis] = out_len;
  const auto in = x.data();
  std::vector<double> out(s.outer * out_len * s.inner);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t w = 0; w < out_len; ++w)
      for (std::size_t r = 0; r < s.inner; ++r) {
        std::size_t best = (o * s.len + w * stride) * s.inner + r;
        for (std::size_t i = 1; i < kernel; ++i) {
          const std::size_t j = (o * s.len + w * stride + i) * s.inner + r;
          if (in[j] > in[best]) best = j;
        }
        const std::size_t dst = (o * out_len + w) * s.inner + r;
        out[dst] = in[best];
        (*argmax)[dst] = best;
      }
  Tensor result = make_output(std::move(out_shape), std::move(out));
  record_op("max_pool_1d", {x}, result, [x, argmax](std::span<const double> g) {
    std::vector<double> dx(x.numel(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) dx[(*argmax)[i]] += g[i];
    accumulate_grad(x, dx);
  });
  return result;
}

Tensor avg_pool_1d(const Tensor& x, std::size_t axis, std::size_t kernel, std::size_t stride) {
  check_axis(x, axis, "avg_pool_1d");
  const AxisSplit s = split_at(x.shape(), axis);
  const std::size_t out_len = pooled_length(s.len, kernel, stride);
  Shape out_shape = x.shape();
  out_shape[axis] = out_len;
  const auto in = x.data();
  const double inv = 1.0 / static_cast<double>(kernel);
  std::vector<double> out(s.outer * out_len * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t w = 0; w < out_len; ++w)
      for (std::size_t r = 0; r < s.inner; ++r) {
        double acc = 0.0;
        for (std::size_t i = 0; i < kernel; ++i) acc += in[(o * s.len + w * stride + i) * s.inner + r];
        out[(o * out_len + w) * s.inner + r] = acc / static_cast<double>(kernel);
      }
  Tensor result = make_output(std::move(out_shape), std::move(out));
  record_op("avg_pool_1d", {x}, result, [x, s, out_len, kernel, stride, inv](std::span<const double> g) {
    std::vector<double> dx(x.numel(), 0.0);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t w = 0; w < out_len; ++w)
        for (std::size_t r = 0; r < s.inner; ++r) {
          const double share = g[(o * out_len + w) * s.inner + r] * inv;
          for (std::size_t i = 0; i < kernel; ++i) dx[(o * s.len + w * stride + i) * s.inner + r] += share;
        }
    accumulate_grad(x, dx);
  });
  return result;
}

Tensor rms_norm(const Tensor& x, const Tensor& weight, double eps) {
  if (weight.rank() != 1 || x.rank() == 0 || x.shape().back() != weight.dim(0))
    throw ShapeError("rms_norm: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  const std::size_t d = weight.dim(0);
  const std::size_t rows = x.numel() / d;
  const auto in = x.data();
  const auto w = weight.data();
  auto inv_rms = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(in.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t i = 0; i < d; ++i) ss += in[r * d + i] * in[r * d + i];
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
    (*inv_rms)[r] = inv;
    for (std::size_t i = 0; i < d; ++i) out[r * d + i] = in[r * d + i] * inv * w[i];
  }
  Tensor result = make_output(x.shape(), std::move(out));
  record_op("rms_norm", {x, weight}, result, [x, weight, inv_rms, d, rows](std::span<const double> g) {
    const auto in = x.data();
    const auto w = weight.data();
    if (tracks_grad(x)) {
      std::vector<double> dx(in.size());
      for (std::size_t r = 0; r < rows; ++r) {
        const double inv = (*inv_rms)[r];
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += g[r * d + i] * w[i] * in[r * d + i];
        const double coeff = inv * inv * inv * dot / static_cast<double>(d);
        for (std::size_t i = 0; i < d; ++i)
          dx[r * d + i] = inv * g[r * d + i] * w[i] - coeff * in[r * d + i];
      }
      accumulate_grad(x, dx);
    }
    if (tracks_grad(weight)) {
      std::vector<double> dw(d, 0.0);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < d; ++i) dw[i] += g[r * d + i] * in[r * d + i] * (*inv_rms)[r];
      accumulate_grad(weight, dw);
    }
  });
  return result;
}

Tensor causal_mask(const Tensor& scores) {
  if (scores.rank() < 2 || scores.shape()[scores.rank() - 1] != scores.shape()[scores.rank() - 2])
    throw ShapeError("causal_mask: expected [..., s, s], got " + shape_str(scores.shape()));
  const std::size_t s = scores.shape().back();
  const std::size_t mats = scores.numel() / (s * s);
  std::vector<double> out(scores.data().begin(), scores.data().end());
  for (std::size_t m = 0; m < mats; ++m)
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = i + 1; j < s; ++j) out[(m * s + i) * s + j] = -std::numeric_limits<double>::infinity();
  Tensor result = make_output(scores.shape(), std::move(out));
  record_op("causal_mask", {scores}, result, [scores, s, mats](std::span<const double> g) {
    std::vector<double> dx(g.begin(), g.end());
    for (std::size_t m = 0; m < mats; ++m)
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = i + 1; j < s; ++j) dx[(m * s + i) * s + j] = 0.0;
    accumulate_grad(scores, dx);
  });
  return result;
}

Tensor mask_positions(const Tensor& x, std::span<const std::uint8_t> keep) {
  if (x.rank() < 2 || keep.size() != x.dim(0) * x.dim(1))
    throw ShapeError("mask_positions: mask of " + std::to_string(keep.size()) + " entries for " +
                     shape_str(x.shape()));
  const std::size_t inner = x.numel() / keep.size();
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t p = 0; p < keep.size(); ++p)
    if (!keep[p]) std::fill_n(out.begin() + static_cast<long>(p * inner), inner, 0.0);
  Tensor result = make_output(x.shape(), std::move(out));
  auto mask = std::make_shared<std::vector<std::uint8_t>>(keep.begin(), keep.end());
  record_op("mask_positions", {x}, result, [x, mask, inner](std::span<const double> g) {
    std::vector<double> dx(g.begin(), g.end());
    for (std::size_t p = 0; p < mask->size(); ++p)
      if (!(*mask)[p]) std::fill_n(dx.begin() + static_cast<long>(p * inner), inner, 0.0);
    accumulate_grad(x, dx);
  });
  return result;
}

}  // namespace eciwb::ops
