// SPDX-License-Identifier: Apache-2.0
#include "scenediff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "scenediff/errors.hpp"
#include "scenediff/kernels/kernels.hpp"

namespace scenediff {
namespace {

using std::size_t;

bool wants(const Node& n, size_t i) { return n.parents[i]->requires_grad; }

const std::vector<double>& value(const Node& n, size_t i) { return n.parents[i]->data; }

void transpose_into(const double* src, size_t rows, size_t cols, double* dst) {
  for (size_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

void accumulate(Node& parent, const double* g, size_t n) {
  kernels::active().axpy(n, 1.0, g, parent.grad_buffer());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

struct BcastLayout {
  size_t outer, mid, inner;
};

BcastLayout bcast_layout(const Tensor& x, const Tensor& b, std::int64_t axis, const char* op) {
  const auto xn = x.ndim();
  const auto bn = b.ndim();
  if (axis < 0) axis = xn - bn;
  if (axis < 0 || axis + bn > xn) throw ShapeError(std::string(op) + ": bad broadcast axis");
  for (std::int64_t i = 0; i < bn; ++i)
    if (x.shape()[static_cast<size_t>(axis + i)] != b.shape()[static_cast<size_t>(i)])
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(b.shape()) + " into " +
                       shape_str(x.shape()));
  BcastLayout l{1, static_cast<size_t>(b.numel()), 1};
  for (std::int64_t i = 0; i < axis; ++i) l.outer *= static_cast<size_t>(x.shape()[static_cast<size_t>(i)]);
  for (std::int64_t i = axis + bn; i < xn; ++i) l.inner *= static_cast<size_t>(x.shape()[static_cast<size_t>(i)]);
  return l;
}

size_t last_extent(const Tensor& x) { return static_cast<size_t>(x.shape().back()); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(static_cast<size_t>(a.numel()));
  kernels::active().add(out.size(), a.data().data(), b.data().data(), out.data());
  return detail::make_result(a.shape(), std::move(out), {a, b}, "add", [](Node& self) {
    for (size_t i = 0; i < 2; ++i)
      if (wants(self, i)) accumulate(*self.parents[i], self.grad.data(), self.grad.size());
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(static_cast<size_t>(a.numel()));
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, "sub", [](Node& self) {
    if (wants(self, 0)) accumulate(*self.parents[0], self.grad.data(), self.grad.size());
    if (wants(self, 1))
      kernels::active().axpy(self.grad.size(), -1.0, self.grad.data(), self.parents[1]->grad_buffer());
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(static_cast<size_t>(a.numel()));
  kernels::active().mul(out.size(), a.data().data(), b.data().data(), out.data());
  return detail::make_result(a.shape(), std::move(out), {a, b}, "mul", [](Node& self) {
    std::vector<double> tmp(self.grad.size());
    for (size_t i = 0; i < 2; ++i) {
      if (!wants(self, i)) continue;
      kernels::active().mul(tmp.size(), self.grad.data(), value(self, 1 - i).data(), tmp.data());
      accumulate(*self.parents[i], tmp.data(), tmp.size());
    }
  });
}

Tensor scale(const Tensor& x, double s) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= s;
  return detail::make_result(x.shape(), std::move(out), {x}, "scale", [s](Node& self) {
    kernels::active().axpy(self.grad.size(), s, self.grad.data(), self.parents[0]->grad_buffer());
  });
}

Tensor add_bcast(const Tensor& x, const Tensor& b, std::int64_t axis) {
  const auto l = bcast_layout(x, b, axis, "add_bcast");
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto bd = b.data();
  for (size_t o = 0; o < l.outer; ++o)
    for (size_t m = 0; m < l.mid; ++m) {
      double* row = out.data() + (o * l.mid + m) * l.inner;
      for (size_t i = 0; i < l.inner; ++i) row[i] += bd[m];
    }
  return detail::make_result(x.shape(), std::move(out), {x, b}, "add_bcast", [l](Node& self) {
    if (wants(self, 0)) accumulate(*self.parents[0], self.grad.data(), self.grad.size());
    if (wants(self, 1)) {
      double* gb = self.parents[1]->grad_buffer();
      for (size_t o = 0; o < l.outer; ++o)
        for (size_t m = 0; m < l.mid; ++m) {
          const double* row = self.grad.data() + (o * l.mid + m) * l.inner;
          for (size_t i = 0; i < l.inner; ++i) gb[m] += row[i];
        }
    }
  });
}

Tensor mul_bcast(const Tensor& x, const Tensor& b, std::int64_t axis) {
  const auto l = bcast_layout(x, b, axis, "mul_bcast");
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto bd = b.data();
  for (size_t o = 0; o < l.outer; ++o)
    for (size_t m = 0; m < l.mid; ++m) {
      double* row = out.data() + (o * l.mid + m) * l.inner;
      for (size_t i = 0; i < l.inner; ++i) row[i] *= bd[m];
    }
  return detail::make_result(x.shape(), std::move(out), {x, b}, "mul_bcast", [l](Node& self) {
    const auto& xd = value(self, 0);
    const auto& bd = value(self, 1);
    if (wants(self, 0)) {
      double* gx = self.parents[0]->grad_buffer();
      for (size_t o = 0; o < l.outer; ++o)
        for (size_t m = 0; m < l.mid; ++m) {
          const size_t base = (o * l.mid + m) * l.inner;
          for (size_t i = 0; i < l.inner; ++i) gx[base + i] += self.grad[base + i] * bd[m];
        }
    }
    if (wants(self, 1)) {
      double* gb = self.parents[1]->grad_buffer();
      for (size_t o = 0; o < l.outer; ++o)
        for (size_t m = 0; m < l.mid; ++m) {
          const size_t base = (o * l.mid + m) * l.inner;
          for (size_t i = 0; i < l.inner; ++i) gb[m] += self.grad[base + i] * xd[base + i];
        }
    }
  });
}

Tensor recip(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = 1.0 / v;
  return detail::make_result(x.shape(), std::move(out), {x}, "recip", [](Node& self) {
    const auto& xd = value(self, 0);
    double* g = self.parents[0]->grad_buffer();
    for (size_t i = 0; i < xd.size(); ++i) g[i] -= self.grad[i] / (xd[i] * xd[i]);
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() < 1 || b.ndim() != 2) throw ShapeError("matmul: b must be 2-D");
  const size_t k = last_extent(a);
  if (static_cast<size_t>(b.shape()[0]) != k)
    throw ShapeError("matmul: inner extents differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const size_t n = static_cast<size_t>(b.shape()[1]);
  const size_t m = static_cast<size_t>(a.numel()) / k;
  Shape out_shape = a.ndim() == 1 ? Shape{1} : a.shape();
  out_shape.back() = static_cast<std::int64_t>(n);
  if (a.ndim() == 1) out_shape = {static_cast<std::int64_t>(n)};
  std::vector<double> out(m * n, 0.0);
  kernels::active().gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  return detail::make_result(out_shape, std::move(out), {a, b}, "matmul", [m, k, n](Node& self) {
    const auto& ad = value(self, 0);
    const auto& bd = value(self, 1);
    const auto& kt = kernels::active();
    if (wants(self, 0)) {
      std::vector<double> bt(k * n);
      transpose_into(bd.data(), k, n, bt.data());
      kt.gemm_acc(self.grad.data(), bt.data(), self.parents[0]->grad_buffer(), m, n, k);
    }
    if (wants(self, 1)) {
      std::vector<double> at(m * k);
      transpose_into(ad.data(), m, k, at.data());
      kt.gemm_acc(at.data(), self.grad.data(), self.parents[1]->grad_buffer(), k, m, n);
    }
  });
}

namespace {

size_t batch_of(const Tensor& t, const char* op) {
  if (t.ndim() < 3) throw ShapeError(std::string(op) + ": needs at least 3 axes");
  size_t b = 1;
  for (std::int64_t i = 0; i + 2 < t.ndim(); ++i) b *= static_cast<size_t>(t.shape()[static_cast<size_t>(i)]);
  return b;
}

}  // namespace

Tensor bmm(const Tensor& a, const Tensor& b) {
  const size_t batch = batch_of(a, "bmm");
  if (batch_of(b, "bmm") != batch) throw ShapeError("bmm: batch extents differ");
  const size_t m = static_cast<size_t>(a.dim(-2)), k = static_cast<size_t>(a.dim(-1));
  const size_t n = static_cast<size_t>(b.dim(-1));
  if (static_cast<size_t>(b.dim(-2)) != k)
    throw ShapeError("bmm: inner extents differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Shape out_shape = a.shape();
  out_shape.back() = static_cast<std::int64_t>(n);
  std::vector<double> out(batch * m * n, 0.0);
  const auto& kt = kernels::active();
  for (size_t s = 0; s < batch; ++s)
    kt.gemm_acc(a.data().data() + s * m * k, b.data().data() + s * k * n, out.data() + s * m * n, m, k, n);
  return detail::make_result(out_shape, std::move(out), {a, b}, "bmm", [batch, m, k, n](Node& self) {
    const auto& ad = value(self, 0);
    const auto& bd = value(self, 1);
    const auto& kt = kernels::active();
    const bool ga = wants(self, 0), gb = wants(self, 1);
    double* da = ga ? self.parents[0]->grad_buffer() : nullptr;
    double* db = gb ? self.parents[1]->grad_buffer() : nullptr;
    std::vector<double> tmp(std::max(k * n, m * k));
    for (size_t s = 0; s < batch; ++s) {
      const double* dy = self.grad.data() + s * m * n;
      if (ga) {
        transpose_into(bd.data() + s * k * n, k, n, tmp.data());
        kt.gemm_acc(dy, tmp.data(), da + s * m * k, m, n, k);
      }
      if (gb) {
        transpose_into(ad.data() + s * m * k, m, k, tmp.data());
        kt.gemm_acc(tmp.data(), dy, db + s * k * n, k, m, n);
      }
    }
  });
}

Tensor bmm_nt(const Tensor& a, const Tensor& b) {
  const size_t batch = batch_of(a, "bmm_nt");
  if (batch_of(b, "bmm_nt") != batch) throw ShapeError("bmm_nt: batch extents differ");
  const size_t m = static_cast<size_t>(a.dim(-2)), k = static_cast<size_t>(a.dim(-1));
  const size_t n = static_cast<size_t>(b.dim(-2));
  if (static_cast<size_t>(b.dim(-1)) != k)
    throw ShapeError("bmm_nt: inner extents differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Shape out_shape = a.shape();
  out_shape.back() = static_cast<std::int64_t>(n);
  std::vector<double> out(batch * m * n, 0.0);
  std::vector<double> bt(k * n);
  const auto& kt = kernels::active();
  for (size_t s = 0; s < batch; ++s) {
    transpose_into(b.data().data() + s * n * k, n, k, bt.data());
    kt.gemm_acc(a.data().data() + s * m * k, bt.data(), out.data() + s * m * n, m, k, n);
  }
  return detail::make_result(out_shape, std::move(out), {a, b}, "bmm_nt", [batch, m, k, n](Node& self) {
    const auto& ad = value(self, 0);
    const auto& bd = value(self, 1);
    const auto& kt = kernels::active();
    const bool ga = wants(self, 0), gb = wants(self, 1);
    double* da = ga ? self.parents[0]->grad_buffer() : nullptr;
    double* db = gb ? self.parents[1]->grad_buffer() : nullptr;
    std::vector<double> dyt(m * n);
    for (size_t s = 0; s < batch; ++s) {
      const double* dy = self.grad.data() + s * m * n;
      if (ga) kt.gemm_acc(dy, bd.data() + s * n * k, da + s * m * k, m, n, k);
      if (gb) {
        transpose_into(dy, m, n, dyt.data());
        kt.gemm_acc(dyt.data(), ad.data() + s * m * k, db + s * n * k, n, m, k);
      }
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  return detail::make_result(std::move(shape), std::move(out), {x}, "reshape", [](Node& self) {
    accumulate(*self.parents[0], self.grad.data(), self.grad.size());
  });
}

Tensor gather(const Tensor& x, const IndexPtr& index, Shape out_shape) {
  if (shape_numel(out_shape) != static_cast<std::int64_t>(index->size()))
    throw ShapeError("gather: index count does not match " + shape_str(out_shape));
  const auto xd = x.data();
  std::vector<double> out(index->size());
  for (size_t i = 0; i < out.size(); ++i) {
    const auto src = (*index)[i];
    if (src < 0 || src >= x.numel()) throw ShapeError("gather: index out of range");
    out[i] = xd[static_cast<size_t>(src)];
  }
  return detail::make_result(std::move(out_shape), std::move(out), {x}, "gather", [index](Node& self) {
    double* g = self.parents[0]->grad_buffer();
    for (size_t i = 0; i < index->size(); ++i) g[static_cast<size_t>((*index)[i])] += self.grad[i];
  });
}

Tensor take_rows(const Tensor& table, const std::vector<std::int64_t>& rows) {
  if (table.ndim() != 2) throw ShapeError("take_rows: table must be 2-D");
  const auto v = table.shape()[0], d = table.shape()[1];
  auto index = std::make_shared<Index>();
  index->reserve(rows.size() * static_cast<size_t>(d));
  for (auto r : rows) {
    if (r < 0 || r >= v) throw ShapeError("take_rows: row " + std::to_string(r) + " out of range");
    for (std::int64_t c = 0; c < d; ++c) index->push_back(r * d + c);
  }
  return gather(table, index, {static_cast<std::int64_t>(rows.size()), d});
}

Tensor transpose2d(const Tensor& x) {
  if (x.ndim() != 2) throw ShapeError("transpose2d: needs 2-D input");
  const auto r = x.shape()[0], c = x.shape()[1];
  auto index = std::make_shared<Index>(static_cast<size_t>(r * c));
  for (std::int64_t j = 0; j < c; ++j)
    for (std::int64_t i = 0; i < r; ++i) (*index)[static_cast<size_t>(j * r + i)] = i * c + j;
  return gather(x, index, {c, r});
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::int64_t rows = 0;
  std::vector<double> out;
  std::vector<size_t> sizes;
  for (const auto& p : parts) {
    if (Shape(p.shape().begin() + 1, p.shape().end()) != tail)
      throw ShapeError("concat_rows: trailing shapes differ");
    rows += p.shape()[0];
    out.insert(out.end(), p.data().begin(), p.data().end());
    sizes.push_back(static_cast<size_t>(p.numel()));
  }
  Shape shape = parts[0].shape();
  shape[0] = rows;
  return detail::make_result(std::move(shape), std::move(out), parts, "concat_rows", [sizes](Node& self) {
    size_t off = 0;
    for (size_t i = 0; i < sizes.size(); ++i) {
      if (wants(self, i)) accumulate(*self.parents[i], self.grad.data() + off, sizes[i]);
      off += sizes[i];
    }
  });
}

Tensor concat_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_last: no inputs");
  Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  std::vector<size_t> widths;
  size_t total = 0;
  for (const auto& p : parts) {
    if (Shape(p.shape().begin(), p.shape().end() - 1) != lead)
      throw ShapeError("concat_last: leading shapes differ");
    widths.push_back(last_extent(p));
    total += widths.back();
  }
  const size_t rows = static_cast<size_t>(shape_numel(lead));
  std::vector<double> out(rows * total);
  for (size_t r = 0; r < rows; ++r) {
    size_t off = r * total;
    for (size_t i = 0; i < parts.size(); ++i) {
      const double* src = parts[i].data().data() + r * widths[i];
      std::copy(src, src + widths[i], out.begin() + static_cast<std::ptrdiff_t>(off));
      off += widths[i];
    }
  }
  Shape shape = lead;
  shape.push_back(static_cast<std::int64_t>(total));
  return detail::make_result(std::move(shape), std::move(out), parts, "concat_last",
                             [widths, rows, total](Node& self) {
                               size_t col = 0;
                               for (size_t i = 0; i < widths.size(); ++i) {
                                 if (wants(self, i)) {
                                   double* g = self.parents[i]->grad_buffer();
                                   for (size_t r = 0; r < rows; ++r)
                                     for (size_t c = 0; c < widths[i]; ++c)
                                       g[r * widths[i] + c] += self.grad[r * total + col + c];
                                 }
                                 col += widths[i];
                               }
                             });
}

Tensor narrow_last(const Tensor& x, std::int64_t start, std::int64_t len) {
  const auto w = x.shape().back();
  if (start < 0 || len <= 0 || start + len > w) throw ShapeError("narrow_last: range out of bounds");
  const auto rows = x.numel() / w;
  auto index = std::make_shared<Index>();
  index->reserve(static_cast<size_t>(rows * len));
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < len; ++c) index->push_back(r * w + start + c);
  Shape shape = x.shape();
  shape.back() = len;
  return gather(x, index, std::move(shape));
}

namespace {

void softmax_backward(Node& self, size_t width) {
  const auto& y = self.data;
  double* g = self.parents[0]->grad_buffer();
  for (size_t r = 0; r < y.size() / width; ++r) {
    const size_t base = r * width;
    double dot = 0.0;
    for (size_t j = 0; j < width; ++j) dot += y[base + j] * self.grad[base + j];
    for (size_t j = 0; j < width; ++j) g[base + j] += y[base + j] * (self.grad[base + j] - dot);
  }
}

}  // namespace

Tensor softmax(const Tensor& x) {
  const size_t width = last_extent(x);
  std::vector<double> out(x.data().begin(), x.data().end());
  for (size_t r = 0; r < out.size() / width; ++r) {
    double* row = out.data() + r * width;
    const double mx = *std::max_element(row, row + width);
    double s = 0.0;
    for (size_t j = 0; j < width; ++j) s += (row[j] = std::exp(row[j] - mx));
    for (size_t j = 0; j < width; ++j) row[j] /= s;
  }
  return detail::make_result(x.shape(), std::move(out), {x}, "softmax",
                             [width](Node& self) { softmax_backward(self, width); });
}

Tensor softmax_masked(const Tensor& x, const MaskPtr& mask) {
  if (static_cast<std::int64_t>(mask->size()) != x.numel()) throw ShapeError("softmax_masked: mask size");
  const size_t width = last_extent(x);
  std::vector<double> out(x.data().begin(), x.data().end());
  for (size_t r = 0; r < out.size() / width; ++r) {
    double* row = out.data() + r * width;
    const std::uint8_t* keep = mask->data() + r * width;
    double mx = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < width; ++j)
      if (keep[j]) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (size_t j = 0; j < width; ++j) s += (row[j] = keep[j] ? std::exp(row[j] - mx) : 0.0);
    for (size_t j = 0; j < width; ++j) row[j] = s > 0.0 ? row[j] / s : 0.0;
  }
  return detail::make_result(x.shape(), std::move(out), {x}, "softmax_masked",
                             [width](Node& self) { softmax_backward(self, width); });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const size_t d = last_extent(x);
  if (gain.numel() != static_cast<std::int64_t>(d) || bias.numel() != static_cast<std::int64_t>(d))
    throw ShapeError("layer_norm: gain/bias must have " + std::to_string(d) + " entries");
  const size_t rows = static_cast<size_t>(x.numel()) / d;
  const auto xd = x.data();
  const auto gd = gain.data();
  const auto bd = bias.data();
  std::vector<double> out(xd.size()), xhat(xd.size()), inv(rows);
  for (size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * d;
    double mu = 0.0;
    for (size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv[r] = 1.0 / std::sqrt(var + eps);
    for (size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (row[j] - mu) * inv[r];
      out[r * d + j] = xhat[r * d + j] * gd[j] + bd[j];
    }
  }
  return detail::make_result(
      x.shape(), std::move(out), {x, gain, bias}, "layer_norm",
      [d, rows, xhat = std::move(xhat), inv = std::move(inv)](Node& self) {
        const auto& gd = value(self, 1);
        const auto& dy = self.grad;
        if (wants(self, 0)) {
          double* gx = self.parents[0]->grad_buffer();
          std::vector<double> dxhat(d);
          for (size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (size_t j = 0; j < d; ++j) {
              dxhat[j] = dy[r * d + j] * gd[j];
              m1 += dxhat[j];
              m2 += dxhat[j] * xhat[r * d + j];
            }
            m1 /= static_cast<double>(d);
            m2 /= static_cast<double>(d);
            for (size_t j = 0; j < d; ++j) gx[r * d + j] += inv[r] * (dxhat[j] - m1 - xhat[r * d + j] * m2);
          }
        }
        if (wants(self, 1)) {
          double* gg = self.parents[1]->grad_buffer();
          for (size_t r = 0; r < rows; ++r)
            for (size_t j = 0; j < d; ++j) gg[j] += dy[r * d + j] * xhat[r * d + j];
        }
        if (wants(self, 2)) {
          double* gb = self.parents[2]->grad_buffer();
          for (size_t r = 0; r < rows; ++r)
            for (size_t j = 0; j < d; ++j) gb[j] += dy[r * d + j];
        }
      });
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
  return detail::make_result(x.shape(), std::move(out), {x}, "gelu", [](Node& self) {
    const auto& xd = value(self, 0);
    double* g = self.parents[0]->grad_buffer();
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (size_t i = 0; i < xd.size(); ++i) {
      const double v = xd[i];
      const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      g[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

Tensor l2_normalize(const Tensor& x, double eps) {
  const size_t d = last_extent(x);
  const size_t rows = static_cast<size_t>(x.numel()) / d;
  std::vector<double> out(x.data().begin(), x.data().end());
  std::vector<double> norms(rows);
  for (size_t r = 0; r < rows; ++r) {
    double* row = out.data() + r * d;
    double ss = 0.0;
    for (size_t j = 0; j < d; ++j) ss += row[j] * row[j];
    norms[r] = std::sqrt(ss + eps);
    for (size_t j = 0; j < d; ++j) row[j] /= norms[r];
  }
  return detail::make_result(x.shape(), std::move(out), {x}, "l2_normalize",
                             [d, rows, norms = std::move(norms)](Node& self) {
                               const auto& y = self.data;
                               double* g = self.parents[0]->grad_buffer();
                               for (size_t r = 0; r < rows; ++r) {
                                 const size_t base = r * d;
                                 double dot = 0.0;
                                 for (size_t j = 0; j < d; ++j) dot += y[base + j] * self.grad[base + j];
                                 for (size_t j = 0; j < d; ++j)
                                   g[base + j] += (self.grad[base + j] - y[base + j] * dot) / norms[r];
                               }
                             });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return detail::make_result({1}, {s}, {x}, "sum", [](Node& self) {
    double* g = self.parents[0]->grad_buffer();
    const size_t n = self.parents[0]->data.size();
    for (size_t i = 0; i < n; ++i) g[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mse(const Tensor& prediction, const Tensor& target) {
  require_same_shape(prediction, target, "mse");
  const auto p = prediction.data();
  const auto t = target.data();
  const double n = static_cast<double>(p.size());
  double s = 0.0;
  for (size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  return detail::make_result({1}, {s / n}, {prediction, target}, "mse", [n](Node& self) {
    const auto& p = value(self, 0);
    const auto& t = value(self, 1);
    const double c = 2.0 * self.grad[0] / n;
    if (wants(self, 0)) {
      double* g = self.parents[0]->grad_buffer();
      for (size_t i = 0; i < p.size(); ++i) g[i] += c * (p[i] - t[i]);
    }
    if (wants(self, 1)) {
      double* g = self.parents[1]->grad_buffer();
      for (size_t i = 0; i < p.size(); ++i) g[i] -= c * (p[i] - t[i]);
    }
  });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels) {
  if (logits.ndim() != 2 || logits.shape()[0] != static_cast<std::int64_t>(labels.size()))
    throw ShapeError("cross_entropy: logits must be [n, classes] with n labels");
  const size_t n = labels.size(), c = static_cast<size_t>(logits.shape()[1]);
  const auto ld = logits.data();
  std::vector<double> probs(ld.begin(), ld.end());
  double loss = 0.0;
  for (size_t r = 0; r < n; ++r) {
    if (labels[r] < 0 || labels[r] >= static_cast<std::int64_t>(c)) throw ShapeError("cross_entropy: label out of range");
    double* row = probs.data() + r * c;
    const double mx = *std::max_element(row, row + c);
    double s = 0.0;
    for (size_t j = 0; j < c; ++j) s += (row[j] = std::exp(row[j] - mx));
    for (size_t j = 0; j < c; ++j) row[j] /= s;
    loss -= std::log(std::max(row[labels[r]], 1e-300));
  }
  loss /= static_cast<double>(n);
  return detail::make_result({1}, {loss}, {logits}, "cross_entropy",
                             [probs = std::move(probs), labels, n, c](Node& self) {
                               double* g = self.parents[0]->grad_buffer();
                               const double s = self.grad[0] / static_cast<double>(n);
                               for (size_t r = 0; r < n; ++r)
                                 for (size_t j = 0; j < c; ++j) {
                                   const double onehot = static_cast<std::int64_t>(j) == labels[r] ? 1.0 : 0.0;
                                   g[r * c + j] += s * (probs[r * c + j] - onehot);
                                 }
                             });
}

}  // namespace scenediff
