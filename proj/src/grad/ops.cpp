#include "autorobust/grad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "autorobust/core/errors.hpp"

namespace autorobust::grad {

namespace {

void require_same_tape(const char* op, Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) throw StateError(std::string(op) + ": operands on different tapes");
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_string(t.shape()));
  }
}

template <class F, class G>
Var unary(Var x, F f, G dfdx) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = f(xv[i]);
  const std::size_t xid = x.id;
  const std::size_t yid = x.tape->size();
  return x.tape->record(std::move(out), {x}, [xid, yid, dfdx](const Tape& t, std::span<const double> g, std::span<double* const> pg) {
    const Tensor& xv = t.value(xid);
    const Tensor& yv = t.value(yid);
    for (std::size_t i = 0; i < g.size(); ++i) pg[0][i] += g[i] * dfdx(xv[i], yv[i]);
  });
}

struct PoolGeom {
  std::size_t n, c, h, w, oh, ow;
};

PoolGeom pool_geometry(const char* op, const Tensor& x, std::size_t k, std::size_t stride, std::size_t pad) {
  require_rank(op, x, 4);
  if (stride == 0 || k == 0) throw ArgumentError(std::string(op) + ": zero kernel or stride");
  PoolGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), 0, 0};
  if (g.h + 2 * pad < k || g.w + 2 * pad < k) throw DimensionError(std::string(op) + ": input smaller than window");
  g.oh = (g.h + 2 * pad - k) / stride + 1;
  g.ow = (g.w + 2 * pad - k) / stride + 1;
  return g;
}

}  // namespace

Var add(Var a, Var b) {
  require_same_tape("add", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape("add", av, bv);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i] + bv[i];
  return a.tape->record(std::move(out), {a, b}, [](const Tape&, std::span<const double> g, std::span<double* const> pg) {
    for (int k = 0; k < 2; ++k)
      if (pg[k])
        for (std::size_t i = 0; i < g.size(); ++i) pg[k][i] += g[i];
  });
}

Var sub(Var a, Var b) {
  require_same_tape("sub", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape("sub", av, bv);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i] - bv[i];
  return a.tape->record(std::move(out), {a, b}, [](const Tape&, std::span<const double> g, std::span<double* const> pg) {
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) pg[0][i] += g[i];
    if (pg[1])
      for (std::size_t i = 0; i < g.size(); ++i) pg[1][i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  require_same_tape("mul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape("mul", av, bv);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i] * bv[i];
  const std::size_t aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {a, b}, [aid, bid](const Tape& t, std::span<const double> g, std::span<double* const> pg) {
    const Tensor& av = t.value(aid);
    const Tensor& bv = t.value(bid);
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) pg[0][i] += g[i] * bv[i];
    if (pg[1])
      for (std::size_t i = 0; i < g.size(); ++i) pg[1][i] += g[i] * av[i];
  });
}

Var div(Var a, Var b) {
  require_same_tape("div", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape("div", av, bv);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i] / bv[i];
  const std::size_t aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {a, b}, [aid, bid](const Tape& t, std::span<const double> g, std::span<double* const> pg) {
    const Tensor& av = t.value(aid);
    const Tensor& bv = t.value(bid);
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) pg[0][i] += g[i] / bv[i];
    if (pg[1])
      for (std::size_t i = 0; i < g.size(); ++i) pg[1][i] -= g[i] * av[i] / (bv[i] * bv[i]);
  });
}

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var add_channel_bias(Var x, Var b) {
  require_same_tape("add_channel_bias", x, b);
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  if (xv.rank() < 2 || bv.rank() != 1 || bv.dim(0) != xv.dim(1)) {
    throw DimensionError("add_channel_bias: bias " + shape_string(bv.shape()) + " incompatible with " +
                         shape_string(xv.shape()));
  }
  const std::size_t n = xv.dim(0), c = xv.dim(1), inner = xv.numel() / (n * c);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t base = (i * c + j) * inner;
      for (std::size_t k = 0; k < inner; ++k) out[base + k] = xv[base + k] + bv[j];
    }
  return x.tape->record(std::move(out), {x, b}, [n, c, inner](const Tape&, std::span<const double> g, std::span<double* const> pg) {
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) pg[0][i] += g[i];
    if (pg[1])
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          const std::size_t base = (i * c + j) * inner;
          double s = 0.0;
          for (std::size_t k = 0; k < inner; ++k) s += g[base + k];
          pg[1][j] += s;
        }
  });
}

Var relu(Var x) {
  return unary(x, [](double v) { return v < 0.0 ? 0.0 : v; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var square(Var x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var maximum_scalar(Var x, double c) {
  return unary(x, [c](double v) { return v > c ? v : c; }, [c](double v, double) { return v > c ? 1.0 : 0.0; });
}

Var sum(Var x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.data()) s += v;
  const std::size_t n = xv.numel();
  return x.tape->record(Tensor::scalar(s), {x}, [n](const Tape&, std::span<const double> g, std::span<double* const> pg) {
    for (std::size_t i = 0; i < n; ++i) pg[0][i] += g[0];
  });
}

Var mean(Var x) {
  const std::size_t n = x.value().numel();
  if (n == 0) throw ArgumentError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var sum_rows(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() < 1) throw DimensionError("sum_rows: scalar input");
  const std::size_t n = xv.dim(0), inner = n ? xv.numel() / n : 0;
  Tensor out(Shape{n});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < inner; ++k) s += xv[i * inner + k];
    out[i] = s;
  }
  return x.tape->record(std::move(out), {x}, [n, inner](const Tape&, std::span<const double> g, std::span<double* const> pg) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < inner; ++k) pg[0][i * inner + k] += g[i];
  });
}

namespace {

std::pair<std::size_t, std::size_t> rows_cols(const char* op, const Tensor& x) {
  if (x.rank() == 1) return {1, x.dim(0)};
  if (x.rank() == 2) return {x.dim(0), x.dim(1)};
  throw DimensionError(std::string(op) + ": expected rank 1 or 2, got " + shape_string(x.shape()));
}

}  // namespace

Var softmax(Var x) {
  const Tensor& xv = x.value();
  const auto [rows, cols] = rows_cols("softmax", xv);
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data().data() + r * cols;
    double* o = out.data().data() + r * cols;
    const double m = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t k = 0; k < cols; ++k) z += (o[k] = std::exp(in[k] - m));
    for (std::size_t k = 0; k < cols; ++k) o[k] /= z;
  }
  const std::size_t yid = x.tape->size();
  return x.tape->record(std::move(out), {x}, [yid, rows, cols](const Tape& t, std::span<const double> g, std::span<double* const> pg) {
    const Tensor& y = t.value(yid);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t k = 0; k < cols; ++k) dot += g[r * cols + k] * y[r * cols + k];
      for (std::size_t k = 0; k < cols; ++k) pg[0][r * cols + k] += y[r * cols + k] * (g[r * cols + k] - dot);
    }
  });
}

Var log_softmax(Var x) {
  const Tensor& xv = x.value();
  const auto [rows, cols] = rows_cols("log_softmax", xv);
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data().data() + r * cols;
    double* o = out.data().data() + r * cols;
    const double m = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t k = 0; k < cols; ++k) z += std::exp(in[k] - m);
    const double lse = m + std::log(z);
    for (std::size_t k = 0; k < cols; ++k) o[k] = in[k] - lse;
  }
  const std::size_t yid = x.tape->size();
  return x.tape->record(std::move(out), {x}, [yid, rows, cols](const Tape& t, std::span<const double> g, std::span<double* const> pg) {
    const Tensor& y = t.value(yid);
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t k = 0; k < cols; ++k) gs += g[r * cols + k];
      for (std::size_t k = 0; k < cols; ++k) pg[0][r * cols + k] += g[r * cols + k] - std::exp(y[r * cols + k]) * gs;
    }
  });
}

Var matmul(Var a, Var b) {
  require_same_tape("matmul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank("matmul", av, 2);
  if (bv.rank() != 1 && bv.rank() != 2) throw DimensionError("matmul: right operand must be rank 1 or 2");
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.rank() == 2 ? bv.dim(1) : 1;
  if (bv.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(av.shape()) + " x " +
                         shape_string(bv.shape()));
  }
  Tensor out(bv.rank() == 2 ? Shape{m, n} : Shape{m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  const std::size_t aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {a, b}, [aid, bid, m, k, n](const Tape& t, std::span<const double> g, std::span<double* const> pg) {
    const Tensor& av = t.value(aid);
    const Tensor& bv = t.value(bid);
    if (pg[0])
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
          pg[0][i * k + p] += s;
        }
    if (pg[1])
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) pg[1][p * n + j] += aip * g[i * n + j];
        }
  });
}

Var linear(Var x, Var w) {
  require_same_tape("linear", x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank("linear", xv, 2);
  require_rank("linear", wv, 2);
  const std::size_t n = xv.dim(0), in = xv.dim(1), outd = wv.dim(0);
  if (wv.dim(1) != in) {
    throw DimensionError("linear: weight " + shape_string(wv.shape()) + " incompatible with input " +
                         shape_string(xv.shape()));
  }
  Tensor out(Shape{n, outd});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < outd; ++o) {
      double s = 0.0;
      const double* xr = xv.data().data() + i * in;
      const double* wr = wv.data().data() + o * in;
      for (std::size_t p = 0; p < in; ++p) s += xr[p] * wr[p];
      out[i * outd + o] = s;
    }
  const std::size_t xid = x.id, wid = w.id;
  return x.tape->record(std::move(out), {x, w}, [xid, wid, n, in, outd](const Tape& t, std::span<const double> g, std::span<double* const> pg) {
    const Tensor& xv = t.value(xid);
    const Tensor& wv = t.value(wid);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t o = 0; o < outd; ++o) {
        const double go = g[i * outd + o];
        if (go == 0.0) continue;
        if (pg[0])
          for (std::size_t p = 0; p < in; ++p) pg[0][i * in + p] += go * wv[o * in + p];
        if (pg[1])
          for (std::size_t p = 0; p < in; ++p) pg[1][o * in + p] += go * xv[i * in + p];
      }
  });
}

Var conv2d(Var x, Var w, const ConvSpec& spec) {
  require_same_tape("conv2d", x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank("conv2d", xv, 4);
  require_rank("conv2d", wv, 4);
  const std::size_t n = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
  const std::size_t cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  const std::size_t groups = spec.groups;
  if (groups == 0 || cin % groups != 0 || cout % groups != 0 || wv.dim(1) != cin / groups) {
    throw DimensionError("conv2d: weight " + shape_string(wv.shape()) + " incompatible with input " +
                         shape_string(xv.shape()) + " and groups=" + std::to_string(groups));
  }
  if (spec.stride == 0 || spec.dilation == 0) throw ArgumentError("conv2d: zero stride or dilation");
  const std::size_t ekh = spec.dilation * (kh - 1) + 1, ekw = spec.dilation * (kw - 1) + 1;
  if (h + 2 * spec.padding < ekh || wd + 2 * spec.padding < ekw) throw DimensionError("conv2d: input smaller than kernel");
  const std::size_t oh = (h + 2 * spec.padding - ekh) / spec.stride + 1;
  const std::size_t ow = (wd + 2 * spec.padding - ekw) / spec.stride + 1;
  const std::size_t cig = cin / groups, cog = cout / groups;
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  const auto st = static_cast<std::ptrdiff_t>(spec.stride);
  const auto dil = static_cast<std::ptrdiff_t>(spec.dilation);

  Tensor out(Shape{n, cout, oh, ow});
  const double* X = xv.data().data();
  const double* W = wv.data().data();
  double* Y = out.data().data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oc = 0; oc < cout; ++oc) {
      const std::size_t grp = oc / cog;
      double* yplane = Y + (b * cout + oc) * oh * ow;
      for (std::size_t icg = 0; icg < cig; ++icg) {
        const std::size_t ic = grp * cig + icg;
        const double* xplane = X + (b * cin + ic) * h * wd;
        const double* wk = W + (oc * cig + icg) * kh * kw;
        for (std::size_t ki = 0; ki < kh; ++ki)
          for (std::size_t kj = 0; kj < kw; ++kj) {
            const double wval = wk[ki * kw + kj];
            if (wval == 0.0) continue;
            for (std::size_t oi = 0; oi < oh; ++oi) {
              const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi) * st - pad + static_cast<std::ptrdiff_t>(ki) * dil;
              if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
              const double* xrow = xplane + ii * static_cast<std::ptrdiff_t>(wd);
              double* yrow = yplane + oi * ow;
              for (std::size_t oj = 0; oj < ow; ++oj) {
                const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj) * st - pad + static_cast<std::ptrdiff_t>(kj) * dil;
                if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(wd)) continue;
                yrow[oj] += wval * xrow[jj];
              }
            }
          }
      }
    }

  const std::size_t xid = x.id, wid = w.id;
  return x.tape->record(std::move(out), {x, w},
                        [=](const Tape& t, std::span<const double> g, std::span<double* const> pg) {
                          const double* X = t.value(xid).data().data();
                          const double* W = t.value(wid).data().data();
                          double* GX = pg[0];
                          double* GW = pg[1];
                          for (std::size_t b = 0; b < n; ++b)
                            for (std::size_t oc = 0; oc < cout; ++oc) {
                              const std::size_t grp = oc / cog;
                              const double* gplane = g.data() + (b * cout + oc) * oh * ow;
                              for (std::size_t icg = 0; icg < cig; ++icg) {
                                const std::size_t ic = grp * cig + icg;
                                const std::size_t xoff = (b * cin + ic) * h * wd;
                                const std::size_t woff = (oc * cig + icg) * kh * kw;
                                for (std::size_t ki = 0; ki < kh; ++ki)
                                  for (std::size_t kj = 0; kj < kw; ++kj) {
                                    const double wval = W[woff + ki * kw + kj];
                                    double gw = 0.0;
                                    for (std::size_t oi = 0; oi < oh; ++oi) {
                                      const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi) * st - pad +
                                                                static_cast<std::ptrdiff_t>(ki) * dil;
                                      if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
                                      const std::size_t rowoff = xoff + static_cast<std::size_t>(ii) * wd;
                                      const double* grow = gplane + oi * ow;
                                      for (std::size_t oj = 0; oj < ow; ++oj) {
                                        const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj) * st - pad +
                                                                  static_cast<std::ptrdiff_t>(kj) * dil;
                                        if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(wd)) continue;
                                        const double go = grow[oj];
                                        if (GX) GX[rowoff + static_cast<std::size_t>(jj)] += go * wval;
                                        gw += go * X[rowoff + static_cast<std::size_t>(jj)];
                                      }
                                    }
                                    if (GW) GW[woff + ki * kw + kj] += gw;
                                  }
                              }
                            }
                        });
}

Var max_pool2d(Var x, std::size_t k, std::size_t stride, std::size_t padding) {
  const Tensor& xv = x.value();
  const PoolGeom g = pool_geometry("max_pool2d", xv, k, stride, padding);
  Tensor out(Shape{g.n, g.c, g.oh, g.ow});
  std::vector<std::size_t> argmax(out.numel());
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t p = 0; p < g.n * g.c; ++p)
    for (std::size_t oi = 0; oi < g.oh; ++oi)
      for (std::size_t oj = 0; oj < g.ow; ++oj) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        bool found = false;
        for (std::size_t ki = 0; ki < k; ++ki) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * stride + ki) - pad;
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t kj = 0; kj < k; ++kj) {
            const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj * stride + kj) - pad;
            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(g.w)) continue;
            const std::size_t idx = p * g.h * g.w + static_cast<std::size_t>(ii) * g.w + static_cast<std::size_t>(jj);
            // Strict comparison keeps the first maximal element on ties.
            if (!found || xv[idx] > best) {
              best = xv[idx];
              best_idx = idx;
              found = true;
            }
          }
        }
        const std::size_t o = (p * g.oh + oi) * g.ow + oj;
        out[o] = best;
        argmax[o] = best_idx;
      }
  return x.tape->record(std::move(out), {x}, [argmax = std::move(argmax)](const Tape&, std::span<const double> gr, std::span<double* const> pg) {
    for (std::size_t o = 0; o < gr.size(); ++o) pg[0][argmax[o]] += gr[o];
  });
}

Var avg_pool2d(Var x, std::size_t k, std::size_t stride, std::size_t padding) {
  const Tensor& xv = x.value();
  const PoolGeom g = pool_geometry("avg_pool2d", xv, k, stride, padding);
  Tensor out(Shape{g.n, g.c, g.oh, g.ow});
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  auto window = [&](std::size_t oi, std::size_t oj, auto&& fn) {
    std::size_t count = 0;
    for (std::size_t ki = 0; ki < k; ++ki) {
      const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * stride + ki) - pad;
      if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.h)) continue;
      for (std::size_t kj = 0; kj < k; ++kj) {
        const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj * stride + kj) - pad;
        if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(g.w)) continue;
        fn(static_cast<std::size_t>(ii) * g.w + static_cast<std::size_t>(jj));
        ++count;
      }
    }
    return count;
  };
  for (std::size_t p = 0; p < g.n * g.c; ++p)
    for (std::size_t oi = 0; oi < g.oh; ++oi)
      for (std::size_t oj = 0; oj < g.ow; ++oj) {
        double s = 0.0;
        const std::size_t cnt = window(oi, oj, [&](std::size_t off) { s += xv[p * g.h * g.w + off]; });
        out[(p * g.oh + oi) * g.ow + oj] = s / static_cast<double>(cnt);
      }
  return x.tape->record(std::move(out), {x}, [g, k, stride, pad](const Tape&, std::span<const double> gr, std::span<double* const> pg) {
    for (std::size_t p = 0; p < g.n * g.c; ++p)
      for (std::size_t oi = 0; oi < g.oh; ++oi)
        for (std::size_t oj = 0; oj < g.ow; ++oj) {
          std::size_t offs[64];
          std::size_t cnt = 0;
          for (std::size_t ki = 0; ki < k; ++ki) {
            const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * stride + ki) - pad;
            if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t kj = 0; kj < k; ++kj) {
              const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj * stride + kj) - pad;
              if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(g.w)) continue;
              offs[cnt++] = static_cast<std::size_t>(ii) * g.w + static_cast<std::size_t>(jj);
            }
          }
          const double share = gr[(p * g.oh + oi) * g.ow + oj] / static_cast<double>(cnt);
          for (std::size_t q = 0; q < cnt; ++q) pg[0][p * g.h * g.w + offs[q]] += share;
        }
  });
}

Var global_avg_pool(Var x) {
  const Tensor& xv = x.value();
  require_rank("global_avg_pool", xv, 4);
  const std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor out(Shape{n, c});
  for (std::size_t p = 0; p < n * c; ++p) {
    double s = 0.0;
    for (std::size_t q = 0; q < hw; ++q) s += xv[p * hw + q];
    out[p] = s / static_cast<double>(hw);
  }
  return x.tape->record(std::move(out), {x}, [n, c, hw](const Tape&, std::span<const double> g, std::span<double* const> pg) {
    for (std::size_t p = 0; p < n * c; ++p) {
      const double share = g[p] / static_cast<double>(hw);
      for (std::size_t q = 0; q < hw; ++q) pg[0][p * hw + q] += share;
    }
  });
}

Var batch_norm(Var x, BatchNormState& state, bool training, Var gamma, Var beta) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 && xv.rank() != 4) throw DimensionError("batch_norm: expected [N,C] or [N,C,H,W], got " + shape_string(xv.shape()));
  const std::size_t n = xv.dim(0), c = xv.dim(1), inner = xv.rank() == 4 ? xv.dim(2) * xv.dim(3) : 1;
  if (state.running_mean.size() != c) throw DimensionError("batch_norm: state has " + std::to_string(state.running_mean.size()) + " channels, input has " + std::to_string(c));
  const bool affine = gamma.valid();
  if (affine && (gamma.value().numel() != c || !beta.valid() || beta.value().numel() != c)) {
    throw DimensionError("batch_norm: affine parameters must have one entry per channel");
  }
  const std::size_t m = n * inner;
  if (training && m < 2) throw ArgumentError("batch_norm: training mode needs more than one value per channel");

  std::vector<double> mu(c), invstd(c);
  for (std::size_t j = 0; j < c; ++j) {
    if (training) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < inner; ++k) s += xv[(i * c + j) * inner + k];
      const double mean = s / static_cast<double>(m);
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < inner; ++k) {
          const double d = xv[(i * c + j) * inner + k] - mean;
          v += d * d;
        }
      const double var = v / static_cast<double>(m);
      mu[j] = mean;
      invstd[j] = 1.0 / std::sqrt(var + state.eps);
      state.running_mean[j] = (1.0 - state.momentum) * state.running_mean[j] + state.momentum * mean;
      state.running_var[j] = (1.0 - state.momentum) * state.running_var[j] +
                             state.momentum * v / static_cast<double>(m - 1);
    } else {
      mu[j] = state.running_mean[j];
      invstd[j] = 1.0 / std::sqrt(state.running_var[j] + state.eps);
    }
  }

  Tensor xhat(xv.shape());
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double gj = affine ? gamma.value()[j] : 1.0;
      const double bj = affine ? beta.value()[j] : 0.0;
      for (std::size_t k = 0; k < inner; ++k) {
        const std::size_t idx = (i * c + j) * inner + k;
        xhat[idx] = (xv[idx] - mu[j]) * invstd[j];
        out[idx] = gj * xhat[idx] + bj;
      }
    }

  std::vector<std::size_t> parents{x.id};
  if (affine) {
    parents.push_back(gamma.id);
    parents.push_back(beta.id);
  }
  const std::size_t gid = affine ? gamma.id : 0;
  return x.tape->record(
      std::move(out), std::move(parents),
      [=, xhat = std::move(xhat), invstd = std::move(invstd)](const Tape& t, std::span<const double> g, std::span<double* const> pg) {
        std::vector<double> dxhat(g.begin(), g.end());
        if (affine) {
          const Tensor& gv = t.value(gid);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j)
              for (std::size_t k = 0; k < inner; ++k) {
                const std::size_t idx = (i * c + j) * inner + k;
                if (pg[1]) pg[1][j] += g[idx] * xhat[idx];
                if (pg[2]) pg[2][j] += g[idx];
                dxhat[idx] = g[idx] * gv[j];
              }
        }
        if (!pg[0]) return;
        for (std::size_t j = 0; j < c; ++j) {
          if (!training) {
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t k = 0; k < inner; ++k) {
                const std::size_t idx = (i * c + j) * inner + k;
                pg[0][idx] += dxhat[idx] * invstd[j];
              }
            continue;
          }
          double sd = 0.0, sdx = 0.0;
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < inner; ++k) {
              const std::size_t idx = (i * c + j) * inner + k;
              sd += dxhat[idx];
              sdx += dxhat[idx] * xhat[idx];
            }
          const double md = static_cast<double>(m);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < inner; ++k) {
              const std::size_t idx = (i * c + j) * inner + k;
              pg[0][idx] += invstd[j] / md * (md * dxhat[idx] - sd - xhat[idx] * sdx);
            }
        }
      });
}

Var reshape(Var x, Shape shape) {
  const Tensor& xv = x.value();
  Tensor out = xv.reshaped(std::move(shape));
  return x.tape->record(std::move(out), {x}, [](const Tape&, std::span<const double> g, std::span<double* const> pg) {
    for (std::size_t i = 0; i < g.size(); ++i) pg[0][i] += g[i];
  });
}

Var flatten(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() < 1) throw DimensionError("flatten: scalar input");
  const std::size_t n = xv.dim(0);
  return reshape(x, Shape{n, n ? xv.numel() / n : 0});
}

Var concat_channels(std::span<const Var> xs) {
  if (xs.empty()) throw ArgumentError("concat_channels: no inputs");
  const Tensor& first = xs[0].value();
  if (first.rank() < 2) throw DimensionError("concat_channels: inputs need a channel axis");
  const std::size_t n = first.dim(0), inner = first.numel() / (n * first.dim(1));
  std::vector<std::size_t> chans, ids;
  std::size_t total = 0;
  for (const Var& v : xs) {
    const Tensor& t = v.value();
    if (v.tape != xs[0].tape) throw StateError("concat_channels: operands on different tapes");
    if (t.rank() != first.rank() || t.dim(0) != n || t.numel() / (n * t.dim(1)) != inner) {
      throw DimensionError("concat_channels: incompatible shape " + shape_string(t.shape()));
    }
    chans.push_back(t.dim(1));
    ids.push_back(v.id);
    total += t.dim(1);
  }
  Shape s = first.shape();
  s[1] = total;
  Tensor out(s);
  std::size_t coff = 0;
  for (std::size_t q = 0; q < xs.size(); ++q) {
    const Tensor& t = xs[q].value();
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(t.data().data() + i * chans[q] * inner, chans[q] * inner,
                  out.data().data() + (i * total + coff) * inner);
    coff += chans[q];
  }
  return xs[0].tape->record(std::move(out), std::move(ids), [n, inner, total, chans](const Tape&, std::span<const double> g, std::span<double* const> pg) {
    std::size_t coff = 0;
    for (std::size_t q = 0; q < chans.size(); ++q) {
      if (pg[q])
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t e = 0; e < chans[q] * inner; ++e)
            pg[q][i * chans[q] * inner + e] += g[(i * total + coff) * inner + e];
      coff += chans[q];
    }
  });
}

Var slice_channels(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  if (xv.rank() < 2 || begin >= end || end > xv.dim(1)) {
    throw DimensionError("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + shape_string(xv.shape()));
  }
  const std::size_t n = xv.dim(0), c = xv.dim(1), inner = xv.numel() / (n * c), w = end - begin;
  Shape s = xv.shape();
  s[1] = w;
  Tensor out(s);
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(xv.data().data() + (i * c + begin) * inner, w * inner, out.data().data() + i * w * inner);
  return x.tape->record(std::move(out), {x}, [n, c, inner, w, begin](const Tape&, std::span<const double> g, std::span<double* const> pg) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t e = 0; e < w * inner; ++e) pg[0][(i * c + begin) * inner + e] += g[i * w * inner + e];
  });
}

Var gather(Var x, std::span<const std::size_t> index) {
  const Tensor& xv = x.value();
  require_rank("gather", xv, 2);
  const std::size_t n = xv.dim(0), k = xv.dim(1);
  if (index.size() != n) throw DimensionError("gather: index length " + std::to_string(index.size()) + " != rows " + std::to_string(n));
  Tensor out(Shape{n});
  std::vector<std::size_t> idx(index.begin(), index.end());
  for (std::size_t i = 0; i < n; ++i) {
    if (idx[i] >= k) throw ArgumentError("gather: class index out of range");
    out[i] = xv[i * k + idx[i]];
  }
  return x.tape->record(std::move(out), {x}, [k, idx = std::move(idx)](const Tape&, std::span<const double> g, std::span<double* const> pg) {
    for (std::size_t i = 0; i < idx.size(); ++i) pg[0][i * k + idx[i]] += g[i];
  });
}

Var weighted_sum(std::span<const Var> xs, Var w, std::span<const std::size_t> widx) {
  if (xs.empty() || xs.size() != widx.size()) throw ArgumentError("weighted_sum: need one weight index per input");
  const Tensor& first = xs[0].value();
  const Tensor& wv = w.value();
  std::vector<std::size_t> ids;
  for (const Var& v : xs) {
    if (v.tape != w.tape) throw StateError("weighted_sum: operands on different tapes");
    if (v.value().shape() != first.shape()) throw DimensionError("weighted_sum: input shapes differ");
    ids.push_back(v.id);
  }
  for (std::size_t q : widx)
    if (q >= wv.numel()) throw ArgumentError("weighted_sum: weight index out of range");
  Tensor out(first.shape());
  for (std::size_t q = 0; q < xs.size(); ++q) {
    const double c = wv[widx[q]];
    const Tensor& t = xs[q].value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += c * t[i];
  }
  const std::size_t wid = w.id;
  ids.push_back(wid);
  std::vector<std::size_t> wi(widx.begin(), widx.end());
  std::vector<std::size_t> xids(ids.begin(), ids.end() - 1);
  return w.tape->record(std::move(out), std::move(ids), [wid, wi = std::move(wi), xids = std::move(xids)](const Tape& t, std::span<const double> g, std::span<double* const> pg) {
    const Tensor& wv = t.value(wid);
    const std::size_t q_w = xids.size();
    for (std::size_t q = 0; q < xids.size(); ++q) {
      const double c = wv[wi[q]];
      if (pg[q])
        for (std::size_t i = 0; i < g.size(); ++i) pg[q][i] += c * g[i];
      if (pg[q_w]) {
        const Tensor& xv = t.value(xids[q]);
        double s = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * xv[i];
        pg[q_w][wi[q]] += s;
      }
    }
  });
}

Var zeros(Tape& tape, Shape shape) { return tape.constant(Tensor(std::move(shape), 0.0)); }

}  // namespace autorobust::grad
