#include "gkg/ops.hpp"

#include <cmath>
#include <numbers>

#include "gkg/errors.hpp"

namespace gkg::ops {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

void require_matrix(const Tensor& t, const char* op, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": " + what + " must be rank 2, got " + shape_string(t.shape()));
  }
}

constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;

}  // namespace

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
  return out;
}

double gelu(double x) {
  const double u = kGeluScale * (x + kGeluCubic * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
  const double u = kGeluScale * (x + kGeluCubic * x * x * x);
  const double t = std::tanh(u);
  const double du = kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

Var affine(Tape& tape, Var x, Var w, Var b) {
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(w);
  const Tensor& bv = tape.value(b);
  require_matrix(xv, "affine", "input");
  require_matrix(wv, "affine", "weight");
  const std::size_t n = xv.dim(0), cin = xv.dim(1), cout = wv.dim(1);
  if (wv.dim(0) != cin || bv.size() != cout) {
    throw DimensionError("affine: input " + shape_string(xv.shape()) + " incompatible with weight " +
                         shape_string(wv.shape()) + " and bias " + shape_string(bv.shape()));
  }
  Tensor out({n, cout});
  for (std::size_t r = 0; r < n; ++r) {
    double* o = out.ptr() + r * cout;
    for (std::size_t j = 0; j < cout; ++j) o[j] = bv[j];
    const double* xr = xv.ptr() + r * cin;
    for (std::size_t i = 0; i < cin; ++i) {
      const double xi = xr[i];
      const double* wr = wv.ptr() + i * cout;
      for (std::size_t j = 0; j < cout; ++j) o[j] += xi * wr[j];
    }
  }
  return tape.push(std::move(out), {x, w, b}, [x, w, b, n, cin, cout](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    if (t.requires_grad(x)) {
      Tensor& gx = t.grad_slot(x);
      // gx += g * W^T, with W^T materialised so the inner loop is contiguous.
      std::vector<double> wt(cin * cout);
      for (std::size_t i = 0; i < cin; ++i)
        for (std::size_t j = 0; j < cout; ++j) wt[j * cin + i] = wv[i * cout + j];
      for (std::size_t r = 0; r < n; ++r) {
        const double* gr = g.ptr() + r * cout;
        double* gxr = gx.ptr() + r * cin;
        for (std::size_t j = 0; j < cout; ++j) {
          const double gj = gr[j];
          const double* wtr = wt.data() + j * cin;
          for (std::size_t i = 0; i < cin; ++i) gxr[i] += gj * wtr[i];
        }
      }
    }
    if (t.requires_grad(w)) {
      Tensor& gw = t.grad_slot(w);
      for (std::size_t r = 0; r < n; ++r) {
        const double* gr = g.ptr() + r * cout;
        const double* xr = xv.ptr() + r * cin;
        for (std::size_t i = 0; i < cin; ++i) {
          const double xi = xr[i];
          double* gwr = gw.ptr() + i * cout;
          for (std::size_t j = 0; j < cout; ++j) gwr[j] += xi * gr[j];
        }
      }
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_slot(b);
      for (std::size_t r = 0; r < n; ++r) {
        const double* gr = g.ptr() + r * cout;
        for (std::size_t j = 0; j < cout; ++j) gb[j] += gr[j];
      }
    }
  });
}

Var add(Tape& tape, Var x, Var y) {
  const Tensor& xv = tape.value(x);
  const Tensor& yv = tape.value(y);
  const bool broadcast = xv.shape() != yv.shape();
  if (broadcast && !(yv.rank() == 1 && xv.rank() == 2 && yv.size() == xv.dim(1))) {
    require_same_shape(xv, yv, "add");
  }
  Tensor out = xv;
  const std::size_t width = yv.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += yv[i % width];
  return tape.push(std::move(out), {x, y}, [x, y, width](Tape& t, const Tensor& g) {
    if (t.requires_grad(x)) {
      Tensor& gx = t.grad_slot(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.requires_grad(y)) {
      Tensor& gy = t.grad_slot(y);
      for (std::size_t i = 0; i < g.size(); ++i) gy[i % width] += g[i];
    }
  });
}

Var mul(Tape& tape, Var x, Var y) {
  const Tensor& xv = tape.value(x);
  const Tensor& yv = tape.value(y);
  require_same_shape(xv, yv, "mul");
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= yv[i];
  return tape.push(std::move(out), {x, y}, [x, y](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    const Tensor& yv = t.value(y);
    if (t.requires_grad(x)) {
      Tensor& gx = t.grad_slot(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * yv[i];
    }
    if (t.requires_grad(y)) {
      Tensor& gy = t.grad_slot(y);
      for (std::size_t i = 0; i < g.size(); ++i) gy[i] += g[i] * xv[i];
    }
  });
}

Var scale(Tape& tape, Var x, double factor) {
  Tensor out = tape.value(x);
  for (double& v : out.data()) v *= factor;
  return tape.push(std::move(out), {x}, [x, factor](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_slot(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

Var sum(Tape& tape, Var x) {
  double acc = 0.0;
  for (double v : tape.value(x).data()) acc += v;
  return tape.push(Tensor::scalar(acc), {x}, [x](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_slot(x);
    for (double& v : gx.data()) v += g[0];
  });
}

Var sigmoid(Tape& tape, Var x) {
  Tensor out = sigmoid(tape.value(x));
  return tape.push(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_slot(x);
    const Tensor& xv = t.value(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = sigmoid(xv[i]);
      gx[i] += g[i] * s * (1.0 - s);
    }
  });
}

Var gelu(Tape& tape, Var x) {
  Tensor out = tape.value(x);
  for (double& v : out.data()) v = gelu(v);
  return tape.push(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_slot(x);
    const Tensor& xv = t.value(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * gelu_grad(xv[i]);
  });
}

Var concat_last_dim(Tape& tape, const std::vector<Var>& xs) {
  if (xs.empty()) throw ArgumentError("concat_last_dim: no operands");
  const std::size_t rows = tape.value(xs[0]).rows();
  const bool vector_out = tape.value(xs[0]).rank() == 1;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (Var v : xs) {
    const Tensor& t = tape.value(v);
    if (t.rows() != rows || (t.rank() == 1) != vector_out) {
      throw DimensionError("concat_last_dim: operand " + shape_string(t.shape()) + " does not match " +
                           shape_string(tape.value(xs[0]).shape()));
    }
    widths.push_back(t.cols());
    total += t.cols();
  }
  Tensor out(vector_out ? Shape{total} : Shape{rows, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor& t = tape.value(xs[k]);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < widths[k]; ++c) out[r * total + offset + c] = t[r * widths[k] + c];
    }
    offset += widths[k];
  }
  return tape.push(std::move(out), xs, [xs, widths, rows, total](Tape& t, const Tensor& g) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      if (t.requires_grad(xs[k])) {
        Tensor& gx = t.grad_slot(xs[k]);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < widths[k]; ++c) gx[r * widths[k] + c] += g[r * total + offset + c];
        }
      }
      offset += widths[k];
    }
  });
}

Var mean_pool_rows(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  const std::size_t n = xv.rows(), c = xv.cols();
  Tensor out({c});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < c; ++j) out[j] += xv(r, j);
  }
  for (double& v : out.data()) v /= static_cast<double>(n);
  return tape.push(std::move(out), {x}, [x, n, c](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_slot(x);
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += g[j] * inv;
    }
  });
}

Var max_over_set(Tape& tape, const std::vector<Var>& xs) {
  if (xs.empty()) throw ArgumentError("max_over_set: empty operand set");
  const Tensor& first = tape.value(xs[0]);
  for (Var v : xs) require_same_shape(first, tape.value(v), "max_over_set");
  Tensor out = first;
  std::vector<std::uint32_t> argmax(out.size(), 0);
  for (std::size_t k = 1; k < xs.size(); ++k) {
    const Tensor& t = tape.value(xs[k]);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (t[i] > out[i]) {
        out[i] = t[i];
        argmax[i] = static_cast<std::uint32_t>(k);
      }
    }
  }
  return tape.push(std::move(out), xs, [xs, argmax = std::move(argmax)](Tape& t, const Tensor& g) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      Var src = xs[argmax[i]];
      if (t.requires_grad(src)) t.grad_slot(src)[i] += g[i];
    }
  });
}

Var row_normalize(Tape& tape, Var x, double eps) {
  if (!(eps > 0)) throw ArgumentError("row_normalize: eps must be positive");
  const Tensor& xv = tape.value(x);
  const std::size_t n = xv.rows(), c = xv.cols();
  Tensor out = xv;
  std::vector<double> norms(n);
  for (std::size_t r = 0; r < n; ++r) {
    double sq = 0.0;
    for (std::size_t j = 0; j < c; ++j) sq += xv[r * c + j] * xv[r * c + j];
    norms[r] = std::sqrt(sq);
    const double d = std::max(norms[r], eps);
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] /= d;
  }
  return tape.push(std::move(out), {x}, [x, n, c, eps, norms = std::move(norms)](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_slot(x);
    const Tensor& xv = t.value(x);
    for (std::size_t r = 0; r < n; ++r) {
      if (norms[r] <= eps) {
        for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += g[r * c + j] / eps;
        continue;
      }
      const double inv = 1.0 / norms[r];
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += xv[r * c + j] * inv * g[r * c + j];
      for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += (g[r * c + j] - xv[r * c + j] * inv * dot) * inv;
    }
  });
}

Var reshape(Tape& tape, Var x, Shape shape) {
  Tensor out = tape.value(x).reshaped(std::move(shape));
  return tape.push(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_slot(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var rowwise_affine(Tape& tape, Var x, Var w, Var b) {
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(w);
  const Tensor& bv = tape.value(b);
  require_same_shape(xv, wv, "rowwise_affine");
  const std::size_t n = xv.rows(), c = xv.cols();
  if (bv.size() != n) {
    throw DimensionError("rowwise_affine: bias " + shape_string(bv.shape()) + " needs one entry per row of " +
                         shape_string(xv.shape()));
  }
  Tensor out({n});
  for (std::size_t r = 0; r < n; ++r) {
    double acc = bv[r];
    for (std::size_t j = 0; j < c; ++j) acc += xv[r * c + j] * wv[r * c + j];
    out[r] = acc;
  }
  return tape.push(std::move(out), {x, w, b}, [x, w, b, n, c](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    if (t.requires_grad(x)) {
      Tensor& gx = t.grad_slot(x);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += g[r] * wv[r * c + j];
    }
    if (t.requires_grad(w)) {
      Tensor& gw = t.grad_slot(w);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < c; ++j) gw[r * c + j] += g[r] * xv[r * c + j];
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_slot(b);
      for (std::size_t r = 0; r < n; ++r) gb[r] += g[r];
    }
  });
}

}  // namespace gkg::ops
