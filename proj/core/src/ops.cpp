#include "milqt/ops.hpp"

#include <cmath>
#include <vector>

#include "milqt/error.hpp"

namespace milqt {

namespace {

void require_rank2(const Tensor& t, const char* who) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(who) + ": needs rank 2, got " + shape_str(t.shape()));
  }
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  std::size_t m = a.extent(0), k = a.extent(1), k2 = b.extent(0), n = b.extent(1);
  if (k != k2) {
    throw ShapeError("matmul: " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  }
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> cv(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      double ail = av[i * k + l];
      if (ail == 0.0) continue;
      const double* brow = bv.data() + l * n;
      double* crow = cv.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += ail * brow[j];
    }
  }
  int ia = tape.input_id(a), ib = tape.input_id(b);
  Tensor out({m, n}, std::move(cv));
  tape.add_node(out, {ia, ib},
                [a, b, ia, ib, m, k, n](Tape& t, std::span<const double> dout) {
                  if (double* da = t.grad_buf(ia)) {
                    const auto& bv2 = b.values();
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t l = 0; l < k; ++l) {
                        double acc = 0.0;
                        const double* brow = bv2.data() + l * n;
                        const double* drow = dout.data() + i * n;
                        for (std::size_t j = 0; j < n; ++j) acc += drow[j] * brow[j];
                        da[i * k + l] += acc;
                      }
                    }
                  }
                  if (double* db = t.grad_buf(ib)) {
                    const auto& av2 = a.values();
                    for (std::size_t i = 0; i < m; ++i) {
                      const double* drow = dout.data() + i * n;
                      for (std::size_t l = 0; l < k; ++l) {
                        double ail = av2[i * k + l];
                        if (ail == 0.0) continue;
                        double* dbrow = db + l * n;
                        for (std::size_t j = 0; j < n; ++j) dbrow[j] += ail * drow[j];
                      }
                    }
                  }
                });
  return out;
}

Tensor ewise(Tape& tape, const Tensor& a, const Tensor& b, Ewise op) {
  bool a_scalar = a.size() == 1, b_scalar = b.size() == 1;
  if (!a_scalar && !b_scalar && !same_shape(a.shape(), b.shape())) {
    throw ShapeError("ewise: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const auto& av = a.values();
  const auto& bv = b.values();
  Shape out_shape = a_scalar && !b_scalar ? b.shape() : a.shape();
  std::size_t n = shape_size(out_shape);
  std::vector<double> cv(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = av[a_scalar ? 0 : i], y = bv[b_scalar ? 0 : i];
    cv[i] = op == Ewise::Mul ? x * y : x + y;
  }
  int ia = tape.input_id(a), ib = tape.input_id(b);
  Tensor out(std::move(out_shape), std::move(cv));
  tape.add_node(out, {ia, ib},
                [a, b, ia, ib, op, a_scalar, b_scalar, n](Tape& t, std::span<const double> dout) {
                  const auto& av2 = a.values();
                  const auto& bv2 = b.values();
                  if (double* da = t.grad_buf(ia)) {
                    for (std::size_t i = 0; i < n; ++i) {
                      double g = op == Ewise::Mul ? dout[i] * bv2[b_scalar ? 0 : i] : dout[i];
                      da[a_scalar ? 0 : i] += g;
                    }
                  }
                  if (double* db = t.grad_buf(ib)) {
                    for (std::size_t i = 0; i < n; ++i) {
                      double g = op == Ewise::Mul ? dout[i] * av2[a_scalar ? 0 : i] : dout[i];
                      db[b_scalar ? 0 : i] += g;
                    }
                  }
                });
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) { return ewise(tape, a, b, Ewise::Add); }
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) { return ewise(tape, a, b, Ewise::Mul); }

Tensor activation(Tape& tape, const Tensor& x, Act act) {
  const auto& xv = x.values();
  std::size_t n = xv.size();
  std::vector<double> yv(n);
  switch (act) {
    case Act::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) {
        double v = xv[i];
        yv[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      }
      break;
    case Act::Tanh:
      for (std::size_t i = 0; i < n; ++i) yv[i] = std::tanh(xv[i]);
      break;
    case Act::Relu:
      for (std::size_t i = 0; i < n; ++i) yv[i] = xv[i] > 0.0 ? xv[i] : 0.0;
      break;
    case Act::Log:
      for (std::size_t i = 0; i < n; ++i) yv[i] = std::log(xv[i] < kLogFloor ? kLogFloor : xv[i]);
      break;
    case Act::SoftmaxLastDim: {
      std::size_t row = x.shape().back();
      for (std::size_t base = 0; base < n; base += row) {
        double mx = xv[base];
        for (std::size_t j = 1; j < row; ++j) mx = std::max(mx, xv[base + j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < row; ++j) {
          yv[base + j] = std::exp(xv[base + j] - mx);
          sum += yv[base + j];
        }
        for (std::size_t j = 0; j < row; ++j) yv[base + j] /= sum;
      }
      break;
    }
  }
  int ix = tape.input_id(x);
  Tensor out(x.shape(), std::move(yv));
  tape.add_node(out, {ix}, [x, out, ix, act, n](Tape& t, std::span<const double> dout) {
    double* dx = t.grad_buf(ix);
    if (!dx) return;
    const auto& xv2 = x.values();
    const auto& yv2 = out.values();
    switch (act) {
      case Act::Sigmoid:
        for (std::size_t i = 0; i < n; ++i) dx[i] += dout[i] * yv2[i] * (1.0 - yv2[i]);
        break;
      case Act::Tanh:
        for (std::size_t i = 0; i < n; ++i) dx[i] += dout[i] * (1.0 - yv2[i] * yv2[i]);
        break;
      case Act::Relu:
        for (std::size_t i = 0; i < n; ++i) dx[i] += xv2[i] > 0.0 ? dout[i] : 0.0;
        break;
      case Act::Log:
        for (std::size_t i = 0; i < n; ++i) {
          if (xv2[i] >= kLogFloor) dx[i] += dout[i] / xv2[i];
        }
        break;
      case Act::SoftmaxLastDim: {
        std::size_t row = x.shape().back();
        for (std::size_t base = 0; base < n; base += row) {
          double inner = 0.0;
          for (std::size_t j = 0; j < row; ++j) inner += dout[base + j] * yv2[base + j];
          for (std::size_t j = 0; j < row; ++j) {
            dx[base + j] += yv2[base + j] * (dout[base + j] - inner);
          }
        }
        break;
      }
    }
  });
  return out;
}

Tensor sigmoid(Tape& tape, const Tensor& x) { return activation(tape, x, Act::Sigmoid); }
Tensor tanh_act(Tape& tape, const Tensor& x) { return activation(tape, x, Act::Tanh); }
Tensor relu(Tape& tape, const Tensor& x) { return activation(tape, x, Act::Relu); }
Tensor softmax_lastdim(Tape& tape, const Tensor& x) {
  return activation(tape, x, Act::SoftmaxLastDim);
}
Tensor log_clamped(Tape& tape, const Tensor& x) { return activation(tape, x, Act::Log); }

Tensor reduce(Tape& tape, const Tensor& x, Red op, std::optional<std::size_t> axis) {
  const auto& xv = x.values();
  int ix = tape.input_id(x);
  if (!axis) {
    double acc = 0.0;
    for (double v : xv) acc += v;
    std::size_t n = xv.size();
    if (op == Red::Mean) acc /= static_cast<double>(n);
    Tensor out({1}, {acc});
    tape.add_node(out, {ix}, [ix, n, op](Tape& t, std::span<const double> dout) {
      if (double* dx = t.grad_buf(ix)) {
        double g = op == Red::Mean ? dout[0] / static_cast<double>(n) : dout[0];
        for (std::size_t i = 0; i < n; ++i) dx[i] += g;
      }
    });
    return out;
  }
  std::size_t ax = *axis;
  if (ax >= x.rank()) {
    throw ShapeError("reduce: axis " + std::to_string(ax) + " out of range for " +
                     shape_str(x.shape()));
  }
  std::size_t d = x.shape()[ax];
  std::size_t inner = 1;
  for (std::size_t i = ax + 1; i < x.rank(); ++i) inner *= x.shape()[i];
  std::size_t outer = x.size() / (d * inner);
  Shape out_shape;
  for (std::size_t i = 0; i < x.rank(); ++i) {
    if (i != ax) out_shape.push_back(x.shape()[i]);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<double> yv(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t a = 0; a < d; ++a) {
      const double* src = xv.data() + (o * d + a) * inner;
      double* dst = yv.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  if (op == Red::Mean) {
    for (double& v : yv) v /= static_cast<double>(d);
  }
  Tensor out(std::move(out_shape), std::move(yv));
  tape.add_node(out, {ix}, [ix, outer, d, inner, op](Tape& t, std::span<const double> dout) {
    if (double* dx = t.grad_buf(ix)) {
      double scale = op == Red::Mean ? 1.0 / static_cast<double>(d) : 1.0;
      for (std::size_t o = 0; o < outer; ++o) {
        const double* drow = dout.data() + o * inner;
        for (std::size_t a = 0; a < d; ++a) {
          double* dst = dx + (o * d + a) * inner;
          for (std::size_t i = 0; i < inner; ++i) dst[i] += scale * drow[i];
        }
      }
    }
  });
  return out;
}

Tensor affine(Tape& tape, const Tensor& x, double scale, double shift) {
  const auto& xv = x.values();
  std::size_t n = xv.size();
  std::vector<double> yv(n);
  for (std::size_t i = 0; i < n; ++i) yv[i] = scale * xv[i] + shift;
  int ix = tape.input_id(x);
  Tensor out(x.shape(), std::move(yv));
  tape.add_node(out, {ix}, [ix, scale, n](Tape& t, std::span<const double> dout) {
    if (double* dx = t.grad_buf(ix)) {
      for (std::size_t i = 0; i < n; ++i) dx[i] += scale * dout[i];
    }
  });
  return out;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                     " changes element count");
  }
  int ix = tape.input_id(x);
  std::size_t n = x.size();
  Tensor out(std::move(shape), x.values());
  tape.add_node(out, {ix}, [ix, n](Tape& t, std::span<const double> dout) {
    if (double* dx = t.grad_buf(ix)) {
      for (std::size_t i = 0; i < n; ++i) dx[i] += dout[i];
    }
  });
  return out;
}

Tensor gather_rows(Tape& tape, const Tensor& x, std::span<const int> rows) {
  require_rank2(x, "gather_rows");
  std::size_t nrows = x.extent(0), d = x.extent(1);
  const auto& xv = x.values();
  std::vector<double> yv(rows.size() * d, 0.0);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    int r = rows[t];
    if (r < 0) continue;
    if (static_cast<std::size_t>(r) >= nrows) {
      throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range for " +
                       shape_str(x.shape()));
    }
    const double* src = xv.data() + static_cast<std::size_t>(r) * d;
    std::copy(src, src + d, yv.data() + t * d);
  }
  int ix = tape.input_id(x);
  std::vector<int> rows_copy(rows.begin(), rows.end());
  Tensor out({rows.size(), d}, std::move(yv));
  tape.add_node(out, {ix},
                [ix, d, rows_copy = std::move(rows_copy)](Tape& t, std::span<const double> dout) {
                  if (double* dx = t.grad_buf(ix)) {
                    for (std::size_t i = 0; i < rows_copy.size(); ++i) {
                      int r = rows_copy[i];
                      if (r < 0) continue;
                      const double* src = dout.data() + i * d;
                      double* dst = dx + static_cast<std::size_t>(r) * d;
                      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                    }
                  }
                });
  return out;
}

Tensor stack_cols(Tape& tape, std::span<const Tensor> cols) {
  if (cols.empty()) throw ShapeError("stack_cols: no columns");
  std::size_t n = cols.front().size(), j_count = cols.size();
  std::vector<int> ids(j_count);
  std::vector<double> yv(n * j_count);
  for (std::size_t j = 0; j < j_count; ++j) {
    if (cols[j].rank() != 1 || cols[j].size() != n) {
      throw ShapeError("stack_cols: column " + std::to_string(j) + " has shape " +
                       shape_str(cols[j].shape()));
    }
    const auto& cv = cols[j].values();
    for (std::size_t i = 0; i < n; ++i) yv[i * j_count + j] = cv[i];
    ids[j] = tape.input_id(cols[j]);
  }
  Tensor out({n, j_count}, std::move(yv));
  tape.add_node(out, std::vector<int>(ids.begin(), ids.end()),
                [ids, n, j_count](Tape& t, std::span<const double> dout) {
                  for (std::size_t j = 0; j < j_count; ++j) {
                    if (double* dc = t.grad_buf(ids[j])) {
                      for (std::size_t i = 0; i < n; ++i) dc[i] += dout[i * j_count + j];
                    }
                  }
                });
  return out;
}

Tensor as_col(Tape& tape, const Tensor& x) { return reshape(tape, x, {x.size(), 1}); }
Tensor as_row(Tape& tape, const Tensor& x) { return reshape(tape, x, {1, x.size()}); }

Tensor squeeze(Tape& tape, const Tensor& x) {
  Shape shape;
  for (std::size_t d : x.shape()) {
    if (d != 1) shape.push_back(d);
  }
  if (shape.empty()) shape.push_back(1);
  return reshape(tape, x, std::move(shape));
}

Tensor dot(Tape& tape, const Tensor& a, const Tensor& b) {
  return reduce(tape, mul(tape, a, b), Red::Sum);
}

}  // namespace milqt
