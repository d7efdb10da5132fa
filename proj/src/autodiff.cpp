#include "ssg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

namespace ssg::ad {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
  std::ostringstream os;
  os << '[' << r << 'x' << c << ']';
  return os.str();
}

void check_same_tape(const Value& a, const Value& b, const char* op) {
  if (!a.valid() || !b.valid()) throw StateError(std::string(op) + ": invalid value handle");
  if (&a.tape() != &b.tape()) throw StateError(std::string(op) + ": operands live on different tapes");
}

void check_finite(const std::vector<double>& d, const char* op) {
  for (double x : d) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite result");
  }
}

Value emit(Tape& t, std::size_t rows, std::size_t cols, std::vector<double> data, bool rg,
           Tape::BackwardFn fn, const char* op) {
  check_finite(data, op);
  return t.record(rows, cols, std::move(data), rg, rg ? std::move(fn) : Tape::BackwardFn{});
}

std::size_t bdim(std::size_t a, std::size_t b, const char* op, const Value& x, const Value& y) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(x.rows(), x.cols()) + " with " +
                   shape_str(y.rows(), y.cols()));
}

// Shared driver for broadcasting binary ops. `fwd(x, y)` gives the value,
// `dx(x, y)` and `dy(x, y)` the local partials.
template <class Fwd, class Dx, class Dy>
Value broadcast_binary(const Value& a, const Value& b, const char* op, Fwd fwd, Dx dx, Dy dy) {
  check_same_tape(a, b, op);
  Tape& t = a.tape();
  const std::size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  const std::size_t r = bdim(ar, br, op, a, b);
  const std::size_t c = bdim(ac, bc, op, a, b);
  auto ai = [=](std::size_t i, std::size_t j) { return (ar == 1 ? 0 : i) * ac + (ac == 1 ? 0 : j); };
  auto bi = [=](std::size_t i, std::size_t j) { return (br == 1 ? 0 : i) * bc + (bc == 1 ? 0 : j); };
  std::vector<double> out(r * c);
  {
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] = fwd(ad[ai(i, j)], bd[bi(i, j)]);
  }
  const std::size_t ia = a.id(), ib = b.id();
  const bool rga = a.requires_grad(), rgb = b.requires_grad();
  return emit(
      t, r, c, std::move(out), rga || rgb,
      [=](Tape& tp, std::size_t self) {
        const auto& g = tp.node(self).grad;
        const auto& ad = tp.node(ia).data;
        const auto& bd = tp.node(ib).data;
        if (rga) {
          auto ga = tp.grad_buffer(ia);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) {
              const std::size_t k = ai(i, j);
              ga[k] += g[i * c + j] * dx(ad[k], bd[bi(i, j)]);
            }
        }
        if (rgb) {
          auto gb = tp.grad_buffer(ib);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) {
              const std::size_t k = bi(i, j);
              gb[k] += g[i * c + j] * dy(ad[ai(i, j)], bd[k]);
            }
        }
      },
      op);
}

template <class Fwd, class Deriv>
Value unary(const Value& v, const char* op, Fwd fwd, Deriv deriv) {
  if (!v.valid()) throw StateError(std::string(op) + ": invalid value handle");
  Tape& t = v.tape();
  std::vector<double> out(v.size());
  {
    auto d = v.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(d[i]);
  }
  const std::size_t iv = v.id();
  // deriv(x, y) receives input and output
  return emit(
      t, v.rows(), v.cols(), std::move(out), v.requires_grad(),
      [=](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const auto& x = tp.node(iv).data;
        auto gv = tp.grad_buffer(iv);
        for (std::size_t i = 0; i < n.data.size(); ++i) gv[i] += n.grad[i] * deriv(x[i], n.data[i]);
      },
      op);
}

}  // namespace

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
  if (data.size() != r * c) throw ShapeError("Matrix: data length does not match " + shape_str(r, c));
}

// ---- Value ----------------------------------------------------------------

std::size_t Value::rows() const { return tape_->node(id_).rows; }
std::size_t Value::cols() const { return tape_->node(id_).cols; }
bool Value::requires_grad() const { return tape_->node(id_).requires_grad; }
std::span<const double> Value::data() const { return tape_->node(id_).data; }
std::span<const double> Value::grad() const { return tape_->node(id_).grad; }

double Value::item() const {
  if (size() != 1) throw ShapeError("item: value is " + shape_str(rows(), cols()));
  return data()[0];
}

Matrix Value::matrix() const {
  auto d = data();
  return Matrix(rows(), cols(), std::vector<double>(d.begin(), d.end()));
}

// ---- Tape -----------------------------------------------------------------

Value Tape::record(std::size_t rows, std::size_t cols, std::vector<double> data, bool requires_grad,
                   BackwardFn backward) {
  if (backward_done_) throw StateError("tape: cannot record after backward");
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.data = std::move(data);
  n.requires_grad = requires_grad;
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Value(this, nodes_.size() - 1);
}

Value Tape::constant(const Matrix& m) {
  check_finite(m.data, "constant");
  return record(m.rows, m.cols, m.data, false, {});
}

Value Tape::constant(std::size_t rows, std::size_t cols, std::vector<double> data) {
  if (data.size() != rows * cols) throw ShapeError("constant: data length does not match " + shape_str(rows, cols));
  check_finite(data, "constant");
  return record(rows, cols, std::move(data), false, {});
}

Value Tape::parameter(const Matrix& m) {
  check_finite(m.data, "parameter");
  return record(m.rows, m.cols, m.data, true, {});
}

std::span<double> Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.data.size(), 0.0);
  return n.grad;
}

void Tape::backward(const Value& root) {
  if (backward_done_) throw StateError("tape: backward called twice");
  if (&root.tape() != this) throw StateError("tape: root belongs to another tape");
  if (root.size() != 1) throw ShapeError("backward: root must be scalar, got " + shape_str(root.rows(), root.cols()));
  backward_done_ = true;
  if (!nodes_[root.id()].requires_grad) return;
  grad_buffer(root.id())[0] = 1.0;
  // Nodes are stored in execution order, so a descending sweep is a reverse
  // topological order.
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }
}

// ---- ops ------------------------------------------------------------------

Value matmul(const Value& a, const Value& b) {
  check_same_tape(a, b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw ShapeError("matmul: " + shape_str(m, k) + " x " + shape_str(b.rows(), n));
  std::vector<double> out(m * n, 0.0);
  {
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const double x = ad[i * k + p];
        if (x == 0.0) continue;
        const double* brow = bd.data() + p * n;
        double* orow = out.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
      }
  }
  const std::size_t ia = a.id(), ib = b.id();
  const bool rga = a.requires_grad(), rgb = b.requires_grad();
  return emit(
      a.tape(), m, n, std::move(out), rga || rgb,
      [=](Tape& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        const auto& ad = t.node(ia).data;
        const auto& bd = t.node(ib).data;
        if (rga) {
          auto ga = t.grad_buffer(ia);  // g * B^T
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bd[p * n + j];
              ga[i * k + p] += s;
            }
        }
        if (rgb) {
          auto gb = t.grad_buffer(ib);  // A^T * g
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double x = ad[i * k + p];
              if (x == 0.0) continue;
              for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += x * g[i * n + j];
            }
        }
      },
      "matmul");
}

Value add(const Value& a, const Value& b) {
  return broadcast_binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Value sub(const Value& a, const Value& b) {
  return broadcast_binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Value mul(const Value& a, const Value& b) {
  return broadcast_binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Value scale(const Value& a, double s) {
  return unary(a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Value concat(std::initializer_list<Value> values, int axis) {
  return concat(std::span<const Value>(values.begin(), values.size()), axis);
}

Value concat(std::span<const Value> values, int axis) {
  if (values.empty()) throw ShapeError("concat: empty input");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  Tape& t = values[0].tape();
  std::vector<std::size_t> ids;
  std::vector<std::size_t> extent;  // rows (axis 0) or cols (axis 1) per input
  bool rg = false;
  const std::size_t fixed = axis == 0 ? values[0].cols() : values[0].rows();
  std::size_t total = 0;
  for (const auto& v : values) {
    check_same_tape(values[0], v, "concat");
    const std::size_t other = axis == 0 ? v.cols() : v.rows();
    if (other != fixed)
      throw ShapeError("concat: mismatched shape " + shape_str(v.rows(), v.cols()) + " along axis " +
                       std::to_string(axis));
    ids.push_back(v.id());
    extent.push_back(axis == 0 ? v.rows() : v.cols());
    total += extent.back();
    rg = rg || v.requires_grad();
  }
  const std::size_t rows = axis == 0 ? total : fixed;
  const std::size_t cols = axis == 0 ? fixed : total;
  std::vector<double> out(rows * cols);
  std::size_t off = 0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    auto d = values[k].data();
    if (axis == 0) {
      std::copy(d.begin(), d.end(), out.begin() + static_cast<std::ptrdiff_t>(off * cols));
    } else {
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < extent[k]; ++j) out[i * cols + off + j] = d[i * extent[k] + j];
    }
    off += extent[k];
  }
  return emit(
      t, rows, cols, std::move(out), rg,
      [=](Tape& tp, std::size_t self) {
        const auto& g = tp.node(self).grad;
        std::size_t o = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (tp.node(ids[k]).requires_grad) {
            auto gk = tp.grad_buffer(ids[k]);
            if (axis == 0) {
              for (std::size_t x = 0; x < extent[k] * cols; ++x) gk[x] += g[o * cols + x];
            } else {
              for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < extent[k]; ++j) gk[i * extent[k] + j] += g[i * cols + o + j];
            }
          }
          o += extent[k];
        }
      },
      "concat");
}

Value sigmoid(const Value& v) {
  return unary(
      v, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Value relu(const Value& v) {
  return unary(v, "relu", [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Value log(const Value& v) {
  return unary(v, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Value softmax(const Value& v) {
  const std::size_t r = v.rows(), c = v.cols();
  if (c == 0) throw ShapeError("softmax: empty row");
  std::vector<double> out(r * c);
  {
    auto d = v.data();
    for (std::size_t i = 0; i < r; ++i) {
      const double* x = d.data() + i * c;
      double* y = out.data() + i * c;
      const double mx = *std::max_element(x, x + c);
      double z = 0.0;
      for (std::size_t j = 0; j < c; ++j) z += (y[j] = std::exp(x[j] - mx));
      for (std::size_t j = 0; j < c; ++j) y[j] /= z;
    }
  }
  const std::size_t iv = v.id();
  return emit(
      v.tape(), r, c, std::move(out), v.requires_grad(),
      [=](Tape& t, std::size_t self) {
        const auto& n = t.node(self);
        auto gv = t.grad_buffer(iv);
        for (std::size_t i = 0; i < r; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += n.grad[i * c + j] * n.data[i * c + j];
          for (std::size_t j = 0; j < c; ++j) gv[i * c + j] += n.data[i * c + j] * (n.grad[i * c + j] - dot);
        }
      },
      "softmax");
}

Value cross_entropy(const Value& logits, std::size_t target) {
  if (logits.rows() != 1) throw ShapeError("cross_entropy: logits must be a single row");
  if (target >= logits.cols()) throw ShapeError("cross_entropy: target out of range");
  const int t = static_cast<int>(target);
  return cross_entropy_rows(logits, std::span<const int>(&t, 1));
}

Value cross_entropy_rows(const Value& logits, std::span<const int> targets, std::span<const double> class_weights) {
  const std::size_t r = logits.rows(), c = logits.cols();
  if (targets.size() != r) throw ShapeError("cross_entropy_rows: target count does not match rows");
  if (!class_weights.empty() && class_weights.size() != c)
    throw ShapeError("cross_entropy_rows: class weight count does not match columns");
  std::vector<double> probs(r * c, 0.0);
  std::vector<double> wrow(r, 0.0);
  double loss = 0.0, wsum = 0.0;
  {
    auto d = logits.data();
    for (std::size_t i = 0; i < r; ++i) {
      if (targets[i] < 0) continue;
      const auto tgt = static_cast<std::size_t>(targets[i]);
      if (tgt >= c) throw ShapeError("cross_entropy_rows: target " + std::to_string(tgt) + " out of range");
      const double* x = d.data() + i * c;
      const double mx = *std::max_element(x, x + c);
      double z = 0.0;
      for (std::size_t j = 0; j < c; ++j) z += std::exp(x[j] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(x[j] - lse);
      const double w = class_weights.empty() ? 1.0 : class_weights[tgt];
      wrow[i] = w;
      wsum += w;
      loss += w * (lse - x[tgt]);
    }
  }
  if (wsum == 0.0) return logits.tape().constant(1, 1, {0.0});
  loss /= wsum;
  const std::size_t iv = logits.id();
  std::vector<int> tg(targets.begin(), targets.end());
  return emit(
      logits.tape(), 1, 1, {loss}, logits.requires_grad(),
      [=, probs = std::move(probs), wrow = std::move(wrow), tg = std::move(tg)](Tape& t, std::size_t self) {
        const double g = t.node(self).grad[0];
        auto gv = t.grad_buffer(iv);
        for (std::size_t i = 0; i < r; ++i) {
          if (tg[i] < 0) continue;
          const double s = g * wrow[i] / wsum;
          for (std::size_t j = 0; j < c; ++j) gv[i * c + j] += s * probs[i * c + j];
          gv[i * c + static_cast<std::size_t>(tg[i])] -= s;
        }
      },
      "cross_entropy");
}

Value sum(const Value& v) {
  double s = 0.0;
  for (double x : v.data()) s += x;
  const std::size_t iv = v.id();
  return emit(
      v.tape(), 1, 1, {s}, v.requires_grad(),
      [=](Tape& t, std::size_t self) {
        const double g = t.node(self).grad[0];
        for (double& x : t.grad_buffer(iv)) x += g;
      },
      "sum");
}

Value mean(const Value& v) {
  if (v.size() == 0) throw ShapeError("mean: empty value");
  return scale(sum(v), 1.0 / static_cast<double>(v.size()));
}

Value max_pool_set(std::span<const Value> values) {
  if (values.empty()) throw ShapeError("max_pool_set: empty set");
  const std::size_t r = values[0].rows(), c = values[0].cols(), n = r * c;
  std::vector<double> out(n);
  std::vector<std::size_t> arg(n, 0);
  std::vector<std::size_t> ids;
  bool rg = false;
  for (std::size_t k = 0; k < values.size(); ++k) {
    const auto& v = values[k];
    check_same_tape(values[0], v, "max_pool_set");
    if (v.rows() != r || v.cols() != c) throw ShapeError("max_pool_set: mismatched member shape");
    ids.push_back(v.id());
    rg = rg || v.requires_grad();
    auto d = v.data();
    for (std::size_t x = 0; x < n; ++x) {
      if (k == 0 || d[x] > out[x]) {
        out[x] = d[x];
        arg[x] = k;
      }
    }
  }
  return emit(
      values[0].tape(), r, c, std::move(out), rg,
      [=, arg = std::move(arg), ids = std::move(ids)](Tape& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        for (std::size_t x = 0; x < n; ++x) {
          const std::size_t src = ids[arg[x]];
          if (t.node(src).requires_grad) t.grad_buffer(src)[x] += g[x];
        }
      },
      "max_pool_set");
}

Value mean_pool_set(std::span<const Value> values) {
  if (values.empty()) throw ShapeError("mean_pool_set: empty set");
  Value acc = values[0];
  for (std::size_t k = 1; k < values.size(); ++k) acc = add(acc, values[k]);
  if (acc.rows() != values[0].rows() || acc.cols() != values[0].cols())
    throw ShapeError("mean_pool_set: mismatched member shape");
  return scale(acc, 1.0 / static_cast<double>(values.size()));
}

Value max_rows(const Value& v) {
  const std::size_t r = v.rows(), c = v.cols();
  if (r == 0) throw ShapeError("max_rows: no rows");
  std::vector<double> out(c);
  std::vector<std::size_t> arg(c, 0);
  auto d = v.data();
  for (std::size_t j = 0; j < c; ++j) out[j] = d[j];
  for (std::size_t i = 1; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      if (d[i * c + j] > out[j]) {
        out[j] = d[i * c + j];
        arg[j] = i;
      }
  const std::size_t iv = v.id();
  return emit(
      v.tape(), 1, c, std::move(out), v.requires_grad(),
      [=, arg = std::move(arg)](Tape& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        auto gv = t.grad_buffer(iv);
        for (std::size_t j = 0; j < c; ++j) gv[arg[j] * c + j] += g[j];
      },
      "max_rows");
}

Value gather_rows(const Value& v, std::span<const std::size_t> index) {
  const std::size_t r = v.rows(), c = v.cols();
  std::vector<double> out(index.size() * c);
  auto d = v.data();
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= r) throw ShapeError("gather_rows: index out of range");
    std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(index[k] * c), c, out.begin() + static_cast<std::ptrdiff_t>(k * c));
  }
  const std::size_t iv = v.id();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return emit(
      v.tape(), index.size(), c, std::move(out), v.requires_grad(),
      [=, idx = std::move(idx)](Tape& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        auto gv = t.grad_buffer(iv);
        for (std::size_t k = 0; k < idx.size(); ++k)
          for (std::size_t j = 0; j < c; ++j) gv[idx[k] * c + j] += g[k * c + j];
      },
      "gather_rows");
}

Value segment_max(const Value& v, std::span<const std::size_t> segment, std::size_t segments) {
  const std::size_t r = v.rows(), c = v.cols();
  if (segment.size() != r) throw ShapeError("segment_max: segment id count does not match rows");
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<double> out(segments * c, 0.0);
  std::vector<std::size_t> arg(segments * c, kNone);
  auto d = v.data();
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t s = segment[i];
    if (s >= segments) throw ShapeError("segment_max: segment id out of range");
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t o = s * c + j;
      if (arg[o] == kNone || d[i * c + j] > out[o]) {
        out[o] = d[i * c + j];
        arg[o] = i;
      }
    }
  }
  const std::size_t iv = v.id();
  return emit(
      v.tape(), segments, c, std::move(out), v.requires_grad(),
      [=, arg = std::move(arg)](Tape& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        auto gv = t.grad_buffer(iv);
        for (std::size_t o = 0; o < arg.size(); ++o)
          if (arg[o] != kNone) gv[arg[o] * c + o % c] += g[o];
      },
      "segment_max");
}

Value segment_mean(const Value& v, std::span<const std::size_t> segment, std::size_t segments) {
  const std::size_t r = v.rows(), c = v.cols();
  if (segment.size() != r) throw ShapeError("segment_mean: segment id count does not match rows");
  std::vector<double> count(segments, 0.0);
  for (std::size_t s : segment) {
    if (s >= segments) throw ShapeError("segment_mean: segment id out of range");
    count[s] += 1.0;
  }
  std::vector<double> out(segments * c, 0.0);
  auto d = v.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[segment[i] * c + j] += d[i * c + j];
  for (std::size_t s = 0; s < segments; ++s)
    if (count[s] > 0)
      for (std::size_t j = 0; j < c; ++j) out[s * c + j] /= count[s];
  const std::size_t iv = v.id();
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return emit(
      v.tape(), segments, c, std::move(out), v.requires_grad(),
      [=, seg = std::move(seg), count = std::move(count)](Tape& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        auto gv = t.grad_buffer(iv);
        for (std::size_t i = 0; i < seg.size(); ++i)
          for (std::size_t j = 0; j < c; ++j) gv[i * c + j] += g[seg[i] * c + j] / count[seg[i]];
      },
      "segment_mean");
}

// ---- grad_check -----------------------------------------------------------

double grad_check(const ScalarFn& f, const std::vector<Matrix>& params, double step) {
  auto evaluate = [&](const std::vector<Matrix>& ps) {
    Tape t;
    std::vector<Value> vs;
    vs.reserve(ps.size());
    for (const auto& p : ps) vs.push_back(t.constant(p));
    return f(t, vs).item();
  };

  Tape tape;
  std::vector<Value> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.parameter(p));
  Value out = f(tape, leaves);
  if (out.size() != 1) throw ShapeError("grad_check: function must return a scalar");
  tape.backward(out);

  double worst = 0.0;
  std::vector<Matrix> probe = params;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto analytic = leaves[k].grad();
    for (std::size_t x = 0; x < params[k].size(); ++x) {
      const double base = params[k].data[x];
      probe[k].data[x] = base + step;
      const double up = evaluate(probe);
      probe[k].data[x] = base - step;
      const double down = evaluate(probe);
      probe[k].data[x] = base;
      const double central = (up - down) / (2.0 * step);
      if (!std::isfinite(central)) throw NumericError("grad_check: non-finite finite difference");
      const double a = analytic.empty() ? 0.0 : analytic[x];
      worst = std::max(worst, std::abs(a - central) / std::max(1.0, std::abs(central)));
    }
  }
  return worst;
}

}  // namespace ssg::ad
