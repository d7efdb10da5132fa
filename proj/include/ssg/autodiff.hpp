#pragma once

// Dense 2-D arrays of doubles with a recorded tape for reverse-mode gradients.
//
// Every value lives on a Tape and is addressed through a lightweight Value
// handle. Vectors are represented as 1xK rows. Ops check shapes eagerly and
// throw NumericError as soon as a forward result contains a non-finite entry.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ssg/error.hpp"

namespace ssg::ad {

// Plain row-major matrix, the storage type for parameters and constants.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> d);

  static Matrix row(std::vector<double> d) {
    const std::size_t n = d.size();
    return Matrix(1, n, std::move(d));
  }

  std::size_t size() const { return data.size(); }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  bool operator==(const Matrix&) const = default;
};

class Tape;

class Value {
 public:
  Value() = default;
  Value(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const { return rows() * cols(); }
  bool requires_grad() const;

  std::span<const double> data() const;
  // Empty until backward has written a gradient into this value.
  std::span<const double> grad() const;
  double operator()(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }
  double item() const;
  Matrix matrix() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value constant(const Matrix& m);
  Value constant(std::size_t rows, std::size_t cols, std::vector<double> data);
  Value parameter(const Matrix& m);

  // Reverse sweep from a 1x1 root. May be called once per tape.
  void backward(const Value& root);
  bool backward_done() const { return backward_done_; }
  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  Value record(std::size_t rows, std::size_t cols, std::vector<double> data, bool requires_grad,
               BackwardFn backward);
  const Node& node(std::size_t id) const { return nodes_[id]; }
  // Gradient buffer of `id`, allocated (zeroed) on first access.
  std::span<double> grad_buffer(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

 private:
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// ---- primitive ops --------------------------------------------------------

Value matmul(const Value& a, const Value& b);
// Elementwise with broadcasting: each dimension must match or be 1.
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value scale(const Value& a, double s);
// axis 0 stacks rows, axis 1 joins columns.
Value concat(std::span<const Value> values, int axis);
Value concat(std::initializer_list<Value> values, int axis);
Value sigmoid(const Value& v);
Value relu(const Value& v);
Value log(const Value& v);
// Row-wise softmax; a 1xK value is the plain vector case.
Value softmax(const Value& v);
// Cross entropy of a 1xK logit row against `target`, fused with log-softmax.
Value cross_entropy(const Value& logits, std::size_t target);
// Weighted mean cross entropy over the rows of `logits`. Rows whose target is
// negative are skipped. `class_weights` may be empty (all ones). Returns a
// constant zero when no row is labeled.
Value cross_entropy_rows(const Value& logits, std::span<const int> targets,
                         std::span<const double> class_weights = {});
Value sum(const Value& v);
Value mean(const Value& v);

// Elementwise max across a non-empty list of equally shaped values. Gradient
// goes to the per-entry argmax; ties resolve to the lowest list index.
Value max_pool_set(std::span<const Value> values);
Value mean_pool_set(std::span<const Value> values);
// Column-wise max over the rows of `v` (1 x cols), same tie rule.
Value max_rows(const Value& v);

Value gather_rows(const Value& v, std::span<const std::size_t> index);
// Row-wise max of `v` grouped by segment id. Empty segments yield zero rows.
Value segment_max(const Value& v, std::span<const std::size_t> segment, std::size_t segments);
// Row-wise mean of `v` grouped by segment id. Empty segments yield zero rows.
Value segment_mean(const Value& v, std::span<const std::size_t> segment, std::size_t segments);

// ---- gradient checking ----------------------------------------------------

using ScalarFn = std::function<Value(Tape&, const std::vector<Value>& params)>;

// Max over all parameter entries of |analytic - central| / max(1, |central|).
double grad_check(const ScalarFn& f, const std::vector<Matrix>& params, double step = 1e-5);

}  // namespace ssg::ad
