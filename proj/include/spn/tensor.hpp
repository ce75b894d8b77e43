#pragma once

// Dense double-precision tensors and a define-by-run reverse-mode tape.

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spn {

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor scalar(double x) { return Tensor({1}, {x}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) { return Tensor({rows, cols}, fill); }
  static Tensor from_rows(const std::vector<std::vector<double>>& rows);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  /// Leading dimension for rank-2 tensors; 1 for rank-1.
  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  const std::vector<double>& data() const { return values_; }

  bool all_finite() const;
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

struct Parameter {
  std::string name;
  Tensor value;

  friend bool operator==(const Parameter&, const Parameter&) = default;
};

/// Ordered, name-addressable parameter collection.
class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor value);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  std::size_t size() const { return items_.size(); }

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::vector<Parameter> items_;
};

using GradientMap = std::map<std::string, Tensor>;

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const std::vector<std::size_t>& shape() const { return value().shape(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool attached() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Backward rule: accumulate d(loss)/d(input_i) into grads[i] (null when
/// input i does not need a gradient).
using BackwardRule = std::function<void(const Tensor& upstream, const Tensor& output,
                                        std::span<const Tensor* const> inputs, std::span<Tensor* const> grads)>;

class Gradients {
 public:
  /// Gradient with respect to any differentiable value on the tape.
  const Tensor& wrt(const Var& v) const;
  const GradientMap& parameters() const { return params_; }

 private:
  friend class Tape;
  std::vector<Tensor> by_node_;
  GradientMap params_;
  const Tape* tape_ = nullptr;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  /// Leaf whose gradient is reported under the parameter's name.
  Var parameter(const Parameter& p);

  Var record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardRule rule);

  const Tensor& value(const Var& v) const;
  bool requires_grad(const Var& v) const;
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar loss.
  Gradients backward(const Var& loss) const;

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardRule rule;
    bool requires_grad = false;
    std::string param_name;
  };
  void check_attached(const Var& v, std::string_view op) const;
  std::vector<Node> nodes_;
};

// Registered ops. Each throws std::invalid_argument naming the op and the
// offending shapes.
Var matmul(const Var& a, const Var& b);
/// Elementwise sum; b may also be a row vector ({n} or {1,n}) broadcast over a's rows.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var relu(const Var& a);
/// Column-wise concatenation of two matrices with equal row counts.
Var concat(const Var& a, const Var& b);
Var row_gather(const Var& a, std::span<const std::size_t> rows);
Var reduce_sum(const Var& a);
Var log(const Var& a);
Var exp(const Var& a);
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var scalar_scale(const Var& a, double c);
/// max(a, floor) elementwise; gradient passes only where a > floor.
Var clamp_min(const Var& a, double floor);
/// Row-wise outer product: out[r, i*q + j] = a[r,i] * b[r,j].
Var row_outer(const Var& a, const Var& b);

}  // namespace spn
