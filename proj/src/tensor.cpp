#include "spn/tensor.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace spn {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

[[noreturn]] void shape_error(std::string_view op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                              b.shape_string());
}

[[noreturn]] void shape_error(std::string_view op, const Tensor& a, std::string_view why) {
  throw std::invalid_argument(std::string(op) + ": " + std::string(why) + ", got " + a.shape_string());
}

void require_matrix(std::string_view op, const Tensor& a) {
  if (a.rank() != 2) shape_error(op, a, "expected a matrix");
}

bool is_row_vector_for(const Tensor& b, const Tensor& a) {
  if (a.rank() != 2) return false;
  if (b.rank() == 1) return b.size() == a.cols();
  return b.rank() == 2 && b.rows() == 1 && b.cols() == a.cols() && a.rows() != 1;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_)
    if (d == 0) throw std::invalid_argument("tensor dimensions must be positive, got " + shape_string());
  values_.assign(product(shape_), fill);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  for (auto d : shape_)
    if (d == 0) throw std::invalid_argument("tensor dimensions must be positive, got " + shape_string());
  if (product(shape_) != values_.size())
    throw std::invalid_argument("tensor shape " + shape_string() + " does not match " +
                                std::to_string(values_.size()) + " values");
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw std::invalid_argument("from_rows: no rows");
  const auto cols = rows.front().size();
  std::vector<double> v;
  v.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw std::invalid_argument("from_rows: ragged rows");
    v.insert(v.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(v));
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << ']';
  return os.str();
}

Parameter& ParameterSet::add(std::string name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  items_.push_back({std::move(name), std::move(value)});
  return items_.back();
}

Parameter& ParameterSet::get(std::string_view name) {
  for (auto& p : items_)
    if (p.name == name) return p;
  throw std::out_of_range("no parameter named " + std::string(name));
}

const Parameter& ParameterSet::get(std::string_view name) const {
  return const_cast<ParameterSet*>(this)->get(name);
}

bool ParameterSet::contains(std::string_view name) const {
  return std::any_of(items_.begin(), items_.end(), [&](const Parameter& p) { return p.name == name; });
}

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("detached tensor: Var is not on any tape");
  return tape_->value(*this);
}

const Tensor& Gradients::wrt(const Var& v) const {
  if (v.tape() != tape_) throw std::logic_error("detached tensor: Var belongs to a different tape");
  if (v.id() >= by_node_.size() || by_node_[v.id()].size() == 0)
    throw std::logic_error("value does not take part in the differentiated expression");
  return by_node_[v.id()];
}

void Tape::check_attached(const Var& v, std::string_view op) const {
  if (v.tape() != this || v.id() >= nodes_.size())
    throw std::logic_error("detached tensor passed to " + std::string(op));
}

Var Tape::constant(Tensor value) {
  nodes_.push_back({"constant", std::move(value), {}, nullptr, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back({"variable", std::move(value), {}, nullptr, true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const Parameter& p) {
  nodes_.push_back({"parameter", p.value, {}, nullptr, true, p.name});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardRule rule) {
  assert(value.all_finite() && "non-finite value produced by op");
  Node node{std::string(op), std::move(value), {}, std::move(rule), false, {}};
  for (const auto& in : inputs) {
    check_attached(in, op);
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(const Var& v) const {
  check_attached(v, "value");
  return nodes_[v.id()].value;
}

bool Tape::requires_grad(const Var& v) const {
  check_attached(v, "requires_grad");
  return nodes_[v.id()].requires_grad;
}

Gradients Tape::backward(const Var& loss) const {
  check_attached(loss, "backward");
  const auto& root = nodes_[loss.id()];
  if (root.value.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got " + root.value.shape_string());

  Gradients g;
  g.tape_ = this;
  g.by_node_.resize(loss.id() + 1);
  if (!root.requires_grad) return g;
  g.by_node_[loss.id()] = Tensor(root.value.shape(), 1.0);

  // Node ids are a topological order of the DAG.
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    const auto& node = nodes_[id];
    if (!node.requires_grad || g.by_node_[id].size() == 0 || !node.rule) continue;
    std::vector<const Tensor*> inputs;
    std::vector<Tensor*> grads;
    for (auto in : node.inputs) {
      inputs.push_back(&nodes_[in].value);
      if (nodes_[in].requires_grad) {
        if (g.by_node_[in].size() == 0) g.by_node_[in] = Tensor(nodes_[in].value.shape(), 0.0);
        grads.push_back(&g.by_node_[in]);
      } else {
        grads.push_back(nullptr);
      }
    }
    node.rule(g.by_node_[id], node.value, inputs, grads);
  }

  for (std::size_t id = 0; id <= loss.id(); ++id) {
    const auto& node = nodes_[id];
    if (node.param_name.empty()) continue;
    const Tensor& grad = g.by_node_[id].size() ? g.by_node_[id] : Tensor(node.value.shape(), 0.0);
    auto [it, inserted] = g.params_.try_emplace(node.param_name, grad);
    if (!inserted)
      for (std::size_t i = 0; i < grad.size(); ++i) it->second[i] += grad[i];
  }
  return g;
}

// ---------------------------------------------------------------- ops

Var matmul(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_matrix("matmul", A);
  require_matrix("matmul", B);
  if (A.cols() != B.rows()) shape_error("matmul", A, B);
  const auto m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double x = A[i * k + p];
      if (x == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) C[i * n + j] += x * B[p * n + j];
    }
  return a.tape()->record("matmul", std::move(C), {a, b},
                          [m, k, n](const Tensor& up, const Tensor&, auto in, auto grads) {
                            const Tensor& A = *in[0];
                            const Tensor& B = *in[1];
                            if (grads[0])  // dA = up * B^T
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t p = 0; p < k; ++p) {
                                  double s = 0.0;
                                  for (std::size_t j = 0; j < n; ++j) s += up[i * n + j] * B[p * n + j];
                                  (*grads[0])[i * k + p] += s;
                                }
                            if (grads[1])  // dB = A^T * up
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t p = 0; p < k; ++p) {
                                  const double x = A[i * k + p];
                                  if (x == 0.0) continue;
                                  for (std::size_t j = 0; j < n; ++j) (*grads[1])[p * n + j] += x * up[i * n + j];
                                }
                          });
}

Var add(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() == B.shape()) {
    Tensor C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C[i] += B[i];
    return a.tape()->record("add", std::move(C), {a, b}, [](const Tensor& up, const Tensor&, auto, auto grads) {
      for (auto* g : grads)
        if (g)
          for (std::size_t i = 0; i < up.size(); ++i) (*g)[i] += up[i];
    });
  }
  if (!is_row_vector_for(B, A)) shape_error("add", A, B);
  const auto rows = A.rows(), cols = A.cols();
  Tensor C = A;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) C[r * cols + c] += B[c];
  return a.tape()->record("add", std::move(C), {a, b},
                          [rows, cols](const Tensor& up, const Tensor&, auto, auto grads) {
                            if (grads[0])
                              for (std::size_t i = 0; i < up.size(); ++i) (*grads[0])[i] += up[i];
                            if (grads[1])
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t c = 0; c < cols; ++c) (*grads[1])[c] += up[r * cols + c];
                          });
}

Var sub(const Var& a, const Var& b) { return add(a, scalar_scale(b, -1.0)); }

Var mul(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) shape_error("mul", A, B);
  Tensor C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= B[i];
  return a.tape()->record("mul", std::move(C), {a, b}, [](const Tensor& up, const Tensor&, auto in, auto grads) {
    if (grads[0])
      for (std::size_t i = 0; i < up.size(); ++i) (*grads[0])[i] += up[i] * (*in[1])[i];
    if (grads[1])
      for (std::size_t i = 0; i < up.size(); ++i) (*grads[1])[i] += up[i] * (*in[0])[i];
  });
}

Var relu(const Var& a) {
  Tensor C = a.value();
  for (auto& x : C.values()) x = x > 0.0 ? x : 0.0;
  return a.tape()->record("relu", std::move(C), {a}, [](const Tensor& up, const Tensor&, auto in, auto grads) {
    if (grads[0])
      for (std::size_t i = 0; i < up.size(); ++i)
        if ((*in[0])[i] > 0.0) (*grads[0])[i] += up[i];
  });
}

Var concat(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_matrix("concat", A);
  require_matrix("concat", B);
  if (A.rows() != B.rows()) shape_error("concat", A, B);
  const auto rows = A.rows(), ca = A.cols(), cb = B.cols();
  Tensor C = Tensor::matrix(rows, ca + cb);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < ca; ++j) C[r * (ca + cb) + j] = A[r * ca + j];
    for (std::size_t j = 0; j < cb; ++j) C[r * (ca + cb) + ca + j] = B[r * cb + j];
  }
  return a.tape()->record("concat", std::move(C), {a, b},
                          [rows, ca, cb](const Tensor& up, const Tensor&, auto, auto grads) {
                            for (std::size_t r = 0; r < rows; ++r) {
                              if (grads[0])
                                for (std::size_t j = 0; j < ca; ++j) (*grads[0])[r * ca + j] += up[r * (ca + cb) + j];
                              if (grads[1])
                                for (std::size_t j = 0; j < cb; ++j)
                                  (*grads[1])[r * cb + j] += up[r * (ca + cb) + ca + j];
                            }
                          });
}

Var row_gather(const Var& a, std::span<const std::size_t> rows) {
  const Tensor& A = a.value();
  require_matrix("row_gather", A);
  if (rows.empty()) throw std::invalid_argument("row_gather: empty index list");
  const auto cols = A.cols();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Tensor C = Tensor::matrix(idx.size(), cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= A.rows())
      throw std::invalid_argument("row_gather: row " + std::to_string(idx[r]) + " out of range for " +
                                  A.shape_string());
    std::copy_n(A.values().begin() + idx[r] * cols, cols, C.values().begin() + r * cols);
  }
  return a.tape()->record("row_gather", std::move(C), {a},
                          [idx = std::move(idx), cols](const Tensor& up, const Tensor&, auto, auto grads) {
                            if (!grads[0]) return;
                            for (std::size_t r = 0; r < idx.size(); ++r)
                              for (std::size_t j = 0; j < cols; ++j) (*grads[0])[idx[r] * cols + j] += up[r * cols + j];
                          });
}

Var reduce_sum(const Var& a) {
  const Tensor& A = a.value();
  double s = 0.0;
  for (double x : A.values()) s += x;
  return a.tape()->record("reduce_sum", Tensor::scalar(s), {a}, [](const Tensor& up, const Tensor&, auto, auto grads) {
    if (grads[0])
      for (auto& g : grads[0]->values()) g += up[0];
  });
}

Var log(const Var& a) {
  Tensor C = a.value();
  for (auto& x : C.values()) {
    if (!(x > 0.0)) throw std::domain_error("log: non-positive input");
    x = std::log(x);
  }
  return a.tape()->record("log", std::move(C), {a}, [](const Tensor& up, const Tensor&, auto in, auto grads) {
    if (grads[0])
      for (std::size_t i = 0; i < up.size(); ++i) (*grads[0])[i] += up[i] / (*in[0])[i];
  });
}

Var exp(const Var& a) {
  Tensor C = a.value();
  for (auto& x : C.values()) x = std::exp(x);
  return a.tape()->record("exp", std::move(C), {a}, [](const Tensor& up, const Tensor& out, auto, auto grads) {
    if (grads[0])
      for (std::size_t i = 0; i < up.size(); ++i) (*grads[0])[i] += up[i] * out[i];
  });
}

namespace {

// Row-wise log-softmax with max subtraction.
Tensor log_softmax_values(const Tensor& A) {
  Tensor C = A;
  const auto rows = A.rows(), cols = A.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = C.values().data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < cols; ++j) row[j] -= lse;
  }
  return C;
}

}  // namespace

Var softmax_rows(const Var& a) {
  const Tensor& A = a.value();
  if (A.rank() != 1 && A.rank() != 2) shape_error("softmax_rows", A, "expected rank 1 or 2");
  Tensor C = log_softmax_values(A);
  for (auto& x : C.values()) x = std::exp(x);
  const auto rows = A.rows(), cols = A.cols();
  return a.tape()->record("softmax_rows", std::move(C), {a},
                          [rows, cols](const Tensor& up, const Tensor& out, auto, auto grads) {
                            if (!grads[0]) return;
                            for (std::size_t r = 0; r < rows; ++r) {
                              double dot = 0.0;
                              for (std::size_t j = 0; j < cols; ++j) dot += up[r * cols + j] * out[r * cols + j];
                              for (std::size_t j = 0; j < cols; ++j)
                                (*grads[0])[r * cols + j] += out[r * cols + j] * (up[r * cols + j] - dot);
                            }
                          });
}

Var log_softmax_rows(const Var& a) {
  const Tensor& A = a.value();
  if (A.rank() != 1 && A.rank() != 2) shape_error("log_softmax_rows", A, "expected rank 1 or 2");
  Tensor C = log_softmax_values(A);
  const auto rows = A.rows(), cols = A.cols();
  return a.tape()->record("log_softmax_rows", std::move(C), {a},
                          [rows, cols](const Tensor& up, const Tensor& out, auto, auto grads) {
                            if (!grads[0]) return;
                            for (std::size_t r = 0; r < rows; ++r) {
                              double s = 0.0;
                              for (std::size_t j = 0; j < cols; ++j) s += up[r * cols + j];
                              for (std::size_t j = 0; j < cols; ++j)
                                (*grads[0])[r * cols + j] += up[r * cols + j] - std::exp(out[r * cols + j]) * s;
                            }
                          });
}

Var scalar_scale(const Var& a, double c) {
  Tensor C = a.value();
  for (auto& x : C.values()) x *= c;
  return a.tape()->record("scalar_scale", std::move(C), {a}, [c](const Tensor& up, const Tensor&, auto, auto grads) {
    if (grads[0])
      for (std::size_t i = 0; i < up.size(); ++i) (*grads[0])[i] += c * up[i];
  });
}

Var clamp_min(const Var& a, double floor) {
  Tensor C = a.value();
  for (auto& x : C.values()) x = std::max(x, floor);
  return a.tape()->record("clamp_min", std::move(C), {a},
                          [floor](const Tensor& up, const Tensor&, auto in, auto grads) {
                            if (grads[0])
                              for (std::size_t i = 0; i < up.size(); ++i)
                                if ((*in[0])[i] > floor) (*grads[0])[i] += up[i];
                          });
}

Var row_outer(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_matrix("row_outer", A);
  require_matrix("row_outer", B);
  if (A.rows() != B.rows()) shape_error("row_outer", A, B);
  const auto rows = A.rows(), p = A.cols(), q = B.cols();
  Tensor C = Tensor::matrix(rows, p * q);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < q; ++j) C[r * p * q + i * q + j] = A[r * p + i] * B[r * q + j];
  return a.tape()->record("row_outer", std::move(C), {a, b},
                          [rows, p, q](const Tensor& up, const Tensor&, auto in, auto grads) {
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t i = 0; i < p; ++i)
                                for (std::size_t j = 0; j < q; ++j) {
                                  const double u = up[r * p * q + i * q + j];
                                  if (grads[0]) (*grads[0])[r * p + i] += u * (*in[1])[r * q + j];
                                  if (grads[1]) (*grads[1])[r * q + j] += u * (*in[0])[r * p + i];
                                }
                          });
}

}  // namespace spn
