#pragma once

// Dense float64 tensors with reverse-mode automatic differentiation.
//
// A Tensor is a shared handle: copying a Tensor aliases the same buffer, the
// way torch::Tensor does. Use clone() for an independent copy.
//
// Ops record onto the innermost Tape alive on the calling thread, and only
// when at least one input requires a gradient. With no Tape alive every op is
// a plain forward computation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace facile {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;
  std::uint64_t id = 0;
};
}  // namespace detail

class Tensor {
 public:
  // Scalar zero.
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // 1-D tensor.
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  // 2-D tensor from row-major nested values; all rows must have equal length.
  static Tensor matrix(const std::vector<std::vector<double>>& rows, bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t dim(std::size_t axis) const;

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  std::vector<double> to_vector() const { return impl_->data; }
  double item() const;
  // Row-major element access for 2-D tensors.
  double at(std::size_t row, std::size_t col) const;
  double operator[](std::size_t flat) const { return impl_->data[flat]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return !impl_->grad.empty(); }
  // Gradient buffer; all zeros when no gradient has reached this tensor.
  std::vector<double> grad() const;
  void zero_grad();

  // Same values, no gradient history, never requires a gradient.
  Tensor detach() const;
  // Independent copy of the values; keeps the requires_grad flag.
  Tensor clone() const;

  std::uint64_t id() const { return impl_->id; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl);
  std::shared_ptr<detail::TensorImpl> impl_;

  friend Tensor make_tensor(Shape, std::vector<double>, bool);
};

// Internal factory also used by op implementations.
Tensor make_tensor(Shape shape, std::vector<double> values, bool requires_grad);

// Records differentiable operations in execution order.
//
// Constructing a Tape makes it the active tape of the calling thread until
// it is destroyed; tapes nest like scopes. A tape must be destroyed on the
// thread that created it.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> grad_out)>;

  struct Record {
    std::string op;
    std::vector<std::uint64_t> input_ids;
    std::shared_ptr<detail::TensorImpl> output;
    BackwardFn backward;
  };

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Innermost live tape on this thread, or nullptr.
  static Tape* active();

  void record(std::string op, const std::vector<const Tensor*>& inputs, const Tensor& output,
              BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and walks the records in exact reverse order,
  // accumulating into every tensor that requires a gradient. Throws
  // ContractError for a non-scalar loss or an empty tape, DivergenceError if
  // any produced gradient is not finite.
  void backward(const Tensor& loss);

  const std::vector<Record>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

 private:
  std::vector<Record> records_;
  Tape* previous_ = nullptr;
};

// Adds `values` into the gradient buffer of `impl`, allocating it on first use.
void accumulate_grad(detail::TensorImpl& impl, std::span<const double> values);

// ---------------------------------------------------------------------------
// Primitives. Axis arguments index into shape(); reductions drop the axis.

Tensor matmul(const Tensor& a, const Tensor& b);          // (m x k)(k x n)
Tensor add(const Tensor& a, const Tensor& b);             // same shape
Tensor sub(const Tensor& a, const Tensor& b);             // same shape
Tensor mul(const Tensor& a, const Tensor& b);             // elementwise, same shape
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor broadcast_add(const Tensor& a, const Tensor& row);  // (m x n) + (n)
Tensor relu(const Tensor& a);                              // d/dx at 0 is 0
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // DomainError for any entry <= 0
Tensor abs(const Tensor& a);  // subgradient 0 at 0
Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);
Tensor max(const Tensor& a, std::size_t axis);  // gradient routed to the first maximal entry
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor transpose(const Tensor& a);  // 2-D only
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);  // 2-D, [begin, end)
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);  // 2-D, [begin, end)

// x / max(||x||, eps) along `axis`. With eps == 0 a zero-norm slice is a DomainError.
Tensor l2_normalize(const Tensor& a, std::size_t axis, double eps = 0.0);

// Cosine similarity along the last axis, with norms floored at eps:
// (m x d, m x d) -> (m), (d, d) -> scalar.
Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps = 1e-12);

}  // namespace facile
