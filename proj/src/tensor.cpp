#include "facile/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "facile/error.hpp"

namespace facile {

namespace {

thread_local std::uint64_t g_next_id = 1;
thread_local Tape* g_active_tape = nullptr;

using ImplPtr = std::shared_ptr<detail::TensorImpl>;

[[noreturn]] void dim_error(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                       shape_str(b));
}

[[noreturn]] void dim_error(const char* op, const Shape& a, const std::string& why) {
  throw DimensionError(std::string(op) + ": shape " + shape_str(a) + " " + why);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) dim_error(op, a.shape(), b.shape());
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) dim_error(op, a.shape(), "must have rank " + std::to_string(rank));
}

// True when the op should be recorded: a tape is alive and some input needs a gradient.
bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Splits a shape around `axis` into (outer, n, inner) for strided loops.
struct AxisView {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
  Shape reduced;
};

AxisView axis_view(const char* op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    dim_error(op, shape, "has no axis " + std::to_string(axis));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  v.reduced = shape;
  v.reduced.erase(v.reduced.begin() + static_cast<std::ptrdiff_t>(axis));
  return v;
}

inline std::size_t flat_index(const AxisView& v, std::size_t o, std::size_t i, std::size_t k) {
  return (o * v.n + i) * v.inner + k;
}

template <typename Forward, typename Derivative>
Tensor unary(const char* op, const Tensor& a, Forward f, Derivative df) {
  const auto in = a.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  const bool track = tracking({&a});
  Tensor result = make_tensor(a.shape(), std::move(out), track);
  if (track) {
    ImplPtr pa = a.impl();
    ImplPtr po = result.impl();
    Tape::active()->record(op, {&a}, result, [pa, po, df](std::span<const double> g) {
      std::vector<double> local(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) local[i] = g[i] * df(pa->data[i], po->data[i]);
      accumulate_grad(*pa, local);
    });
  }
  return result;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor make_tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor: zero-sized dimension in shape " + shape_str(shape));
  }
  if (values.size() != shape_numel(shape)) {
    throw DimensionError("tensor: " + std::to_string(values.size()) +
                         " values do not fill shape " + shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  impl->id = g_next_id++;
  return Tensor(std::move(impl));
}

Tensor::Tensor() : Tensor(make_tensor({}, {0.0}, false)) {}

Tensor::Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return make_tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return make_tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return make_tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return make_tensor({}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return make_tensor({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows, bool requires_grad) {
  if (rows.empty()) throw DimensionError("tensor: matrix needs at least one row");
  const std::size_t cols = rows.front().size();
  std::vector<double> flat;
  flat.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw DimensionError("tensor: ragged matrix rows");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return make_tensor({rows.size(), cols}, std::move(flat), requires_grad);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) dim_error("dim", shape(), "has no axis " + std::to_string(axis));
  return impl_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  }
  return impl_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  require_rank("at", *this, 2);
  return impl_->data[row * impl_->shape[1] + col];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::vector<double> Tensor::grad() const {
  if (impl_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const { return make_tensor(shape(), impl_->data, false); }

Tensor Tensor::clone() const { return make_tensor(shape(), impl_->data, impl_->requires_grad); }

void accumulate_grad(detail::TensorImpl& impl, std::span<const double> values) {
  if (!impl.requires_grad) return;
  if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) impl.grad[i] += values[i];
}

// ---------------------------------------------------------------------------
// Tape

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::string op, const std::vector<const Tensor*>& inputs, const Tensor& output,
                  BackwardFn backward) {
  Record r;
  r.op = std::move(op);
  for (const Tensor* t : inputs) r.input_ids.push_back(t->id());
  r.output = output.impl();
  r.backward = std::move(backward);
  records_.push_back(std::move(r));
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  if (records_.empty()) throw ContractError("backward: tape is empty");
  if (!loss.requires_grad()) {
    throw ContractError("backward: loss does not depend on any tensor that requires a gradient");
  }
  const double seed = 1.0;
  accumulate_grad(*loss.impl(), std::span<const double>(&seed, 1));
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    const auto& out = *it->output;
    if (out.grad.empty()) continue;
    for (double g : out.grad) {
      if (!std::isfinite(g)) {
        throw DivergenceError("backward: non-finite gradient flowing out of op '" + it->op + "'");
      }
    }
    it->backward(out.grad);
  }
}

// ---------------------------------------------------------------------------
// Primitives

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    dim_error("matmul", a.shape(), b.shape());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const double* A = a.data().data();
  const double* B = b.data().data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  const bool track = tracking({&a, &b});
  Tensor result = make_tensor({m, n}, std::move(out), track);
  if (track) {
    ImplPtr pa = a.impl(), pb = b.impl();
    Tape::active()->record("matmul", {&a, &b}, result, [pa, pb, m, k, n](std::span<const double> g) {
      if (pa->requires_grad) {
        // dA = G B^T
        std::vector<double> da(m * k, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double* brow = pb->data.data() + p * n;
            const double* grow = g.data() + i * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
            da[i * k + p] = s;
          }
        }
        accumulate_grad(*pa, da);
      }
      if (pb->requires_grad) {
        // dB = A^T G
        std::vector<double> db(k * n, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g.data() + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double av = pa->data[i * k + p];
            if (av == 0.0) continue;
            double* drow = db.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) drow[j] += av * grow[j];
          }
        }
        accumulate_grad(*pb, db);
      }
    });
  }
  return result;
}

namespace {

Tensor add_sub(const char* op, const Tensor& a, const Tensor& b, double sign) {
  require_same_shape(op, a, b);
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + sign * y[i];
  const bool track = tracking({&a, &b});
  Tensor result = make_tensor(a.shape(), std::move(out), track);
  if (track) {
    ImplPtr pa = a.impl(), pb = b.impl();
    Tape::active()->record(op, {&a, &b}, result, [pa, pb, sign](std::span<const double> g) {
      accumulate_grad(*pa, g);
      if (pb->requires_grad) {
        std::vector<double> gb(g.begin(), g.end());
        for (double& v : gb) v *= sign;
        accumulate_grad(*pb, gb);
      }
    });
  }
  return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_sub("add", a, b, 1.0); }

Tensor sub(const Tensor& a, const Tensor& b) { return add_sub("sub", a, b, -1.0); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  const bool track = tracking({&a, &b});
  Tensor result = make_tensor(a.shape(), std::move(out), track);
  if (track) {
    ImplPtr pa = a.impl(), pb = b.impl();
    Tape::active()->record("mul", {&a, &b}, result, [pa, pb](std::span<const double> g) {
      std::vector<double> local(g.size());
      if (pa->requires_grad) {
        for (std::size_t i = 0; i < g.size(); ++i) local[i] = g[i] * pb->data[i];
        accumulate_grad(*pa, local);
      }
      if (pb->requires_grad) {
        for (std::size_t i = 0; i < g.size(); ++i) local[i] = g[i] * pa->data[i];
        accumulate_grad(*pb, local);
      }
    });
  }
  return result;
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      "add_scalar", a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor broadcast_add(const Tensor& a, const Tensor& row) {
  if (a.rank() != 2 || row.rank() != 1 || row.dim(0) != a.dim(1)) {
    dim_error("broadcast_add", a.shape(), row.shape());
  }
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto r = row.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += r[j];
  }
  const bool track = tracking({&a, &row});
  Tensor result = make_tensor(a.shape(), std::move(out), track);
  if (track) {
    ImplPtr pa = a.impl(), pr = row.impl();
    Tape::active()->record("broadcast_add", {&a, &row}, result,
                           [pa, pr, m, n](std::span<const double> g) {
                             accumulate_grad(*pa, g);
                             if (pr->requires_grad) {
                               std::vector<double> gr(n, 0.0);
                               for (std::size_t i = 0; i < m; ++i) {
                                 for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
                               }
                               accumulate_grad(*pr, gr);
                             }
                           });
  }
  return result;
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double x : a.data()) {
    if (!(x > 0.0)) {
      throw DomainError("log: input contains non-positive value " + std::to_string(x));
    }
  }
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor abs(const Tensor& a) {
  return unary(
      "abs", a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  const AxisView v = axis_view("softmax", a.shape(), axis);
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t k = 0; k < v.inner; ++k) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < v.n; ++i) mx = std::max(mx, x[flat_index(v, o, i, k)]);
      double z = 0.0;
      for (std::size_t i = 0; i < v.n; ++i) {
        const std::size_t idx = flat_index(v, o, i, k);
        out[idx] = std::exp(x[idx] - mx);
        z += out[idx];
      }
      for (std::size_t i = 0; i < v.n; ++i) out[flat_index(v, o, i, k)] /= z;
    }
  }
  const bool track = tracking({&a});
  Tensor result = make_tensor(a.shape(), std::move(out), track);
  if (track) {
    ImplPtr pa = a.impl(), po = result.impl();
    Tape::active()->record("softmax", {&a}, result, [pa, po, v](std::span<const double> g) {
      const auto& y = po->data;
      std::vector<double> dx(g.size());
      for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t k = 0; k < v.inner; ++k) {
          double dot = 0.0;
          for (std::size_t i = 0; i < v.n; ++i) {
            const std::size_t idx = flat_index(v, o, i, k);
            dot += g[idx] * y[idx];
          }
          for (std::size_t i = 0; i < v.n; ++i) {
            const std::size_t idx = flat_index(v, o, i, k);
            dx[idx] = y[idx] * (g[idx] - dot);
          }
        }
      }
      accumulate_grad(*pa, dx);
    });
  }
  return result;
}

Tensor log_softmax(const Tensor& a, std::size_t axis) {
  const AxisView v = axis_view("log_softmax", a.shape(), axis);
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t k = 0; k < v.inner; ++k) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < v.n; ++i) mx = std::max(mx, x[flat_index(v, o, i, k)]);
      double z = 0.0;
      for (std::size_t i = 0; i < v.n; ++i) z += std::exp(x[flat_index(v, o, i, k)] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t i = 0; i < v.n; ++i) {
        const std::size_t idx = flat_index(v, o, i, k);
        out[idx] = x[idx] - lse;
      }
    }
  }
  const bool track = tracking({&a});
  Tensor result = make_tensor(a.shape(), std::move(out), track);
  if (track) {
    ImplPtr pa = a.impl(), po = result.impl();
    Tape::active()->record("log_softmax", {&a}, result, [pa, po, v](std::span<const double> g) {
      const auto& y = po->data;
      std::vector<double> dx(g.size());
      for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t k = 0; k < v.inner; ++k) {
          double gsum = 0.0;
          for (std::size_t i = 0; i < v.n; ++i) gsum += g[flat_index(v, o, i, k)];
          for (std::size_t i = 0; i < v.n; ++i) {
            const std::size_t idx = flat_index(v, o, i, k);
            dx[idx] = g[idx] - std::exp(y[idx]) * gsum;
          }
        }
      }
      accumulate_grad(*pa, dx);
    });
  }
  return result;
}

namespace {

Tensor sum_or_mean(const char* op, const Tensor& a, std::size_t axis, bool average) {
  const AxisView v = axis_view(op, a.shape(), axis);
  const auto x = a.data();
  const double factor = average ? 1.0 / static_cast<double>(v.n) : 1.0;
  std::vector<double> out(v.outer * v.inner, 0.0);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.n; ++i) {
      for (std::size_t k = 0; k < v.inner; ++k) out[o * v.inner + k] += x[flat_index(v, o, i, k)];
    }
  }
  for (double& s : out) s *= factor;
  const bool track = tracking({&a});
  Tensor result = make_tensor(v.reduced, std::move(out), track);
  if (track) {
    ImplPtr pa = a.impl();
    Tape::active()->record(op, {&a}, result, [pa, v, factor](std::span<const double> g) {
      std::vector<double> dx(pa->data.size());
      for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t i = 0; i < v.n; ++i) {
          for (std::size_t k = 0; k < v.inner; ++k) {
            dx[flat_index(v, o, i, k)] = g[o * v.inner + k] * factor;
          }
        }
      }
      accumulate_grad(*pa, dx);
    });
  }
  return result;
}

}  // namespace

Tensor sum(const Tensor& a, std::size_t axis) { return sum_or_mean("sum", a, axis, false); }

Tensor mean(const Tensor& a, std::size_t axis) { return sum_or_mean("mean", a, axis, true); }

Tensor max(const Tensor& a, std::size_t axis) {
  const AxisView v = axis_view("max", a.shape(), axis);
  const auto x = a.data();
  std::vector<double> out(v.outer * v.inner);
  std::vector<std::size_t> arg(v.outer * v.inner);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t k = 0; k < v.inner; ++k) {
      std::size_t best = flat_index(v, o, 0, k);
      for (std::size_t i = 1; i < v.n; ++i) {
        const std::size_t idx = flat_index(v, o, i, k);
        if (x[idx] > x[best]) best = idx;
      }
      out[o * v.inner + k] = x[best];
      arg[o * v.inner + k] = best;
    }
  }
  const bool track = tracking({&a});
  Tensor result = make_tensor(v.reduced, std::move(out), track);
  if (track) {
    ImplPtr pa = a.impl();
    Tape::active()->record("max", {&a}, result, [pa, arg](std::span<const double> g) {
      std::vector<double> dx(pa->data.size(), 0.0);
      for (std::size_t j = 0; j < arg.size(); ++j) dx[arg[j]] += g[j];
      accumulate_grad(*pa, dx);
    });
  }
  return result;
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  const bool track = tracking({&a});
  Tensor result = make_tensor({}, {s}, track);
  if (track) {
    ImplPtr pa = a.impl();
    Tape::active()->record("sum_all", {&a}, result, [pa](std::span<const double> g) {
      std::vector<double> dx(pa->data.size(), g[0]);
      accumulate_grad(*pa, dx);
    });
  }
  return result;
}

Tensor mean_all(const Tensor& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.numel())); }

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) dim_error("concat", first, "has no axis " + std::to_string(axis));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) dim_error("concat", first, s);
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) dim_error("concat", first, s);
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t total_n = out_shape[axis];
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(offset);
    const std::size_t n = p.shape()[axis];
    const auto src = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * n * inner), n * inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * total_n + offset) * inner));
    }
    offset += n;
  }
  bool track = false;
  if (Tape::active() != nullptr) {
    for (const Tensor& p : parts) track = track || p.requires_grad();
  }
  Tensor result = make_tensor(out_shape, std::move(out), track);
  if (track) {
    std::vector<ImplPtr> impls;
    std::vector<const Tensor*> inputs;
    for (const Tensor& p : parts) {
      impls.push_back(p.impl());
      inputs.push_back(&p);
    }
    Tape::active()->record(
        "concat", inputs, result,
        [impls, offsets, axis, outer, inner, total_n](std::span<const double> g) {
          for (std::size_t pi = 0; pi < impls.size(); ++pi) {
            auto& impl = *impls[pi];
            if (!impl.requires_grad) continue;
            const std::size_t n = impl.shape[axis];
            std::vector<double> dx(impl.data.size());
            for (std::size_t o = 0; o < outer; ++o) {
              std::copy_n(g.begin() + static_cast<std::ptrdiff_t>((o * total_n + offsets[pi]) * inner),
                          n * inner, dx.begin() + static_cast<std::ptrdiff_t>(o * n * inner));
            }
            accumulate_grad(impl, dx);
          }
        });
  }
  return result;
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t m = a.dim(0), n = a.dim(1);
  const auto x = a.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  }
  const bool track = tracking({&a});
  Tensor result = make_tensor({n, m}, std::move(out), track);
  if (track) {
    ImplPtr pa = a.impl();
    Tape::active()->record("transpose", {&a}, result, [pa, m, n](std::span<const double> g) {
      std::vector<double> dx(m * n);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) dx[i * n + j] = g[j * m + i];
      }
      accumulate_grad(*pa, dx);
    });
  }
  return result;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) dim_error("reshape", a.shape(), shape);
  const bool track = tracking({&a});
  Tensor result = make_tensor(std::move(shape), a.to_vector(), track);
  if (track) {
    ImplPtr pa = a.impl();
    Tape::active()->record("reshape", {&a}, result,
                           [pa](std::span<const double> g) { accumulate_grad(*pa, g); });
  }
  return result;
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank("slice_rows", a, 2);
  if (begin >= end || end > a.dim(0)) {
    dim_error("slice_rows", a.shape(),
              "cannot be sliced to rows [" + std::to_string(begin) + ", " + std::to_string(end) + ")");
  }
  const std::size_t n = a.dim(1);
  const auto x = a.data();
  std::vector<double> out(x.begin() + static_cast<std::ptrdiff_t>(begin * n),
                          x.begin() + static_cast<std::ptrdiff_t>(end * n));
  const bool track = tracking({&a});
  Tensor result = make_tensor({end - begin, n}, std::move(out), track);
  if (track) {
    ImplPtr pa = a.impl();
    Tape::active()->record("slice_rows", {&a}, result, [pa, begin, n](std::span<const double> g) {
      // Accumulate directly into the slice to avoid a full-size temporary.
      if (!pa->requires_grad) return;
      if (pa->grad.empty()) pa->grad.assign(pa->data.size(), 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) pa->grad[begin * n + i] += g[i];
    });
  }
  return result;
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", a, 2);
  if (begin >= end || end > a.dim(1)) {
    dim_error("slice_cols", a.shape(),
              "cannot be sliced to cols [" + std::to_string(begin) + ", " + std::to_string(end) + ")");
  }
  const std::size_t m = a.dim(0), n = a.dim(1), w = end - begin;
  const auto x = a.data();
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x[i * n + begin + j];
  }
  const bool track = tracking({&a});
  Tensor result = make_tensor({m, w}, std::move(out), track);
  if (track) {
    ImplPtr pa = a.impl();
    Tape::active()->record("slice_cols", {&a}, result,
                           [pa, begin, m, n, w](std::span<const double> g) {
                             if (!pa->requires_grad) return;
                             if (pa->grad.empty()) pa->grad.assign(pa->data.size(), 0.0);
                             for (std::size_t i = 0; i < m; ++i) {
                               for (std::size_t j = 0; j < w; ++j) {
                                 pa->grad[i * n + begin + j] += g[i * w + j];
                               }
                             }
                           });
  }
  return result;
}

Tensor l2_normalize(const Tensor& a, std::size_t axis, double eps) {
  const AxisView v = axis_view("l2_normalize", a.shape(), axis);
  const auto x = a.data();
  std::vector<double> out(x.size());
  std::vector<double> denom(v.outer * v.inner);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t k = 0; k < v.inner; ++k) {
      double ss = 0.0;
      for (std::size_t i = 0; i < v.n; ++i) {
        const double xi = x[flat_index(v, o, i, k)];
        ss += xi * xi;
      }
      const double norm = std::sqrt(ss);
      if (eps <= 0.0 && norm == 0.0) {
        throw DomainError("l2_normalize: zero-norm slice in tensor of shape " +
                          shape_str(a.shape()));
      }
      const double d = std::max(norm, eps);
      denom[o * v.inner + k] = d;
      for (std::size_t i = 0; i < v.n; ++i) {
        const std::size_t idx = flat_index(v, o, i, k);
        out[idx] = x[idx] / d;
      }
    }
  }
  const bool track = tracking({&a});
  Tensor result = make_tensor(a.shape(), std::move(out), track);
  if (track) {
    ImplPtr pa = a.impl(), po = result.impl();
    Tape::active()->record(
        "l2_normalize", {&a}, result, [pa, po, v, denom, eps](std::span<const double> g) {
          const auto& y = po->data;
          std::vector<double> dx(g.size());
          for (std::size_t o = 0; o < v.outer; ++o) {
            for (std::size_t k = 0; k < v.inner; ++k) {
              const double d = denom[o * v.inner + k];
              // Below the floor the denominator is the constant eps.
              double norm_sq = 0.0;
              for (std::size_t i = 0; i < v.n; ++i) {
                const double xi = pa->data[flat_index(v, o, i, k)];
                norm_sq += xi * xi;
              }
              const bool floored = eps > 0.0 && std::sqrt(norm_sq) < eps;
              double gy = 0.0;
              if (!floored) {
                for (std::size_t i = 0; i < v.n; ++i) {
                  const std::size_t idx = flat_index(v, o, i, k);
                  gy += g[idx] * y[idx];
                }
              }
              for (std::size_t i = 0; i < v.n; ++i) {
                const std::size_t idx = flat_index(v, o, i, k);
                dx[idx] = (g[idx] - y[idx] * gy) / d;
              }
            }
          }
          accumulate_grad(*pa, dx);
        });
  }
  return result;
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps) {
  require_same_shape("cosine_similarity", a, b);
  if (a.rank() < 1 || a.rank() > 2) {
    dim_error("cosine_similarity", a.shape(), "must have rank 1 or 2");
  }
  const std::size_t d = a.shape().back();
  const std::size_t m = a.numel() / d;
  Shape out_shape = a.rank() == 2 ? Shape{m} : Shape{};
  const auto x = a.data(), y = b.data();
  std::vector<double> out(m), na(m), nb(m);
  for (std::size_t r = 0; r < m; ++r) {
    double dot = 0.0, sa = 0.0, sb = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dot += x[r * d + j] * y[r * d + j];
      sa += x[r * d + j] * x[r * d + j];
      sb += y[r * d + j] * y[r * d + j];
    }
    na[r] = std::sqrt(sa);
    nb[r] = std::sqrt(sb);
    out[r] = dot / (std::max(na[r], eps) * std::max(nb[r], eps));
  }
  const bool track = tracking({&a, &b});
  Tensor result = make_tensor(out_shape, std::move(out), track);
  if (track) {
    ImplPtr pa = a.impl(), pb = b.impl(), po = result.impl();
    Tape::active()->record(
        "cosine_similarity", {&a, &b}, result,
        [pa, pb, po, na, nb, m, d, eps](std::span<const double> g) {
          std::vector<double> da(m * d, 0.0), db(m * d, 0.0);
          for (std::size_t r = 0; r < m; ++r) {
            const double fa = std::max(na[r], eps), fb = std::max(nb[r], eps);
            const double c = po->data[r];
            const bool a_live = na[r] >= eps, b_live = nb[r] >= eps;
            for (std::size_t j = 0; j < d; ++j) {
              const double xa = pa->data[r * d + j], xb = pb->data[r * d + j];
              da[r * d + j] = g[r] * (xb / (fa * fb) - (a_live ? c * xa / (fa * fa) : 0.0));
              db[r * d + j] = g[r] * (xa / (fa * fb) - (b_live ? c * xb / (fb * fb) : 0.0));
            }
          }
          accumulate_grad(*pa, da);
          accumulate_grad(*pb, db);
        });
  }
  return result;
}

}  // namespace facile
