#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace subsel {

// Dense row-major matrix of doubles. Vectors are stored as n x 1 columns.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw std::invalid_argument("Tensor: data size mismatch");
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    for (const auto& row : rows) {
      if (row.size() != c) throw std::invalid_argument("Tensor::from_rows: ragged rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(r, c, std::move(data));
  }

  static Tensor column(std::vector<double> values) {
    const auto n = values.size();
    return Tensor(n, 1, std::move(values));
  }

  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline std::string shape_string(const Tensor& t) {
  return "[" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + "]";
}

// Trainable weights live outside any tape and are registered per pass.
struct Parameter {
  std::string name;
  Tensor value;
};

class Tape;

// Handle to a node recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t index = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Gradients {
 public:
  const Tensor* find(const Parameter& p) const {
    auto it = grads_.find(&p);
    return it == grads_.end() ? nullptr : &it->second;
  }
  // Zero tensor of the parameter's shape when the loss does not reach it.
  Tensor get(const Parameter& p) const {
    if (const auto* g = find(p)) return *g;
    return Tensor(p.value.rows(), p.value.cols());
  }
  void accumulate(const Parameter& p, const Tensor& g) {
    auto [it, inserted] = grads_.try_emplace(&p, g);
    if (!inserted) {
      for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += g[i];
    }
  }
  void scale(double s) {
    for (auto& [p, g] : grads_) {
      for (auto& x : g.data()) x *= s;
    }
  }
  std::size_t size() const { return grads_.size(); }

 private:
  std::unordered_map<const Parameter*, Tensor> grads_;
};

// Records operations in execution order; backward replays them in reverse.
// A tape belongs to one thread and supports a single backward pass.
class Tape {
 public:
  // Called with the node's output gradient and one slot per parent; a slot
  // is null when that parent does not need a gradient.
  using Backward = std::function<void(const Tensor& grad, std::span<Tensor* const> parents)>;

  Var constant(Tensor value) { return push(std::move(value), {}, nullptr, false, nullptr); }

  Var param(Parameter& p) { return push(p.value, {}, nullptr, true, &p); }

  Var record(Tensor value, std::vector<std::size_t> parents, Backward backward) {
    bool needs = false;
    for (auto i : parents) needs = needs || nodes_.at(i).requires_grad;
    if (!needs) backward = nullptr;
    return push(std::move(value), std::move(parents), std::move(backward), needs, nullptr);
  }

  const Tensor& value(Var v) const { return nodes_.at(v.index).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.index).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  std::size_t messages() const { return messages_; }
  void add_messages(std::size_t m) { messages_ += m; }

  Gradients backward(Var loss) {
    if (loss.tape != this) throw std::invalid_argument("backward: loss recorded on another tape");
    if (backward_done_) throw std::logic_error("backward: tape already consumed");
    const Tensor& lv = value(loss);
    if (lv.size() != 1) {
      throw std::invalid_argument("backward: loss must be scalar, got " + shape_string(lv));
    }
    backward_done_ = true;
    Gradients out;
    if (!nodes_[loss.index].requires_grad) return out;
    grad_ref(loss.index)[0] = 1.0;
    std::vector<Tensor*> slots;
    for (std::size_t i = loss.index + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (!node.requires_grad || node.grad.size() == 0) continue;
      if (node.backward) {
        slots.clear();
        for (auto p : node.parents) {
          slots.push_back(nodes_[p].requires_grad ? &grad_ref(p) : nullptr);
        }
        node.backward(node.grad, slots);
      }
      if (node.parameter) out.accumulate(*node.parameter, node.grad);
    }
    return out;
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    Backward backward;
    bool requires_grad = false;
    Parameter* parameter = nullptr;
  };

  Var push(Tensor value, std::vector<std::size_t> parents, Backward backward, bool needs_grad,
           Parameter* parameter) {
    if (backward_done_) throw std::logic_error("Tape: cannot record after backward");
    nodes_.push_back(Node{std::move(value), Tensor(), std::move(parents), std::move(backward),
                          needs_grad, parameter});
    return Var{this, nodes_.size() - 1};
  }

  Tensor& grad_ref(std::size_t i) {
    Node& node = nodes_[i];
    if (node.grad.size() == 0 && node.value.size() != 0) {
      node.grad = Tensor(node.value.rows(), node.value.cols());
    }
    return node.grad;
  }

  std::vector<Node> nodes_;
  std::size_t messages_ = 0;
  bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

namespace detail {

inline Tape& common_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw std::invalid_argument("ops: tape mismatch");
  return *a.tape;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a) +
                                " vs " + shape_string(b));
  }
}

inline void require_axis(int axis, const char* op) {
  if (axis != 0 && axis != 1) throw std::invalid_argument(std::string(op) + ": axis must be 0 or 1");
}

// Sum of a multiset of values, independent of their order. Node and subgraph
// reductions go through this so relabelings give bit-identical results.
inline double sorted_sum(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += v;
  return total;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives. Every op records its own backward rule.

inline Var matmul(Var a, Var b) {
  Tape& tape = detail::common_tape(a, b);
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  if (x.cols() != y.rows()) {
    throw std::invalid_argument("matmul: shape mismatch " + shape_string(x) + " * " +
                                shape_string(y));
  }
  const std::size_t m = x.rows(), k = x.cols(), p = y.cols();
  Tensor out(m, p);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      const double xv = x(i, l);
      if (xv == 0.0) continue;
      for (std::size_t j = 0; j < p; ++j) out(i, j) += xv * y(l, j);
    }
  }
  return tape.record(std::move(out), {a.index, b.index},
                     [&tape, a, b, m, k, p](const Tensor& g, std::span<Tensor* const> grads) {
                       const Tensor& x = tape.value(a);
                       const Tensor& y = tape.value(b);
                       if (Tensor* gx = grads[0]) {
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t l = 0; l < k; ++l) {
                             double s = 0.0;
                             for (std::size_t j = 0; j < p; ++j) s += g(i, j) * y(l, j);
                             (*gx)(i, l) += s;
                           }
                       }
                       if (Tensor* gy = grads[1]) {
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t l = 0; l < k; ++l) {
                             const double xv = x(i, l);
                             if (xv == 0.0) continue;
                             for (std::size_t j = 0; j < p; ++j) (*gy)(l, j) += xv * g(i, j);
                           }
                       }
                     });
}

inline Var add(Var a, Var b) {
  Tape& tape = detail::common_tape(a, b);
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  detail::require_same_shape(x, y, "add");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  return tape.record(std::move(out), {a.index, b.index},
                     [](const Tensor& g, std::span<Tensor* const> grads) {
                       for (Tensor* t : grads) {
                         if (!t) continue;
                         for (std::size_t i = 0; i < g.size(); ++i) (*t)[i] += g[i];
                       }
                     });
}

inline Var sub(Var a, Var b) {
  Tape& tape = detail::common_tape(a, b);
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  detail::require_same_shape(x, y, "sub");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  return tape.record(std::move(out), {a.index, b.index},
                     [](const Tensor& g, std::span<Tensor* const> grads) {
                       if (grads[0])
                         for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i];
                       if (grads[1])
                         for (std::size_t i = 0; i < g.size(); ++i) (*grads[1])[i] -= g[i];
                     });
}

// x (m x c) plus a 1 x c row broadcast over rows.
inline Var add_bias(Var x, Var bias) {
  Tape& tape = detail::common_tape(x, bias);
  const Tensor& v = tape.value(x);
  const Tensor& b = tape.value(bias);
  if (b.rows() != 1 || b.cols() != v.cols()) {
    throw std::invalid_argument("add_bias: bias " + shape_string(b) + " does not fit " +
                                shape_string(v));
  }
  Tensor out = v;
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) out(i, j) += b(0, j);
  return tape.record(std::move(out), {x.index, bias.index},
                     [](const Tensor& g, std::span<Tensor* const> grads) {
                       if (grads[0])
                         for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i];
                       if (Tensor* gb = grads[1])
                         for (std::size_t i = 0; i < g.rows(); ++i)
                           for (std::size_t j = 0; j < g.cols(); ++j) (*gb)(0, j) += g(i, j);
                     });
}

inline Var mul(Var a, Var b) {
  Tape& tape = detail::common_tape(a, b);
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  detail::require_same_shape(x, y, "mul");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return tape.record(std::move(out), {a.index, b.index},
                     [&tape, a, b](const Tensor& g, std::span<Tensor* const> grads) {
                       const Tensor& x = tape.value(a);
                       const Tensor& y = tape.value(b);
                       if (grads[0])
                         for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] * y[i];
                       if (grads[1])
                         for (std::size_t i = 0; i < g.size(); ++i) (*grads[1])[i] += g[i] * x[i];
                     });
}

inline Var scale(Var a, double s) {
  Tape& tape = *a.tape;
  Tensor out = tape.value(a);
  for (auto& v : out.data()) v *= s;
  return tape.record(std::move(out), {a.index},
                     [s](const Tensor& g, std::span<Tensor* const> grads) {
                       for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += s * g[i];
                     });
}

inline Var neg(Var a) { return scale(a, -1.0); }

inline Var relu(Var a) {
  Tape& tape = *a.tape;
  Tensor out = tape.value(a);
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return tape.record(std::move(out), {a.index},
                     [&tape, a](const Tensor& g, std::span<Tensor* const> grads) {
                       const Tensor& x = tape.value(a);
                       for (std::size_t i = 0; i < g.size(); ++i)
                         if (x[i] > 0.0) (*grads[0])[i] += g[i];
                     });
}

inline Var abs(Var a) {
  Tape& tape = *a.tape;
  Tensor out = tape.value(a);
  for (auto& v : out.data()) v = std::fabs(v);
  return tape.record(std::move(out), {a.index},
                     [&tape, a](const Tensor& g, std::span<Tensor* const> grads) {
                       const Tensor& x = tape.value(a);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         if (x[i] > 0.0) (*grads[0])[i] += g[i];
                         else if (x[i] < 0.0) (*grads[0])[i] -= g[i];
                       }
                     });
}

inline Var log(Var a) {
  Tape& tape = *a.tape;
  Tensor out = tape.value(a);
  for (auto& v : out.data()) {
    if (!(v > 0.0)) throw std::domain_error("log: non-positive input");
    v = std::log(v);
  }
  return tape.record(std::move(out), {a.index},
                     [&tape, a](const Tensor& g, std::span<Tensor* const> grads) {
                       const Tensor& x = tape.value(a);
                       for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] / x[i];
                     });
}

// Concatenation along the channel (column) axis.
inline Var concat_cols(Var a, Var b) {
  Tape& tape = detail::common_tape(a, b);
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  if (x.rows() != y.rows()) {
    throw std::invalid_argument("concat_cols: row mismatch " + shape_string(x) + " vs " +
                                shape_string(y));
  }
  const std::size_t rows = x.rows(), cx = x.cols(), cy = y.cols();
  Tensor out(rows, cx + cy);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cx; ++j) out(i, j) = x(i, j);
    for (std::size_t j = 0; j < cy; ++j) out(i, cx + j) = y(i, j);
  }
  return tape.record(std::move(out), {a.index, b.index},
                     [rows, cx, cy](const Tensor& g, std::span<Tensor* const> grads) {
                       for (std::size_t i = 0; i < rows; ++i) {
                         if (grads[0])
                           for (std::size_t j = 0; j < cx; ++j) (*grads[0])(i, j) += g(i, j);
                         if (grads[1])
                           for (std::size_t j = 0; j < cy; ++j) (*grads[1])(i, j) += g(i, cx + j);
                       }
                     });
}

// axis 0 reduces rows (result 1 x c); axis 1 reduces columns (result r x 1).
inline Var sum(Var a, int axis) {
  detail::require_axis(axis, "sum");
  Tape& tape = *a.tape;
  const Tensor& x = tape.value(a);
  Tensor out = axis == 0 ? Tensor(1, x.cols()) : Tensor(x.rows(), 1);
  std::vector<double> buf;
  if (axis == 0) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      buf.clear();
      for (std::size_t i = 0; i < x.rows(); ++i) buf.push_back(x(i, j));
      out(0, j) = detail::sorted_sum(buf);
    }
  } else {
    for (std::size_t i = 0; i < x.rows(); ++i) {
      buf.assign(x.data().begin() + i * x.cols(), x.data().begin() + (i + 1) * x.cols());
      out(i, 0) = detail::sorted_sum(buf);
    }
  }
  return tape.record(std::move(out), {a.index},
                     [axis](const Tensor& g, std::span<Tensor* const> grads) {
                       Tensor& gx = *grads[0];
                       for (std::size_t i = 0; i < gx.rows(); ++i)
                         for (std::size_t j = 0; j < gx.cols(); ++j)
                           gx(i, j) += axis == 0 ? g(0, j) : g(i, 0);
                     });
}

inline Var mean(Var a, int axis) {
  detail::require_axis(axis, "mean");
  const Tensor& x = a.value();
  const std::size_t count = axis == 0 ? x.rows() : x.cols();
  if (count == 0) throw std::invalid_argument("mean: empty axis");
  return scale(sum(a, axis), 1.0 / static_cast<double>(count));
}

inline Var sum_all(Var a) { return sum(sum(a, 0), 1); }

inline Var min(Var a, int axis) {
  detail::require_axis(axis, "min");
  Tape& tape = *a.tape;
  const Tensor& x = tape.value(a);
  const std::size_t outer = axis == 0 ? x.cols() : x.rows();
  const std::size_t inner = axis == 0 ? x.rows() : x.cols();
  if (inner == 0) throw std::invalid_argument("min: empty axis");
  Tensor out = axis == 0 ? Tensor(1, x.cols()) : Tensor(x.rows(), 1);
  std::vector<std::size_t> arg(outer);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < inner; ++i) {
      const double cur = axis == 0 ? x(i, o) : x(o, i);
      const double bv = axis == 0 ? x(best, o) : x(o, best);
      if (cur < bv) best = i;
    }
    arg[o] = best;
    out[o] = axis == 0 ? x(best, o) : x(o, best);
  }
  return tape.record(std::move(out), {a.index},
                     [axis, arg](const Tensor& g, std::span<Tensor* const> grads) {
                       for (std::size_t o = 0; o < arg.size(); ++o) {
                         if (axis == 0) (*grads[0])(arg[o], o) += g[o];
                         else (*grads[0])(o, arg[o]) += g[o];
                       }
                     });
}

// Element-wise mean over a list of equally shaped tensors (e.g. the subgraph
// axis of a bag).
inline Var mean_of(std::span<const Var> items) {
  if (items.empty()) throw std::invalid_argument("mean_of: empty list");
  Tape& tape = *items.front().tape;
  const Tensor& first = tape.value(items.front());
  std::vector<const Tensor*> values{&first};
  std::vector<std::size_t> parents{items.front().index};
  for (std::size_t k = 1; k < items.size(); ++k) {
    const Tensor& x = detail::common_tape(items.front(), items[k]).value(items[k]);
    detail::require_same_shape(first, x, "mean_of");
    values.push_back(&x);
    parents.push_back(items[k].index);
  }
  const double inv = 1.0 / static_cast<double>(items.size());
  Tensor out(first.rows(), first.cols());
  std::vector<double> buf;
  for (std::size_t i = 0; i < out.size(); ++i) {
    buf.clear();
    for (const Tensor* x : values) buf.push_back((*x)[i]);
    out[i] = detail::sorted_sum(buf) * inv;
  }
  return tape.record(std::move(out), std::move(parents),
                     [inv](const Tensor& g, std::span<Tensor* const> grads) {
                       for (Tensor* t : grads) {
                         if (!t) continue;
                         for (std::size_t i = 0; i < g.size(); ++i) (*t)[i] += inv * g[i];
                       }
                     });
}

// Element-wise minimum over a list; ties route the gradient to the first.
inline Var min_of(std::span<const Var> items) {
  if (items.empty()) throw std::invalid_argument("min_of: empty list");
  Tape& tape = *items.front().tape;
  Tensor out = tape.value(items.front());
  std::vector<std::size_t> parents{items.front().index};
  std::vector<std::size_t> arg(out.size(), 0);
  for (std::size_t k = 1; k < items.size(); ++k) {
    const Tensor& x = detail::common_tape(items.front(), items[k]).value(items[k]);
    detail::require_same_shape(out, x, "min_of");
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (x[i] < out[i]) {
        out[i] = x[i];
        arg[i] = k;
      }
    }
    parents.push_back(items[k].index);
  }
  return tape.record(std::move(out), std::move(parents),
                     [arg](const Tensor& g, std::span<Tensor* const> grads) {
                       for (std::size_t i = 0; i < g.size(); ++i)
                         if (Tensor* t = grads[arg[i]]) (*t)[i] += g[i];
                     });
}

namespace detail {

template <typename F>
void for_each_line(const Tensor& x, int axis, F&& f) {
  // f(line_length, index_of(k)) for each line along `axis`.
  if (axis == 0) {
    for (std::size_t j = 0; j < x.cols(); ++j)
      f(x.rows(), [j, &x](std::size_t k) { return k * x.cols() + j; });
  } else {
    for (std::size_t i = 0; i < x.rows(); ++i)
      f(x.cols(), [i, &x](std::size_t k) { return i * x.cols() + k; });
  }
}

}  // namespace detail

inline Var softmax(Var a, int axis) {
  detail::require_axis(axis, "softmax");
  Tape& tape = *a.tape;
  const Tensor& x = tape.value(a);
  Tensor out(x.rows(), x.cols());
  detail::for_each_line(x, axis, [&](std::size_t len, auto idx) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, x[idx(k)]);
    double z = 0.0;
    for (std::size_t k = 0; k < len; ++k) z += (out[idx(k)] = std::exp(x[idx(k)] - mx));
    for (std::size_t k = 0; k < len; ++k) out[idx(k)] /= z;
  });
  Tensor saved = out;
  return tape.record(std::move(out), {a.index},
                     [y = std::move(saved), axis](const Tensor& g,
                                                  std::span<Tensor* const> grads) {
                       detail::for_each_line(y, axis, [&](std::size_t len, auto idx) {
                         double dot = 0.0;
                         for (std::size_t k = 0; k < len; ++k) dot += g[idx(k)] * y[idx(k)];
                         for (std::size_t k = 0; k < len; ++k)
                           (*grads[0])[idx(k)] += y[idx(k)] * (g[idx(k)] - dot);
                       });
                     });
}

inline Var log_softmax(Var a, int axis) {
  detail::require_axis(axis, "log_softmax");
  Tape& tape = *a.tape;
  const Tensor& x = tape.value(a);
  Tensor out(x.rows(), x.cols());
  Tensor probs(x.rows(), x.cols());
  detail::for_each_line(x, axis, [&](std::size_t len, auto idx) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, x[idx(k)]);
    double z = 0.0;
    for (std::size_t k = 0; k < len; ++k) z += std::exp(x[idx(k)] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t k = 0; k < len; ++k) {
      out[idx(k)] = x[idx(k)] - lz;
      probs[idx(k)] = std::exp(out[idx(k)]);
    }
  });
  return tape.record(std::move(out), {a.index},
                     [probs = std::move(probs), axis](const Tensor& g,
                                                      std::span<Tensor* const> grads) {
                       detail::for_each_line(probs, axis, [&](std::size_t len, auto idx) {
                         double total = 0.0;
                         for (std::size_t k = 0; k < len; ++k) total += g[idx(k)];
                         for (std::size_t k = 0; k < len; ++k)
                           (*grads[0])[idx(k)] += g[idx(k)] - probs[idx(k)] * total;
                       });
                     });
}

// Scalar element (1 x 1) of a tensor.
inline Var pick(Var a, std::size_t row, std::size_t col) {
  Tape& tape = *a.tape;
  const Tensor& x = tape.value(a);
  if (row >= x.rows() || col >= x.cols()) throw std::out_of_range("pick: index out of range");
  Tensor out(1, 1, x(row, col));
  return tape.record(std::move(out), {a.index},
                     [row, col](const Tensor& g, std::span<Tensor* const> grads) {
                       (*grads[0])(row, col) += g[0];
                     });
}

// Replaces entries where mask is true by `fill`; those entries get no gradient.
inline Var mask_fill(Var a, const std::vector<bool>& mask, double fill) {
  Tape& tape = *a.tape;
  Tensor out = tape.value(a);
  if (mask.size() != out.size()) throw std::invalid_argument("mask_fill: mask size mismatch");
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[i]) out[i] = fill;
  return tape.record(std::move(out), {a.index},
                     [mask](const Tensor& g, std::span<Tensor* const> grads) {
                       for (std::size_t i = 0; i < g.size(); ++i)
                         if (!mask[i]) (*grads[0])[i] += g[i];
                     });
}

// out_v = sum over neighbors u of h_u. Each adjacency entry counts as one
// message on the tape's counter. `adjacency` must outlive the tape.
inline Var neighbor_sum(Var h, const std::vector<std::vector<std::size_t>>& adjacency) {
  Tape& tape = *h.tape;
  const Tensor& x = tape.value(h);
  if (x.rows() != adjacency.size()) {
    throw std::invalid_argument("neighbor_sum: " + shape_string(x) + " rows vs " +
                                std::to_string(adjacency.size()) + " nodes");
  }
  const std::size_t c = x.cols();
  Tensor out(x.rows(), c);
  std::size_t messages = 0;
  std::vector<double> buf;
  for (std::size_t v = 0; v < adjacency.size(); ++v) {
    for (std::size_t j = 0; j < c; ++j) {
      buf.clear();
      for (std::size_t u : adjacency[v]) buf.push_back(x(u, j));
      out(v, j) = detail::sorted_sum(buf);
    }
    messages += adjacency[v].size();
  }
  tape.add_messages(messages);
  return tape.record(std::move(out), {h.index},
                     [&adjacency, c](const Tensor& g, std::span<Tensor* const> grads) {
                       Tensor& gx = *grads[0];
                       for (std::size_t v = 0; v < adjacency.size(); ++v)
                         for (std::size_t u : adjacency[v])
                           for (std::size_t j = 0; j < c; ++j) gx(u, j) += g(v, j);
                     });
}

// Straight-through estimator: the forward value is `hard`, the backward pass
// treats the output as `soft`. With `reference` given the forward value is
// hard + (soft - reference), which equals `hard` when soft == reference and
// makes the estimator's gradient the true gradient of that surrogate.
inline Var straight_through(const Tensor& hard, Var soft,
                            const std::optional<Tensor>& reference = std::nullopt) {
  Tape& tape = *soft.tape;
  const Tensor& s = tape.value(soft);
  detail::require_same_shape(hard, s, "straight_through");
  Tensor out = hard;
  if (reference) {
    detail::require_same_shape(*reference, s, "straight_through");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += s[i] - (*reference)[i];
  }
  return tape.record(std::move(out), {soft.index},
                     [](const Tensor& g, std::span<Tensor* const> grads) {
                       for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i];
                     });
}

// ---------------------------------------------------------------------------

// Maximum relative error between tape gradients and central differences.
// Relative error uses max(|a|, |b|, 1e-8) as denominator.
inline double finite_diff_check(const std::function<Var(Tape&)>& loss_fn,
                                std::span<Parameter* const> params, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be positive");
  Gradients grads;
  {
    Tape tape;
    grads = tape.backward(loss_fn(tape));
  }
  auto evaluate = [&]() {
    Tape tape;
    return tape.value(loss_fn(tape))[0];
  };
  double worst = 0.0;
  for (Parameter* p : params) {
    const Tensor analytic = grads.get(*p);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double up = evaluate();
      p->value[i] = saved - eps;
      const double down = evaluate();
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace subsel
