#include "mrco/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace mrco::ad {

namespace {

thread_local std::uint64_t g_next_node_id = 1;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

Tensor make_tensor(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

namespace {

Tensor make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size())
    throw std::invalid_argument("tensor: shape " + shape_str(shape) +
                                " does not match value count " +
                                std::to_string(values.size()));
  for (double v : values)
    if (!std::isfinite(v))
      throw std::runtime_error("tensor: non-finite value in leaf");
  auto n = std::make_shared<detail::Node>();
  n->id = g_next_node_id++;
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->requires_grad = requires_grad;
  return make_tensor(std::move(n));
}

Tensor make_op(const char* op, Shape shape, std::vector<double> values,
               std::vector<Tensor> parents, detail::BackpropFn backprop) {
  if (shape_size(shape) != values.size())
    throw std::invalid_argument(std::string(op) + ": internal size mismatch");
  for (double v : values)
    if (!std::isfinite(v))
      throw std::runtime_error(std::string(op) + ": non-finite output value");
  auto n = std::make_shared<detail::Node>();
  n->id = g_next_node_id++;
  n->op = op;
  n->shape = std::move(shape);
  n->values = std::move(values);
  for (const Tensor& p : parents) n->requires_grad |= p.requires_grad();
  n->parents = std::move(parents);
  if (n->requires_grad) n->backprop = std::move(backprop);
  return make_tensor(std::move(n));
}

const Tensor& parent(const Tensor& self, std::size_t i) {
  return self.node()->parents[i];
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::scalar(double v) { return make_leaf({}, {v}, false); }

Tensor Tensor::zeros(Shape shape) {
  std::vector<double> v(shape_size(shape), 0.0);
  return make_leaf(std::move(shape), std::move(v), false);
}

Tensor Tensor::constant(Shape shape, double c) {
  std::vector<double> v(shape_size(shape), c);
  return make_leaf(std::move(shape), std::move(v), false);
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values) {
  return make_leaf(std::move(shape), std::move(values), false);
}

Tensor Tensor::param(Shape shape, std::vector<double> values) {
  return make_leaf(std::move(shape), std::move(values), true);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->values.size(); }

std::size_t Tensor::rows() const {
  require(shape().size() == 2, "rows: tensor is not a matrix");
  return shape()[0];
}

std::size_t Tensor::cols() const {
  require(shape().size() == 2, "cols: tensor is not a matrix");
  return shape()[1];
}

const std::vector<double>& Tensor::values() const { return node_->values; }

double Tensor::value() const {
  require(size() == 1,
          "value: tensor is not scalar, shape " + shape_str(shape()));
  return node_->values[0];
}

double Tensor::at_flat(std::size_t i) const { return node_->values.at(i); }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::is_leaf() const { return node_ && node_->parents.empty(); }

std::vector<double>& Tensor::leaf_values() {
  require(is_leaf(), "leaf_values: tensor has history and is immutable");
  return node_->values;
}

bool Tensor::has_grad() const { return node_ && node_->grad.has_value(); }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad())
    throw std::runtime_error("grad: no gradient recorded for this tensor");
  return *node_->grad;
}

void Tensor::zero_grad() { node_->grad.reset(); }

void Tensor::accumulate_grad(const std::vector<double>& g) {
  require(g.size() == size(), "accumulate_grad: length mismatch");
  if (!node_->grad) {
    node_->grad = g;
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) (*node_->grad)[i] += g[i];
  }
}

Tensor Tensor::detach() const { return from_values(shape(), values()); }

// ---- backward ---------------------------------------------------------------

void BackwardResult::add(const Tensor& leaf, const Tensor& grad_expr) {
  grads_.emplace_back(leaf, grad_expr);
}

bool BackwardResult::has(const Tensor& leaf) const {
  for (const auto& [l, g] : grads_)
    if (l.node() == leaf.node()) return true;
  return false;
}

Tensor BackwardResult::grad_expr(const Tensor& leaf) const {
  for (const auto& [l, g] : grads_)
    if (l.node() == leaf.node()) return g;
  throw std::runtime_error("grad_expr: no gradient path to the given leaf");
}

BackwardResult backward(const Tensor& loss, bool create_graph) {
  require(loss.defined(), "backward: undefined loss tensor");
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
  if (!loss.requires_grad())
    throw std::invalid_argument(
        "backward: loss is detached from every requires_grad leaf");

  // Reachable requires_grad subgraph; creation order is a topological order,
  // so processing by descending id visits every node exactly once with its
  // output gradient complete.
  std::vector<Tensor> order;
  {
    std::unordered_set<const detail::Node*> seen;
    std::vector<Tensor> stack{loss};
    seen.insert(loss.node());
    while (!stack.empty()) {
      Tensor t = stack.back();
      stack.pop_back();
      order.push_back(t);
      for (const Tensor& p : t.node()->parents) {
        if (p.requires_grad() && seen.insert(p.node()).second)
          stack.push_back(p);
      }
    }
    std::sort(order.begin(), order.end(), [](const Tensor& a, const Tensor& b) {
      return a.node()->id > b.node()->id;
    });
  }

  std::unordered_map<const detail::Node*, Tensor> grads;
  grads[loss.node()] = Tensor::constant(loss.shape(), 1.0);

  BackwardResult result;
  for (Tensor& t : order) {
    auto it = grads.find(t.node());
    if (it == grads.end()) continue;
    Tensor g = it->second;
    detail::Node* n = t.node();
    if (n->parents.empty()) {
      t.accumulate_grad(g.values());
      if (create_graph) result.add(t, g);
      continue;
    }
    auto parent_grads = n->backprop(t, g);
    if (parent_grads.size() != n->parents.size())
      throw std::runtime_error(std::string(n->op) +
                               ": backprop returned wrong gradient count");
    for (std::size_t i = 0; i < n->parents.size(); ++i) {
      const Tensor& p = n->parents[i];
      if (!p.requires_grad()) continue;
      const Tensor& pg = parent_grads[i];
      if (!pg.defined()) continue;
      check_same_shape("backward", p, pg);
      auto git = grads.find(p.node());
      if (git == grads.end())
        grads.emplace(p.node(), pg);
      else
        git->second = add(git->second, pg);
    }
    grads.erase(n);  // inserts above may have invalidated `it`
  }
  return result;
}

// ---- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] + b.values()[i];
  return make_op("add", a.shape(), std::move(out), {a, b},
                 [](const Tensor&, const Tensor& g) {
                   return std::vector<Tensor>{g, g};
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] - b.values()[i];
  return make_op("sub", a.shape(), std::move(out), {a, b},
                 [](const Tensor&, const Tensor& g) {
                   return std::vector<Tensor>{g, neg(g)};
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] * b.values()[i];
  return make_op("mul", a.shape(), std::move(out), {a, b},
                 [](const Tensor& self, const Tensor& g) {
                   return std::vector<Tensor>{mul(g, parent(self, 1)),
                                              mul(g, parent(self, 0))};
                 });
}

Tensor divide(const Tensor& a, const Tensor& b) {
  check_same_shape("divide", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] / b.values()[i];
  return make_op("divide", a.shape(), std::move(out), {a, b},
                 [](const Tensor& self, const Tensor& g) {
                   const Tensor& a0 = parent(self, 0);
                   const Tensor& b0 = parent(self, 1);
                   Tensor da = divide(g, b0);
                   Tensor db = neg(mul(g, divide(a0, mul(b0, b0))));
                   return std::vector<Tensor>{da, db};
                 });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
  return make_op("scale", a.shape(), std::move(out), {a},
                 [c](const Tensor&, const Tensor& g) {
                   return std::vector<Tensor>{scale(g, c)};
                 });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + c;
  return make_op("add_scalar", a.shape(), std::move(out), {a},
                 [](const Tensor&, const Tensor& g) {
                   return std::vector<Tensor>{g};
                 });
}

Tensor scalar_mul(const Tensor& s, const Tensor& a) {
  require(s.size() == 1, "scalar_mul: first argument must be scalar, shape " +
                             shape_str(s.shape()));
  double sv = s.values()[0];
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * sv;
  return make_op("scalar_mul", a.shape(), std::move(out), {s, a},
                 [](const Tensor& self, const Tensor& g) {
                   const Tensor& s0 = parent(self, 0);
                   const Tensor& a0 = parent(self, 1);
                   Tensor ds = reshape(sum_all(mul(g, a0)), s0.shape());
                   Tensor da = scalar_mul(s0, g);
                   return std::vector<Tensor>{ds, da};
                 });
}

// ---- linear algebra -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows())
    throw std::invalid_argument("matmul: shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double aip = av[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  return make_op("matmul", {m, n}, std::move(out), {a, b},
                 [](const Tensor& self, const Tensor& g) {
                   const Tensor& a0 = parent(self, 0);
                   const Tensor& b0 = parent(self, 1);
                   return std::vector<Tensor>{matmul(g, transpose(b0)),
                                              matmul(transpose(a0), g)};
                 });
}

Tensor transpose(const Tensor& a) {
  require(a.shape().size() == 2,
          "transpose: expected matrix, got " + shape_str(a.shape()));
  std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.values()[i * n + j];
  return make_op("transpose", {n, m}, std::move(out), {a},
                 [](const Tensor&, const Tensor& g) {
                   return std::vector<Tensor>{transpose(g)};
                 });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size())
    throw std::invalid_argument("reshape: shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(shape));
  std::vector<double> out = a.values();
  return make_op("reshape", std::move(shape), std::move(out), {a},
                 [](const Tensor& self, const Tensor& g) {
                   return std::vector<Tensor>{
                       reshape(g, parent(self, 0).shape())};
                 });
}

// ---- vector structure ----------------------------------------------------------

Tensor concat_vec(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_vec: no inputs");
  std::vector<double> out;
  std::vector<Tensor> parents;
  for (const Tensor& p : parts) {
    require(p.shape().size() == 1,
            "concat_vec: expected vector, got " + shape_str(p.shape()));
    out.insert(out.end(), p.values().begin(), p.values().end());
    parents.push_back(p);
  }
  Shape shape{out.size()};
  return make_op("concat_vec", std::move(shape), std::move(out),
                 std::move(parents), [](const Tensor& self, const Tensor& g) {
                   std::vector<Tensor> grads;
                   std::size_t off = 0;
                   for (const Tensor& p : self.node()->parents) {
                     grads.push_back(slice_vec(g, off, p.size()));
                     off += p.size();
                   }
                   return grads;
                 });
}

Tensor slice_vec(const Tensor& v, std::size_t start, std::size_t len) {
  require(v.shape().size() == 1,
          "slice_vec: expected vector, got " + shape_str(v.shape()));
  require(start + len <= v.size(), "slice_vec: range out of bounds");
  std::vector<double> out(v.values().begin() + start,
                          v.values().begin() + start + len);
  return make_op("slice_vec", {len}, std::move(out), {v},
                 [start](const Tensor& self, const Tensor& g) {
                   return std::vector<Tensor>{
                       pad_vec(g, start, parent(self, 0).size())};
                 });
}

Tensor pad_vec(const Tensor& v, std::size_t start, std::size_t total) {
  require(v.shape().size() == 1,
          "pad_vec: expected vector, got " + shape_str(v.shape()));
  require(start + v.size() <= total, "pad_vec: range out of bounds");
  std::vector<double> out(total, 0.0);
  std::copy(v.values().begin(), v.values().end(), out.begin() + start);
  std::size_t len = v.size();
  return make_op("pad_vec", {total}, std::move(out), {v},
                 [start, len](const Tensor&, const Tensor& g) {
                   return std::vector<Tensor>{slice_vec(g, start, len)};
                 });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  require(!rows.empty(), "stack_rows: no inputs");
  std::size_t n = rows[0].size();
  std::vector<double> out;
  std::vector<Tensor> parents;
  for (const Tensor& r : rows) {
    require(r.shape().size() == 1 && r.size() == n,
            "stack_rows: rows must be equal-length vectors");
    out.insert(out.end(), r.values().begin(), r.values().end());
    parents.push_back(r);
  }
  return make_op("stack_rows", {rows.size(), n}, std::move(out),
                 std::move(parents), [](const Tensor& self, const Tensor& g) {
                   std::vector<Tensor> grads;
                   for (std::size_t i = 0; i < self.node()->parents.size(); ++i)
                     grads.push_back(row(g, i));
                   return grads;
                 });
}

Tensor row(const Tensor& m, std::size_t i) {
  require(m.shape().size() == 2,
          "row: expected matrix, got " + shape_str(m.shape()));
  require(i < m.rows(), "row: index out of bounds");
  std::size_t n = m.cols();
  std::vector<double> out(m.values().begin() + i * n,
                          m.values().begin() + (i + 1) * n);
  return make_op("row", {n}, std::move(out), {m},
                 [i](const Tensor& self, const Tensor& g) {
                   return std::vector<Tensor>{
                       row_scatter(g, i, parent(self, 0).rows())};
                 });
}

Tensor row_scatter(const Tensor& v, std::size_t i, std::size_t n_rows) {
  require(v.shape().size() == 1,
          "row_scatter: expected vector, got " + shape_str(v.shape()));
  require(i < n_rows, "row_scatter: index out of bounds");
  std::size_t n = v.size();
  std::vector<double> out(n_rows * n, 0.0);
  std::copy(v.values().begin(), v.values().end(), out.begin() + i * n);
  return make_op("row_scatter", {n_rows, n}, std::move(out), {v},
                 [i](const Tensor&, const Tensor& g) {
                   return std::vector<Tensor>{row(g, i)};
                 });
}

Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& ids) {
  require(table.shape().size() == 2,
          "gather_rows: expected matrix, got " + shape_str(table.shape()));
  std::size_t d = table.cols();
  std::vector<double> out;
  out.reserve(ids.size() * d);
  for (std::size_t id : ids) {
    require(id < table.rows(), "gather_rows: row id " + std::to_string(id) +
                                   " out of bounds for " +
                                   shape_str(table.shape()));
    out.insert(out.end(), table.values().begin() + id * d,
               table.values().begin() + (id + 1) * d);
  }
  return make_op("gather_rows", {ids.size(), d}, std::move(out), {table},
                 [ids](const Tensor& self, const Tensor& g) {
                   return std::vector<Tensor>{
                       scatter_rows_sum(g, ids, parent(self, 0).rows())};
                 });
}

Tensor scatter_rows_sum(const Tensor& m, const std::vector<std::size_t>& ids,
                        std::size_t n_rows) {
  require(m.shape().size() == 2,
          "scatter_rows_sum: expected matrix, got " + shape_str(m.shape()));
  require(ids.size() == m.rows(), "scatter_rows_sum: id count mismatch");
  std::size_t d = m.cols();
  std::vector<double> out(n_rows * d, 0.0);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    require(ids[r] < n_rows, "scatter_rows_sum: row id out of bounds");
    for (std::size_t j = 0; j < d; ++j)
      out[ids[r] * d + j] += m.values()[r * d + j];
  }
  return make_op("scatter_rows_sum", {n_rows, d}, std::move(out), {m},
                 [ids](const Tensor&, const Tensor& g) {
                   return std::vector<Tensor>{gather_rows(g, ids)};
                 });
}

// ---- reductions -----------------------------------------------------------------

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_op("sum_all", {}, {s}, {a},
                 [](const Tensor& self, const Tensor& g) {
                   return std::vector<Tensor>{
                       broadcast_scalar(g, parent(self, 0).shape())};
                 });
}

Tensor mean_all(const Tensor& a) {
  require(a.size() > 0, "mean_all: empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

Tensor broadcast_scalar(const Tensor& s, Shape shape) {
  require(s.size() == 1, "broadcast_scalar: expected scalar, got " +
                             shape_str(s.shape()));
  std::vector<double> out(shape_size(shape), s.values()[0]);
  return make_op("broadcast_scalar", std::move(shape), std::move(out), {s},
                 [](const Tensor& self, const Tensor& g) {
                   return std::vector<Tensor>{
                       reshape(sum_all(g), parent(self, 0).shape())};
                 });
}

Tensor sum_axis0(const Tensor& m) {
  require(m.shape().size() == 2,
          "sum_axis0: expected matrix, got " + shape_str(m.shape()));
  std::size_t r = m.rows(), c = m.cols();
  std::vector<double> out(c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += m.values()[i * c + j];
  return make_op("sum_axis0", {c}, std::move(out), {m},
                 [](const Tensor& self, const Tensor& g) {
                   return std::vector<Tensor>{
                       broadcast_rows(g, parent(self, 0).rows())};
                 });
}

Tensor mean_axis0(const Tensor& m) {
  require(m.shape().size() == 2 && m.rows() > 0,
          "mean_axis0: expected non-empty matrix");
  return scale(sum_axis0(m), 1.0 / static_cast<double>(m.rows()));
}

Tensor broadcast_rows(const Tensor& v, std::size_t n_rows) {
  require(v.shape().size() == 1,
          "broadcast_rows: expected vector, got " + shape_str(v.shape()));
  std::size_t n = v.size();
  std::vector<double> out(n_rows * n);
  for (std::size_t i = 0; i < n_rows; ++i)
    std::copy(v.values().begin(), v.values().end(), out.begin() + i * n);
  return make_op("broadcast_rows", {n_rows, n}, std::move(out), {v},
                 [](const Tensor&, const Tensor& g) {
                   return std::vector<Tensor>{sum_axis0(g)};
                 });
}

Tensor max_axis0(const Tensor& m) {
  require(m.shape().size() == 2 && m.rows() > 0,
          "max_axis0: expected non-empty matrix, got " + shape_str(m.shape()));
  std::size_t r = m.rows(), c = m.cols();
  std::vector<double> out(c);
  std::vector<std::size_t> argmax(c, 0);
  for (std::size_t j = 0; j < c; ++j) {
    double best = m.values()[j];
    for (std::size_t i = 1; i < r; ++i) {
      double v = m.values()[i * c + j];
      if (v > best) {
        best = v;
        argmax[j] = i;
      }
    }
    out[j] = best;
  }
  return make_op(
      "max_axis0", {c}, std::move(out), {m},
      [argmax](const Tensor& self, const Tensor& g) {
        std::size_t rr = parent(self, 0).rows();
        std::size_t cc = parent(self, 0).cols();
        std::vector<double> mask(rr * cc, 0.0);
        for (std::size_t j = 0; j < cc; ++j) mask[argmax[j] * cc + j] = 1.0;
        Tensor mask_t = Tensor::from_values({rr, cc}, std::move(mask));
        return std::vector<Tensor>{mul(broadcast_rows(g, rr), mask_t)};
      });
}

// ---- nonlinear ---------------------------------------------------------------------

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double x = a.values()[i];
    if (x >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      double e = std::exp(x);
      out[i] = e / (1.0 + e);
    }
  }
  return make_op("sigmoid", a.shape(), std::move(out), {a},
                 [](const Tensor& self, const Tensor& g) {
                   Tensor one_minus = add_scalar(neg(self), 1.0);
                   return std::vector<Tensor>{mul(g, mul(self, one_minus))};
                 });
}

Tensor tanh_t(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.values()[i]);
  return make_op("tanh", a.shape(), std::move(out), {a},
                 [](const Tensor& self, const Tensor& g) {
                   Tensor d = add_scalar(neg(mul(self, self)), 1.0);
                   return std::vector<Tensor>{mul(g, d)};
                 });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
  return make_op("relu", a.shape(), std::move(out), {a},
                 [](const Tensor& self, const Tensor& g) {
                   const Tensor& x = parent(self, 0);
                   std::vector<double> mask(x.size());
                   for (std::size_t i = 0; i < mask.size(); ++i)
                     mask[i] = x.values()[i] > 0.0 ? 1.0 : 0.0;
                   Tensor mask_t = Tensor::from_values(x.shape(), std::move(mask));
                   return std::vector<Tensor>{mul(g, mask_t)};
                 });
}

Tensor exp_t(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.values()[i]);
  return make_op("exp", a.shape(), std::move(out), {a},
                 [](const Tensor& self, const Tensor& g) {
                   return std::vector<Tensor>{mul(g, self)};
                 });
}

Tensor log_t(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.values()[i]);
  return make_op("log", a.shape(), std::move(out), {a},
                 [](const Tensor& self, const Tensor& g) {
                   return std::vector<Tensor>{divide(g, parent(self, 0))};
                 });
}

Tensor sqrt_t(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::sqrt(a.values()[i]);
  return make_op("sqrt", a.shape(), std::move(out), {a},
                 [](const Tensor& self, const Tensor& g) {
                   return std::vector<Tensor>{divide(g, scale(self, 2.0))};
                 });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  require(lo <= hi, "clamp: lo > hi");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::min(hi, std::max(lo, a.values()[i]));
  return make_op("clamp", a.shape(), std::move(out), {a},
                 [lo, hi](const Tensor& self, const Tensor& g) {
                   const Tensor& x = parent(self, 0);
                   std::vector<double> mask(x.size());
                   for (std::size_t i = 0; i < mask.size(); ++i) {
                     double v = x.values()[i];
                     mask[i] = (v >= lo && v <= hi) ? 1.0 : 0.0;
                   }
                   Tensor mask_t = Tensor::from_values(x.shape(), std::move(mask));
                   return std::vector<Tensor>{mul(g, mask_t)};
                 });
}

// ---- convolution support -------------------------------------------------------------

Tensor im2col(const Tensor& m, std::size_t w) {
  require(m.shape().size() == 2,
          "im2col: expected matrix, got " + shape_str(m.shape()));
  require(w >= 1 && w <= m.rows(), "im2col: window does not fit " +
                                       shape_str(m.shape()) + " with w=" +
                                       std::to_string(w));
  std::size_t length = m.rows(), d = m.cols();
  std::size_t out_rows = length - w + 1;
  std::vector<double> out(out_rows * w * d);
  for (std::size_t r = 0; r < out_rows; ++r)
    std::copy(m.values().begin() + r * d, m.values().begin() + (r + w) * d,
              out.begin() + r * w * d);
  return make_op("im2col", {out_rows, w * d}, std::move(out), {m},
                 [w, length, d](const Tensor&, const Tensor& g) {
                   return std::vector<Tensor>{col2im(g, length, d, w)};
                 });
}

Tensor col2im(const Tensor& cols, std::size_t length, std::size_t depth,
              std::size_t w) {
  require(cols.shape().size() == 2 && cols.cols() == w * depth &&
              cols.rows() == length - w + 1,
          "col2im: shape mismatch " + shape_str(cols.shape()));
  std::vector<double> out(length * depth, 0.0);
  for (std::size_t r = 0; r < cols.rows(); ++r)
    for (std::size_t k = 0; k < w; ++k)
      for (std::size_t j = 0; j < depth; ++j)
        out[(r + k) * depth + j] += cols.values()[r * w * depth + k * depth + j];
  return make_op("col2im", {length, depth}, std::move(out), {cols},
                 [w](const Tensor&, const Tensor& g) {
                   return std::vector<Tensor>{im2col(g, w)};
                 });
}

// ---- composed helpers ------------------------------------------------------------------

Tensor dot(const Tensor& a, const Tensor& b) { return sum_all(mul(a, b)); }

Tensor at(const Tensor& v, std::size_t i) {
  return reshape(slice_vec(v, i, 1), {});
}

Tensor softmax_vec(const Tensor& logits) {
  require(logits.shape().size() == 1 && logits.size() > 0,
          "softmax_vec: expected non-empty vector");
  double m = *std::max_element(logits.values().begin(), logits.values().end());
  Tensor shifted = add_scalar(logits, -m);
  Tensor e = exp_t(shifted);
  Tensor inv = divide(Tensor::scalar(1.0), sum_all(e));
  return scalar_mul(inv, e);
}

Tensor cross_entropy_vec(const Tensor& logits, std::size_t label) {
  require(logits.shape().size() == 1 && label < logits.size(),
          "cross_entropy_vec: label " + std::to_string(label) +
              " out of range for " + shape_str(logits.shape()));
  // Shift by the detached max: softmax is shift-invariant, so the constant
  // shift contributes exactly zero gradient.
  double m = *std::max_element(logits.values().begin(), logits.values().end());
  Tensor shifted = add_scalar(logits, -m);
  Tensor lse = log_t(sum_all(exp_t(shifted)));
  return sub(lse, at(shifted, label));
}

Tensor l2_normalize(const Tensor& v) {
  Tensor n2 = sum_all(mul(v, v));
  Tensor n = sqrt_t(add_scalar(n2, 1e-24));
  return scalar_mul(divide(Tensor::scalar(1.0), n), v);
}

Tensor dropout(const Tensor& a, double p, Rng& rng, bool train_mode) {
  require(p >= 0.0 && p < 1.0,
          "dropout: p must be in [0,1), got " + std::to_string(p));
  if (!train_mode || p == 0.0) return a;
  std::bernoulli_distribution keep(1.0 - p);
  std::vector<double> mask(a.size());
  double inv_keep = 1.0 / (1.0 - p);
  for (double& m : mask) m = keep(rng) ? inv_keep : 0.0;
  return mul(a, Tensor::from_values(a.shape(), std::move(mask)));
}

// ---- grad check ------------------------------------------------------------------------

GradCheckReport grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& points, double step, double tolerance) {
  require(step > 0.0, "grad_check: step must be positive");
  std::vector<Tensor> leaves;
  leaves.reserve(points.size());
  for (const Tensor& p : points)
    leaves.push_back(Tensor::param(p.shape(), p.values()));

  Tensor loss = f(leaves);
  if (loss.size() != 1)
    throw std::invalid_argument("grad_check: f must be scalar-valued");
  if (!std::isfinite(loss.value()))
    throw std::runtime_error("grad_check: non-finite function value");
  // f may run internal backward passes (virtual-update style); those deposits
  // must not mix into the gradient measured here
  for (Tensor& l : leaves) l.zero_grad();
  backward(loss);

  // snapshot every analytic gradient before the first FD evaluation: each
  // call of f may itself deposit gradients on these leaves
  std::vector<std::vector<double>> analytic_all(leaves.size());
  for (std::size_t li = 0; li < leaves.size(); ++li)
    analytic_all[li] = leaves[li].has_grad()
                           ? leaves[li].grad()
                           : std::vector<double>(leaves[li].size(), 0.0);

  GradCheckReport report;
  report.tolerance = tolerance;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const std::vector<double>& analytic = analytic_all[li];
    auto& vals = leaves[li].leaf_values();
    for (std::size_t c = 0; c < vals.size(); ++c) {
      double orig = vals[c];
      vals[c] = orig + step;
      double f_plus = f(leaves).value();
      vals[c] = orig - step;
      double f_minus = f(leaves).value();
      vals[c] = orig;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
        throw std::runtime_error("grad_check: non-finite function value");
      double numeric = (f_plus - f_minus) / (2.0 * step);
      double denom = std::max({1e-6, std::abs(analytic[c]), std::abs(numeric)});
      double rel = std::abs(analytic[c] - numeric) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_input = li;
        report.worst_coord = c;
      }
    }
  }
  report.passed = report.max_rel_err <= tolerance;
  return report;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& point, double step, double tolerance) {
  return grad_check(
      [&f](const std::vector<Tensor>& xs) { return f(xs[0]); },
      std::vector<Tensor>{point}, step, tolerance);
}

}  // namespace mrco::ad
