#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mrco::ad {

using Rng = std::mt19937_64;
using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

/// Dense real tensor holding 64-bit values, recorded on an implicit tape.
/// Copies share the underlying node; detach() produces an independent value.
class Tensor {
 public:
  Tensor() = default;

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  static Tensor constant(Shape shape, double v);
  static Tensor from_values(Shape shape, std::vector<double> values);
  /// Trainable leaf; the only kind of tensor whose values may be mutated.
  static Tensor param(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rows() const;  // matrices only
  std::size_t cols() const;
  const std::vector<double>& values() const;
  double value() const;  // scalar tensors only
  double at_flat(std::size_t i) const;

  bool requires_grad() const;
  bool is_leaf() const;

  /// Mutable access to a leaf's values (parameter updates). Throws on non-leaf.
  std::vector<double>& leaf_values();

  bool has_grad() const;
  const std::vector<double>& grad() const;  // throws when absent
  void zero_grad();
  void accumulate_grad(const std::vector<double>& g);

  /// Value copy with no history and no gradient requirement.
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }

 private:
  friend Tensor make_tensor(std::shared_ptr<detail::Node> node);
  std::shared_ptr<detail::Node> node_;
};

namespace detail {
using BackpropFn =
    std::function<std::vector<Tensor>(const Tensor& self, const Tensor& grad_out)>;

struct Node {
  std::uint64_t id = 0;
  const char* op = "leaf";
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<Tensor> parents;
  BackpropFn backprop;                       // empty for leaves
  std::optional<std::vector<double>> grad;   // numeric gradient, leaves only
};
}  // namespace detail

/// Gradients of a backward pass that kept its graph: maps leaves to
/// differentiable gradient expressions (needed to build a one-step update
/// that stays differentiable w.r.t. upstream parameters).
class BackwardResult {
 public:
  void add(const Tensor& leaf, const Tensor& grad_expr);
  bool has(const Tensor& leaf) const;
  Tensor grad_expr(const Tensor& leaf) const;

 private:
  std::vector<std::pair<Tensor, Tensor>> grads_;
};

/// Reverse-mode sweep from a scalar loss. Accumulates numeric gradients into
/// every reachable requires_grad leaf. With create_graph the gradient
/// expressions themselves are recorded on the tape and returned, so they can
/// be differentiated again.
BackwardResult backward(const Tensor& loss, bool create_graph = false);

// ---- primitives -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
/// Every element of a multiplied by scalar tensor s.
Tensor scalar_mul(const Tensor& s, const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor concat_vec(const std::vector<Tensor>& parts);
Tensor slice_vec(const Tensor& v, std::size_t start, std::size_t len);
Tensor pad_vec(const Tensor& v, std::size_t start, std::size_t total);
Tensor stack_rows(const std::vector<Tensor>& rows);
Tensor row(const Tensor& m, std::size_t i);
Tensor row_scatter(const Tensor& v, std::size_t i, std::size_t n_rows);
Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& ids);
Tensor scatter_rows_sum(const Tensor& m, const std::vector<std::size_t>& ids,
                        std::size_t n_rows);

Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor broadcast_scalar(const Tensor& s, Shape shape);
Tensor sum_axis0(const Tensor& m);
Tensor mean_axis0(const Tensor& m);
Tensor broadcast_rows(const Tensor& v, std::size_t n_rows);
Tensor max_axis0(const Tensor& m);

Tensor sigmoid(const Tensor& a);
Tensor tanh_t(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor sqrt_t(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

/// Unfold length-w windows of an L x d matrix into rows of a
/// (L - w + 1) x (w * d) matrix.
Tensor im2col(const Tensor& m, std::size_t w);
Tensor col2im(const Tensor& cols, std::size_t length, std::size_t depth,
              std::size_t w);

// ---- composed helpers ------------------------------------------------------

Tensor dot(const Tensor& a, const Tensor& b);
Tensor at(const Tensor& v, std::size_t i);  // scalar element of a vector
Tensor softmax_vec(const Tensor& logits);
Tensor cross_entropy_vec(const Tensor& logits, std::size_t label);
/// L2 normalization with an epsilon guard inside the square root.
Tensor l2_normalize(const Tensor& v);
/// Inverted dropout: identity in eval mode, mask/(1-p) scaling in train mode.
Tensor dropout(const Tensor& a, double p, Rng& rng, bool train_mode);

// ---- verification -----------------------------------------------------------

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_coord = 0;
  double tolerance = 0.0;
  bool passed = true;
};

/// Central finite differences vs analytic gradients for a scalar function of
/// several tensors. Relative error uses max(|analytic|, |numeric|, 1e-6) as
/// denominator.
GradCheckReport grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& points, double step, double tolerance);
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& point, double step, double tolerance);

}  // namespace mrco::ad
