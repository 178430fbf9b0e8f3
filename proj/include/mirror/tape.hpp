#pragma once

#include "mirror/array.hpp"

#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace mirror {

// Named parameter arrays. Ordered so that iteration (and therefore
// serialization and optimizer updates) is deterministic.
class ParamStore {
 public:
  Array& add(const std::string& name, Array value);
  Array& get(const std::string& name);
  const Array& get(const std::string& name) const;
  bool contains(const std::string& name) const { return arrays_.count(name) != 0; }

  std::size_t parameter_count() const;
  std::size_t parameter_count(const std::string& prefix) const;

  // Rounds every value to the nearest 32-bit float.
  void quantize_f32();

  auto begin() { return arrays_.begin(); }
  auto end() { return arrays_.end(); }
  auto begin() const { return arrays_.begin(); }
  auto end() const { return arrays_.end(); }
  std::size_t size() const { return arrays_.size(); }

 private:
  std::map<std::string, Array> arrays_;
};

using Gradients = std::map<std::string, Array>;

class Tape;

// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Array& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

// Records primitive applications for reverse-mode differentiation. Nodes are
// appended in evaluation order, so reverse index order is a valid reverse
// topological order.
class Tape {
 public:
  using BackwardFn =
      std::function<void(Tape&, const Array& out_grad, const Array& out_value)>;

  // A non-tracking tape evaluates values only; nothing requires gradients.
  explicit Tape(bool tracking = true) : tracking_(tracking) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool tracking() const { return tracking_; }

  Var constant(Array value);
  Var leaf(Array value, bool requires_grad = true);
  // Parameter leaf; repeated requests for the same name return the same node
  // so that gradient contributions from every use accumulate.
  Var param(const ParamStore& store, const std::string& name);

  const Array& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Adds `g` into the gradient slot of node `id`.
  void accumulate(std::size_t id, const Array& g);
  Array& grad_slot(std::size_t id);

  Var push(Array value, std::vector<Var> parents, BackwardFn backward);

  // Reverse sweep from a scalar loss. Returns gradients for every parameter
  // of `store`; parameters the loss never touched receive zeros.
  Gradients backward(Var loss, const ParamStore& store);
  // Gradient of the loss w.r.t. an arbitrary leaf after backward().
  const Array& grad(Var v) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Array value;
    Array grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::size_t> params_;
  bool tracking_;
};

Gradients backward_gradients(Var loss, const ParamStore& store);

// Primitives. Shapes are matrices (rank 1 arrays are single rows).
Var matmul(Var a, Var b);
Var add(Var a, Var b);
// a [n x m] + bias [1 x m], broadcast over rows.
Var add_bias(Var a, Var bias);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// a [n x m] scaled row-wise by col [n x 1].
Var mul_col(Var a, Var col);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var clamp(Var a, double lo, double hi);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t offset, std::size_t length);
// Gathers rows of `table` [V x d] into [ids.size() x d].
Var embedding(Var table, const std::vector<int>& ids);
Var sum(Var a);
// Row sums, [n x m] -> [n x 1].
Var sum_cols(Var a);
// Fused softmax and cross-entropy. Returns the weighted log-probability of
// each row's target, [n x 1]; rows with weight 0 contribute exactly 0.
Var log_softmax_pick(Var logits, const std::vector<int>& targets,
                     const std::vector<double>& weights);

// Numerically stable row-wise log-softmax (value-only helper).
Array log_softmax_rows(const Array& logits);

}  // namespace mirror
