#include "mirror/tape.hpp"

#include <algorithm>
#include <cmath>

namespace mirror {

// ---------------------------------------------------------------------------
// ParamStore

Array& ParamStore::add(const std::string& name, Array value) {
  auto [it, inserted] = arrays_.emplace(name, std::move(value));
  if (!inserted) throw std::invalid_argument("duplicate parameter: " + name);
  return it->second;
}

Array& ParamStore::get(const std::string& name) {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

const Array& ParamStore::get(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, a] : arrays_) n += a.size();
  return n;
}

std::size_t ParamStore::parameter_count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& [name, a] : arrays_) {
    if (name.rfind(prefix, 0) == 0) n += a.size();
  }
  return n;
}

void ParamStore::quantize_f32() {
  for (auto& [name, a] : arrays_) {
    for (auto& v : a.values()) v = static_cast<double>(static_cast<float>(v));
  }
}

// ---------------------------------------------------------------------------
// Tape

const Array& Var::value() const { return tape->value(*this); }

Var Tape::constant(Array value) {
  nodes_.push_back({std::move(value), {}, {}, false});
  return {this, nodes_.size() - 1};
}

Var Tape::leaf(Array value, bool requires_grad) {
  nodes_.push_back({std::move(value), {}, {}, requires_grad && tracking_});
  return {this, nodes_.size() - 1};
}

Var Tape::param(const ParamStore& store, const std::string& name) {
  auto it = params_.find(name);
  if (it != params_.end()) return {this, it->second};
  Var v = leaf(store.get(name), true);
  params_.emplace(name, v.id);
  return v;
}

Array& Tape::grad_slot(std::size_t id) {
  auto& node = nodes_[id];
  if (node.grad.empty()) node.grad = Array(node.value.shape(), 0.0);
  return node.grad;
}

void Tape::accumulate(std::size_t id, const Array& g) {
  auto& slot = grad_slot(id);
  slot.matrix() += g.matrix();
}

Var Tape::push(Array value, std::vector<Var> parents, BackwardFn backward) {
  bool needs = false;
  if (tracking_) {
    for (const auto& p : parents) needs = needs || nodes_[p.id].requires_grad;
  }
  nodes_.push_back({std::move(value), {}, needs ? std::move(backward) : BackwardFn{}, needs});
  return {this, nodes_.size() - 1};
}

Gradients Tape::backward(Var loss, const ParamStore& store) {
  if (loss.tape != this) throw std::invalid_argument("backward: loss belongs to another tape");
  const auto& lv = nodes_[loss.id].value;
  if (lv.size() != 1) throw ShapeError("backward: loss must be scalar, got " + lv.shape_string());
  for (auto& n : nodes_) n.grad = Array();
  grad_slot(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.requires_grad || node.grad.empty() || !node.backward) continue;
    if (!node.grad.all_finite()) {
      throw NumericError("backward: non-finite gradient at node " + std::to_string(i));
    }
    const Array g = node.grad;
    node.backward(*this, g, node.value);
  }
  Gradients out;
  for (const auto& [name, a] : store) {
    auto it = params_.find(name);
    if (it != params_.end() && !nodes_[it->second].grad.empty()) {
      out.emplace(name, nodes_[it->second].grad);
    } else {
      out.emplace(name, Array(a.shape(), 0.0));
    }
  }
  for (const auto& [name, g] : out) {
    if (!g.all_finite()) throw NumericError("backward: non-finite gradient for " + name);
  }
  return out;
}

const Array& Tape::grad(Var v) const { return nodes_[v.id].grad; }

Gradients backward_gradients(Var loss, const ParamStore& store) {
  return loss.tape->backward(loss, store);
}

// ---------------------------------------------------------------------------
// Primitives

namespace {

Array checked(Array a, const char* op) {
  if (!a.all_finite()) throw NumericError(std::string(op) + ": non-finite result");
  return a;
}

void require_same(const Array& a, const Array& b, const char* op) {
  if (!a.same_shape(b) && !(a.rows() == b.rows() && a.cols() == b.cols())) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

Array like(const Array& a) { return Array({a.rows(), a.cols()}); }

template <typename F>
Array map_values(const Array& a, F f) {
  Array out = like(a);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace

Var matmul(Var a, Var b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: " + av.shape_string() + " x " + bv.shape_string());
  }
  Array out = Array::zeros(av.rows(), bv.cols());
  out.matrix().noalias() = av.matrix() * bv.matrix();
  return a.tape->push(checked(std::move(out), "matmul"), {a, b}, [a, b](Tape& t, const Array& g, const Array&) {
    if (t.requires_grad(a)) {
      t.grad_slot(a.id).matrix().noalias() += g.matrix() * t.value(b).matrix().transpose();
    }
    if (t.requires_grad(b)) {
      t.grad_slot(b.id).matrix().noalias() += t.value(a).matrix().transpose() * g.matrix();
    }
  });
}

Var add(Var a, Var b) {
  require_same(a.value(), b.value(), "add");
  Array out = like(a.value());
  out.matrix() = a.value().matrix() + b.value().matrix();
  return a.tape->push(checked(std::move(out), "add"), {a, b}, [a, b](Tape& t, const Array& g, const Array&) {
    if (t.requires_grad(a)) t.accumulate(a.id, g);
    if (t.requires_grad(b)) t.accumulate(b.id, g);
  });
}

Var add_bias(Var a, Var bias) {
  const auto& av = a.value();
  const auto& bv = bias.value();
  if (bv.size() != av.cols()) {
    throw ShapeError("add_bias: " + av.shape_string() + " + " + bv.shape_string());
  }
  Array out = like(av);
  out.matrix() = av.matrix();
  out.matrix().rowwise() += bv.matrix().row(0);
  return a.tape->push(checked(std::move(out), "add_bias"), {a, bias},
                      [a, bias](Tape& t, const Array& g, const Array&) {
                        if (t.requires_grad(a)) t.accumulate(a.id, g);
                        if (t.requires_grad(bias)) {
                          auto& slot = t.grad_slot(bias.id);
                          MatrixMap sm(slot.data(), 1, Eigen::Index(slot.size()));
                          sm += g.matrix().colwise().sum();
                        }
                      });
}

Var sub(Var a, Var b) {
  require_same(a.value(), b.value(), "sub");
  Array out = like(a.value());
  out.matrix() = a.value().matrix() - b.value().matrix();
  return a.tape->push(checked(std::move(out), "sub"), {a, b}, [a, b](Tape& t, const Array& g, const Array&) {
    if (t.requires_grad(a)) t.accumulate(a.id, g);
    if (t.requires_grad(b)) t.grad_slot(b.id).matrix() -= g.matrix();
  });
}

Var mul(Var a, Var b) {
  require_same(a.value(), b.value(), "mul");
  Array out = like(a.value());
  out.matrix() = a.value().matrix().cwiseProduct(b.value().matrix());
  return a.tape->push(checked(std::move(out), "mul"), {a, b}, [a, b](Tape& t, const Array& g, const Array&) {
    if (t.requires_grad(a)) {
      t.grad_slot(a.id).matrix() += g.matrix().cwiseProduct(t.value(b).matrix());
    }
    if (t.requires_grad(b)) {
      t.grad_slot(b.id).matrix() += g.matrix().cwiseProduct(t.value(a).matrix());
    }
  });
}

Var mul_col(Var a, Var col) {
  const auto& av = a.value();
  const auto& cv = col.value();
  if (cv.size() != av.rows()) {
    throw ShapeError("mul_col: " + av.shape_string() + " * " + cv.shape_string());
  }
  Array out = like(av);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < av.cols(); ++c) out.at(r, c) = av.at(r, c) * cv[r];
  }
  return a.tape->push(checked(std::move(out), "mul_col"), {a, col},
                      [a, col](Tape& t, const Array& g, const Array&) {
                        const auto& av = t.value(a);
                        const auto& cv = t.value(col);
                        if (t.requires_grad(a)) {
                          auto& s = t.grad_slot(a.id);
                          for (std::size_t r = 0; r < av.rows(); ++r) {
                            for (std::size_t c = 0; c < av.cols(); ++c) s.at(r, c) += g.at(r, c) * cv[r];
                          }
                        }
                        if (t.requires_grad(col)) {
                          auto& s = t.grad_slot(col.id);
                          for (std::size_t r = 0; r < av.rows(); ++r) {
                            double acc = 0.0;
                            for (std::size_t c = 0; c < av.cols(); ++c) acc += g.at(r, c) * av.at(r, c);
                            s[r] += acc;
                          }
                        }
                      });
}

Var scale(Var a, double s) {
  Array out = map_values(a.value(), [s](double v) { return v * s; });
  return a.tape->push(checked(std::move(out), "scale"), {a}, [a, s](Tape& t, const Array& g, const Array&) {
    t.grad_slot(a.id).matrix() += s * g.matrix();
  });
}

Var add_scalar(Var a, double s) {
  Array out = map_values(a.value(), [s](double v) { return v + s; });
  return a.tape->push(checked(std::move(out), "add_scalar"), {a},
                      [a](Tape& t, const Array& g, const Array&) { t.accumulate(a.id, g); });
}

Var tanh(Var a) {
  Array out = map_values(a.value(), [](double v) { return std::tanh(v); });
  return a.tape->push(checked(std::move(out), "tanh"), {a},
                      [a](Tape& t, const Array& g, const Array& y) {
                        auto& s = t.grad_slot(a.id);
                        for (std::size_t i = 0; i < g.size(); ++i) s[i] += g[i] * (1.0 - y[i] * y[i]);
                      });
}

Var sigmoid(Var a) {
  Array out = map_values(a.value(), [](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  return a.tape->push(checked(std::move(out), "sigmoid"), {a},
                      [a](Tape& t, const Array& g, const Array& y) {
                        auto& s = t.grad_slot(a.id);
                        for (std::size_t i = 0; i < g.size(); ++i) s[i] += g[i] * y[i] * (1.0 - y[i]);
                      });
}

Var exp(Var a) {
  Array out = map_values(a.value(), [](double v) { return std::exp(v); });
  return a.tape->push(checked(std::move(out), "exp"), {a},
                      [a](Tape& t, const Array& g, const Array& y) {
                        auto& s = t.grad_slot(a.id);
                        for (std::size_t i = 0; i < g.size(); ++i) s[i] += g[i] * y[i];
                      });
}

Var log(Var a) {
  for (double v : a.value().values()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive argument");
  }
  Array out = map_values(a.value(), [](double v) { return std::log(v); });
  return a.tape->push(checked(std::move(out), "log"), {a},
                      [a](Tape& t, const Array& g, const Array&) {
                        const auto& x = t.value(a);
                        auto& s = t.grad_slot(a.id);
                        for (std::size_t i = 0; i < g.size(); ++i) s[i] += g[i] / x[i];
                      });
}

Var clamp(Var a, double lo, double hi) {
  Array out = map_values(a.value(), [lo, hi](double v) { return std::clamp(v, lo, hi); });
  return a.tape->push(checked(std::move(out), "clamp"), {a},
                      [a, lo, hi](Tape& t, const Array& g, const Array&) {
                        const auto& x = t.value(a);
                        auto& s = t.grad_slot(a.id);
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          if (x[i] >= lo && x[i] <= hi) s[i] += g[i];
                        }
                      });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Array out = Array::zeros(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    out.matrix().middleCols(Eigen::Index(offset), Eigen::Index(p.cols())) = p.value().matrix();
    offset += p.cols();
  }
  return parts.front().tape->push(
      std::move(out), parts, [parts](Tape& t, const Array& g, const Array&) {
        std::size_t off = 0;
        for (const auto& p : parts) {
          const auto w = p.cols();
          if (t.requires_grad(p)) {
            t.grad_slot(p.id).matrix() += g.matrix().middleCols(Eigen::Index(off), Eigen::Index(w));
          }
          off += w;
        }
      });
}

Var slice_cols(Var a, std::size_t offset, std::size_t length) {
  const auto& av = a.value();
  if (length == 0 || offset + length > av.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(offset) + ", +" + std::to_string(length) +
                     ") out of " + av.shape_string());
  }
  Array out = Array::zeros(av.rows(), length);
  out.matrix() = av.matrix().middleCols(Eigen::Index(offset), Eigen::Index(length));
  return a.tape->push(std::move(out), {a}, [a, offset, length](Tape& t, const Array& g, const Array&) {
    t.grad_slot(a.id).matrix().middleCols(Eigen::Index(offset), Eigen::Index(length)) += g.matrix();
  });
}

Var embedding(Var table, const std::vector<int>& ids) {
  const auto& tv = table.value();
  if (ids.empty()) throw ShapeError("embedding: no ids");
  for (int id : ids) {
    if (id < 0 || std::size_t(id) >= tv.rows()) {
      throw std::out_of_range("embedding: id " + std::to_string(id) + " outside table of " +
                              std::to_string(tv.rows()) + " rows");
    }
  }
  Array out = Array::zeros(ids.size(), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    out.matrix().row(Eigen::Index(r)) = tv.matrix().row(ids[r]);
  }
  return table.tape->push(std::move(out), {table}, [table, ids](Tape& t, const Array& g, const Array&) {
    auto& s = t.grad_slot(table.id);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      s.matrix().row(ids[r]) += g.matrix().row(Eigen::Index(r));
    }
  });
}

Var sum(Var a) {
  Array out = Array::scalar(a.value().matrix().sum());
  return a.tape->push(checked(std::move(out), "sum"), {a}, [a](Tape& t, const Array& g, const Array&) {
    t.grad_slot(a.id).matrix().array() += g[0];
  });
}

Var sum_cols(Var a) {
  const auto& av = a.value();
  Array out = Array::zeros(av.rows(), 1);
  out.matrix() = av.matrix().rowwise().sum();
  return a.tape->push(checked(std::move(out), "sum_cols"), {a}, [a](Tape& t, const Array& g, const Array&) {
    auto& s = t.grad_slot(a.id);
    for (std::size_t r = 0; r < s.rows(); ++r) {
      for (std::size_t c = 0; c < s.cols(); ++c) s.at(r, c) += g[r];
    }
  });
}

Array log_softmax_rows(const Array& logits) {
  Array out = Array::zeros(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    double mx = logits.at(r, 0);
    for (std::size_t c = 1; c < logits.cols(); ++c) mx = std::max(mx, logits.at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) z += std::exp(logits.at(r, c) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < logits.cols(); ++c) out.at(r, c) = logits.at(r, c) - lse;
  }
  return out;
}

Var log_softmax_pick(Var logits, const std::vector<int>& targets,
                     const std::vector<double>& weights) {
  const auto& lv = logits.value();
  if (targets.size() != lv.rows() || weights.size() != lv.rows()) {
    throw ShapeError("log_softmax_pick: " + std::to_string(targets.size()) + " targets for " +
                     lv.shape_string() + " logits");
  }
  for (int id : targets) {
    if (id < 0 || std::size_t(id) >= lv.cols()) {
      throw std::out_of_range("log_softmax_pick: target " + std::to_string(id));
    }
  }
  Array logp = log_softmax_rows(lv);
  Array out = Array::zeros(lv.rows(), 1);
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    out[r] = weights[r] == 0.0 ? 0.0 : weights[r] * logp.at(r, std::size_t(targets[r]));
  }
  return logits.tape->push(
      checked(std::move(out), "log_softmax_pick"), {logits},
      [logits, targets, weights, logp = std::move(logp)](Tape& t, const Array& g, const Array&) {
        auto& s = t.grad_slot(logits.id);
        for (std::size_t r = 0; r < logp.rows(); ++r) {
          const double w = g[r] * weights[r];
          if (w == 0.0) continue;
          for (std::size_t c = 0; c < logp.cols(); ++c) s.at(r, c) -= w * std::exp(logp.at(r, c));
          s.at(r, std::size_t(targets[r])) += w;
        }
      });
}

}  // namespace mirror
