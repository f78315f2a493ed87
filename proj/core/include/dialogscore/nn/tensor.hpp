#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dialogscore/prng.hpp"

namespace dialogscore::nn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// Trainable parameter. Lives outside any tape; gradients accumulate across
// backward passes until zero_grad(), which makes per-example gradient
// accumulation over a mini-batch trivial.
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;

  Parameter() = default;
  Parameter(std::string n, Shape s);

  std::size_t size() const { return value.size(); }
  void zero_grad();
};

void xavier_uniform_init(Parameter& p, Prng& rng);
void normal_init(Parameter& p, double stddev, Prng& rng);

class Tape;

// Lightweight handle to a node on a tape. Values stay readable for the
// lifetime of the tape; grad() is populated by Tape::backward.
class Tensor {
 public:
  Tensor() = default;

  const Shape& shape() const;
  std::size_t size() const;
  const std::vector<double>& value() const;
  const std::vector<double>& grad() const;
  bool requires_grad() const;
  double item() const;  // single-element tensors only
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Tensor(Tape* t, std::size_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records the forward pass; node creation order is a topological order, so
// backward() is a single reverse sweep. A tape is single-use: after
// backward() it refuses further work.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Shape shape, std::vector<double> data);
  Tensor scalar(double v);
  Tensor zeros(Shape shape);
  // Leaf bound to a parameter; backward() adds into p.grad.
  Tensor leaf(Parameter& p);

  // [m,k]x[k,n] -> [m,n]; [m,k]x[k] -> [m]; [k]x[k,n] -> [n]; [k]x[k] -> [1]
  Tensor matmul(Tensor a, Tensor b);
  // Same shape, or row-broadcast bias: [m,n] + [n].
  Tensor add(Tensor a, Tensor b);
  // Operands flattened and concatenated into one rank-1 tensor.
  Tensor concat(std::span<const Tensor> parts);
  // Same data, new shape (element count must match). Gradient passes through.
  Tensor reshape(Tensor x, Shape shape);
  Tensor tanh(Tensor x);
  Tensor sigmoid(Tensor x);
  // Elementwise product; one operand may be a single-element tensor, which
  // broadcasts over the other.
  Tensor mul(Tensor a, Tensor b);
  // Rank-1: softmax over the vector. Rank-2: softmax over each row.
  Tensor softmax(Tensor x);
  // table is a [V,D] tensor (normally a parameter leaf); rows gathered into
  // [n,D]. Gradient scatter-adds into the table.
  Tensor embedding_lookup(Tensor table, std::span<const int> indices);
  // Inverted-scaling dropout: identity when !training or rate == 0.
  Tensor dropout(Tensor x, double rate, Prng& rng, bool training);
  // -log softmax(logits)[label]; logits rank-1, label 0-based.
  Tensor cross_entropy(Tensor logits, int label);
  Tensor sum(Tensor x);
  Tensor mean(Tensor x);

  // Seeds d(loss)/d(loss)=1 and sweeps the tape once in reverse order,
  // accumulating into bound Parameter grads. Consumes the tape.
  void backward(Tensor loss);

  bool consumed() const { return consumed_; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated only when requires_grad
    bool requires_grad = false;
    Parameter* param = nullptr;
    std::function<void()> backprop;  // empty for leaves and constants
  };

  Node& node(const Tensor& t);
  const Node& node(const Tensor& t) const;
  Tensor make(Shape shape, std::vector<double> value, bool requires_grad);
  void check_same_tape(const Tensor& t) const;

  friend class Tensor;
  std::deque<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace dialogscore::nn
