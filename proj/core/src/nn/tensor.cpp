#include "dialogscore/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dialogscore::nn {

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

Parameter::Parameter(std::string n, Shape s)
    : name(std::move(n)), shape(std::move(s)), value(numel(shape), 0.0), grad(numel(shape), 0.0) {}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void xavier_uniform_init(Parameter& p, Prng& rng) {
  if (p.shape.size() != 2) throw std::invalid_argument("xavier init expects a matrix parameter");
  const double fan_in = static_cast<double>(p.shape[1]);
  const double fan_out = static_cast<double>(p.shape[0]);
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : p.value) v = rng.uniform(-bound, bound);
}

void normal_init(Parameter& p, double stddev, Prng& rng) {
  for (double& v : p.value) v = rng.normal(0.0, stddev);
}

const Shape& Tensor::shape() const { return tape_->node(*this).shape; }
std::size_t Tensor::size() const { return tape_->node(*this).value.size(); }
const std::vector<double>& Tensor::value() const { return tape_->node(*this).value; }
bool Tensor::requires_grad() const { return tape_->node(*this).requires_grad; }

const std::vector<double>& Tensor::grad() const {
  const auto& n = tape_->node(*this);
  if (!n.requires_grad)
    throw std::logic_error("tensor does not require grad; no gradient was emitted");
  return n.grad;
}

double Tensor::item() const {
  const auto& v = value();
  if (v.size() != 1)
    throw std::logic_error("item() on tensor of shape " + shape_str(shape()));
  return v[0];
}

Tape::Node& Tape::node(const Tensor& t) { return nodes_[t.id_]; }
const Tape::Node& Tape::node(const Tensor& t) const { return nodes_[t.id_]; }

void Tape::check_same_tape(const Tensor& t) const {
  if (t.tape_ != this) throw std::logic_error("tensor belongs to a different tape");
}

Tensor Tape::make(Shape shape, std::vector<double> value, bool requires_grad) {
  if (consumed_) throw std::logic_error("tape already consumed by backward()");
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.grad.assign(n.value.size(), 0.0);
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::constant(Shape shape, std::vector<double> data) {
  if (numel(shape) != data.size())
    throw std::invalid_argument("constant: data size " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  return make(std::move(shape), std::move(data), false);
}

Tensor Tape::scalar(double v) { return make({1}, {v}, false); }

Tensor Tape::zeros(Shape shape) {
  std::vector<double> z(numel(shape), 0.0);
  return make(std::move(shape), std::move(z), false);
}

Tensor Tape::leaf(Parameter& p) {
  Tensor t = make(p.shape, p.value, true);
  Node& n = node(t);
  n.param = &p;
  n.backprop = [this, t]() {
    Node& self = node(t);
    for (std::size_t i = 0; i < self.grad.size(); ++i) self.param->grad[i] += self.grad[i];
  };
  return t;
}

namespace {

// Interprets rank-1 operands as a row (lhs) or column (rhs) vector.
struct MatView {
  std::size_t rows, cols;
  bool vector;
};

MatView lhs_view(const Shape& s) {
  if (s.size() == 2) return {s[0], s[1], false};
  if (s.size() == 1) return {1, s[0], true};
  throw std::invalid_argument("matmul lhs must be rank 1 or 2, got " + shape_str(s));
}

MatView rhs_view(const Shape& s) {
  if (s.size() == 2) return {s[0], s[1], false};
  if (s.size() == 1) return {s[0], 1, true};
  throw std::invalid_argument("matmul rhs must be rank 1 or 2, got " + shape_str(s));
}

}  // namespace

Tensor Tape::matmul(Tensor a, Tensor b) {
  check_same_tape(a);
  check_same_tape(b);
  const MatView va = lhs_view(a.shape());
  const MatView vb = rhs_view(b.shape());
  if (va.cols != vb.rows)
    throw std::invalid_argument("matmul shape mismatch: " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const std::size_t m = va.rows, k = va.cols, n = vb.cols;

  std::vector<double> out(m * n, 0.0);
  const auto& A = a.value();
  const auto& B = b.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &B[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }

  Shape oshape;
  if (!va.vector && !vb.vector)
    oshape = {m, n};
  else if (va.vector && vb.vector)
    oshape = {1};
  else if (va.vector)
    oshape = {n};
  else
    oshape = {m};

  const bool rg = a.requires_grad() || b.requires_grad();
  Tensor out_t = make(std::move(oshape), std::move(out), rg);
  if (rg) {
    node(out_t).backprop = [this, a, b, out_t, m, k, n]() {
      const auto& g = node(out_t).grad;
      if (node(a).requires_grad) {
        auto& ga = node(a).grad;
        const auto& B = b.value();
        // dA = dC * B^T
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* grow = &g[i * n];
            const double* brow = &B[p * n];
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[i * k + p] += acc;
          }
      }
      if (node(b).requires_grad) {
        auto& gb = node(b).grad;
        const auto& A = a.value();
        // dB = A^T * dC
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            if (aip == 0.0) continue;
            const double* grow = &g[i * n];
            double* brow = &gb[p * n];
            for (std::size_t j = 0; j < n; ++j) brow[j] += aip * grow[j];
          }
      }
    };
  }
  return out_t;
}

Tensor Tape::add(Tensor a, Tensor b) {
  check_same_tape(a);
  check_same_tape(b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool same = sa == sb;
  const bool bias = sa.size() == 2 && sb.size() == 1 && sa[1] == sb[0];
  if (!same && !bias)
    throw std::invalid_argument("add shape mismatch: " + shape_str(sa) + " + " + shape_str(sb));

  std::vector<double> out(a.value());
  const auto& B = b.value();
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  } else {
    const std::size_t rows = sa[0], cols = sa[1];
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += B[j];
  }

  const bool rg = a.requires_grad() || b.requires_grad();
  Tensor out_t = make(sa, std::move(out), rg);
  if (rg) {
    node(out_t).backprop = [this, a, b, out_t, same]() {
      const auto& g = node(out_t).grad;
      if (node(a).requires_grad) {
        auto& ga = node(a).grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (node(b).requires_grad) {
        auto& gb = node(b).grad;
        if (same) {
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        } else {
          const std::size_t cols = gb.size();
          const std::size_t rows = g.size() / cols;
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) gb[j] += g[i * cols + j];
        }
      }
    };
  }
  return out_t;
}

Tensor Tape::concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
  std::size_t total = 0;
  bool rg = false;
  for (const Tensor& t : parts) {
    check_same_tape(t);
    total += t.size();
    rg = rg || t.requires_grad();
  }
  std::vector<double> out;
  out.reserve(total);
  for (const Tensor& t : parts) out.insert(out.end(), t.value().begin(), t.value().end());

  Tensor out_t = make({total}, std::move(out), rg);
  if (rg) {
    std::vector<Tensor> held(parts.begin(), parts.end());
    node(out_t).backprop = [this, held = std::move(held), out_t]() {
      const auto& g = node(out_t).grad;
      std::size_t off = 0;
      for (const Tensor& t : held) {
        Node& nt = node(t);
        if (nt.requires_grad)
          for (std::size_t i = 0; i < nt.value.size(); ++i) nt.grad[i] += g[off + i];
        off += nt.value.size();
      }
    };
  }
  return out_t;
}

Tensor Tape::reshape(Tensor x, Shape shape) {
  check_same_tape(x);
  if (numel(shape) != x.size())
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                shape_str(shape));
  const bool rg = x.requires_grad();
  Tensor out_t = make(std::move(shape), x.value(), rg);
  if (rg) {
    node(out_t).backprop = [this, x, out_t]() {
      const auto& g = node(out_t).grad;
      auto& gx = node(x).grad;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    };
  }
  return out_t;
}

Tensor Tape::tanh(Tensor x) {
  check_same_tape(x);
  std::vector<double> out(x.value());
  for (double& v : out) v = std::tanh(v);
  const bool rg = x.requires_grad();
  Tensor out_t = make(x.shape(), std::move(out), rg);
  if (rg) {
    node(out_t).backprop = [this, x, out_t]() {
      const auto& g = node(out_t).grad;
      const auto& y = node(out_t).value;
      auto& gx = node(x).grad;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
    };
  }
  return out_t;
}

Tensor Tape::sigmoid(Tensor x) {
  check_same_tape(x);
  std::vector<double> out(x.value());
  for (double& v : out) v = 1.0 / (1.0 + std::exp(-v));
  const bool rg = x.requires_grad();
  Tensor out_t = make(x.shape(), std::move(out), rg);
  if (rg) {
    node(out_t).backprop = [this, x, out_t]() {
      const auto& g = node(out_t).grad;
      const auto& y = node(out_t).value;
      auto& gx = node(x).grad;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
    };
  }
  return out_t;
}

Tensor Tape::mul(Tensor a, Tensor b) {
  check_same_tape(a);
  check_same_tape(b);
  const bool a_scalar = a.size() == 1;
  const bool b_scalar = b.size() == 1;
  if (!(a.shape() == b.shape() || a_scalar || b_scalar))
    throw std::invalid_argument("mul shape mismatch: " + shape_str(a.shape()) + " * " +
                                shape_str(b.shape()));

  // Normalize so a scalar operand, if any, is `s`.
  const Tensor& big = b_scalar ? a : (a_scalar ? b : a);
  const bool broadcast = (a_scalar || b_scalar) && a.shape() != b.shape();

  std::vector<double> out;
  if (!broadcast) {
    out = a.value();
    const auto& B = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  } else {
    const Tensor& s = b_scalar ? b : a;
    out = big.value();
    const double sv = s.value()[0];
    for (double& v : out) v *= sv;
  }

  const bool rg = a.requires_grad() || b.requires_grad();
  Tensor out_t = make(big.shape(), std::move(out), rg);
  if (rg) {
    node(out_t).backprop = [this, a, b, out_t, broadcast, b_scalar]() {
      const auto& g = node(out_t).grad;
      if (!broadcast) {
        if (node(a).requires_grad) {
          auto& ga = node(a).grad;
          const auto& B = b.value();
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
        }
        if (node(b).requires_grad) {
          auto& gb = node(b).grad;
          const auto& A = a.value();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
        }
      } else {
        const Tensor& s = b_scalar ? b : a;
        const Tensor& v = b_scalar ? a : b;
        if (node(v).requires_grad) {
          auto& gv = node(v).grad;
          const double sv = s.value()[0];
          for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i] * sv;
        }
        if (node(s).requires_grad) {
          auto& gs = node(s).grad;
          const auto& V = v.value();
          double acc = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * V[i];
          gs[0] += acc;
        }
      }
    };
  }
  return out_t;
}

namespace {

void softmax_row(const double* in, double* out, std::size_t n) {
  double mx = in[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(in[i] - mx);
    total += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= total;
}

}  // namespace

Tensor Tape::softmax(Tensor x) {
  check_same_tape(x);
  const Shape& s = x.shape();
  if (s.size() != 1 && s.size() != 2)
    throw std::invalid_argument("softmax expects rank 1 or 2, got " + shape_str(s));
  const std::size_t cols = s.size() == 1 ? s[0] : s[1];
  const std::size_t rows = x.size() / cols;
  if (cols == 0) throw std::invalid_argument("softmax over empty axis");

  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) softmax_row(&x.value()[r * cols], &out[r * cols], cols);

  const bool rg = x.requires_grad();
  Tensor out_t = make(s, std::move(out), rg);
  if (rg) {
    node(out_t).backprop = [this, x, out_t, rows, cols]() {
      const auto& g = node(out_t).grad;
      const auto& y = node(out_t).value;
      auto& gx = node(x).grad;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = &g[r * cols];
        const double* yr = &y[r * cols];
        double dot = 0.0;
        for (std::size_t i = 0; i < cols; ++i) dot += gr[i] * yr[i];
        for (std::size_t i = 0; i < cols; ++i) gx[r * cols + i] += yr[i] * (gr[i] - dot);
      }
    };
  }
  return out_t;
}

Tensor Tape::embedding_lookup(Tensor table, std::span<const int> indices) {
  check_same_tape(table);
  const Shape& s = table.shape();
  if (s.size() != 2)
    throw std::invalid_argument("embedding_lookup table must be rank 2, got " + shape_str(s));
  const std::size_t V = s[0], D = s[1];
  for (int idx : indices)
    if (idx < 0 || static_cast<std::size_t>(idx) >= V)
      throw std::out_of_range("embedding index " + std::to_string(idx) + " outside table of " +
                              std::to_string(V) + " rows");

  std::vector<double> out(indices.size() * D);
  const auto& T = table.value();
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy_n(&T[static_cast<std::size_t>(indices[i]) * D], D, &out[i * D]);

  const bool rg = table.requires_grad();
  Tensor out_t = make({indices.size(), D}, std::move(out), rg);
  if (rg) {
    std::vector<int> idx(indices.begin(), indices.end());
    node(out_t).backprop = [this, table, out_t, idx = std::move(idx), D]() {
      const auto& g = node(out_t).grad;
      auto& gt = node(table).grad;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        double* row = &gt[static_cast<std::size_t>(idx[i]) * D];
        const double* grow = &g[i * D];
        for (std::size_t j = 0; j < D; ++j) row[j] += grow[j];
      }
    };
  }
  return out_t;
}

Tensor Tape::dropout(Tensor x, double rate, Prng& rng, bool training) {
  check_same_tape(x);
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout rate must be in [0,1), got " + std::to_string(rate));
  if (!training || rate == 0.0) {
    std::vector<double> out(x.value());
    const bool rg = x.requires_grad();
    Tensor out_t = make(x.shape(), std::move(out), rg);
    if (rg) {
      node(out_t).backprop = [this, x, out_t]() {
        const auto& g = node(out_t).grad;
        auto& gx = node(x).grad;
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      };
    }
    return out_t;
  }

  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;

  std::vector<double> out(x.value());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];

  const bool rg = x.requires_grad();
  Tensor out_t = make(x.shape(), std::move(out), rg);
  if (rg) {
    node(out_t).backprop = [this, x, out_t, mask = std::move(mask)]() {
      const auto& g = node(out_t).grad;
      auto& gx = node(x).grad;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    };
  }
  return out_t;
}

Tensor Tape::cross_entropy(Tensor logits, int label) {
  check_same_tape(logits);
  if (logits.shape().size() != 1)
    throw std::invalid_argument("cross_entropy expects rank-1 logits, got " +
                                shape_str(logits.shape()));
  const std::size_t K = logits.size();
  if (label < 0 || static_cast<std::size_t>(label) >= K)
    throw std::out_of_range("cross_entropy label " + std::to_string(label) +
                            " outside [0," + std::to_string(K) + ")");

  const auto& l = logits.value();
  double mx = l[0];
  for (double v : l) mx = std::max(mx, v);
  double total = 0.0;
  for (double v : l) total += std::exp(v - mx);
  const double lse = mx + std::log(total);
  const double loss = lse - l[static_cast<std::size_t>(label)];

  const bool rg = logits.requires_grad();
  Tensor out_t = make({1}, {loss}, rg);
  if (rg) {
    node(out_t).backprop = [this, logits, out_t, label, lse]() {
      const double g = node(out_t).grad[0];
      const auto& l = node(logits).value;
      auto& gl = node(logits).grad;
      for (std::size_t i = 0; i < l.size(); ++i) {
        const double p = std::exp(l[i] - lse);
        gl[i] += g * (p - (static_cast<std::size_t>(label) == i ? 1.0 : 0.0));
      }
    };
  }
  return out_t;
}

Tensor Tape::sum(Tensor x) {
  check_same_tape(x);
  double total = 0.0;
  for (double v : x.value()) total += v;
  const bool rg = x.requires_grad();
  Tensor out_t = make({1}, {total}, rg);
  if (rg) {
    node(out_t).backprop = [this, x, out_t]() {
      const double g = node(out_t).grad[0];
      auto& gx = node(x).grad;
      for (double& v : gx) v += g;
    };
  }
  return out_t;
}

Tensor Tape::mean(Tensor x) {
  check_same_tape(x);
  if (x.size() == 0) throw std::invalid_argument("mean of empty tensor");
  double total = 0.0;
  for (double v : x.value()) total += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  const bool rg = x.requires_grad();
  Tensor out_t = make({1}, {total * inv}, rg);
  if (rg) {
    node(out_t).backprop = [this, x, out_t, inv]() {
      const double g = node(out_t).grad[0] * inv;
      auto& gx = node(x).grad;
      for (double& v : gx) v += g;
    };
  }
  return out_t;
}

void Tape::backward(Tensor loss) {
  check_same_tape(loss);
  if (consumed_) throw std::logic_error("backward() called twice on one tape");
  if (loss.size() != 1)
    throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                shape_str(loss.shape()));
  consumed_ = true;
  Node& ln = node(loss);
  if (!ln.requires_grad) return;  // loss independent of any parameter
  ln.grad[0] = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backprop) n.backprop();
  }
}

}  // namespace dialogscore::nn
