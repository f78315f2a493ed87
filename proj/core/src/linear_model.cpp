#include "dialogscore/linear_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "dialogscore/metrics.hpp"

namespace dialogscore {

using nlohmann::json;

namespace {
constexpr std::size_t kClasses = 4;
}  // namespace

double linear_objective(std::span<const FeatureVector> x, std::span<const int> labels,
                        std::size_t n_features, double l2, std::span<const double> weights,
                        const std::array<double, 4>& bias, std::vector<double>* grad_w,
                        std::array<double, 4>* grad_b) {
  const std::size_t F = n_features;
  const double inv_n = 1.0 / static_cast<double>(x.size());
  if (grad_w) {
    grad_w->assign(weights.size(), 0.0);
    grad_b->fill(0.0);
  }
  double loss = 0.0;
  for (std::size_t ex = 0; ex < x.size(); ++ex) {
    std::array<double, kClasses> logits = bias;
    for (const auto& [idx, val] : x[ex].entries)
      for (std::size_t c = 0; c < kClasses; ++c) logits[c] += weights[c * F + idx] * val;

    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double total = 0.0;
    for (double v : logits) total += std::exp(v - mx);
    const double lse = mx + std::log(total);
    const std::size_t y = static_cast<std::size_t>(labels[ex] - 1);
    loss += (lse - logits[y]) * inv_n;

    if (grad_w) {
      for (std::size_t c = 0; c < kClasses; ++c) {
        const double p = std::exp(logits[c] - lse);
        const double coef = (p - (y == c ? 1.0 : 0.0)) * inv_n;
        (*grad_b)[c] += coef;
        for (const auto& [idx, val] : x[ex].entries) (*grad_w)[c * F + idx] += coef * val;
      }
    }
  }
  double reg = 0.0;
  for (double v : weights) reg += v * v;
  loss += 0.5 * l2 * reg;
  if (grad_w)
    for (std::size_t i = 0; i < weights.size(); ++i) (*grad_w)[i] += l2 * weights[i];
  return loss;
}

LinearTrainResult train_linear(std::span<const FeatureVector> x, std::span<const int> labels,
                               double l2, const LinearTrainOptions& opts) {
  if (x.empty() || x.size() != labels.size())
    throw std::invalid_argument("train_linear: need equally many vectors and labels");
  if (l2 <= 0.0) throw std::invalid_argument("train_linear: l2 must be positive");

  std::size_t max_index = 0;
  bool any_entry = false;
  const std::uint64_t fp = x.front().space_fingerprint;
  for (const FeatureVector& v : x) {
    if (v.space_fingerprint != fp)
      throw std::invalid_argument("train_linear: vectors from different feature spaces");
    for (const auto& [idx, val] : v.entries) {
      max_index = std::max(max_index, static_cast<std::size_t>(idx));
      any_entry = true;
      (void)val;
    }
  }
  if (!any_entry) throw std::invalid_argument("train_linear: degenerate input with 0 features");
  for (int l : labels)
    if (l < 1 || l > 4) throw std::invalid_argument("train_linear: label outside 1..4");

  const std::size_t F = max_index + 1;
  std::vector<double> w(kClasses * F, 0.0), gw(kClasses * F);
  std::array<double, 4> b{}, gb{};

  LinearTrainResult result;
  double loss = linear_objective(x, labels, F, l2, w, b, &gw, &gb);
  if (!std::isfinite(loss)) throw std::runtime_error("train_linear: non-finite initial loss");
  result.loss_trace.push_back(loss);

  // Steepest descent with a Barzilai-Borwein spectral step, safeguarded by
  // monotone Armijo backtracking. The spectral step adapts to the sharp
  // curvature spread between dense n-gram columns and the sparse binary
  // ones; the n-gram blocks otherwise pin the step size and starve the
  // small-scale coordinates.
  std::vector<double> w_prev, gw_prev, w_try(w.size());
  std::array<double, 4> b_prev{}, gb_prev{}, b_try{};
  double step = 1.0;
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    double ginf = 0.0, gsq = 0.0;
    for (double v : gw) {
      ginf = std::max(ginf, std::abs(v));
      gsq += v * v;
    }
    for (double v : gb) {
      ginf = std::max(ginf, std::abs(v));
      gsq += v * v;
    }
    if (ginf < opts.grad_tol) {
      result.converged = true;
      break;
    }

    if (iter > 0) {
      //  BB1: (s.s)/(s.y) with s = theta - theta_prev, y = g - g_prev
      double ss = 0.0, sy = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double s = w[i] - w_prev[i];
        ss += s * s;
        sy += s * (gw[i] - gw_prev[i]);
      }
      for (std::size_t c = 0; c < kClasses; ++c) {
        const double s = b[c] - b_prev[c];
        ss += s * s;
        sy += s * (gb[c] - gb_prev[c]);
      }
      if (sy > 0.0 && ss > 0.0) step = std::clamp(ss / sy, 1e-10, 1e8);
    }

    w_prev = w;
    b_prev = b;
    gw_prev = gw;
    gb_prev = gb;

    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving) {
      for (std::size_t i = 0; i < w.size(); ++i) w_try[i] = w[i] - step * gw[i];
      for (std::size_t c = 0; c < kClasses; ++c) b_try[c] = b[c] - step * gb[c];
      const double trial = linear_objective(x, labels, F, l2, w_try, b_try);
      if (std::isfinite(trial) && trial <= loss - 1e-4 * step * gsq) {
        w.swap(w_try);
        b = b_try;
        loss = trial;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      result.converged = true;  // no descent possible at double precision
      break;
    }
    result.loss_trace.push_back(loss);
    loss = linear_objective(x, labels, F, l2, w, b, &gw, &gb);
    if (!std::isfinite(loss)) throw std::runtime_error("train_linear: non-finite loss");
  }

  result.model.n_features = F;
  result.model.weights = std::move(w);
  result.model.bias = b;
  result.model.space_fingerprint = fp;
  return result;
}

Posterior predict_proba(const LinearModel& model, const FeatureVector& x) {
  if (x.space_fingerprint != model.space_fingerprint)
    throw std::invalid_argument("predict_proba: feature-space fingerprint mismatch");
  std::array<double, kClasses> logits = model.bias;
  for (const auto& [idx, val] : x.entries) {
    if (idx >= model.n_features)
      throw std::out_of_range("predict_proba: feature index " + std::to_string(idx) +
                              " outside model with " + std::to_string(model.n_features) +
                              " columns");
    for (std::size_t c = 0; c < kClasses; ++c)
      logits[c] += model.weights[c * model.n_features + idx] * val;
  }
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double total = 0.0;
  Posterior p{};
  for (std::size_t c = 0; c < kClasses; ++c) {
    p[c] = std::exp(logits[c] - mx);
    total += p[c];
  }
  for (double& v : p) v /= total;
  return p;
}

int predict_label(const LinearModel& model, const FeatureVector& x) {
  return posterior_argmax_label(predict_proba(model, x));
}

GridSearchResult grid_search(std::span<const FeatureVector> train_x, std::span<const int> train_y,
                             std::span<const FeatureVector> dev_x, std::span<const int> dev_y,
                             const GridSpec& grid, const LinearTrainOptions& opts) {
  if (grid.l2_values.empty()) throw std::invalid_argument("grid_search: empty grid");
  if (dev_x.empty()) throw std::invalid_argument("grid_search: empty dev set");

  std::vector<double> candidates = grid.l2_values;
  std::sort(candidates.begin(), candidates.end());

  GridSearchResult result;
  bool have_best = false;
  double best_score = 0.0;
  for (double l2 : candidates) {
    try {
      LinearTrainResult tr = train_linear(train_x, train_y, l2, opts);
      std::vector<int> pred;
      pred.reserve(dev_x.size());
      for (const FeatureVector& v : dev_x) pred.push_back(predict_label(tr.model, v));
      const double score = qwk(pred, dev_y);
      result.dev_scores.emplace_back(l2, score);
      if (!have_best || score > best_score) {
        have_best = true;
        best_score = score;
        result.best_l2 = l2;
        result.model = std::move(tr.model);
      }
    } catch (const std::exception&) {
      result.dev_scores.emplace_back(l2, std::nan(""));
    }
  }
  if (!have_best) throw std::runtime_error("grid_search: every candidate failed to train");
  return result;
}

namespace {

constexpr char kB64Chars[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const unsigned char* data, std::size_t len) {
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (std::size_t i = 0; i < len; i += 3) {
    unsigned int v = static_cast<unsigned int>(data[i]) << 16;
    if (i + 1 < len) v |= static_cast<unsigned int>(data[i + 1]) << 8;
    if (i + 2 < len) v |= data[i + 2];
    out += kB64Chars[(v >> 18) & 63];
    out += kB64Chars[(v >> 12) & 63];
    out += i + 1 < len ? kB64Chars[(v >> 6) & 63] : '=';
    out += i + 2 < len ? kB64Chars[v & 63] : '=';
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  std::array<int, 256> lut;
  lut.fill(-1);
  for (int i = 0; i < 64; ++i) lut[static_cast<unsigned char>(kB64Chars[i])] = i;
  std::vector<unsigned char> out;
  unsigned int buffer = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    const int v = lut[static_cast<unsigned char>(c)];
    if (v < 0) throw std::invalid_argument("invalid base64 payload");
    buffer = (buffer << 6) | static_cast<unsigned int>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<unsigned char>((buffer >> bits) & 0xff));
    }
  }
  return out;
}

}  // namespace

void LinearModel::save_json(const std::filesystem::path& path) const {
  json j;
  j["classes"] = 4;
  j["n_features"] = n_features;
  j["bias"] = bias;
  j["space_fingerprint"] = space_fingerprint;
  j["weights_b64"] =
      base64_encode(reinterpret_cast<const unsigned char*>(weights.data()),
                    weights.size() * sizeof(double));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file: " + path.string());
  out << j.dump(2) << "\n";
}

LinearModel LinearModel::load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file: " + path.string());
  json j = json::parse(in);
  LinearModel m;
  m.n_features = j.at("n_features").get<std::size_t>();
  m.bias = j.at("bias").get<std::array<double, 4>>();
  m.space_fingerprint = j.at("space_fingerprint").get<std::uint64_t>();
  const auto bytes = base64_decode(j.at("weights_b64").get<std::string>());
  if (bytes.size() != 4 * m.n_features * sizeof(double))
    throw std::runtime_error("model weight payload has wrong size");
  m.weights.resize(4 * m.n_features);
  std::memcpy(m.weights.data(), bytes.data(), bytes.size());
  return m;
}

}  // namespace dialogscore
