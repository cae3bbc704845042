#include "aqo/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace aqo::numerics {

bool Matrix::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "identity") return Activation::Identity;
  throw ContractViolation("unknown activation: " + s);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Identity: return "identity";
  }
  return "identity";
}

void MlpSpec::validate() const {
  if (layers.empty()) throw ContractViolation("MlpSpec needs at least one layer");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].in == 0 || layers[i].out == 0)
      throw ContractViolation("MlpSpec layer dimensions must be positive");
    if (i + 1 < layers.size() && layers[i].out != layers[i + 1].in)
      throw ContractViolation("MlpSpec adjacent layer sizes are incompatible");
  }
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += w.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

std::vector<Matrix*> MlpParams::all() {
  std::vector<Matrix*> out;
  for (auto& w : weights) out.push_back(&w);
  for (auto& b : biases) out.push_back(&b);
  return out;
}

std::vector<const Matrix*> MlpParams::all() const {
  std::vector<const Matrix*> out;
  for (const auto& w : weights) out.push_back(&w);
  for (const auto& b : biases) out.push_back(&b);
  return out;
}

void GradientBundle::accumulate(const GradientBundle& other, double scale) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (std::size_t i = 0; i < weights[l].values.size(); ++i)
      weights[l].values[i] += scale * other.weights[l].values[i];
    for (std::size_t i = 0; i < biases[l].values.size(); ++i)
      biases[l].values[i] += scale * other.biases[l].values[i];
  }
}

void GradientBundle::scale(double s) {
  for (auto& w : weights)
    for (auto& v : w.values) v *= s;
  for (auto& b : biases)
    for (auto& v : b.values) v *= s;
}

bool GradientBundle::all_finite() const {
  for (const auto& w : weights)
    if (!w.all_finite()) return false;
  for (const auto& b : biases)
    if (!b.all_finite()) return false;
  return true;
}

std::vector<Matrix*> GradientBundle::all() {
  std::vector<Matrix*> out;
  for (auto& w : weights) out.push_back(&w);
  for (auto& b : biases) out.push_back(&b);
  return out;
}

std::vector<const Matrix*> GradientBundle::all() const {
  std::vector<const Matrix*> out;
  for (const auto& w : weights) out.push_back(&w);
  for (const auto& b : biases) out.push_back(&b);
  return out;
}

MlpParams make_params(const MlpSpec& spec) {
  spec.validate();
  MlpParams p;
  for (const auto& l : spec.layers) {
    p.weights.emplace_back(l.out, l.in);
    p.biases.emplace_back(1, l.out);
  }
  return p;
}

GradientBundle make_gradients(const MlpSpec& spec) {
  spec.validate();
  GradientBundle g;
  for (const auto& l : spec.layers) {
    g.weights.emplace_back(l.out, l.in);
    g.biases.emplace_back(1, l.out);
  }
  return g;
}

void init_xavier(const MlpSpec& spec, MlpParams& params, Rng& rng) {
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const double a =
        std::sqrt(6.0 / static_cast<double>(spec.layers[l].in + spec.layers[l].out));
    for (auto& v : params.weights[l].values) v = rng.uniform(-a, a);
    params.biases[l].fill(0.0);
  }
}

static double apply_activation(Activation act, double x) {
  switch (act) {
    case Activation::Identity: return x;
    case Activation::Relu: return x > 0.0 ? x : 0.0;
    case Activation::Sigmoid: return sigmoid(x);
  }
  return x;
}

static double activation_grad(Activation act, double pre, double post) {
  switch (act) {
    case Activation::Identity: return 1.0;
    case Activation::Relu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::Sigmoid: return post * (1.0 - post);
  }
  return 1.0;
}

std::pair<Vec, ForwardTape> forward(const MlpSpec& spec, const MlpParams& params,
                                    std::span<const double> input) {
  spec.validate();
  if (input.size() != spec.input_dim())
    throw ContractViolation("forward: input length " + std::to_string(input.size()) +
                            " does not match first layer input size " +
                            std::to_string(spec.input_dim()));
  if (params.weights.size() != spec.layers.size())
    throw ContractViolation("forward: params do not match spec");

  ForwardTape tape;
  tape.input.assign(input.begin(), input.end());
  Vec cur = tape.input;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto& layer = spec.layers[l];
    const Matrix& W = params.weights[l];
    const Matrix& b = params.biases[l];
    if (W.rows != layer.out || W.cols != layer.in || b.cols != layer.out)
      throw ContractViolation("forward: parameter shapes do not match spec");
    Vec pre(layer.out, 0.0);
    for (std::size_t r = 0; r < layer.out; ++r) {
      double acc = b.values[r];
      const double* wrow = &W.values[r * layer.in];
      for (std::size_t c = 0; c < layer.in; ++c) acc += wrow[c] * cur[c];
      pre[r] = acc;
    }
    Vec post(layer.out);
    for (std::size_t r = 0; r < layer.out; ++r) post[r] = apply_activation(layer.act, pre[r]);
    tape.pre.push_back(pre);
    tape.post.push_back(post);
    cur = std::move(post);
  }
  return {tape.post.back(), std::move(tape)};
}

Vec forward_value(const MlpSpec& spec, const MlpParams& params, std::span<const double> input) {
  return forward(spec, params, input).first;
}

std::pair<GradientBundle, Vec> backward(const MlpSpec& spec, const MlpParams& params,
                                        const ForwardTape& tape,
                                        std::span<const double> output_gradient) {
  if (tape.pre.size() != spec.layers.size() || tape.input.size() != spec.input_dim())
    throw ContractViolation("backward: tape does not match spec");
  if (output_gradient.size() != spec.output_dim())
    throw ContractViolation("backward: output gradient length mismatch");

  GradientBundle grads = make_gradients(spec);
  Vec delta(output_gradient.begin(), output_gradient.end());

  for (std::size_t li = spec.layers.size(); li-- > 0;) {
    const auto& layer = spec.layers[li];
    // d loss / d pre-activation
    for (std::size_t r = 0; r < layer.out; ++r)
      delta[r] *= activation_grad(layer.act, tape.pre[li][r], tape.post[li][r]);

    const Vec& layer_input = li == 0 ? tape.input : tape.post[li - 1];
    Matrix& gW = grads.weights[li];
    Matrix& gb = grads.biases[li];
    for (std::size_t r = 0; r < layer.out; ++r) {
      gb.values[r] = delta[r];
      double* grow = &gW.values[r * layer.in];
      for (std::size_t c = 0; c < layer.in; ++c) grow[c] = delta[r] * layer_input[c];
    }

    Vec prev(layer.in, 0.0);
    const Matrix& W = params.weights[li];
    for (std::size_t r = 0; r < layer.out; ++r) {
      const double* wrow = &W.values[r * layer.in];
      for (std::size_t c = 0; c < layer.in; ++c) prev[c] += wrow[c] * delta[r];
    }
    delta = std::move(prev);
  }
  return {std::move(grads), std::move(delta)};
}

double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vec softmax(std::span<const double> logits, double temperature) {
  if (logits.empty()) throw ContractViolation("softmax: empty logit vector");
  if (!(temperature > 0.0)) throw ContractViolation("softmax: temperature must be > 0");
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  Vec out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - mx) / temperature);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

double finite_difference_check(const std::function<double()>& loss_fn,
                               std::span<Matrix* const> params,
                               std::span<const Matrix* const> analytic, double step) {
  if (params.size() != analytic.size())
    throw ContractViolation("finite_difference_check: param/gradient count mismatch");
  double max_rel = 0.0;
  for (std::size_t m = 0; m < params.size(); ++m) {
    Matrix* p = params[m];
    const Matrix* g = analytic[m];
    if (!p->same_shape(*g))
      throw ContractViolation("finite_difference_check: gradient shape mismatch");
    for (std::size_t i = 0; i < p->values.size(); ++i) {
      const double saved = p->values[i];
      p->values[i] = saved + step;
      const double up = loss_fn();
      p->values[i] = saved - step;
      const double down = loss_fn();
      p->values[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw ContractViolation("finite_difference_check: non-finite loss");
      const double numeric = (up - down) / (2.0 * step);
      const double rel =
          std::abs(g->values[i] - numeric) / std::max(1e-12, std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

SgdOptimizer::SgdOptimizer(double learning_rate, double momentum)
    : learning_rate_(learning_rate), momentum_(momentum) {
  if (!(learning_rate >= 0.0)) throw ContractViolation("SgdOptimizer: learning_rate must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ContractViolation("SgdOptimizer: momentum must be in [0, 1)");
}

void SgdOptimizer::set_learning_rate(double lr) {
  if (!(lr >= 0.0)) throw ContractViolation("SgdOptimizer: learning_rate must be >= 0");
  learning_rate_ = lr;
}

bool SgdOptimizer::try_step(std::span<Matrix* const> params,
                            std::span<const Matrix* const> gradients, std::string* error) {
  if (params.size() != gradients.size())
    throw ContractViolation("SgdOptimizer: param/gradient count mismatch");
  for (std::size_t m = 0; m < params.size(); ++m) {
    if (!params[m]->same_shape(*gradients[m]))
      throw ContractViolation("SgdOptimizer: gradient shape mismatch");
    if (!gradients[m]->all_finite()) {
      if (error) *error = "non-finite gradient entries; step skipped";
      return false;
    }
  }
  if (velocity_.empty()) {
    for (const auto* p : params) velocity_.emplace_back(p->rows, p->cols);
  } else if (velocity_.size() != params.size()) {
    throw ContractViolation("SgdOptimizer: parameter set changed between steps");
  }
  for (std::size_t m = 0; m < params.size(); ++m) {
    Matrix& v = velocity_[m];
    Matrix& p = *params[m];
    const Matrix& g = *gradients[m];
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      v.values[i] = momentum_ * v.values[i] + g.values[i];
      p.values[i] -= learning_rate_ * v.values[i];
    }
  }
  return true;
}

}  // namespace aqo::numerics
