#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aqo/rng.hpp"

namespace aqo::numerics {

using Vec = std::vector<double>;

// Thrown when a caller breaks an operation's preconditions (shape mismatch,
// tape reuse, non-finite loss).
class ContractViolation : public std::runtime_error {
public:
  explicit ContractViolation(const std::string& what) : std::runtime_error(what) {}
};

// Dense row-major matrix holding trainable parameters.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec values;  // rows * cols, row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::size_t size() const { return values.size(); }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  bool all_finite() const;
  void fill(double v) { values.assign(values.size(), v); }
};

enum class Activation { Identity, Relu, Sigmoid };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

struct LayerSpec {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation act = Activation::Identity;
};

// Shape description of a dense feed-forward network.
struct MlpSpec {
  std::vector<LayerSpec> layers;

  std::size_t input_dim() const { return layers.front().in; }
  std::size_t output_dim() const { return layers.back().out; }
  void validate() const;
};

// One weight and one bias matrix per layer. Biases are stored 1 x out.
struct MlpParams {
  std::vector<Matrix> weights;
  std::vector<Matrix> biases;

  std::size_t parameter_count() const;
  std::vector<Matrix*> all();              // weights then biases, layer order
  std::vector<const Matrix*> all() const;
};

// Per-parameter gradients mirroring an MlpParams layout.
struct GradientBundle {
  std::vector<Matrix> weights;
  std::vector<Matrix> biases;

  void accumulate(const GradientBundle& other, double scale = 1.0);
  void scale(double s);
  bool all_finite() const;
  std::vector<Matrix*> all();
  std::vector<const Matrix*> all() const;
};

// Activations recorded by forward, consumed by backward.
struct ForwardTape {
  Vec input;
  std::vector<Vec> pre;    // pre-activation per layer
  std::vector<Vec> post;   // post-activation per layer
};

MlpParams make_params(const MlpSpec& spec);
GradientBundle make_gradients(const MlpSpec& spec);

// Uniform init in [-a, a], a = sqrt(6 / (fan_in + fan_out)). Biases stay zero.
void init_xavier(const MlpSpec& spec, MlpParams& params, Rng& rng);

std::pair<Vec, ForwardTape> forward(const MlpSpec& spec, const MlpParams& params,
                                    std::span<const double> input);

// Value-only forward, no tape.
Vec forward_value(const MlpSpec& spec, const MlpParams& params, std::span<const double> input);

// Gradients of a scalar-loss composition w.r.t. every parameter and the input,
// given dLoss/dOutput.
std::pair<GradientBundle, Vec> backward(const MlpSpec& spec, const MlpParams& params,
                                        const ForwardTape& tape,
                                        std::span<const double> output_gradient);

double sigmoid(double x);

// Temperature-scaled softmax with max-subtraction. temperature must be > 0.
Vec softmax(std::span<const double> logits, double temperature = 1.0);

// Central-difference oracle. Perturbs every entry of `params` in place by
// +/- step, re-evaluates loss_fn, and compares against the matching entry of
// `analytic`. Returns max over entries of |analytic - numeric| / max(1e-12, |numeric|).
double finite_difference_check(const std::function<double()>& loss_fn,
                               std::span<Matrix* const> params,
                               std::span<const Matrix* const> analytic, double step);

// SGD with momentum: v <- momentum * v + g; p <- p - lr * v.
class SgdOptimizer {
public:
  SgdOptimizer(double learning_rate = 0.01, double momentum = 0.9);

  double learning_rate() const { return learning_rate_; }
  void set_learning_rate(double lr);

  // Applies one step. Returns false (and leaves params and state untouched)
  // if any gradient entry is non-finite; the message lands in *error.
  bool try_step(std::span<Matrix* const> params, std::span<const Matrix* const> gradients,
                std::string* error = nullptr);

private:
  double learning_rate_;
  double momentum_;
  std::vector<Matrix> velocity_;
};

}  // namespace aqo::numerics
