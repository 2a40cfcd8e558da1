#pragma once

// Minimal dense feed-forward classifier with exact hand-written gradients
// and a finite-difference oracle. Everything is 64-bit and pure: all
// operations are functions of their inputs with no shared mutable state.

#include <cstddef>
#include <string>
#include <vector>

#include "leeds/rng.hpp"

namespace leeds::netcore {

enum class Activation { relu, tanh };

Activation activation_from_string(const std::string &s);
std::string to_string(Activation a);

// Row-major dense matrix.
struct Matrix {
  std::vector<double> data;
  int rows = 0;
  int cols = 0;

  Matrix() = default;
  Matrix(int r, int c) : data(static_cast<std::size_t>(r) * c, 0.0), rows(r), cols(c) {}

  double &at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

struct NetConfig {
  int input_dim = 0;
  std::vector<int> hidden_dims;
  int n_classes = 0;
  Activation activation = Activation::relu;

  // [input_dim, hidden..., n_classes]
  std::vector<int> layer_dims() const;
  int n_layers() const { return static_cast<int>(hidden_dims.size()) + 1; }
  long param_count() const;
  void validate() const; // throws std::invalid_argument
};

// Flat parameter vector. Layer l (fan_in a, fan_out b) occupies a*b weight
// entries (row-major, weight[i][j] maps input i to output j) followed by b
// biases.
struct ParamSet {
  std::vector<double> values;
  std::vector<int> shape; // layer_dims of the owning NetConfig

  bool same_shape(const ParamSet &other) const { return shape == other.shape; }
};

struct LabeledBatch {
  Matrix inputs;
  std::vector<int> labels;

  int size() const { return inputs.rows; }
};

// Glorot-uniform weights, zero biases.
ParamSet init_params(const NetConfig &cfg, Rng &rng);
ParamSet zeros_like(const NetConfig &cfg);

Matrix forward(const ParamSet &params, const NetConfig &cfg, const Matrix &inputs);

// Mean softmax cross-entropy over rows, via log-sum-exp with row-max
// subtraction. Throws std::invalid_argument on empty batch or bad labels.
double ce_loss(const Matrix &logits, const std::vector<int> &labels);

// Fraction of rows whose argmax logit equals the label.
double accuracy(const Matrix &logits, const std::vector<int> &labels);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Exact gradient of ce_loss(forward(params, inputs), labels) wrt params.
LossGrad loss_and_grad(const ParamSet &params, const NetConfig &cfg, const LabeledBatch &batch);

// params - lr * grad, elementwise. Throws std::runtime_error on non-finite grad.
ParamSet sgd_step(const ParamSet &params, const std::vector<double> &grad, double lr);

// Central-difference gradient estimate, eps in (0, 1e-2].
std::vector<double> finite_diff_grad(const ParamSet &params, const NetConfig &cfg,
                                     const LabeledBatch &batch, double eps);

} // namespace leeds::netcore
