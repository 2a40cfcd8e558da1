#include "leeds/netcore.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace leeds::netcore {

Activation activation_from_string(const std::string &s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation: " + s);
}

std::string to_string(Activation a) {
  return a == Activation::relu ? "relu" : "tanh";
}

std::vector<int> NetConfig::layer_dims() const {
  std::vector<int> dims;
  dims.reserve(hidden_dims.size() + 2);
  dims.push_back(input_dim);
  for (int h : hidden_dims) dims.push_back(h);
  dims.push_back(n_classes);
  return dims;
}

long NetConfig::param_count() const {
  const auto dims = layer_dims();
  long n = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l)
    n += static_cast<long>(dims[l] + 1) * dims[l + 1];
  return n;
}

void NetConfig::validate() const {
  if (input_dim < 1) throw std::invalid_argument("net.input_dim must be >= 1");
  for (int h : hidden_dims)
    if (h < 1) throw std::invalid_argument("net.hidden_dims entries must be >= 1");
  if (n_classes < 2) throw std::invalid_argument("net.n_classes must be >= 2");
}

ParamSet zeros_like(const NetConfig &cfg) {
  cfg.validate();
  ParamSet p;
  p.shape = cfg.layer_dims();
  p.values.assign(static_cast<std::size_t>(cfg.param_count()), 0.0);
  return p;
}

ParamSet init_params(const NetConfig &cfg, Rng &rng) {
  ParamSet p = zeros_like(cfg);
  const auto dims = p.shape;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l], fan_out = dims[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (int i = 0; i < fan_in * fan_out; ++i) p.values[off + i] = rng.uniform(-bound, bound);
    off += static_cast<std::size_t>(fan_in) * fan_out;
    off += fan_out; // biases stay zero
  }
  return p;
}

namespace {

void check_shapes(const ParamSet &params, const NetConfig &cfg, const Matrix &inputs) {
  if (inputs.cols != cfg.input_dim)
    throw std::invalid_argument("forward: input column count does not match net.input_dim");
  if (params.shape != cfg.layer_dims() ||
      params.values.size() != static_cast<std::size_t>(cfg.param_count()))
    throw std::invalid_argument("forward: ParamSet shape does not match NetConfig");
}

double act(double z, Activation a) {
  return a == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

// derivative expressed through the activation output
double act_deriv(double out, Activation a) {
  return a == Activation::relu ? (out > 0.0 ? 1.0 : 0.0) : 1.0 - out * out;
}

// z = x W + b for one layer starting at params.values[off]
Matrix affine(const Matrix &x, const std::vector<double> &vals, std::size_t off,
              int fan_in, int fan_out) {
  Matrix z(x.rows, fan_out);
  const double *w = vals.data() + off;
  const double *b = w + static_cast<std::size_t>(fan_in) * fan_out;
  for (int r = 0; r < x.rows; ++r) {
    double *zr = z.data.data() + static_cast<std::size_t>(r) * fan_out;
    const double *xr = x.data.data() + static_cast<std::size_t>(r) * fan_in;
    for (int j = 0; j < fan_out; ++j) zr[j] = b[j];
    for (int i = 0; i < fan_in; ++i) {
      const double xi = xr[i];
      if (xi == 0.0) continue;
      const double *wi = w + static_cast<std::size_t>(i) * fan_out;
      for (int j = 0; j < fan_out; ++j) zr[j] += xi * wi[j];
    }
  }
  return z;
}

} // namespace

Matrix forward(const ParamSet &params, const NetConfig &cfg, const Matrix &inputs) {
  check_shapes(params, cfg, inputs);
  const auto dims = params.shape;
  Matrix a = inputs;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Matrix z = affine(a, params.values, off, dims[l], dims[l + 1]);
    off += static_cast<std::size_t>(dims[l] + 1) * dims[l + 1];
    const bool last = (l + 2 == dims.size());
    if (!last)
      for (auto &v : z.data) v = act(v, cfg.activation);
    a = std::move(z);
  }
  return a;
}

double ce_loss(const Matrix &logits, const std::vector<int> &labels) {
  if (logits.rows == 0) throw std::invalid_argument("ce_loss: empty batch");
  if (static_cast<int>(labels.size()) != logits.rows)
    throw std::invalid_argument("ce_loss: label count does not match logit rows");
  double total = 0.0;
  for (int r = 0; r < logits.rows; ++r) {
    const int y = labels[r];
    if (y < 0 || y >= logits.cols) throw std::invalid_argument("ce_loss: label out of range");
    const double *row = logits.data.data() + static_cast<std::size_t>(r) * logits.cols;
    double mx = row[0];
    for (int k = 1; k < logits.cols; ++k) mx = std::max(mx, row[k]);
    double sum = 0.0;
    for (int k = 0; k < logits.cols; ++k) sum += std::exp(row[k] - mx);
    total += (mx + std::log(sum)) - row[y]; // log-sum-exp minus true logit
  }
  return total / logits.rows;
}

double accuracy(const Matrix &logits, const std::vector<int> &labels) {
  if (logits.rows == 0) throw std::invalid_argument("accuracy: empty batch");
  int correct = 0;
  for (int r = 0; r < logits.rows; ++r) {
    const double *row = logits.data.data() + static_cast<std::size_t>(r) * logits.cols;
    int best = 0;
    for (int k = 1; k < logits.cols; ++k)
      if (row[k] > row[best]) best = k;
    if (best == labels[r]) ++correct;
  }
  return static_cast<double>(correct) / logits.rows;
}

LossGrad loss_and_grad(const ParamSet &params, const NetConfig &cfg, const LabeledBatch &batch) {
  if (batch.size() == 0) throw std::invalid_argument("loss_and_grad: empty batch");
  check_shapes(params, cfg, batch.inputs);
  const auto dims = params.shape;
  const int L = static_cast<int>(dims.size()) - 1;

  // forward, keeping post-activation outputs per layer
  std::vector<Matrix> acts(L + 1);
  acts[0] = batch.inputs;
  std::vector<std::size_t> offs(L);
  std::size_t off = 0;
  for (int l = 0; l < L; ++l) {
    offs[l] = off;
    Matrix z = affine(acts[l], params.values, off, dims[l], dims[l + 1]);
    off += static_cast<std::size_t>(dims[l] + 1) * dims[l + 1];
    if (l + 1 < L)
      for (auto &v : z.data) v = act(v, cfg.activation);
    for (double v : z.data)
      if (!std::isfinite(v))
        throw std::runtime_error("loss_and_grad: non-finite value at layer " + std::to_string(l));
    acts[l + 1] = std::move(z);
  }

  const Matrix &logits = acts[L];
  const double loss = ce_loss(logits, batch.labels);
  const int n = batch.size();

  // delta = (softmax - onehot) / n at the output
  Matrix delta(n, dims[L]);
  for (int r = 0; r < n; ++r) {
    const double *row = logits.data.data() + static_cast<std::size_t>(r) * dims[L];
    double mx = row[0];
    for (int k = 1; k < dims[L]; ++k) mx = std::max(mx, row[k]);
    double sum = 0.0;
    for (int k = 0; k < dims[L]; ++k) sum += std::exp(row[k] - mx);
    double *dr = delta.data.data() + static_cast<std::size_t>(r) * dims[L];
    for (int k = 0; k < dims[L]; ++k) dr[k] = std::exp(row[k] - mx) / sum / n;
    dr[batch.labels[r]] -= 1.0 / n;
  }

  LossGrad out;
  out.loss = loss;
  out.grad.assign(params.values.size(), 0.0);

  for (int l = L - 1; l >= 0; --l) {
    const int fan_in = dims[l], fan_out = dims[l + 1];
    double *gw = out.grad.data() + offs[l];
    double *gb = gw + static_cast<std::size_t>(fan_in) * fan_out;
    const Matrix &a = acts[l];
    for (int r = 0; r < n; ++r) {
      const double *ar = a.data.data() + static_cast<std::size_t>(r) * fan_in;
      const double *dr = delta.data.data() + static_cast<std::size_t>(r) * fan_out;
      for (int j = 0; j < fan_out; ++j) gb[j] += dr[j];
      for (int i = 0; i < fan_in; ++i) {
        const double ai = ar[i];
        if (ai == 0.0) continue;
        double *gwi = gw + static_cast<std::size_t>(i) * fan_out;
        for (int j = 0; j < fan_out; ++j) gwi[j] += ai * dr[j];
      }
    }
    if (l > 0) {
      // propagate: delta_prev = (delta W^T) * act'(a_l)
      const double *w = params.values.data() + offs[l];
      Matrix prev(n, fan_in);
      for (int r = 0; r < n; ++r) {
        const double *dr = delta.data.data() + static_cast<std::size_t>(r) * fan_out;
        const double *ar = a.data.data() + static_cast<std::size_t>(r) * fan_in;
        double *pr = prev.data.data() + static_cast<std::size_t>(r) * fan_in;
        for (int i = 0; i < fan_in; ++i) {
          double s = 0.0;
          const double *wi = w + static_cast<std::size_t>(i) * fan_out;
          for (int j = 0; j < fan_out; ++j) s += wi[j] * dr[j];
          pr[i] = s * act_deriv(ar[i], cfg.activation);
        }
      }
      delta = std::move(prev);
    }
  }
  return out;
}

ParamSet sgd_step(const ParamSet &params, const std::vector<double> &grad, double lr) {
  if (grad.size() != params.values.size())
    throw std::invalid_argument("sgd_step: gradient size does not match params");
  ParamSet out = params;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) throw std::runtime_error("sgd_step: non-finite gradient entry");
    out.values[i] -= lr * grad[i];
  }
  return out;
}

std::vector<double> finite_diff_grad(const ParamSet &params, const NetConfig &cfg,
                                     const LabeledBatch &batch, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2))
    throw std::invalid_argument("finite_diff_grad: eps must be in (0, 1e-2]");
  std::vector<double> g(params.values.size());
  ParamSet p = params;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double orig = p.values[i];
    p.values[i] = orig + eps;
    const double lp = ce_loss(forward(p, cfg, batch.inputs), batch.labels);
    p.values[i] = orig - eps;
    const double lm = ce_loss(forward(p, cfg, batch.inputs), batch.labels);
    p.values[i] = orig;
    g[i] = (lp - lm) / (2.0 * eps);
  }
  return g;
}

} // namespace leeds::netcore
