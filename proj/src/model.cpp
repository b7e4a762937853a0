#include "fedloc/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fedloc/rng.hpp"

namespace fedloc {

const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

const char* to_string(Head h) {
  switch (h) {
    case Head::linear: return "linear";
    case Head::sigmoid: return "sigmoid";
    case Head::softmax: return "softmax";
  }
  return "?";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

Head parse_head(const std::string& s) {
  if (s == "linear") return Head::linear;
  if (s == "sigmoid") return Head::sigmoid;
  if (s == "softmax") return Head::softmax;
  throw std::invalid_argument("unknown head '" + s + "'");
}

void MlpArchitecture::validate() const {
  if (layer_widths.size() < 3)
    throw std::invalid_argument("architecture needs input, >=1 hidden and output widths");
  for (std::size_t w : layer_widths)
    if (w == 0) throw std::invalid_argument("architecture has a zero-width layer");
  if (output_head == Head::softmax && output_width() < 2)
    throw std::invalid_argument("softmax head needs output width >= 2");
}

std::size_t MlpArchitecture::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l)
    n += layer_widths[l] * layer_widths[l + 1] + layer_widths[l + 1];
  return n;
}

std::size_t MlpArchitecture::weight_offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l)
    off += layer_widths[l] * layer_widths[l + 1] + layer_widths[l + 1];
  return off;
}

std::size_t MlpArchitecture::bias_offset(std::size_t layer) const {
  return weight_offset(layer) + layer_widths[layer] * layer_widths[layer + 1];
}

std::size_t MlpArchitecture::layer_end(std::size_t layer) const {
  return bias_offset(layer) + layer_widths[layer + 1];
}

std::string MlpArchitecture::fingerprint() const {
  std::string s;
  for (std::size_t i = 0; i < layer_widths.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(layer_widths[i]);
  }
  return s + "/" + to_string(hidden_activation) + "/" + to_string(output_head);
}

void Batch::validate(const MlpArchitecture& arch) const {
  if (features.rows != targets.rows)
    throw std::invalid_argument("batch: feature and target row counts differ");
  if (features.cols != arch.input_width())
    throw std::invalid_argument("batch: feature width " + std::to_string(features.cols) +
                                " != input width " + std::to_string(arch.input_width()));
  if (targets.cols != arch.output_width())
    throw std::invalid_argument("batch: target width != output width");
}

void TrainingHyperparams::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("learning_rate must be finite and >= 0");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (local_epochs == 0) throw std::invalid_argument("local_epochs must be positive");
  if (!(loss.positive_weight > 0.0) || !std::isfinite(loss.positive_weight))
    throw std::invalid_argument("positive_weight must be finite and > 0");
}

namespace {

void check_params(std::span<const double> params, const MlpArchitecture& arch) {
  if (params.size() != arch.param_count()) {
    throw std::invalid_argument("parameter vector has " + std::to_string(params.size()) +
                                " values, architecture " + arch.fingerprint() +
                                " needs " + std::to_string(arch.param_count()));
  }
}

// Per-sample scratch buffers: pre[l] and post[l] hold layer l's
// pre-activation and output; post[-1] is the input (kept in `input`).
struct Workspace {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> post;
  std::vector<double> delta;
  std::vector<double> delta_prev;

  explicit Workspace(const MlpArchitecture& arch) {
    for (std::size_t l = 0; l < arch.depth(); ++l) {
      pre.emplace_back(arch.layer_widths[l + 1]);
      post.emplace_back(arch.layer_widths[l + 1]);
    }
    std::size_t widest = *std::max_element(arch.layer_widths.begin(), arch.layer_widths.end());
    delta.resize(widest);
    delta_prev.resize(widest);
  }
};

double sigmoid(double z) {
  const double p = 1.0 / (1.0 + std::exp(-z));
  return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

void forward_sample(std::span<const double> params, const MlpArchitecture& arch,
                    std::span<const double> x, Workspace& ws) {
  std::span<const double> in = x;
  const std::size_t depth = arch.depth();
  for (std::size_t l = 0; l < depth; ++l) {
    const std::size_t n_in = arch.layer_widths[l];
    const std::size_t n_out = arch.layer_widths[l + 1];
    const double* w = params.data() + arch.weight_offset(l);
    const double* b = params.data() + arch.bias_offset(l);
    double* z = ws.pre[l].data();
    std::copy(b, b + n_out, z);
    for (std::size_t i = 0; i < n_in; ++i) {
      const double a = in[i];
      if (a == 0.0) continue;  // absent WAPs and inactive ReLUs
      const double* wi = w + i * n_out;
      for (std::size_t j = 0; j < n_out; ++j) z[j] += a * wi[j];
    }
    double* out = ws.post[l].data();
    if (l + 1 < depth) {
      if (arch.hidden_activation == Activation::relu) {
        for (std::size_t j = 0; j < n_out; ++j) out[j] = z[j] > 0.0 ? z[j] : 0.0;
      } else {
        for (std::size_t j = 0; j < n_out; ++j) out[j] = std::tanh(z[j]);
      }
    } else {
      switch (arch.output_head) {
        case Head::linear:
          std::copy(z, z + n_out, out);
          break;
        case Head::sigmoid:
          for (std::size_t j = 0; j < n_out; ++j) out[j] = sigmoid(z[j]);
          break;
        case Head::softmax: {
          const double m = *std::max_element(z, z + n_out);
          double total = 0.0;
          for (std::size_t j = 0; j < n_out; ++j) {
            out[j] = std::exp(z[j] - m);
            total += out[j];
          }
          for (std::size_t j = 0; j < n_out; ++j) out[j] /= total;
          break;
        }
      }
    }
    in = ws.post[l];
  }
}

// Loss of one sample (unnormalized: summed over outputs for linear/sigmoid).
double sample_loss(std::span<const double> y, std::span<const double> t, Head head,
                   const LossOptions& opts) {
  double s = 0.0;
  switch (head) {
    case Head::linear:
      for (std::size_t k = 0; k < y.size(); ++k) s += (y[k] - t[k]) * (y[k] - t[k]);
      break;
    case Head::sigmoid:
      for (std::size_t k = 0; k < y.size(); ++k) {
        const double p = std::clamp(y[k], kProbabilityClamp, 1.0 - kProbabilityClamp);
        s -= opts.positive_weight * t[k] * std::log(p) + (1.0 - t[k]) * std::log(1.0 - p);
      }
      break;
    case Head::softmax:
      for (std::size_t k = 0; k < y.size(); ++k) {
        if (t[k] == 0.0) continue;
        s -= t[k] * std::log(std::max(y[k], kProbabilityClamp));
      }
      break;
  }
  return s;
}

// Divisor turning summed sample losses into the mean loss.
double loss_denominator(std::size_t batch, std::size_t width, Head head) {
  return head == Head::softmax ? static_cast<double>(batch)
                               : static_cast<double>(batch) * static_cast<double>(width);
}

// Adds d(sample_loss / denom)/d(params) into grad. Expects ws to hold the
// forward pass of x.
void backward_sample(std::span<const double> params, const MlpArchitecture& arch,
                     std::span<const double> x, std::span<const double> t,
                     double denom, const LossOptions& opts, Workspace& ws,
                     std::span<double> grad) {
  const std::size_t depth = arch.depth();
  const std::size_t n_out = arch.output_width();
  const double* y = ws.post[depth - 1].data();
  double* delta = ws.delta.data();
  switch (arch.output_head) {
    case Head::linear:
      for (std::size_t k = 0; k < n_out; ++k) delta[k] = 2.0 * (y[k] - t[k]) / denom;
      break;
    case Head::sigmoid:
      for (std::size_t k = 0; k < n_out; ++k)
        delta[k] = (-opts.positive_weight * t[k] * (1.0 - y[k]) + (1.0 - t[k]) * y[k]) / denom;
      break;
    case Head::softmax: {
      double t_sum = 0.0;
      for (std::size_t k = 0; k < n_out; ++k) t_sum += t[k];
      for (std::size_t k = 0; k < n_out; ++k) delta[k] = (y[k] * t_sum - t[k]) / denom;
      break;
    }
  }

  for (std::size_t l = depth; l-- > 0;) {
    const std::size_t n_in = arch.layer_widths[l];
    const std::size_t width = arch.layer_widths[l + 1];
    const double* in = l == 0 ? x.data() : ws.post[l - 1].data();
    const double* w = params.data() + arch.weight_offset(l);
    double* gw = grad.data() + arch.weight_offset(l);
    double* gb = grad.data() + arch.bias_offset(l);
    for (std::size_t j = 0; j < width; ++j) gb[j] += delta[j];
    for (std::size_t i = 0; i < n_in; ++i) {
      const double a = in[i];
      if (a == 0.0) continue;
      double* gwi = gw + i * width;
      for (std::size_t j = 0; j < width; ++j) gwi[j] += a * delta[j];
    }
    if (l == 0) break;
    double* prev = ws.delta_prev.data();
    const double* z_prev = ws.pre[l - 1].data();
    for (std::size_t i = 0; i < n_in; ++i) {
      double d = 0.0;
      if (arch.hidden_activation == Activation::relu) {
        if (!(z_prev[i] > 0.0)) {
          prev[i] = 0.0;
          continue;
        }
        const double* wi = w + i * width;
        for (std::size_t j = 0; j < width; ++j) d += wi[j] * delta[j];
      } else {
        const double* wi = w + i * width;
        for (std::size_t j = 0; j < width; ++j) d += wi[j] * delta[j];
        const double th = ws.post[l - 1][i];
        d *= 1.0 - th * th;
      }
      prev[i] = d;
    }
    std::swap(ws.delta, ws.delta_prev);
    delta = ws.delta.data();
  }
}

// Forward + backward over the given rows (in the order given); returns the
// summed sample loss. grad is accumulated, not reset.
double accumulate(std::span<const double> params, const MlpArchitecture& arch,
                  const Batch& data, std::span<const std::size_t> rows,
                  const LossOptions& opts, Workspace& ws, std::span<double> grad) {
  const double denom = loss_denominator(rows.size(), arch.output_width(), arch.output_head);
  double total = 0.0;
  for (std::size_t r : rows) {
    const auto x = data.features.row(r);
    const auto t = data.targets.row(r);
    forward_sample(params, arch, x, ws);
    total += sample_loss(ws.post.back(), t, arch.output_head, opts);
    backward_sample(params, arch, x, t, denom, opts, ws, grad);
  }
  return total;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

std::vector<Layer> unflatten(std::span<const double> params,
                             const MlpArchitecture& arch) {
  arch.validate();
  check_params(params, arch);
  std::vector<Layer> layers;
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    Layer layer;
    layer.weights = Matrix(arch.layer_widths[l], arch.layer_widths[l + 1]);
    const auto w0 = params.begin() + static_cast<std::ptrdiff_t>(arch.weight_offset(l));
    std::copy(w0, w0 + static_cast<std::ptrdiff_t>(layer.weights.data.size()),
              layer.weights.data.begin());
    const auto b0 = params.begin() + static_cast<std::ptrdiff_t>(arch.bias_offset(l));
    layer.bias.assign(b0, b0 + static_cast<std::ptrdiff_t>(arch.layer_widths[l + 1]));
    layers.push_back(std::move(layer));
  }
  return layers;
}

ParameterVector flatten(const std::vector<Layer>& layers,
                        const MlpArchitecture& arch) {
  arch.validate();
  if (layers.size() != arch.depth())
    throw std::invalid_argument("flatten: layer count does not match architecture");
  ParameterVector out;
  out.reserve(arch.param_count());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.weights.rows != arch.layer_widths[l] ||
        layer.weights.cols != arch.layer_widths[l + 1] ||
        layer.bias.size() != arch.layer_widths[l + 1])
      throw std::invalid_argument("flatten: layer " + std::to_string(l) + " has the wrong shape");
    out.insert(out.end(), layer.weights.data.begin(), layer.weights.data.end());
    out.insert(out.end(), layer.bias.begin(), layer.bias.end());
  }
  return out;
}

ParameterVector init_params(const MlpArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  ParameterVector p(arch.param_count(), 0.0);
  Rng rng(seed);
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    const double limit = 1.0 / std::sqrt(static_cast<double>(arch.layer_widths[l]));
    const std::size_t begin = arch.weight_offset(l);
    const std::size_t end = arch.bias_offset(l);
    for (std::size_t i = begin; i < end; ++i) p[i] = rng.uniform(-limit, limit);
  }
  return p;
}

Matrix forward(std::span<const double> params, const MlpArchitecture& arch,
               const Matrix& features) {
  arch.validate();
  check_params(params, arch);
  if (features.cols != arch.input_width())
    throw std::invalid_argument("forward: feature width " + std::to_string(features.cols) +
                                " != input width " + std::to_string(arch.input_width()));
  // ReLU maps NaN to 0, so a poisoned parameter would not show in the output.
  if (!all_finite(params)) throw DivergenceError("forward: non-finite parameters");
  Workspace ws(arch);
  Matrix out(features.rows, arch.output_width());
  for (std::size_t r = 0; r < features.rows; ++r) {
    forward_sample(params, arch, features.row(r), ws);
    const auto& y = ws.post.back();
    if (!all_finite(y))
      throw DivergenceError("forward: non-finite output at row " + std::to_string(r));
    std::copy(y.begin(), y.end(), out.row(r).begin());
  }
  return out;
}

double loss(const Matrix& outputs, const Matrix& targets, Head head,
            const LossOptions& opts) {
  if (outputs.rows != targets.rows || outputs.cols != targets.cols)
    throw std::invalid_argument("loss: output and target shapes differ");
  if (outputs.rows == 0) return 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < outputs.rows; ++r)
    total += sample_loss(outputs.row(r), targets.row(r), head, opts);
  return total / loss_denominator(outputs.rows, outputs.cols, head);
}

double batch_loss(std::span<const double> params, const MlpArchitecture& arch,
                  const Batch& batch, const LossOptions& opts) {
  batch.validate(arch);
  return loss(forward(params, arch, batch.features), batch.targets, arch.output_head, opts);
}

ParameterVector gradient(std::span<const double> params,
                         const MlpArchitecture& arch, const Batch& batch,
                         const LossOptions& opts) {
  arch.validate();
  check_params(params, arch);
  batch.validate(arch);
  ParameterVector grad(params.size(), 0.0);
  if (batch.size() == 0) return grad;
  std::vector<std::size_t> rows(batch.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Workspace ws(arch);
  accumulate(params, arch, batch, rows, opts, ws, grad);
  if (!all_finite(grad)) throw DivergenceError("gradient: non-finite value");
  return grad;
}

ParameterVector train_local(std::span<const double> params,
                            const MlpArchitecture& arch, const Batch& data,
                            const TrainingHyperparams& hp,
                            const FrozenMask& frozen) {
  arch.validate();
  check_params(params, arch);
  data.validate(arch);
  hp.validate();
  if (data.size() == 0) throw std::invalid_argument("train_local: empty data");
  if (!frozen.empty() && frozen.size() != params.size())
    throw std::invalid_argument("train_local: frozen mask length mismatch");

  ParameterVector theta(params.begin(), params.end());
  ParameterVector grad(theta.size(), 0.0);
  Workspace ws(arch);
  std::vector<std::size_t> order(data.size());
  std::vector<std::size_t> batch_rows;
  batch_rows.reserve(hp.batch_size);

  for (std::size_t e = 0; e < hp.local_epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(hp.seed, hp.epoch_offset + e));
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t end = std::min(order.size(), start + hp.batch_size);
      // Ascending row order inside a batch: a full batch then sums exactly
      // like gradient().
      batch_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                        order.begin() + static_cast<std::ptrdiff_t>(end));
      std::sort(batch_rows.begin(), batch_rows.end());
      std::fill(grad.begin(), grad.end(), 0.0);
      const double total = accumulate(theta, arch, data, batch_rows, hp.loss, ws, grad);
      if (!std::isfinite(total)) {
        throw DivergenceError("train_local: non-finite loss in epoch " +
                              std::to_string(hp.epoch_offset + e) + " at batch starting " +
                              std::to_string(start));
      }
      if (frozen.empty()) {
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= hp.learning_rate * grad[i];
      } else {
        for (std::size_t i = 0; i < theta.size(); ++i)
          if (!frozen[i]) theta[i] -= hp.learning_rate * grad[i];
      }
    }
  }
  if (!all_finite(theta)) throw DivergenceError("train_local: non-finite parameters");
  return theta;
}

std::string format_params(std::span<const double> params,
                          const MlpArchitecture& arch) {
  check_params(params, arch);
  std::string s = "fedloc-params v1\narch " + arch.fingerprint() +
                  "\ncount " + std::to_string(params.size()) + "\n";
  char buf[40];
  for (double v : params) {
    const int n = std::snprintf(buf, sizeof(buf), "%.17g\n", v);
    s.append(buf, static_cast<std::size_t>(n));
  }
  return s;
}

void write_params(const std::string& path, std::span<const double> params,
                  const MlpArchitecture& arch) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << format_params(params, arch);
  if (!out) throw std::runtime_error("write failed: " + path);
}

ParameterVector parse_params(const std::string& text,
                             const MlpArchitecture& arch) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "fedloc-params v1")
    throw std::runtime_error("params: missing or unsupported version tag");
  if (!std::getline(in, line) || line != "arch " + arch.fingerprint())
    throw std::runtime_error("params: architecture mismatch ('" + line + "' vs 'arch " +
                             arch.fingerprint() + "')");
  std::size_t count = 0;
  if (!std::getline(in, line) || std::sscanf(line.c_str(), "count %zu", &count) != 1)
    throw std::runtime_error("params: missing count line");
  if (count != arch.param_count())
    throw std::runtime_error("params: count does not match architecture");
  ParameterVector p;
  p.reserve(count);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    char* end = nullptr;
    const double v = std::strtod(line.c_str(), &end);
    if (end == line.c_str() || !std::isfinite(v))
      throw std::runtime_error("params: bad value '" + line + "'");
    p.push_back(v);
  }
  if (p.size() != count) throw std::runtime_error("params: truncated file");
  return p;
}

ParameterVector read_params(const std::string& path, const MlpArchitecture& arch) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_params(buf.str(), arch);
}

}  // namespace fedloc
