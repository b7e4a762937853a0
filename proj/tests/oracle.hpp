#pragma once

// Reference implementations used as test oracles. They are written for
// clarity, share no code with the library's training path, and are only as
// fast as the small problems in the tests require.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "fedloc/model.hpp"
#include "fedloc/rng.hpp"

namespace oracle {

using fedloc::Batch;
using fedloc::Head;
using fedloc::MlpArchitecture;
using fedloc::ParameterVector;

/// Mean loss computed independently of the library, in extended precision,
/// so that finite differences at small h are not dominated by roundoff.
inline long double reference_loss(std::span<const double> params, const MlpArchitecture& arch,
                                  const Batch& batch, double positive_weight = 1.0) {
  const std::size_t depth = arch.layer_widths.size() - 1;
  const std::size_t out = arch.layer_widths.back();
  long double total = 0.0L;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const auto x = batch.features.row(r);
    std::vector<long double> a(x.begin(), x.end());
    for (std::size_t l = 0; l < depth; ++l) {
      const std::size_t in_w = arch.layer_widths[l];
      const std::size_t out_w = arch.layer_widths[l + 1];
      const std::size_t w0 = arch.weight_offset(l);
      const std::size_t b0 = arch.bias_offset(l);
      std::vector<long double> z(out_w);
      for (std::size_t j = 0; j < out_w; ++j) {
        long double s = params[b0 + j];
        for (std::size_t i = 0; i < in_w; ++i) s += a[i] * static_cast<long double>(params[w0 + i * out_w + j]);
        z[j] = s;
      }
      if (l + 1 < depth) {
        for (auto& v : z)
          v = arch.hidden_activation == fedloc::Activation::relu ? std::max(0.0L, v) : std::tanh(v);
      }
      a = std::move(z);
    }
    const auto t = batch.targets.row(r);
    switch (arch.output_head) {
      case Head::linear:
        for (std::size_t k = 0; k < out; ++k) total += (a[k] - t[k]) * (a[k] - t[k]);
        break;
      case Head::sigmoid:
        for (std::size_t k = 0; k < out; ++k) {
          const long double y = 1.0L / (1.0L + std::exp(-a[k]));
          total -= positive_weight * t[k] * std::log(y) + (1.0L - t[k]) * std::log(1.0L - y);
        }
        break;
      case Head::softmax: {
        const long double m = *std::max_element(a.begin(), a.end());
        long double s = 0.0L;
        for (auto v : a) s += std::exp(v - m);
        for (std::size_t k = 0; k < out; ++k) total -= t[k] * (a[k] - m - std::log(s));
        break;
      }
    }
  }
  const long double denom = arch.output_head == Head::softmax
                                ? static_cast<long double>(batch.size())
                                : static_cast<long double>(batch.size() * out);
  return total / denom;
}

/// Central finite differences of reference_loss.
inline ParameterVector fd_gradient(std::span<const double> params, const MlpArchitecture& arch,
                                   const Batch& batch, const fedloc::LossOptions& opts = {},
                                   double h = 1e-6) {
  ParameterVector p(params.begin(), params.end());
  ParameterVector g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const long double up = reference_loss(p, arch, batch, opts.positive_weight);
    p[i] = keep - h;
    const long double down = reference_loss(p, arch, batch, opts.positive_weight);
    p[i] = keep;
    g[i] = static_cast<double>((up - down) / (2.0L * h));
  }
  return g;
}

/// |a - n| / max(|a|, |n|, 1e-4), maximised over coordinates.
inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-4});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

/// Straightforward dense MLP: per-layer matrices, full backprop per sample.
class DenseMlp {
 public:
  DenseMlp(const MlpArchitecture& arch, std::span<const double> params)
      : arch_(arch), theta_(params.begin(), params.end()) {}

  const ParameterVector& params() const { return theta_; }

  std::vector<double> predict(std::span<const double> x) const {
    std::vector<std::vector<double>> acts;
    std::vector<std::vector<double>> pre;
    run(x, acts, pre);
    return acts.back();
  }

  /// Gradient of the mean loss over `rows` (loss conventions as the library:
  /// squared error and binary cross-entropy are averaged over rows times
  /// outputs, categorical cross-entropy over rows).
  ParameterVector gradient(const Batch& b, const std::vector<std::size_t>& rows,
                           double positive_weight = 1.0) const {
    ParameterVector g(theta_.size(), 0.0);
    const std::size_t depth = arch_.layer_widths.size() - 1;
    const std::size_t out = arch_.layer_widths.back();
    const double denom = arch_.output_head == Head::softmax
                             ? static_cast<double>(rows.size())
                             : static_cast<double>(rows.size() * out);
    for (std::size_t r : rows) {
      std::vector<std::vector<double>> acts, pre;
      const auto x = b.features.row(r);
      const auto t = b.targets.row(r);
      run(x, acts, pre);
      // dL/dz at the output for each head's canonical pairing.
      std::vector<double> delta(out);
      const auto& y = acts.back();
      for (std::size_t k = 0; k < out; ++k) {
        switch (arch_.output_head) {
          case Head::linear: delta[k] = 2.0 * (y[k] - t[k]); break;
          case Head::sigmoid:
            delta[k] = y[k] * (positive_weight * t[k] + (1.0 - t[k])) - positive_weight * t[k];
            break;
          case Head::softmax: {
            double tsum = 0.0;
            for (std::size_t j = 0; j < out; ++j) tsum += t[j];
            delta[k] = y[k] * tsum - t[k];
            break;
          }
        }
        delta[k] /= denom;
      }
      for (std::size_t l = depth; l-- > 0;) {
        const std::size_t in_w = arch_.layer_widths[l];
        const std::size_t out_w = arch_.layer_widths[l + 1];
        const std::size_t w0 = arch_.weight_offset(l);
        const std::size_t b0 = arch_.bias_offset(l);
        const auto& a_in = acts[l];
        for (std::size_t i = 0; i < in_w; ++i)
          for (std::size_t j = 0; j < out_w; ++j) g[w0 + i * out_w + j] += a_in[i] * delta[j];
        for (std::size_t j = 0; j < out_w; ++j) g[b0 + j] += delta[j];
        if (l == 0) break;
        std::vector<double> prev(in_w, 0.0);
        for (std::size_t i = 0; i < in_w; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < out_w; ++j) s += theta_[w0 + i * out_w + j] * delta[j];
          const double z = pre[l - 1][i];
          const double d = arch_.hidden_activation == fedloc::Activation::relu
                               ? (z > 0.0 ? 1.0 : 0.0)
                               : 1.0 - std::tanh(z) * std::tanh(z);
          prev[i] = s * d;
        }
        delta = std::move(prev);
      }
    }
    return g;
  }

  void step(const ParameterVector& g, double lr) {
    for (std::size_t i = 0; i < theta_.size(); ++i) theta_[i] -= lr * g[i];
  }

 private:
  void run(std::span<const double> x, std::vector<std::vector<double>>& acts,
           std::vector<std::vector<double>>& pre) const {
    const std::size_t depth = arch_.layer_widths.size() - 1;
    acts.assign(1, std::vector<double>(x.begin(), x.end()));
    pre.clear();
    for (std::size_t l = 0; l < depth; ++l) {
      const std::size_t in_w = arch_.layer_widths[l];
      const std::size_t out_w = arch_.layer_widths[l + 1];
      const std::size_t w0 = arch_.weight_offset(l);
      const std::size_t b0 = arch_.bias_offset(l);
      std::vector<double> z(out_w);
      for (std::size_t j = 0; j < out_w; ++j) {
        double s = theta_[b0 + j];
        for (std::size_t i = 0; i < in_w; ++i) s += acts[l][i] * theta_[w0 + i * out_w + j];
        z[j] = s;
      }
      pre.push_back(z);
      std::vector<double> a(out_w);
      if (l + 1 < depth) {
        for (std::size_t j = 0; j < out_w; ++j)
          a[j] = arch_.hidden_activation == fedloc::Activation::relu ? std::max(0.0, z[j]) : std::tanh(z[j]);
      } else if (arch_.output_head == Head::linear) {
        a = z;
      } else if (arch_.output_head == Head::sigmoid) {
        for (std::size_t j = 0; j < out_w; ++j) a[j] = 1.0 / (1.0 + std::exp(-z[j]));
      } else {
        const double m = *std::max_element(z.begin(), z.end());
        double s = 0.0;
        for (std::size_t j = 0; j < out_w; ++j) s += (a[j] = std::exp(z[j] - m));
        for (auto& v : a) v /= s;
      }
      acts.push_back(std::move(a));
    }
  }

  MlpArchitecture arch_;
  ParameterVector theta_;
};

/// Centralized mini-batch SGD: `epochs` passes, epoch e shuffled with
/// Rng(mix_seed(seed, first_epoch + e)), batches taken in shuffled order.
inline ParameterVector centralized_sgd(const MlpArchitecture& arch, std::span<const double> init,
                                       const Batch& data, double lr, std::size_t batch_size,
                                       std::uint64_t seed, std::size_t epochs,
                                       std::size_t first_epoch = 0, double positive_weight = 1.0) {
  DenseMlp net(arch, init);
  std::vector<std::size_t> order(data.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    fedloc::Rng rng(fedloc::mix_seed(seed, first_epoch + e));
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t s = 0; s < order.size(); s += batch_size) {
      std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(s),
                                    order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), s + batch_size)));
      net.step(net.gradient(data, rows, positive_weight), lr);
    }
  }
  return net.params();
}

/// max |a - b| / max(max |b|, tiny).
inline double relative_distance(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, scale = 1e-300;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return diff / scale;
}

}  // namespace oracle
