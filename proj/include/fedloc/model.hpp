#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedloc {

enum class Activation { relu, tanh };
enum class Head { linear, sigmoid, softmax };

const char* to_string(Activation a);
const char* to_string(Head h);
Activation parse_activation(const std::string& s);
Head parse_head(const std::string& s);

/// Raised when a forward pass, loss, or gradient goes non-finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fully connected network: layer_widths = {input, hidden..., output}.
struct MlpArchitecture {
  std::vector<std::size_t> layer_widths;
  Activation hidden_activation = Activation::relu;
  Head output_head = Head::linear;

  /// Throws std::invalid_argument when the shape is unusable.
  void validate() const;

  std::size_t input_width() const { return layer_widths.front(); }
  std::size_t output_width() const { return layer_widths.back(); }
  /// Number of weight layers (one fewer than layer_widths).
  std::size_t depth() const { return layer_widths.size() - 1; }
  std::size_t param_count() const;

  // Flat layout: for each layer l, the (in x out) row-major weight block
  // followed by the out-long bias block.
  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const;
  /// One past the last parameter of `layer`.
  std::size_t layer_end(std::size_t layer) const;

  /// e.g. "520-128-64-2/relu/linear"
  std::string fingerprint() const;

  bool operator==(const MlpArchitecture&) const = default;
};

/// Flat ordered list of all weights and biases.
using ParameterVector = std::vector<double>;

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * cols, cols};
  }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

/// Features (rows x input width) paired with targets (rows x output width).
struct Batch {
  Matrix features;
  Matrix targets;

  std::size_t size() const { return features.rows; }
  void validate(const MlpArchitecture& arch) const;
};

struct LossOptions {
  // Multiplies the positive-label term of the binary cross-entropy.
  double positive_weight = 1.0;
};

struct TrainingHyperparams {
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::size_t local_epochs = 1;
  std::uint64_t seed = 0;
  // Index of the first epoch in this call. The shuffle of epoch e is seeded
  // from (seed, epoch_offset + e), so a run split across several calls sees
  // the same batch order as one long call.
  std::uint64_t epoch_offset = 0;
  LossOptions loss;

  void validate() const;
};

/// One layer in structured form.
struct Layer {
  Matrix weights;  // in x out
  std::vector<double> bias;
};

std::vector<Layer> unflatten(std::span<const double> params,
                             const MlpArchitecture& arch);
ParameterVector flatten(const std::vector<Layer>& layers,
                        const MlpArchitecture& arch);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
ParameterVector init_params(const MlpArchitecture& arch, std::uint64_t seed);

Matrix forward(std::span<const double> params, const MlpArchitecture& arch,
               const Matrix& features);

inline constexpr double kProbabilityClamp = 1e-12;

double loss(const Matrix& outputs, const Matrix& targets, Head head,
            const LossOptions& opts = {});

/// Mean loss of the network over a batch.
double batch_loss(std::span<const double> params, const MlpArchitecture& arch,
                  const Batch& batch, const LossOptions& opts = {});

/// Analytic gradient of batch_loss, same layout as params.
ParameterVector gradient(std::span<const double> params,
                         const MlpArchitecture& arch, const Batch& batch,
                         const LossOptions& opts = {});

/// Per-parameter trainability. Empty means everything trains.
using FrozenMask = std::vector<std::uint8_t>;

/// Mini-batch SGD for hp.local_epochs epochs. Parameters with a nonzero
/// frozen-mask entry are never updated.
ParameterVector train_local(std::span<const double> params,
                            const MlpArchitecture& arch, const Batch& data,
                            const TrainingHyperparams& hp,
                            const FrozenMask& frozen = {});

// Checkpoint format (text, version-tagged):
//   fedloc-params v1
//   arch <fingerprint>
//   count <n>
//   <n lines, one value each, %.17g>
void write_params(const std::string& path, std::span<const double> params,
                  const MlpArchitecture& arch);
std::string format_params(std::span<const double> params,
                          const MlpArchitecture& arch);
ParameterVector parse_params(const std::string& text,
                             const MlpArchitecture& arch);
ParameterVector read_params(const std::string& path,
                            const MlpArchitecture& arch);

}  // namespace fedloc
