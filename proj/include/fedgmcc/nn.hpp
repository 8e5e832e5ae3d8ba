#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fedgmcc/matrix.hpp"

namespace fedgmcc {

// Fully connected feed-forward net: ReLU on hidden layers, softmax on the
// output layer. The architecture is the list of layer widths, input first.
struct ModelArch {
    std::vector<int> layer_sizes;

    ModelArch() = default;
    explicit ModelArch(std::vector<int> sizes);

    int input_dim() const { return layer_sizes.front(); }
    int num_classes() const { return layer_sizes.back(); }
    int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }

    // Weights plus biases over all layers; pure function of layer_sizes.
    std::size_t param_count() const;

    // Offset of layer l's block in the flat parameter vector. A block is the
    // [out x in] weight matrix (row-major) followed by the [out] bias.
    std::size_t layer_offset(int l) const;

    bool operator==(const ModelArch&) const = default;
};

// Flat parameter vector tied to an architecture.
struct WeightVector {
    ModelArch arch;
    std::vector<double> values;

    WeightVector() = default;
    WeightVector(ModelArch a, std::vector<double> v);

    std::size_t size() const { return values.size(); }
    bool operator==(const WeightVector&) const = default;
};

struct LabeledBatch {
    Matrix inputs;             // n x input_dim
    std::vector<int> labels;   // n entries in [0, num_classes)

    std::size_t size() const { return labels.size(); }
    bool operator==(const LabeledBatch&) const = default;
};

// Row-stochastic class probabilities, one row per input.
struct ModelOutput {
    Matrix probs;
};

WeightVector zero_weights(const ModelArch& arch);

// Per-layer uniform init on [-1/sqrt(fan_in), +1/sqrt(fan_in)].
WeightVector init_weights(const ModelArch& arch, std::uint64_t seed);

// Elementwise helpers used by aggregation and curve code.
WeightVector add(const WeightVector& a, const WeightVector& b);
WeightVector sub(const WeightVector& a, const WeightVector& b);
WeightVector scale(const WeightVector& a, double s);
void axpy(WeightVector& y, double alpha, const WeightVector& x); // y += alpha * x
double dot(const WeightVector& a, const WeightVector& b);
double norm(const WeightVector& a);
bool all_finite(const WeightVector& a);

ModelOutput forward(const WeightVector& w, const Matrix& inputs);

// Mean negative log-probability of the true class. Log is clamped at 1e-12.
double cross_entropy_loss(const WeightVector& w, const LabeledBatch& batch);

// Fraction of rows whose argmax matches the label (ties break low).
double accuracy(const WeightVector& w, const LabeledBatch& batch);

// Mean over probe rows of the squared output difference between two models
// sharing one architecture. Symmetric in (a, b).
double mse_output_loss(const WeightVector& a, const WeightVector& b, const Matrix& probe_inputs);

// Gradient of cross_entropy_loss with respect to every parameter.
WeightVector grad_cross_entropy(const WeightVector& w, const LabeledBatch& batch);

// Gradient of mean_x ||target_row(x) - f(x, w)||^2 with respect to w, the
// target rows held fixed.
WeightVector grad_output_mse(const WeightVector& w, const Matrix& inputs, const Matrix& target_probs);

struct ProximalTerm {
    double mu = 0.0;
    WeightVector anchor;
};

struct SgdOptions {
    int epochs = 1;
    int batch_size = 64;
    double lr = 0.001;
    std::uint64_t seed = 0;
    std::optional<ProximalTerm> proximal;
};

// Mini-batch SGD on the cross-entropy loss; seeded shuffle per epoch, last
// short batch kept. With a proximal term the optimized loss is
// L + mu * ||w - anchor||^2. Deterministic for a fixed seed.
WeightVector sgd_train(const WeightVector& w0, const LabeledBatch& data, const SgdOptions& opt);

} // namespace fedgmcc
