#pragma once

#include "fedcap/param_vector.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace fedcap {

/// Softmax regression (hidden_dim == 0) or a one-hidden-layer ReLU MLP.
///
/// Parameter layout is layer-major and row-major within each layer:
///   hidden_dim == 0 : W[C x D], b[C]
///   hidden_dim  > 0 : W1[H x D], b1[H], W2[C x H], b2[C]
struct ModelArch {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    std::size_t num_classes = 2;

    std::size_t param_count() const noexcept;
    void validate() const;

    friend bool operator==(const ModelArch&, const ModelArch&) = default;
};

/// Row-major feature matrix with one integer label per row.
struct Batch {
    std::size_t input_dim = 0;
    std::vector<double> features;
    std::vector<int> labels;

    std::size_t size() const noexcept { return labels.size(); }
    const double* row(std::size_t i) const noexcept { return features.data() + i * input_dim; }

    void push_back(const double* x, int label);
    /// Rows selected by index, in the given order.
    Batch select(const std::vector<std::size_t>& rows) const;
};

/// Mean cross-entropy over the batch.
double forward_loss(const ModelArch& arch, const ParamVector& w, const Batch& batch);

/// Exact gradient of forward_loss with respect to w.
ParamVector gradient(const ModelArch& arch, const ParamVector& w, const Batch& batch);

/// w - lr * g. Throws NumericalError when g has non-finite entries.
ParamVector sgd_step(const ParamVector& w, const ParamVector& g, double lr);

/// Logits for every row, row-major (rows x C).
std::vector<double> logits(const ModelArch& arch, const ParamVector& w, const Batch& batch);

/// Argmax class per row; ties resolve to the lowest class id.
std::vector<int> predict(const ModelArch& arch, const ParamVector& w, const Batch& batch);

/// Glorot-uniform weights, zero biases.
ParamVector init_params(const ModelArch& arch, std::uint64_t seed);

}  // namespace fedcap
