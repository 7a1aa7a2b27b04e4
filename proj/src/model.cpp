#include "fedcap/model.hpp"

#include "fedcap/errors.hpp"
#include "fedcap/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fedcap {

std::size_t ModelArch::param_count() const noexcept {
    if (hidden_dim == 0) return num_classes * input_dim + num_classes;
    return hidden_dim * input_dim + hidden_dim + num_classes * hidden_dim + num_classes;
}

void ModelArch::validate() const {
    if (input_dim == 0) throw ConfigError("model input_dim must be positive");
    if (num_classes < 2) throw ConfigError("model needs at least 2 classes");
}

void Batch::push_back(const double* x, int label) {
    features.insert(features.end(), x, x + input_dim);
    labels.push_back(label);
}

Batch Batch::select(const std::vector<std::size_t>& rows) const {
    Batch out;
    out.input_dim = input_dim;
    out.features.reserve(rows.size() * input_dim);
    out.labels.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(row(r), labels[r]);
    return out;
}

namespace {

void check_inputs(const ModelArch& arch, const ParamVector& w, const Batch& batch) {
    arch.validate();
    if (w.dim() != arch.param_count()) {
        throw ConfigError("parameter vector has dim " + std::to_string(w.dim()) +
                          ", architecture expects " + std::to_string(arch.param_count()));
    }
    if (batch.input_dim != arch.input_dim) {
        throw ConfigError("batch input_dim " + std::to_string(batch.input_dim) +
                          " does not match architecture " + std::to_string(arch.input_dim));
    }
    if (batch.size() == 0) throw ConfigError("empty batch");
    if (batch.features.size() != batch.size() * batch.input_dim) {
        throw ConfigError("batch feature matrix is ragged");
    }
    for (int y : batch.labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= arch.num_classes) {
            throw ConfigError("label " + std::to_string(y) + " out of range");
        }
    }
}

// out[r] = b[r] + sum_c W[r, c] * x[c]
void affine(const double* W, const double* b, const double* x, std::size_t rows,
            std::size_t cols, double* out) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* wr = W + r * cols;
        double s = b[r];
        for (std::size_t c = 0; c < cols; ++c) s += wr[c] * x[c];
        out[r] = s;
    }
}

struct Activations {
    std::vector<double> hidden;  // ReLU outputs, empty for softmax regression
    std::vector<double> logits;
};

void forward_row(const ModelArch& arch, const double* w, const double* x, Activations& act) {
    const std::size_t D = arch.input_dim, H = arch.hidden_dim, C = arch.num_classes;
    act.logits.resize(C);
    if (H == 0) {
        affine(w, w + C * D, x, C, D, act.logits.data());
        return;
    }
    act.hidden.resize(H);
    const double* W1 = w;
    const double* b1 = W1 + H * D;
    const double* W2 = b1 + H;
    const double* b2 = W2 + C * H;
    affine(W1, b1, x, H, D, act.hidden.data());
    for (double& h : act.hidden) h = std::max(h, 0.0);
    affine(W2, b2, act.hidden.data(), C, H, act.logits.data());
}

// Softmax in place; returns log-sum-exp.
double softmax_inplace(std::vector<double>& z) {
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double& v : z) {
        v = std::exp(v - m);
        s += v;
    }
    for (double& v : z) v /= s;
    return m + std::log(s);
}

}  // namespace

double forward_loss(const ModelArch& arch, const ParamVector& w, const Batch& batch) {
    check_inputs(arch, w, batch);
    Activations act;
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        forward_row(arch, w.values().data(), batch.row(i), act);
        const double zy = act.logits[static_cast<std::size_t>(batch.labels[i])];
        const double lse = softmax_inplace(act.logits);
        total += lse - zy;
    }
    return total / static_cast<double>(batch.size());
}

ParamVector gradient(const ModelArch& arch, const ParamVector& w, const Batch& batch) {
    check_inputs(arch, w, batch);
    const std::size_t D = arch.input_dim, H = arch.hidden_dim, C = arch.num_classes;
    ParamVector g(w.dim());
    double* gw = g.values().data();
    const double* pw = w.values().data();
    const double inv_n = 1.0 / static_cast<double>(batch.size());

    Activations act;
    std::vector<double> dhidden(H);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double* x = batch.row(i);
        forward_row(arch, pw, x, act);
        softmax_inplace(act.logits);
        auto& delta = act.logits;  // dL/dz = p - onehot(y)
        delta[static_cast<std::size_t>(batch.labels[i])] -= 1.0;
        for (double& d : delta) d *= inv_n;

        if (H == 0) {
            double* gW = gw;
            double* gb = gw + C * D;
            for (std::size_t c = 0; c < C; ++c) {
                for (std::size_t j = 0; j < D; ++j) gW[c * D + j] += delta[c] * x[j];
                gb[c] += delta[c];
            }
            continue;
        }

        const double* W2 = pw + H * D + H;
        double* gW1 = gw;
        double* gb1 = gW1 + H * D;
        double* gW2 = gb1 + H;
        double* gb2 = gW2 + C * H;
        std::fill(dhidden.begin(), dhidden.end(), 0.0);
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t h = 0; h < H; ++h) {
                gW2[c * H + h] += delta[c] * act.hidden[h];
                dhidden[h] += delta[c] * W2[c * H + h];
            }
            gb2[c] += delta[c];
        }
        for (std::size_t h = 0; h < H; ++h) {
            const double dpre = act.hidden[h] > 0.0 ? dhidden[h] : 0.0;
            for (std::size_t j = 0; j < D; ++j) gW1[h * D + j] += dpre * x[j];
            gb1[h] += dpre;
        }
    }
    return g;
}

ParamVector sgd_step(const ParamVector& w, const ParamVector& g, double lr) {
    require_same_dim(w, g);
    if (!g.all_finite()) throw NumericalError("non-finite gradient in SGD step");
    ParamVector out = w;
    out.axpy(-lr, g);
    return out;
}

std::vector<double> logits(const ModelArch& arch, const ParamVector& w, const Batch& batch) {
    check_inputs(arch, w, batch);
    std::vector<double> out;
    out.reserve(batch.size() * arch.num_classes);
    Activations act;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        forward_row(arch, w.values().data(), batch.row(i), act);
        out.insert(out.end(), act.logits.begin(), act.logits.end());
    }
    return out;
}

std::vector<int> predict(const ModelArch& arch, const ParamVector& w, const Batch& batch) {
    const auto z = logits(arch, w, batch);
    const std::size_t C = arch.num_classes;
    std::vector<int> out(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < C; ++c) {
            if (z[i * C + c] > z[i * C + best]) best = c;
        }
        out[i] = static_cast<int>(best);
    }
    return out;
}

ParamVector init_params(const ModelArch& arch, std::uint64_t seed) {
    arch.validate();
    Rng rng(seed);
    ParamVector w(arch.param_count());
    auto fill_layer = [&](std::size_t offset, std::size_t fan_out, std::size_t fan_in) {
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (std::size_t i = 0; i < fan_out * fan_in; ++i) {
            w[offset + i] = (2.0 * uniform01(rng) - 1.0) * a;
        }
    };
    const std::size_t D = arch.input_dim, H = arch.hidden_dim, C = arch.num_classes;
    if (H == 0) {
        fill_layer(0, C, D);
    } else {
        fill_layer(0, H, D);
        fill_layer(H * D + H, C, H);
    }
    return w;
}

}  // namespace fedcap
