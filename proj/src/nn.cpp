#include "advdet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "advdet/errors.hpp"
#include "advdet/rng.hpp"

namespace advdet {

const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::MaxPool2d: return "maxpool2d";
        case LayerKind::Dense: return "dense";
        case LayerKind::Relu: return "relu";
        case LayerKind::Softmax: return "softmax";
        case LayerKind::Dropout: return "dropout";
    }
    return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
    for (LayerKind kind : {LayerKind::Conv2d, LayerKind::MaxPool2d, LayerKind::Dense, LayerKind::Relu,
                           LayerKind::Softmax, LayerKind::Dropout}) {
        if (name == to_string(kind)) return kind;
    }
    fail(ErrorCode::InvalidSpec, "unknown layer kind '" + name + "'");
}

LayerSpec LayerSpec::conv2d(std::size_t out_channels, std::size_t kernel_size, std::size_t stride) {
    LayerSpec s;
    s.kind = LayerKind::Conv2d;
    s.out_channels = out_channels;
    s.kernel_size = kernel_size;
    s.stride = stride;
    return s;
}

LayerSpec LayerSpec::maxpool2d(std::size_t window, std::size_t stride) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool2d;
    s.window = window;
    s.stride = stride == 0 ? window : stride;
    return s;
}

LayerSpec LayerSpec::dense(std::size_t out_dim) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.out_dim = out_dim;
    return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::softmax() {
    LayerSpec s;
    s.kind = LayerKind::Softmax;
    return s;
}

LayerSpec LayerSpec::dropout(double rate) {
    LayerSpec s;
    s.kind = LayerKind::Dropout;
    s.rate = rate;
    return s;
}

std::vector<LayerSpec> lenet_small_specs(std::size_t num_classes) {
    return {
        LayerSpec::conv2d(8, 5),  LayerSpec::relu(),        LayerSpec::maxpool2d(2),
        LayerSpec::conv2d(16, 5), LayerSpec::relu(),        LayerSpec::maxpool2d(2),
        LayerSpec::dropout(0.5),  LayerSpec::dense(128),    LayerSpec::relu(),
        LayerSpec::dropout(0.5),  LayerSpec::dense(num_classes), LayerSpec::softmax(),
    };
}

// ---------------------------------------------------------------------------
// Model construction

namespace {

Shape infer_output_shape(const LayerSpec& spec, const Shape& in) {
    switch (spec.kind) {
        case LayerKind::Conv2d: {
            if (in.size() != 3) fail(ErrorCode::ShapeMismatch, "conv2d needs [C,H,W] input, got " + shape_to_string(in));
            if (spec.out_channels == 0 || spec.kernel_size == 0 || spec.stride == 0)
                fail(ErrorCode::InvalidSpec, "conv2d needs positive channels, kernel and stride");
            if (in[1] < spec.kernel_size || in[2] < spec.kernel_size)
                fail(ErrorCode::ShapeMismatch, "conv2d kernel larger than input " + shape_to_string(in));
            return {spec.out_channels, (in[1] - spec.kernel_size) / spec.stride + 1,
                    (in[2] - spec.kernel_size) / spec.stride + 1};
        }
        case LayerKind::MaxPool2d: {
            if (in.size() != 3) fail(ErrorCode::ShapeMismatch, "maxpool2d needs [C,H,W] input, got " + shape_to_string(in));
            if (spec.window == 0 || spec.stride == 0) fail(ErrorCode::InvalidSpec, "maxpool2d needs positive window and stride");
            if (in[1] < spec.window || in[2] < spec.window)
                fail(ErrorCode::ShapeMismatch, "pool window larger than input " + shape_to_string(in));
            return {in[0], (in[1] - spec.window) / spec.stride + 1, (in[2] - spec.window) / spec.stride + 1};
        }
        case LayerKind::Dense:
            if (spec.out_dim == 0) fail(ErrorCode::InvalidSpec, "dense needs a positive output dimension");
            return {spec.out_dim};
        case LayerKind::Dropout:
            if (!(spec.rate >= 0.0 && spec.rate < 1.0))
                fail(ErrorCode::InvalidSpec, "dropout rate must lie in [0, 1), got " + std::to_string(spec.rate));
            return in;
        case LayerKind::Relu:
        case LayerKind::Softmax:
            return in;
    }
    return in;
}

}  // namespace

NetworkModel::NetworkModel(Shape input_shape, std::size_t num_classes, std::vector<Layer> layers)
    : input_shape_(std::move(input_shape)), num_classes_(num_classes), layers_(std::move(layers)) {
    if (num_classes_ == 0) fail(ErrorCode::InvalidSpec, "num_classes must be positive");
    if (layers_.size() < 2 || layers_.back().spec.kind != LayerKind::Softmax)
        fail(ErrorCode::InvalidSpec, "the final layer must be softmax");
    if (layers_[layers_.size() - 2].spec.kind != LayerKind::Dense)
        fail(ErrorCode::InvalidSpec, "softmax must be fed by a dense layer");
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
        if (layers_[i].spec.kind == LayerKind::Softmax) fail(ErrorCode::InvalidSpec, "softmax is only allowed as the final layer");
    }

    Shape shape = input_shape_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        Layer& layer = layers_[i];
        if (!layer.input_shape.empty() && layer.input_shape != shape)
            fail(ErrorCode::ShapeMismatch, "layer " + std::to_string(i) + " expects " + shape_to_string(layer.input_shape) +
                                               " but receives " + shape_to_string(shape));
        layer.input_shape = shape;
        layer.output_shape = infer_output_shape(layer.spec, shape);
        shape = layer.output_shape;

        const std::size_t fan_in = shape_size(layer.input_shape);
        if (layer.spec.kind == LayerKind::Dense) {
            const Shape w_shape{layer.spec.out_dim, fan_in};
            if (layer.weight.shape() != w_shape || layer.bias.shape() != Shape{layer.spec.out_dim})
                fail(ErrorCode::ShapeMismatch, "dense layer " + std::to_string(i) + " weights must be " + shape_to_string(w_shape));
        } else if (layer.spec.kind == LayerKind::Conv2d) {
            const Shape w_shape{layer.spec.out_channels, layer.input_shape[0], layer.spec.kernel_size, layer.spec.kernel_size};
            if (layer.weight.shape() != w_shape || layer.bias.shape() != Shape{layer.spec.out_channels})
                fail(ErrorCode::ShapeMismatch, "conv layer " + std::to_string(i) + " weights must be " + shape_to_string(w_shape));
        } else if (!layer.weight.empty() || !layer.bias.empty()) {
            fail(ErrorCode::InvalidSpec, "layer " + std::to_string(i) + " takes no parameters");
        }
    }
    if (shape != Shape{num_classes_})
        fail(ErrorCode::ShapeMismatch, "network output " + shape_to_string(shape) + " does not match " +
                                           std::to_string(num_classes_) + " classes");
}

std::size_t NetworkModel::hidden_size() const { return shape_size(layers_[logit_layer()].input_shape); }

bool NetworkModel::has_active_dropout() const {
    return std::any_of(layers_.begin(), layers_.end(),
                       [](const Layer& l) { return l.spec.kind == LayerKind::Dropout && l.spec.rate > 0.0; });
}

std::vector<LayerSpec> NetworkModel::specs() const {
    std::vector<LayerSpec> out;
    out.reserve(layers_.size());
    for (const auto& l : layers_) out.push_back(l.spec);
    return out;
}

NetworkModel build_model(const std::vector<LayerSpec>& specs, const Shape& input_shape, std::size_t num_classes,
                         std::uint64_t rng_seed) {
    if (specs.empty() || specs.back().kind != LayerKind::Softmax)
        fail(ErrorCode::InvalidSpec, "layer stack must end in softmax");
    if (input_shape.empty() || shape_size(input_shape) == 0) fail(ErrorCode::ShapeMismatch, "empty input shape");

    Rng rng(rng_seed);
    std::vector<Layer> layers;
    Shape shape = input_shape;
    for (const auto& spec : specs) {
        Layer layer;
        layer.spec = spec;
        layer.input_shape = shape;
        layer.output_shape = infer_output_shape(spec, shape);
        if (spec.kind == LayerKind::Dense || spec.kind == LayerKind::Conv2d) {
            std::size_t fan_in = 0;
            std::size_t fan_out = 0;
            Shape w_shape;
            if (spec.kind == LayerKind::Dense) {
                fan_in = shape_size(shape);
                fan_out = spec.out_dim;
                w_shape = {spec.out_dim, fan_in};
            } else {
                const std::size_t area = spec.kernel_size * spec.kernel_size;
                fan_in = shape[0] * area;
                fan_out = spec.out_channels * area;
                w_shape = {spec.out_channels, shape[0], spec.kernel_size, spec.kernel_size};
            }
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            layer.weight = Tensor(w_shape);
            for (double& w : layer.weight.values()) w = rng.uniform(-bound, bound);
            layer.bias = Tensor(Shape{w_shape[0]});
        }
        shape = layer.output_shape;
        layers.push_back(std::move(layer));
    }
    return NetworkModel(input_shape, num_classes, std::move(layers));
}

// ---------------------------------------------------------------------------
// Forward / backward kernels

namespace {

/// Activations of one pass: acts[i] is the input of layer i, acts.back() the network output.
struct Trace {
    std::vector<std::vector<double>> acts;
    std::vector<std::vector<std::uint32_t>> pool_argmax;
    std::vector<std::vector<double>> dropout_scale;
};

struct ParamGrads {
    std::vector<std::vector<double>> weight;
    std::vector<std::vector<double>> bias;

    explicit ParamGrads(const NetworkModel& model) {
        for (const auto& l : model.layers()) {
            weight.emplace_back(l.weight.size(), 0.0);
            bias.emplace_back(l.bias.size(), 0.0);
        }
    }

    void zero() {
        for (auto& w : weight) std::fill(w.begin(), w.end(), 0.0);
        for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
    }
};

void conv_forward(const Layer& l, const double* in, double* out) {
    const std::size_t C = l.input_shape[0], H = l.input_shape[1], W = l.input_shape[2];
    const std::size_t O = l.output_shape[0], Ho = l.output_shape[1], Wo = l.output_shape[2];
    const std::size_t K = l.spec.kernel_size, S = l.spec.stride;
    const double* w = l.weight.values().data();
    for (std::size_t o = 0; o < O; ++o) {
        double* out_o = out + o * Ho * Wo;
        std::fill(out_o, out_o + Ho * Wo, l.bias[o]);
        for (std::size_t c = 0; c < C; ++c) {
            const double* in_c = in + c * H * W;
            for (std::size_t ky = 0; ky < K; ++ky) {
                for (std::size_t kx = 0; kx < K; ++kx) {
                    const double wv = w[((o * C + c) * K + ky) * K + kx];
                    for (std::size_t y = 0; y < Ho; ++y) {
                        const double* src = in_c + (y * S + ky) * W + kx;
                        double* dst = out_o + y * Wo;
                        if (S == 1) {
                            for (std::size_t x = 0; x < Wo; ++x) dst[x] += wv * src[x];
                        } else {
                            for (std::size_t x = 0; x < Wo; ++x) dst[x] += wv * src[x * S];
                        }
                    }
                }
            }
        }
    }
}

void conv_backward(const Layer& l, const double* in, const double* d_out, double* d_in, double* d_w, double* d_b) {
    const std::size_t C = l.input_shape[0], H = l.input_shape[1], W = l.input_shape[2];
    const std::size_t O = l.output_shape[0], Ho = l.output_shape[1], Wo = l.output_shape[2];
    const std::size_t K = l.spec.kernel_size, S = l.spec.stride;
    const double* w = l.weight.values().data();
    for (std::size_t o = 0; o < O; ++o) {
        const double* g_o = d_out + o * Ho * Wo;
        if (d_b) {
            double sum = 0.0;
            for (std::size_t i = 0; i < Ho * Wo; ++i) sum += g_o[i];
            d_b[o] += sum;
        }
        for (std::size_t c = 0; c < C; ++c) {
            const double* in_c = in + c * H * W;
            double* d_in_c = d_in ? d_in + c * H * W : nullptr;
            for (std::size_t ky = 0; ky < K; ++ky) {
                for (std::size_t kx = 0; kx < K; ++kx) {
                    const std::size_t wi = ((o * C + c) * K + ky) * K + kx;
                    const double wv = w[wi];
                    double acc = 0.0;
                    for (std::size_t y = 0; y < Ho; ++y) {
                        const double* g = g_o + y * Wo;
                        const std::size_t base = (y * S + ky) * W + kx;
                        if (d_w) {
                            for (std::size_t x = 0; x < Wo; ++x) acc += g[x] * in_c[base + x * S];
                        }
                        if (d_in_c) {
                            for (std::size_t x = 0; x < Wo; ++x) d_in_c[base + x * S] += wv * g[x];
                        }
                    }
                    if (d_w) d_w[wi] += acc;
                }
            }
        }
    }
}

void dense_forward(const Layer& l, const double* in, double* out) {
    const std::size_t O = l.spec.out_dim, I = shape_size(l.input_shape);
    const double* w = l.weight.values().data();
    for (std::size_t o = 0; o < O; ++o) {
        const double* row = w + o * I;
        double sum = 0.0;
        for (std::size_t i = 0; i < I; ++i) sum += row[i] * in[i];
        out[o] = sum + l.bias[o];
    }
}

void dense_backward(const Layer& l, const double* in, const double* d_out, double* d_in, double* d_w, double* d_b) {
    const std::size_t O = l.spec.out_dim, I = shape_size(l.input_shape);
    const double* w = l.weight.values().data();
    for (std::size_t o = 0; o < O; ++o) {
        const double g = d_out[o];
        if (g == 0.0) continue;
        if (d_b) d_b[o] += g;
        if (d_w) {
            double* dw = d_w + o * I;
            for (std::size_t i = 0; i < I; ++i) dw[i] += g * in[i];
        }
        if (d_in) {
            const double* row = w + o * I;
            for (std::size_t i = 0; i < I; ++i) d_in[i] += g * row[i];
        }
    }
}

void maxpool_forward(const Layer& l, const double* in, double* out, std::uint32_t* arg) {
    const std::size_t C = l.input_shape[0], H = l.input_shape[1], W = l.input_shape[2];
    const std::size_t Ho = l.output_shape[1], Wo = l.output_shape[2];
    const std::size_t P = l.spec.window, S = l.spec.stride;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t y = 0; y < Ho; ++y) {
            for (std::size_t x = 0; x < Wo; ++x) {
                std::size_t best = c * H * W + (y * S) * W + x * S;
                for (std::size_t py = 0; py < P; ++py) {
                    for (std::size_t px = 0; px < P; ++px) {
                        const std::size_t idx = c * H * W + (y * S + py) * W + x * S + px;
                        if (in[idx] > in[best]) best = idx;
                    }
                }
                const std::size_t o = (c * Ho + y) * Wo + x;
                out[o] = in[best];
                arg[o] = static_cast<std::uint32_t>(best);
            }
        }
    }
}

void softmax_forward(std::size_t n, const double* in, double* out) {
    const double m = *std::max_element(in, in + n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::exp(in[i] - m);
        sum += out[i];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= sum;
}

void run_forward(const NetworkModel& model, std::span<const double> x, DropoutMode mode, Trace& trace) {
    if (x.size() != model.input_size())
        fail(ErrorCode::ShapeMismatch, "input has " + std::to_string(x.size()) + " elements, model expects " +
                                           shape_to_string(model.input_shape()));
    const auto& layers = model.layers();
    trace.acts.resize(layers.size() + 1);
    trace.pool_argmax.resize(layers.size());
    trace.dropout_scale.resize(layers.size());
    trace.acts[0].assign(x.begin(), x.end());

    Rng rng(mode.seed);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Layer& l = layers[i];
        const std::vector<double>& in = trace.acts[i];
        std::vector<double>& out = trace.acts[i + 1];
        out.resize(shape_size(l.output_shape));
        switch (l.spec.kind) {
            case LayerKind::Conv2d: conv_forward(l, in.data(), out.data()); break;
            case LayerKind::Dense: dense_forward(l, in.data(), out.data()); break;
            case LayerKind::MaxPool2d:
                trace.pool_argmax[i].resize(out.size());
                maxpool_forward(l, in.data(), out.data(), trace.pool_argmax[i].data());
                break;
            case LayerKind::Relu:
                for (std::size_t k = 0; k < in.size(); ++k) out[k] = in[k] > 0.0 ? in[k] : 0.0;
                break;
            case LayerKind::Softmax: softmax_forward(in.size(), in.data(), out.data()); break;
            case LayerKind::Dropout: {
                auto& scale = trace.dropout_scale[i];
                const double keep = 1.0 - l.spec.rate;
                if (mode.sampled) {
                    scale.resize(in.size());
                    for (auto& s : scale) s = rng.bernoulli(keep) ? 1.0 : 0.0;
                } else {
                    scale.assign(in.size(), keep);
                }
                for (std::size_t k = 0; k < in.size(); ++k) out[k] = in[k] * scale[k];
                break;
            }
        }
    }
}

/// Back-propagates `grad` (gradient w.r.t. the output of layer `from`) towards the input.
/// Accumulates parameter gradients into `params` when given; returns the input gradient
/// when `want_input` is set (otherwise stops at the first layer with parameters).
std::vector<double> run_backward(const NetworkModel& model, const Trace& trace, std::size_t from,
                                 std::vector<double> grad, ParamGrads* params, bool want_input) {
    const auto& layers = model.layers();
    std::size_t first_param = 0;
    while (first_param < layers.size() && !layers[first_param].has_params()) ++first_param;

    std::vector<double> d_in;
    for (std::size_t step = from + 1; step-- > 0;) {
        const Layer& l = layers[step];
        const std::vector<double>& in = trace.acts[step];
        const bool need_d_in = want_input || step > first_param;
        d_in.assign(need_d_in ? in.size() : 0, 0.0);
        double* d_w = params ? params->weight[step].data() : nullptr;
        double* d_b = params ? params->bias[step].data() : nullptr;
        switch (l.spec.kind) {
            case LayerKind::Conv2d:
                conv_backward(l, in.data(), grad.data(), need_d_in ? d_in.data() : nullptr, d_w, d_b);
                break;
            case LayerKind::Dense:
                dense_backward(l, in.data(), grad.data(), need_d_in ? d_in.data() : nullptr, d_w, d_b);
                break;
            case LayerKind::MaxPool2d: {
                const auto& arg = trace.pool_argmax[step];
                for (std::size_t k = 0; k < grad.size(); ++k) d_in[arg[k]] += grad[k];
                break;
            }
            case LayerKind::Relu:
                for (std::size_t k = 0; k < in.size(); ++k) d_in[k] = in[k] > 0.0 ? grad[k] : 0.0;
                break;
            case LayerKind::Dropout: {
                const auto& scale = trace.dropout_scale[step];
                for (std::size_t k = 0; k < in.size(); ++k) d_in[k] = grad[k] * scale[k];
                break;
            }
            case LayerKind::Softmax: {
                const std::vector<double>& p = trace.acts[step + 1];
                double dot = 0.0;
                for (std::size_t k = 0; k < p.size(); ++k) dot += p[k] * grad[k];
                for (std::size_t k = 0; k < p.size(); ++k) d_in[k] = p[k] * (grad[k] - dot);
                break;
            }
        }
        if (!need_d_in) return {};
        grad.swap(d_in);
    }
    return grad;
}

/// Cross-entropy from logits via log-sum-exp.
double cross_entropy(std::span<const double> z, std::span<const double> y) {
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - m);
    const double lse = m + std::log(sum);
    double loss = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
        if (y[j] != 0.0) loss += y[j] * (lse - z[j]);
    }
    return loss;
}

void check_label(const NetworkModel& model, std::span<const double> y) {
    if (y.size() != model.num_classes())
        fail(ErrorCode::ShapeMismatch, "label has " + std::to_string(y.size()) + " entries, model has " +
                                           std::to_string(model.num_classes()) + " classes");
}

}  // namespace

ForwardOutput forward(const NetworkModel& model, std::span<const double> x, DropoutMode mode) {
    Trace trace;
    run_forward(model, x, mode, trace);
    const std::size_t logit = model.logit_layer();
    return {Tensor(Shape{model.num_classes()}, trace.acts.back()),
            Tensor(Shape{model.hidden_size()}, trace.acts[logit])};
}

Tensor logits(const NetworkModel& model, std::span<const double> x) {
    Trace trace;
    run_forward(model, x, DropoutMode::deterministic(), trace);
    return Tensor(Shape{model.num_classes()}, trace.acts[model.logit_layer() + 1]);
}

std::size_t predict(const NetworkModel& model, std::span<const double> x) {
    return argmax(forward(model, x).probs.values());
}

Tensor input_gradient(const NetworkModel& model, std::span<const double> x, std::span<const double> y_onehot) {
    check_label(model, y_onehot);
    Trace trace;
    run_forward(model, x, DropoutMode::deterministic(), trace);
    const auto& p = trace.acts.back();
    std::vector<double> grad(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) grad[j] = p[j] - y_onehot[j];
    return Tensor(model.input_shape(), run_backward(model, trace, model.logit_layer(), std::move(grad), nullptr, true));
}

Tensor logit_gradient(const NetworkModel& model, std::span<const double> x, std::span<const double> weights) {
    check_label(model, weights);
    Trace trace;
    run_forward(model, x, DropoutMode::deterministic(), trace);
    std::vector<double> grad(weights.begin(), weights.end());
    return Tensor(model.input_shape(), run_backward(model, trace, model.logit_layer(), std::move(grad), nullptr, true));
}

ClassJacobians class_jacobians(const NetworkModel& model, std::span<const double> x) {
    Trace trace;
    run_forward(model, x, DropoutMode::deterministic(), trace);
    const std::size_t C = model.num_classes(), N = model.input_size();
    ClassJacobians out;
    out.probs = Tensor(Shape{C}, trace.acts.back());
    out.logits = Tensor(Shape{C}, trace.acts[model.logit_layer() + 1]);
    out.d_logits = Tensor(Shape{C, N});
    out.d_probs = Tensor(Shape{C, N});
    for (std::size_t j = 0; j < C; ++j) {
        std::vector<double> unit(C, 0.0);
        unit[j] = 1.0;
        const auto row = run_backward(model, trace, model.logit_layer(), std::move(unit), nullptr, true);
        std::copy(row.begin(), row.end(), out.d_logits.row(j).begin());
    }
    // dF_j = F_j (dZ_j - sum_k F_k dZ_k)
    std::vector<double> mix(N, 0.0);
    for (std::size_t k = 0; k < C; ++k) {
        const auto dz = out.d_logits.row(k);
        for (std::size_t i = 0; i < N; ++i) mix[i] += out.probs[k] * dz[i];
    }
    for (std::size_t j = 0; j < C; ++j) {
        const auto dz = out.d_logits.row(j);
        auto df = out.d_probs.row(j);
        for (std::size_t i = 0; i < N; ++i) df[i] = out.probs[j] * (dz[i] - mix[i]);
    }
    return out;
}

std::vector<Tensor> sample_predictions(const NetworkModel& model, std::span<const double> x, std::size_t samples,
                                       std::uint64_t seed) {
    if (samples < 1) fail(ErrorCode::InvalidSpec, "sample count must be at least 1");
    std::vector<Tensor> out;
    out.reserve(samples);
    Trace trace;
    for (std::size_t t = 0; t < samples; ++t) {
        run_forward(model, x, DropoutMode::sample(derive_seed(seed, t)), trace);
        out.emplace_back(Shape{model.num_classes()}, trace.acts.back());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

void check_dataset(const NetworkModel& model, const Tensor& images, const Tensor& onehot) {
    if (images.rank() < 1 || onehot.rank() != 2 || images.shape()[0] != onehot.shape()[0])
        fail(ErrorCode::ShapeMismatch, "images " + shape_to_string(images.shape()) + " and labels " +
                                           shape_to_string(onehot.shape()) + " disagree");
    if (images.shape()[0] == 0) fail(ErrorCode::EmptyInput, "empty training set");
    if (images.size() / images.shape()[0] != model.input_size())
        fail(ErrorCode::ShapeMismatch, "sample size does not match model input " + shape_to_string(model.input_shape()));
    if (onehot.shape()[1] != model.num_classes())
        fail(ErrorCode::ShapeMismatch, "labels must have " + std::to_string(model.num_classes()) + " columns");
}

}  // namespace

double mean_loss(const NetworkModel& model, const Tensor& images, const Tensor& onehot) {
    check_dataset(model, images, onehot);
    const std::size_t n = images.shape()[0];
    double total = 0.0;
    Trace trace;
    for (std::size_t s = 0; s < n; ++s) {
        run_forward(model, images.row(s), DropoutMode::deterministic(), trace);
        total += cross_entropy(trace.acts[model.logit_layer() + 1], onehot.row(s));
    }
    return total / static_cast<double>(n);
}

TrainReport train(NetworkModel& model, const Tensor& images, const Tensor& onehot, const TrainConfig& config) {
    if (config.epochs < 1) fail(ErrorCode::InvalidSpec, "epochs must be at least 1");
    if (config.batch_size < 1) fail(ErrorCode::InvalidSpec, "batch_size must be at least 1");
    if (!(config.adadelta_rho > 0.0 && config.adadelta_rho < 1.0))
        fail(ErrorCode::InvalidSpec, "adadelta rho must lie in (0, 1)");
    if (!(config.adadelta_epsilon > 0.0)) fail(ErrorCode::InvalidSpec, "adadelta epsilon must be positive");
    check_dataset(model, images, onehot);

    TrainReport report;
    report.initial_loss = mean_loss(model, images, onehot);

    const std::size_t n = images.shape()[0];
    auto& layers = model.mutable_layers();
    ParamGrads grads(model);
    ParamGrads sq_grad(model);   // running E[g^2]
    ParamGrads sq_delta(model);  // running E[dx^2]
    const double rho = config.adadelta_rho, eps = config.adadelta_epsilon;

    auto adadelta = [&](std::vector<double>& g, std::vector<double>& eg2, std::vector<double>& edx2,
                        std::span<double> theta, double scale) {
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double gk = g[k] * scale;
            eg2[k] = rho * eg2[k] + (1.0 - rho) * gk * gk;
            const double delta = -std::sqrt(edx2[k] + eps) / std::sqrt(eg2[k] + eps) * gk;
            edx2[k] = rho * edx2[k] + (1.0 - rho) * delta * delta;
            theta[k] += config.learning_rate * delta;
        }
    };

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Trace trace;
    std::uint64_t example_counter = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle_rng = Rng::stream(config.rng_seed, 2 * epoch);
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t end = std::min(n, start + config.batch_size);
            grads.zero();
            double batch_loss = 0.0;
            for (std::size_t b = start; b < end; ++b) {
                const std::size_t s = order[b];
                const auto mask_seed = derive_seed(config.rng_seed ^ 0x5bd1e995ULL, example_counter++);
                run_forward(model, images.row(s), DropoutMode::sample(mask_seed), trace);
                const auto y = onehot.row(s);
                batch_loss += cross_entropy(trace.acts[model.logit_layer() + 1], y);
                const auto& p = trace.acts.back();
                std::vector<double> g(p.size());
                for (std::size_t j = 0; j < p.size(); ++j) g[j] = p[j] - y[j];
                run_backward(model, trace, model.logit_layer(), std::move(g), &grads, false);
            }
            if (!std::isfinite(batch_loss))
                fail(ErrorCode::NonFiniteLoss, "non-finite loss in epoch " + std::to_string(epoch));
            epoch_loss += batch_loss;
            const double scale = 1.0 / static_cast<double>(end - start);
            for (std::size_t li = 0; li < layers.size(); ++li) {
                if (!layers[li].has_params()) continue;
                adadelta(grads.weight[li], sq_grad.weight[li], sq_delta.weight[li], layers[li].weight.values(), scale);
                adadelta(grads.bias[li], sq_grad.bias[li], sq_delta.bias[li], layers[li].bias.values(), scale);
            }
        }
        report.epoch_losses.push_back(epoch_loss / static_cast<double>(n));
    }
    report.final_loss = mean_loss(model, images, onehot);
    if (!std::isfinite(report.final_loss)) fail(ErrorCode::NonFiniteLoss, "non-finite final loss");
    return report;
}

double accuracy(const NetworkModel& model, const Tensor& images, std::span<const int> labels) {
    const std::size_t n = labels.size();
    if (n == 0) fail(ErrorCode::EmptyInput, "empty evaluation set");
    std::size_t correct = 0;
    for (std::size_t s = 0; s < n; ++s) correct += predict(model, images.row(s)) == static_cast<std::size_t>(labels[s]);
    return static_cast<double>(correct) / static_cast<double>(n);
}

Tensor one_hot(std::span<const int> labels, std::size_t num_classes) {
    Tensor out(Shape{labels.size(), num_classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
            fail(ErrorCode::InvalidSpec, "label " + std::to_string(labels[i]) + " out of range");
        out.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    return out;
}

}  // namespace advdet
