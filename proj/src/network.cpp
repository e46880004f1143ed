#include "splitkit/network.hpp"

#include <cmath>

#include "splitkit/error.hpp"

namespace splitkit {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Linear: return "Linear";
        case LayerKind::Conv2d: return "Conv2d";
        case LayerKind::ReLU: return "ReLU";
        case LayerKind::MaxoutRank2: return "MaxoutRank2";
        case LayerKind::MaxPool2d: return "MaxPool2d";
        case LayerKind::AvgPool2d: return "AvgPool2d";
        case LayerKind::BatchNormEval: return "BatchNormEval";
        case LayerKind::Bias: return "Bias";
        case LayerKind::ResidualAddStart: return "ResidualAddStart";
        case LayerKind::ResidualAddEnd: return "ResidualAddEnd";
        case LayerKind::Flatten: return "Flatten";
    }
    return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
    for (int k = 0; k <= static_cast<int>(LayerKind::Flatten); ++k) {
        if (name == layer_kind_name(static_cast<LayerKind>(k))) return static_cast<LayerKind>(k);
    }
    throw LoadError("unknown layer kind '" + name + "'");
}

Layer Layer::linear(Tensor w) {
    Layer l{LayerKind::Linear};
    if (w.rank() != 2) throw ShapeError("Linear weight must be 2-d, got " + w.shape_str());
    l.weight = std::move(w);
    return l;
}

Layer Layer::conv2d(Tensor w, std::array<std::int64_t, 2> stride,
                    std::array<std::int64_t, 2> padding) {
    Layer l{LayerKind::Conv2d};
    if (w.rank() != 4) throw ShapeError("Conv2d kernel must be 4-d, got " + w.shape_str());
    l.weight = std::move(w);
    l.stride = stride;
    l.padding = padding;
    return l;
}

Layer Layer::relu() { return Layer{LayerKind::ReLU}; }
Layer Layer::maxout_rank2() { return Layer{LayerKind::MaxoutRank2}; }

Layer Layer::maxpool2d(std::int64_t k, std::int64_t stride) {
    Layer l{LayerKind::MaxPool2d};
    l.pool_k = k;
    l.pool_stride = stride;
    return l;
}

Layer Layer::avgpool2d(std::int64_t k, std::int64_t stride) {
    Layer l{LayerKind::AvgPool2d};
    l.pool_k = k;
    l.pool_stride = stride;
    return l;
}

Layer Layer::batchnorm_eval(Tensor gamma, Tensor beta, Tensor mean, Tensor var, double eps) {
    Layer l{LayerKind::BatchNormEval};
    for (std::int64_t i = 0; i < var.size(); ++i) {
        if (var[i] <= 0.0) throw ShapeError("BatchNormEval variance entries must be positive");
    }
    l.gamma = std::move(gamma);
    l.beta = std::move(beta);
    l.mean = std::move(mean);
    l.var = std::move(var);
    l.eps = eps;
    return l;
}

Layer Layer::bias_layer(Tensor b) {
    Layer l{LayerKind::Bias};
    l.bias = std::move(b);
    return l;
}

Layer Layer::residual_start() { return Layer{LayerKind::ResidualAddStart}; }
Layer Layer::residual_end() { return Layer{LayerKind::ResidualAddEnd}; }
Layer Layer::flatten() { return Layer{LayerKind::Flatten}; }

namespace {

std::vector<std::int64_t> layer_out_shape(const Layer& l, const std::vector<std::int64_t>& in,
                                          std::size_t index) {
    const std::string where = "layer " + std::to_string(index) + " (" + layer_kind_name(l.kind) + ")";
    switch (l.kind) {
        case LayerKind::Linear: {
            if (in.size() != 1 || l.weight.dim(1) != in[0]) {
                throw ShapeError(where + ": weight " + l.weight.shape_str() +
                                 " incompatible with input width " +
                                 std::to_string(shape_product(in)));
            }
            return {l.weight.dim(0)};
        }
        case LayerKind::Conv2d: {
            if (in.size() != 3 || l.weight.dim(1) != in[0]) {
                throw ShapeError(where + ": kernel " + l.weight.shape_str() +
                                 " incompatible with input shape");
            }
            const std::int64_t H = in[1], W = in[2];
            const std::int64_t kh = l.weight.dim(2), kw = l.weight.dim(3);
            if (kh > H + 2 * l.padding[0] || kw > W + 2 * l.padding[1]) {
                throw ShapeError(where + ": kernel larger than padded input");
            }
            return {l.weight.dim(0), (H + 2 * l.padding[0] - kh) / l.stride[0] + 1,
                    (W + 2 * l.padding[1] - kw) / l.stride[1] + 1};
        }
        case LayerKind::ReLU:
            return in;
        case LayerKind::MaxoutRank2: {
            if (in.size() != 1 || in[0] % 2 != 0) {
                throw ShapeError(where + ": needs an even 1-d input, got width " +
                                 std::to_string(shape_product(in)));
            }
            return {in[0] / 2};
        }
        case LayerKind::MaxPool2d:
        case LayerKind::AvgPool2d:
            return pool_geometry(in, l.pool_k, l.pool_stride).out_shape;
        case LayerKind::BatchNormEval: {
            const std::int64_t C = in[0];
            if (l.gamma.size() != C || l.beta.size() != C || l.mean.size() != C ||
                l.var.size() != C) {
                throw ShapeError(where + ": parameter size != channel count " + std::to_string(C));
            }
            return in;
        }
        case LayerKind::Bias: {
            const std::int64_t n = shape_product(in);
            const bool per_channel = in.size() == 3 && l.bias.size() == in[0];
            if (!per_channel && l.bias.size() != n) {
                throw ShapeError(where + ": bias size " + std::to_string(l.bias.size()) +
                                 " matches neither activation count " + std::to_string(n) +
                                 " nor channel count");
            }
            return in;
        }
        case LayerKind::ResidualAddStart:
        case LayerKind::ResidualAddEnd:
            return in;
        case LayerKind::Flatten:
            return {shape_product(in)};
    }
    throw ShapeError(where + ": unhandled kind");
}

}  // namespace

std::vector<std::vector<std::int64_t>> Network::position_shapes() const {
    std::vector<std::vector<std::int64_t>> shapes;
    shapes.reserve(layers.size() + 1);
    shapes.push_back(input_shape);
    std::vector<std::vector<std::int64_t>> residual_stack;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Layer& l = layers[i];
        if (l.kind == LayerKind::ResidualAddStart) {
            residual_stack.push_back(shapes.back());
        } else if (l.kind == LayerKind::ResidualAddEnd) {
            if (residual_stack.empty()) {
                throw ShapeError("layer " + std::to_string(i) +
                                 ": ResidualAddEnd without matching start");
            }
            if (residual_stack.back() != shapes.back()) {
                throw ShapeError("layer " + std::to_string(i) +
                                 ": residual branch shapes disagree");
            }
            residual_stack.pop_back();
        }
        shapes.push_back(layer_out_shape(l, shapes.back(), i));
    }
    if (!residual_stack.empty()) throw ShapeError("unclosed ResidualAddStart");
    return shapes;
}

namespace {

Tensor apply_bias(const Tensor& x, const Tensor& b) {
    Tensor out = x;
    if (x.rank() == 3 && b.size() == x.dim(0)) {
        const std::int64_t C = x.dim(0), HW = x.dim(1) * x.dim(2);
        for (std::int64_t c = 0; c < C; ++c) {
            for (std::int64_t i = 0; i < HW; ++i) out[c * HW + i] += b[c];
        }
        return out;
    }
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor apply_batchnorm(const Tensor& x, const Layer& l) {
    Tensor out = x;
    const std::int64_t C = x.dim(0);
    const std::int64_t inner = x.size() / C;
    for (std::int64_t c = 0; c < C; ++c) {
        const double s = l.gamma[c] / std::sqrt(l.var[c] + l.eps);
        const double off = l.beta[c] - l.mean[c] * s;
        for (std::int64_t i = 0; i < inner; ++i) out[c * inner + i] = out[c * inner + i] * s + off;
    }
    return out;
}

}  // namespace

Trace forward(const Network& net, const Tensor& x) {
    if (x.shape() != net.input_shape) {
        throw ShapeError("forward: input shape " + x.shape_str() + " does not match network");
    }
    Trace tr;
    tr.values.reserve(net.layers.size() + 1);
    tr.values.push_back(x);
    std::vector<Tensor> residual_stack;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const Layer& l = net.layers[i];
        const Tensor& a = tr.values.back();
        switch (l.kind) {
            case LayerKind::Linear: {
                Tensor col = a.reshaped({a.size(), 1});
                tr.values.push_back(matmul(l.weight, col).reshaped({l.weight.dim(0)}));
                break;
            }
            case LayerKind::Conv2d:
                tr.values.push_back(conv2d(a, l.weight, l.stride, l.padding));
                break;
            case LayerKind::ReLU:
                tr.values.push_back(relu(a));
                break;
            case LayerKind::MaxoutRank2: {
                const std::int64_t d = a.size() / 2;
                Tensor out({d});
                for (std::int64_t j = 0; j < d; ++j) out[j] = std::max(a[j], a[d + j]);
                tr.values.push_back(std::move(out));
                break;
            }
            case LayerKind::MaxPool2d:
                tr.values.push_back(maxpool2d(a, l.pool_k, l.pool_stride).values);
                break;
            case LayerKind::AvgPool2d:
                tr.values.push_back(avgpool2d(a, l.pool_k, l.pool_stride));
                break;
            case LayerKind::BatchNormEval:
                tr.values.push_back(apply_batchnorm(a, l));
                break;
            case LayerKind::Bias:
                tr.values.push_back(apply_bias(a, l.bias));
                break;
            case LayerKind::ResidualAddStart:
                residual_stack.push_back(a);
                tr.values.push_back(a);
                break;
            case LayerKind::ResidualAddEnd:
                tr.values.push_back(add(a, residual_stack.back()));
                residual_stack.pop_back();
                break;
            case LayerKind::Flatten:
                tr.values.push_back(a.reshaped({a.size()}));
                break;
        }
    }
    return tr;
}

GradTrace backward(const Network& net, const Trace& trace, std::int64_t out_index) {
    if (trace.values.size() != net.layers.size() + 1) {
        throw ShapeError("backward: trace does not belong to this network");
    }
    const Tensor& out = trace.output();
    if (out_index < 0 || out_index >= out.size()) {
        throw ShapeError("backward: out_index " + std::to_string(out_index) + " out of range");
    }
    GradTrace gt;
    gt.out_index = out_index;
    gt.grads.resize(trace.values.size());
    Tensor seed = Tensor::zeros_like(out);
    seed[out_index] = 1.0;
    gt.grads.back() = std::move(seed);

    // Residual ends feed gradient back to their start markers.
    std::vector<Tensor> pending;
    for (std::size_t pos = net.layers.size(); pos-- > 0;) {
        const Layer& l = net.layers[pos];
        const Tensor& gout = gt.grads[pos + 1];
        const Tensor& ain = trace.values[pos];
        Tensor gin;
        switch (l.kind) {
            case LayerKind::Linear: {
                gin = Tensor({ain.size()});
                const Tensor& w = l.weight;
                for (std::int64_t i = 0; i < w.dim(0); ++i) {
                    const double g = gout[i];
                    if (g == 0.0) continue;
                    for (std::int64_t j = 0; j < w.dim(1); ++j) gin[j] += g * w.at2(i, j);
                }
                break;
            }
            case LayerKind::Conv2d:
                gin = conv2d_input_grad(gout, l.weight, l.stride, l.padding, ain.shape());
                break;
            case LayerKind::ReLU: {
                gin = gout;
                for (std::int64_t i = 0; i < gin.size(); ++i) {
                    if (ain[i] < 0.0) gin[i] = 0.0;  // active at exactly 0
                }
                break;
            }
            case LayerKind::MaxoutRank2: {
                const std::int64_t d = ain.size() / 2;
                gin = Tensor({ain.size()});
                for (std::int64_t j = 0; j < d; ++j) {
                    if (ain[j] >= ain[d + j]) {
                        gin[j] = gout[j];
                    } else {
                        gin[d + j] = gout[j];
                    }
                }
                break;
            }
            case LayerKind::MaxPool2d: {
                const MaxPoolResult mp = maxpool2d(ain, l.pool_k, l.pool_stride);
                gin = Tensor(ain.shape());
                for (std::size_t o = 0; o < mp.argmax.size(); ++o) {
                    gin[mp.argmax[o]] += gout[static_cast<std::int64_t>(o)];
                }
                break;
            }
            case LayerKind::AvgPool2d:
                gin = avgpool2d_input_grad(gout, l.pool_k, l.pool_stride, ain.shape());
                break;
            case LayerKind::BatchNormEval: {
                gin = gout;
                const std::int64_t C = ain.dim(0);
                const std::int64_t inner = ain.size() / C;
                for (std::int64_t c = 0; c < C; ++c) {
                    const double s = l.gamma[c] / std::sqrt(l.var[c] + l.eps);
                    for (std::int64_t i = 0; i < inner; ++i) gin[c * inner + i] *= s;
                }
                break;
            }
            case LayerKind::Bias:
                gin = gout;
                break;
            case LayerKind::ResidualAddStart: {
                gin = gout;
                if (pending.empty()) throw ShapeError("backward: residual stack underflow");
                gin = add(gin, pending.back());
                pending.pop_back();
                break;
            }
            case LayerKind::ResidualAddEnd:
                gin = gout;
                pending.push_back(gout);
                break;
            case LayerKind::Flatten:
                gin = gout.reshaped(ain.shape());
                break;
        }
        gt.grads[pos] = std::move(gin);
    }
    return gt;
}

Tensor finite_diff_grad(const Network& net, const Tensor& x, std::int64_t out_index, double h) {
    if (h <= 0.0) throw ConfigError("finite_diff_grad: h must be positive");
    Tensor grad(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) {
        Tensor xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const double fp = forward(net, xp).output()[out_index];
        const double fm = forward(net, xm).output()[out_index];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

Network merge_batchnorm(const Network& net) {
    Network out;
    out.input_shape = net.input_shape;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const Layer& l = net.layers[i];
        if (l.kind != LayerKind::BatchNormEval) {
            out.layers.push_back(l);
            continue;
        }
        // Find the Linear/Conv2d this normalization follows, allowing one
        // Bias layer in between.
        std::size_t n = out.layers.size();
        std::size_t host = n;          // index of Linear/Conv2d in out.layers
        std::size_t bias_at = n;       // index of Bias in out.layers, if any
        if (n >= 1 && (out.layers[n - 1].kind == LayerKind::Linear ||
                       out.layers[n - 1].kind == LayerKind::Conv2d)) {
            host = n - 1;
        } else if (n >= 2 && out.layers[n - 1].kind == LayerKind::Bias &&
                   (out.layers[n - 2].kind == LayerKind::Linear ||
                    out.layers[n - 2].kind == LayerKind::Conv2d)) {
            host = n - 2;
            bias_at = n - 1;
        } else {
            throw ShapeError("merge_batchnorm: layer " + std::to_string(i) +
                             " does not follow a Linear/Conv2d");
        }

        Layer& hw = out.layers[host];
        const std::int64_t C = l.gamma.size();
        const std::int64_t out_ch = hw.weight.dim(0);
        if (out_ch != C) throw ShapeError("merge_batchnorm: channel mismatch");
        const std::int64_t per = hw.weight.size() / out_ch;
        Tensor b({C});
        if (bias_at != n) {
            const Tensor& ob = out.layers[bias_at].bias;
            if (ob.size() != C) {
                throw ShapeError("merge_batchnorm: only per-channel bias can be merged");
            }
            b = ob;
        }
        for (std::int64_t c = 0; c < C; ++c) {
            const double s = l.gamma[c] / std::sqrt(l.var[c] + l.eps);
            for (std::int64_t j = 0; j < per; ++j) hw.weight[c * per + j] *= s;
            b[c] = (b[c] - l.mean[c]) * s + l.beta[c];
        }
        if (bias_at != n) {
            out.layers[bias_at].bias = std::move(b);
        } else {
            out.layers.push_back(Layer::bias_layer(std::move(b)));
        }
    }
    out.validate();
    return out;
}

Network random_network(const RandomNetSpec& spec, std::uint64_t seed) {
    if (spec.widths.size() < 2) throw ConfigError("random_network: need at least two widths");
    Rng rng = Rng(seed).stream("random_network");
    Network net;
    net.input_shape = {spec.widths[0]};
    for (std::size_t i = 1; i < spec.widths.size(); ++i) {
        const std::int64_t rows = spec.widths[i], cols = spec.widths[i - 1];
        const double s =
            spec.weight_scale > 0.0 ? spec.weight_scale : 1.0 / std::sqrt(static_cast<double>(cols));
        Tensor w({rows, cols});
        for (std::int64_t j = 0; j < w.size(); ++j) w[j] = s * rng.uniform(-1.0, 1.0);
        net.layers.push_back(Layer::linear(std::move(w)));
        if (spec.bias) {
            Tensor b({rows});
            for (std::int64_t j = 0; j < rows; ++j) b[j] = 0.1 * rng.uniform(-1.0, 1.0);
            net.layers.push_back(Layer::bias_layer(std::move(b)));
        }
        if (i + 1 < spec.widths.size() || spec.final_relu) net.layers.push_back(Layer::relu());
    }
    return net;
}

Network reinit_last_weight_layers(const Network& net, int count, std::uint64_t seed) {
    Network out = net;
    Rng rng = Rng(seed).stream("reinit");
    int remaining = count;
    for (std::size_t i = out.layers.size(); i-- > 0 && remaining > 0;) {
        Layer& l = out.layers[i];
        if (l.kind != LayerKind::Linear && l.kind != LayerKind::Conv2d) continue;
        const std::int64_t fan_in =
            l.kind == LayerKind::Linear ? l.weight.dim(1)
                                        : l.weight.dim(1) * l.weight.dim(2) * l.weight.dim(3);
        const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::int64_t j = 0; j < l.weight.size(); ++j) l.weight[j] = s * rng.gaussian();
        --remaining;
    }
    return out;
}

}  // namespace splitkit
