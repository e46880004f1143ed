#include "test_networks.hpp"

#include <algorithm>
#include <cmath>

namespace splitkit::testing {

Tensor random_tensor(Rng& rng, std::vector<std::int64_t> shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

Tensor matmul_ref(const Tensor& a, const Tensor& b) {
    const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::int64_t p = 0; p < k; ++p) acc += a.at2(i, p) * b.at2(p, j);
            c.at2(i, j) = acc;
        }
    }
    return c;
}

Tensor im2col(const Tensor& input, std::int64_t kh, std::int64_t kw,
              std::array<std::int64_t, 2> stride, std::array<std::int64_t, 2> padding) {
    const std::int64_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const std::int64_t Ho = (H + 2 * padding[0] - kh) / stride[0] + 1;
    const std::int64_t Wo = (W + 2 * padding[1] - kw) / stride[1] + 1;
    Tensor cols({C * kh * kw, Ho * Wo});
    for (std::int64_t c = 0; c < C; ++c) {
        for (std::int64_t ky = 0; ky < kh; ++ky) {
            for (std::int64_t kx = 0; kx < kw; ++kx) {
                const std::int64_t row = (c * kh + ky) * kw + kx;
                for (std::int64_t oy = 0; oy < Ho; ++oy) {
                    for (std::int64_t ox = 0; ox < Wo; ++ox) {
                        const std::int64_t iy = oy * stride[0] - padding[0] + ky;
                        const std::int64_t ix = ox * stride[1] - padding[1] + kx;
                        double v = 0.0;
                        if (iy >= 0 && iy < H && ix >= 0 && ix < W) v = input.at3(c, iy, ix);
                        cols.at2(row, oy * Wo + ox) = v;
                    }
                }
            }
        }
    }
    return cols;
}

Tensor conv2d_via_im2col(const Tensor& input, const Tensor& kernel,
                         std::array<std::int64_t, 2> stride, std::array<std::int64_t, 2> padding) {
    const std::int64_t F = kernel.dim(0), C = kernel.dim(1);
    const std::int64_t kh = kernel.dim(2), kw = kernel.dim(3);
    const Tensor cols = im2col(input, kh, kw, stride, padding);
    const Tensor flat = kernel.reshaped({F, C * kh * kw});
    const Tensor prod = matmul_ref(flat, cols);
    const std::int64_t H = input.dim(1), W = input.dim(2);
    const std::int64_t Ho = (H + 2 * padding[0] - kh) / stride[0] + 1;
    const std::int64_t Wo = (W + 2 * padding[1] - kw) / stride[1] + 1;
    return prod.reshaped({F, Ho, Wo});
}

Tensor maxpool_ref(const Tensor& input, std::int64_t k, std::int64_t stride) {
    const std::int64_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const std::int64_t Ho = (H - k) / stride + 1;
    const std::int64_t Wo = (W - k) / stride + 1;
    Tensor out({C, Ho, Wo});
    for (std::int64_t c = 0; c < C; ++c) {
        for (std::int64_t oy = 0; oy < Ho; ++oy) {
            for (std::int64_t ox = 0; ox < Wo; ++ox) {
                double best = input.at3(c, oy * stride, ox * stride);
                for (std::int64_t ky = 0; ky < k; ++ky) {
                    for (std::int64_t kx = 0; kx < k; ++kx) {
                        best = std::max(best, input.at3(c, oy * stride + ky, ox * stride + kx));
                    }
                }
                out.at3(c, oy, ox) = best;
            }
        }
    }
    return out;
}

namespace {

Tensor scaled_weights(Rng& rng, std::vector<std::int64_t> shape, std::int64_t fan_in,
                      double lo = -1.0, bool positive_row_mass = false) {
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor w(std::move(shape));
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = s * rng.uniform(lo, 1.0);
    if (positive_row_mass) {
        const std::int64_t rows = w.dim(0);
        const std::int64_t per = w.size() / rows;
        // For conv kernels the guaranteed entry sits at the kernel center of
        // channel 0, which stays inside the padded input for every output.
        std::int64_t anchor = -1;
        if (w.rank() == 4) anchor = (w.dim(2) / 2) * w.dim(3) + w.dim(3) / 2;
        for (std::int64_t r = 0; r < rows; ++r) {
            double best = 0.0;
            for (std::int64_t j = 0; j < per; ++j) best = std::max(best, w[r * per + j]);
            if (best < 0.2 * s || anchor >= 0) {
                const std::int64_t at = anchor >= 0 ? anchor : rng.uniform_int(0, per - 1);
                if (w[r * per + at] < 0.2 * s) w[r * per + at] = s * rng.uniform(0.5, 1.0);
            }
        }
    }
    return w;
}

}  // namespace

Network random_mixed_network(Rng& rng, const MixedNetOptions& opt) {
    Network net;
    const bool conv_mode = opt.allow_conv && rng.coin(0.5);
    const int blocks = static_cast<int>(rng.uniform_int(1, std::max(1, opt.max_blocks - 1)));
    if (conv_mode) {
        std::int64_t C = rng.uniform_int(1, 2);
        std::int64_t H = rng.uniform_int(6, 9);
        net.input_shape = {C, H, H};
        for (int b = 0; b < blocks; ++b) {
            const double pick = rng.uniform();
            if (pick < 0.25 && opt.allow_residual && b + 1 < blocks) {
                net.layers.push_back(Layer::residual_start());
                Tensor k = scaled_weights(rng, {C, C, 3, 3}, C * 9, opt.weight_lo, opt.positive_row_mass);
                net.layers.push_back(Layer::conv2d(std::move(k), {1, 1}, {1, 1}));
                if (opt.allow_bias && rng.coin()) {
                    net.layers.push_back(Layer::bias_layer(random_tensor(rng, {C}, opt.bias_lo, 0.3)));
                }
                net.layers.push_back(Layer::relu());
                net.layers.push_back(Layer::residual_end());
            } else if (pick < 0.45 && opt.allow_pool && H >= 4) {
                if (rng.coin()) {
                    net.layers.push_back(Layer::maxpool2d(2, 2));
                } else {
                    net.layers.push_back(Layer::avgpool2d(2, 2));
                }
                H = (H - 2) / 2 + 1;
            } else {
                const std::int64_t F = rng.uniform_int(1, 3);
                Tensor k = scaled_weights(rng, {F, C, 3, 3}, C * 9, opt.weight_lo, opt.positive_row_mass);
                net.layers.push_back(Layer::conv2d(std::move(k), {1, 1}, {1, 1}));
                C = F;
                if (opt.allow_batchnorm && rng.coin(0.4)) {
                    Tensor gamma = random_tensor(rng, {C}, 0.5, 1.5);
                    Tensor beta = random_tensor(rng, {C}, -0.3, 0.3);
                    Tensor mean = random_tensor(rng, {C}, -0.5, 0.5);
                    Tensor var = random_tensor(rng, {C}, 0.5, 2.0);
                    net.layers.push_back(
                        Layer::batchnorm_eval(std::move(gamma), std::move(beta), std::move(mean),
                                              std::move(var), 1e-5));
                } else if (opt.allow_bias && rng.coin()) {
                    net.layers.push_back(Layer::bias_layer(random_tensor(rng, {C}, opt.bias_lo, 0.3)));
                }
                net.layers.push_back(Layer::relu());
            }
        }
        net.layers.push_back(Layer::flatten());
        const std::int64_t out_dim = rng.uniform_int(1, 3);
        net.layers.push_back(Layer::linear(scaled_weights(rng, {out_dim, C * H * H}, C * H * H, opt.weight_lo, opt.positive_row_mass)));
    } else {
        std::int64_t width = rng.uniform_int(2, opt.max_width);
        net.input_shape = {width};
        for (int b = 0; b < blocks; ++b) {
            const double pick = rng.uniform();
            if (pick < 0.2 && opt.allow_residual && b + 1 < blocks) {
                net.layers.push_back(Layer::residual_start());
                net.layers.push_back(Layer::linear(scaled_weights(rng, {width, width}, width, opt.weight_lo, opt.positive_row_mass)));
                if (opt.allow_bias && rng.coin()) {
                    net.layers.push_back(Layer::bias_layer(random_tensor(rng, {width}, opt.bias_lo, 0.3)));
                }
                net.layers.push_back(Layer::relu());
                net.layers.push_back(Layer::residual_end());
            } else if (pick < 0.35 && opt.allow_maxout) {
                const std::int64_t next = rng.uniform_int(2, opt.max_width / 2);
                net.layers.push_back(Layer::linear(scaled_weights(rng, {2 * next, width}, width, opt.weight_lo, opt.positive_row_mass)));
                net.layers.push_back(Layer::maxout_rank2());
                width = next;
            } else {
                const std::int64_t next = rng.uniform_int(2, opt.max_width);
                net.layers.push_back(Layer::linear(scaled_weights(rng, {next, width}, width, opt.weight_lo, opt.positive_row_mass)));
                width = next;
                if (opt.allow_bias && rng.coin()) {
                    net.layers.push_back(Layer::bias_layer(random_tensor(rng, {width}, opt.bias_lo, 0.3)));
                }
                net.layers.push_back(Layer::relu());
            }
        }
        const std::int64_t out_dim = rng.uniform_int(1, 3);
        net.layers.push_back(Layer::linear(scaled_weights(rng, {out_dim, width}, width, opt.weight_lo, opt.positive_row_mass)));
    }
    net.validate();
    return net;
}

Network random_relu_mlp(Rng& rng, int min_blocks, int max_blocks, std::int64_t max_width,
                        bool final_relu, double weight_scale) {
    const int blocks = static_cast<int>(rng.uniform_int(min_blocks, max_blocks));
    Network net;
    std::int64_t width = rng.uniform_int(2, max_width);
    net.input_shape = {width};
    for (int b = 0; b < blocks; ++b) {
        const std::int64_t next = b + 1 == blocks ? rng.uniform_int(1, 3)
                                                  : rng.uniform_int(2, max_width);
        Tensor w({next, width});
        const double s =
            weight_scale > 0.0 ? weight_scale : 1.0 / std::sqrt(static_cast<double>(width));
        for (std::int64_t i = 0; i < w.size(); ++i) w[i] = s * rng.uniform(-1.0, 1.0);
        net.layers.push_back(Layer::linear(std::move(w)));
        width = next;
        if (b + 1 < blocks || final_relu) net.layers.push_back(Layer::relu());
    }
    net.validate();
    return net;
}

Tensor random_input_for(Rng& rng, const Network& net, double lo, double hi) {
    return random_tensor(rng, net.input_shape, lo, hi);
}

MultNet random_multnet(Rng& rng, const MultNetGenOptions& opt) {
    MultNet g;
    const int n_inputs = static_cast<int>(rng.uniform_int(1, opt.max_inputs));
    for (int i = 0; i < n_inputs; ++i) {
        MultNeuron in;
        in.kind = MultNeuronKind::Input;
        g.neurons.push_back(in);
        g.inputs.push_back(i);
    }
    const int total = static_cast<int>(rng.uniform_int(n_inputs + 1, opt.max_neurons));
    for (int v = n_inputs; v < total; ++v) {
        MultNeuron nu;
        if (!opt.no_multiplication && rng.coin(0.35)) {
            nu.kind = MultNeuronKind::Multiplication;
            const int fan = static_cast<int>(rng.uniform_int(1, opt.max_fan_in));
            for (int a = 0; a < fan; ++a) {
                MultiplicationArc arc;
                arc.from_pos = rng.uniform_int(0, v - 1);
                arc.exponent = rng.uniform_int(1, opt.max_exponent);
                nu.mul_in.push_back(arc);
            }
        } else {
            nu.kind = MultNeuronKind::Addition;
            nu.rank = rng.uniform_int(1, 2);
            const int fan = static_cast<int>(rng.uniform_int(1, opt.max_fan_in));
            for (int a = 0; a < fan; ++a) {
                AdditionArc arc;
                arc.from = rng.uniform_int(0, v - 1);
                for (std::int64_t i = 0; i < nu.rank; ++i) {
                    const double lo = opt.nonneg_weights ? 0.0 : -1.0;
                    arc.weights.push_back(rng.uniform(lo, 1.0));
                }
                nu.add_in.push_back(arc);
            }
        }
        g.neurons.push_back(std::move(nu));
    }
    g.output = total - 1;
    g.validate();
    return g;
}

}  // namespace splitkit::testing
