#include "splitkit/stabilization.hpp"

#include <algorithm>
#include <cmath>

#include "splitkit/error.hpp"

namespace splitkit {

std::pair<Tensor, Tensor> shift_pair(const Tensor& ap, const Tensor& an, const Tensor& c) {
    if (!ap.same_shape(an) || !ap.same_shape(c)) throw ShapeError("shift_pair: shape mismatch");
    return {add(ap, c), add(an, c)};
}

std::pair<Tensor, Tensor> stabilize_forward(const Tensor& ap, const Tensor& an,
                                            ForwardStabMode mode, double theta, double big_theta,
                                            const Tensor* reference, double* applied_scale) {
    if (!ap.same_shape(an)) throw ShapeError("stabilize_forward: stream shapes disagree");
    if (applied_scale) *applied_scale = 1.0;
    switch (mode) {
        case ForwardStabMode::None:
            return {ap, an};
        case ForwardStabMode::ShiftToHalf: {
            (void)reference;  // the reference cancels out of the shared shift
            Tensor c = scale(add(ap, an), -0.5);
            return shift_pair(ap, an, c);
        }
        case ForwardStabMode::ScaleThreshold: {
            if (!(theta > 0.0 && theta <= 1.0)) throw ConfigError("stabilize_forward: bad theta");
            if (!(big_theta > 0.0)) throw ConfigError("stabilize_forward: bad threshold");
            Tensor p = ap, n = an;
            double s = 1.0;
            int guard = 0;
            while (std::max(p.max_abs(), n.max_abs()) > big_theta && theta < 1.0 &&
                   guard++ < 1024) {
                p = scale(p, theta);
                n = scale(n, theta);
                s *= theta;
            }
            if (applied_scale) *applied_scale = s;
            return {std::move(p), std::move(n)};
        }
    }
    throw ConfigError("stabilize_forward: unknown mode");
}

std::pair<Tensor, Tensor> forward_correct(const Tensor& ap, const Tensor& an,
                                          const Tensor& a_orig) {
    if (!ap.same_shape(an) || !ap.same_shape(a_orig)) {
        throw ShapeError("forward_correct: shape mismatch");
    }
    return {add(an, a_orig), an};
}

namespace {

Tensor conv2d_as_matrix(const Layer& l, const std::vector<std::int64_t>& in_shape) {
    const std::int64_t C = in_shape[0], H = in_shape[1], W = in_shape[2];
    const std::int64_t F = l.weight.dim(0), kh = l.weight.dim(2), kw = l.weight.dim(3);
    const std::int64_t sh = l.stride[0], sw = l.stride[1], ph = l.padding[0], pw = l.padding[1];
    const std::int64_t Ho = (H + 2 * ph - kh) / sh + 1;
    const std::int64_t Wo = (W + 2 * pw - kw) / sw + 1;
    Tensor m({F * Ho * Wo, C * H * W});
    for (std::int64_t f = 0; f < F; ++f) {
        for (std::int64_t oy = 0; oy < Ho; ++oy) {
            for (std::int64_t ox = 0; ox < Wo; ++ox) {
                const std::int64_t row = (f * Ho + oy) * Wo + ox;
                for (std::int64_t c = 0; c < C; ++c) {
                    for (std::int64_t ky = 0; ky < kh; ++ky) {
                        const std::int64_t iy = oy * sh - ph + ky;
                        if (iy < 0 || iy >= H) continue;
                        for (std::int64_t kx = 0; kx < kw; ++kx) {
                            const std::int64_t ix = ox * sw - pw + kx;
                            if (ix < 0 || ix >= W) continue;
                            m.at2(row, (c * H + iy) * W + ix) +=
                                l.weight[((f * C + c) * kh + ky) * kw + kx];
                        }
                    }
                }
            }
        }
    }
    return m;
}

Tensor avgpool_as_matrix(const Layer& l, const std::vector<std::int64_t>& in_shape) {
    const PoolGeometry geo = pool_geometry(in_shape, l.pool_k, l.pool_stride);
    const std::int64_t out = shape_product(geo.out_shape);
    const std::int64_t in = shape_product(in_shape);
    Tensor m({out, in});
    const double inv = 1.0 / static_cast<double>(geo.window);
    for (std::int64_t o = 0; o < out; ++o) {
        for (std::int64_t j = 0; j < geo.window; ++j) {
            m.at2(o, geo.offsets[static_cast<std::size_t>(o * geo.window + j)]) += inv;
        }
    }
    return m;
}

Tensor identity_matrix(std::int64_t d) {
    Tensor m({d, d});
    for (std::int64_t i = 0; i < d; ++i) m.at2(i, i) = 1.0;
    return m;
}

}  // namespace

MlpForm lower_to_mlp(const Network& net) {
    const auto shapes = net.position_shapes();
    MlpForm form;
    form.input_dim = shape_product(net.input_shape);
    Tensor block;  // empty = nothing accumulated yet
    auto fold = [&block](Tensor m) {
        block = block.empty() ? std::move(m) : matmul(m, block);
    };
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const Layer& l = net.layers[i];
        switch (l.kind) {
            case LayerKind::Linear:
                fold(l.weight);
                break;
            case LayerKind::Conv2d:
                fold(conv2d_as_matrix(l, shapes[i]));
                break;
            case LayerKind::AvgPool2d:
                fold(avgpool_as_matrix(l, shapes[i]));
                break;
            case LayerKind::Flatten:
                break;
            case LayerKind::Bias:
                // Identity in every derivative product; the trace already
                // carries its effect on the activation patterns.
                break;
            case LayerKind::ReLU:
                if (block.empty()) {
                    throw ConversionError(
                        "lower_to_mlp: activation before any weight layer at layer " +
                        std::to_string(i));
                }
                form.weights.push_back(std::move(block));
                form.relu_after.push_back(true);
                form.preact_position.push_back(i);
                block = Tensor();
                break;
            default:
                throw ConversionError(std::string("lower_to_mlp: unsupported layer kind ") +
                                      layer_kind_name(l.kind) + " at layer " + std::to_string(i));
        }
    }
    if (!block.empty()) {
        form.weights.push_back(std::move(block));
        form.relu_after.push_back(false);
        form.preact_position.push_back(net.layers.size());
    }
    if (form.weights.empty()) throw ConversionError("lower_to_mlp: network has no weight layers");
    return form;
}

Tensor w_abs_product(const Network& net, std::int64_t l) {
    const MlpForm form = lower_to_mlp(net);
    const std::int64_t m = static_cast<std::int64_t>(form.blocks());
    if (l < 0 || l > m) throw ConfigError("w_abs_product: block index out of range");
    Tensor acc = identity_matrix(l == m ? form.weights.back().dim(0) : form.weights[l].dim(0));
    // acc starts as identity on the width of position l.
    if (l < m) acc = identity_matrix(form.weights[static_cast<std::size_t>(l)].dim(1));
    for (std::int64_t j = l; j < m; ++j) {
        acc = matmul(abs(form.weights[static_cast<std::size_t>(j)]), acc);
    }
    return acc;
}

namespace {

// Backs one stream pair of sensitivities through a split layer.
struct PairGrad {
    Tensor p, n;
};

struct SensContext {
    const SplitNetwork& snet;
    const SplitTrace& strace;
    const Trace* net_trace;
    PatternSource pattern;
};

PairGrad back_pair(const SensContext& ctx, std::size_t layer, const PairGrad& d) {
    const SplitLayer& sl = ctx.snet.layers[layer];
    const Tensor& in_p = ctx.strace.pos[layer];
    switch (sl.kind) {
        case LayerKind::Linear: {
            const Tensor& wp = sl.weight_pos;
            const Tensor& wn = sl.weight_neg;
            Tensor pp({wp.dim(1)}), pn({wp.dim(1)});
            for (std::int64_t i = 0; i < wp.dim(0); ++i) {
                const double gp = d.p[i], gn = d.n[i];
                if (gp == 0.0 && gn == 0.0) continue;
                for (std::int64_t j = 0; j < wp.dim(1); ++j) {
                    pp[j] += gp * wp.at2(i, j) + gn * wn.at2(i, j);
                    pn[j] += gp * wn.at2(i, j) + gn * wp.at2(i, j);
                }
            }
            return {std::move(pp), std::move(pn)};
        }
        case LayerKind::Conv2d: {
            const auto& shape = in_p.shape();
            Tensor pp = add(conv2d_input_grad(d.p, sl.weight_pos, sl.stride, sl.padding, shape),
                            conv2d_input_grad(d.n, sl.weight_neg, sl.stride, sl.padding, shape));
            Tensor pn = add(conv2d_input_grad(d.p, sl.weight_neg, sl.stride, sl.padding, shape),
                            conv2d_input_grad(d.n, sl.weight_pos, sl.stride, sl.padding, shape));
            return {std::move(pp), std::move(pn)};
        }
        case LayerKind::ReLU: {
            const std::int64_t nvals = in_p.size();
            Tensor pp(in_p.shape()), pn(in_p.shape());
            const bool use_split = ctx.pattern == PatternSource::SplitMaxima;
            const auto& mask = ctx.strace.maxout_mask[layer];
            if (use_split && static_cast<std::int64_t>(mask.size()) != nvals) {
                throw ConfigError("local_sensitivities: missing maxout pattern record");
            }
            for (std::int64_t i = 0; i < nvals; ++i) {
                bool plus_active;
                if (use_split) {
                    plus_active = mask[static_cast<std::size_t>(i)] != 0;
                } else {
                    plus_active = ctx.net_trace->values[layer][i] >= 0.0;
                }
                if (plus_active) {
                    pp[i] = d.p[i];
                    pn[i] = d.n[i];
                } else {
                    pn[i] = d.p[i] + d.n[i];
                }
            }
            return {std::move(pp), std::move(pn)};
        }
        case LayerKind::MaxoutRank2: {
            const std::int64_t dd = in_p.size() / 2;
            Tensor pp(in_p.shape()), pn(in_p.shape());
            const auto& rec = ctx.strace.pool_choice[layer];
            const bool wta = ctx.snet.maxpool_mode == MaxPoolMode::Wta;
            if ((wta || ctx.pattern == PatternSource::SplitMaxima) &&
                static_cast<std::int64_t>(rec.size()) != dd) {
                throw ConfigError("local_sensitivities: missing maxout choice record");
            }
            for (std::int64_t j = 0; j < dd; ++j) {
                std::int64_t win;
                if (wta || ctx.pattern == PatternSource::SplitMaxima) {
                    win = rec[static_cast<std::size_t>(j)];
                } else {
                    const Tensor& a = ctx.net_trace->values[layer];
                    win = a[j] >= a[dd + j] ? j : dd + j;
                }
                if (wta) {
                    pp[win] += d.p[j];
                    pn[win] += d.n[j];
                } else {
                    const std::int64_t other = win < dd ? win + dd : win - dd;
                    pp[win] += d.p[j];
                    pn[other] += d.p[j];
                    pn[win] += d.n[j];
                    pn[other] += d.n[j];
                }
            }
            return {std::move(pp), std::move(pn)};
        }
        case LayerKind::MaxPool2d: {
            const PoolGeometry geo = pool_geometry(in_p.shape(), sl.pool_k, sl.pool_stride);
            Tensor pp(in_p.shape()), pn(in_p.shape());
            const auto& rec = ctx.strace.pool_choice[layer];
            const bool wta = ctx.snet.maxpool_mode == MaxPoolMode::Wta;
            const std::int64_t out_size = shape_product(geo.out_shape);
            std::vector<std::int64_t> orig_argmax;
            if (!wta && ctx.pattern == PatternSource::OriginalPositivity) {
                orig_argmax =
                    maxpool2d(ctx.net_trace->values[layer], sl.pool_k, sl.pool_stride).argmax;
            } else if (static_cast<std::int64_t>(rec.size()) != out_size) {
                throw ConfigError(wta ? "local_sensitivities: missing maxpool argmax record "
                                        "required in wta mode"
                                      : "local_sensitivities: missing maxpool choice record");
            }
            for (std::int64_t o = 0; o < out_size; ++o) {
                const std::int64_t win = orig_argmax.empty()
                                             ? rec[static_cast<std::size_t>(o)]
                                             : orig_argmax[static_cast<std::size_t>(o)];
                if (wta) {
                    pp[win] += d.p[o];
                    pn[win] += d.n[o];
                } else {
                    pp[win] += d.p[o];
                    const std::int64_t* cells = &geo.offsets[static_cast<std::size_t>(o * geo.window)];
                    for (std::int64_t j = 0; j < geo.window; ++j) {
                        if (cells[j] != win) pn[cells[j]] += d.p[o];
                        pn[cells[j]] += d.n[o];
                    }
                }
            }
            return {std::move(pp), std::move(pn)};
        }
        case LayerKind::AvgPool2d:
            return {avgpool2d_input_grad(d.p, sl.pool_k, sl.pool_stride, in_p.shape()),
                    avgpool2d_input_grad(d.n, sl.pool_k, sl.pool_stride, in_p.shape())};
        case LayerKind::BatchNormEval: {
            const std::int64_t C = in_p.dim(0);
            const std::int64_t inner = in_p.size() / C;
            Tensor pp(in_p.shape()), pn(in_p.shape());
            for (std::int64_t c = 0; c < C; ++c) {
                const double sp = sl.scale_pos[c], sn = sl.scale_neg[c];
                for (std::int64_t i = 0; i < inner; ++i) {
                    const std::int64_t k = c * inner + i;
                    pp[k] = d.p[k] * sp + d.n[k] * sn;
                    pn[k] = d.p[k] * sn + d.n[k] * sp;
                }
            }
            return {std::move(pp), std::move(pn)};
        }
        case LayerKind::Bias:
            return {d.p, d.n};
        case LayerKind::ResidualAddStart:
        case LayerKind::ResidualAddEnd:
            return {d.p, d.n};  // residual accumulation handled by the caller
        case LayerKind::Flatten:
            return {d.p.reshaped(in_p.shape()), d.n.reshaped(in_p.shape())};
    }
    throw ConversionError("local_sensitivities: unhandled layer kind");
}

void apply_alpha_shift(PairGrad& d, double alpha) {
    if (alpha == 0.0) return;
    for (std::int64_t i = 0; i < d.p.size(); ++i) {
        const double shift = alpha * (d.p[i] + d.n[i]);
        d.p[i] -= shift;
        d.n[i] -= shift;
    }
}

bool is_weight_kind(LayerKind k) {
    return k == LayerKind::Linear || k == LayerKind::Conv2d || k == LayerKind::BatchNormEval;
}

}  // namespace

SensTrace local_sensitivities(const SplitNetwork& snet, const SplitTrace& strace,
                              const Trace* net_trace, const StabConfig& cfg,
                              std::int64_t out_index) {
    cfg.validate();
    const std::size_t n = snet.layers.size();
    if (strace.pos.size() != n + 1) {
        throw ShapeError("local_sensitivities: trace does not match network depth");
    }
    if (cfg.pattern_source == PatternSource::OriginalPositivity && net_trace == nullptr) {
        throw ConfigError("local_sensitivities: original_positivity needs the cached trace");
    }
    if (net_trace && net_trace->values.size() != n + 1) {
        throw ShapeError("local_sensitivities: cached trace does not match network depth");
    }
    const Tensor& out = strace.pos.back();
    if (out_index < 0 || out_index >= out.size()) {
        throw ShapeError("local_sensitivities: out_index out of range");
    }

    const std::size_t n_weights = weight_layer_positions(snet.source).size();
    const std::vector<double> alphas = cfg.resolve_alphas(n_weights + 1);

    SensTrace sens;
    sens.out_index = out_index;
    sens.gp.resize(n + 1);
    sens.gn.resize(n + 1);
    sens.hp.resize(n + 1);
    sens.hn.resize(n + 1);
    sens.alpha_at_position.assign(n + 1, 0.0);

    PairGrad g{Tensor::zeros_like(out), Tensor::zeros_like(out)};
    PairGrad h{Tensor::zeros_like(out), Tensor::zeros_like(out)};
    g.p[out_index] = 1.0;
    h.n[out_index] = 1.0;
    apply_alpha_shift(g, alphas[n_weights]);
    apply_alpha_shift(h, alphas[n_weights]);
    sens.alpha_at_position[n] = alphas[n_weights];
    sens.gp[n] = g.p;
    sens.gn[n] = g.n;
    sens.hp[n] = h.p;
    sens.hn[n] = h.n;

    SensContext ctx{snet, strace, net_trace, cfg.pattern_source};
    std::vector<PairGrad> pending_g, pending_h;
    std::size_t weights_left = n_weights;
    for (std::size_t pos = n; pos-- > 0;) {
        const SplitLayer& sl = snet.layers[pos];
        PairGrad ng = back_pair(ctx, pos, g);
        PairGrad nh = back_pair(ctx, pos, h);
        if (sl.kind == LayerKind::ResidualAddEnd) {
            pending_g.push_back(ng);
            pending_h.push_back(nh);
        } else if (sl.kind == LayerKind::ResidualAddStart) {
            if (pending_g.empty()) throw ShapeError("local_sensitivities: residual underflow");
            ng.p = add(ng.p, pending_g.back().p);
            ng.n = add(ng.n, pending_g.back().n);
            nh.p = add(nh.p, pending_h.back().p);
            nh.n = add(nh.n, pending_h.back().n);
            pending_g.pop_back();
            pending_h.pop_back();
        }
        if (is_weight_kind(sl.kind)) {
            --weights_left;
            apply_alpha_shift(ng, alphas[weights_left]);
            apply_alpha_shift(nh, alphas[weights_left]);
            sens.alpha_at_position[pos] = alphas[weights_left];
        }
        g = std::move(ng);
        h = std::move(nh);
        sens.gp[pos] = g.p;
        sens.gn[pos] = g.n;
        sens.hp[pos] = h.p;
        sens.hn[pos] = h.n;
    }
    return sens;
}

SensTrace backward_correct(const SensTrace& sens, const GradTrace& grad) {
    if (grad.grads.size() != sens.positions()) {
        throw ShapeError("backward_correct: gradient trace does not match sensitivities");
    }
    SensTrace out = sens;
    for (std::size_t p = 0; p < sens.positions(); ++p) {
        out.hp[p] = sub(sens.gp[p], grad.grads[p]);
        out.hn[p] = add(sens.gn[p], grad.grads[p]);
    }
    return out;
}

double backward_invariant_residual(const SensTrace& sens, const GradTrace& grad) {
    double worst = 0.0;
    for (std::size_t p = 0; p < sens.positions(); ++p) {
        const Tensor& d = grad.grads[p];
        for (std::int64_t i = 0; i < d.size(); ++i) {
            worst = std::max(worst, std::fabs(sens.gp[p][i] - sens.hp[p][i] - d[i]));
            worst = std::max(worst, std::fabs(sens.gn[p][i] - sens.hn[p][i] + d[i]));
        }
    }
    return worst;
}

namespace {

Tensor row_times(const Tensor& row, const Tensor& m) {
    // row [1 x r] * m [r x c]
    return matmul(row, m);
}

Tensor basis_row(std::int64_t d, std::int64_t i) {
    Tensor r({1, d});
    r.at2(0, i) = 1.0;
    return r;
}

struct LoweredMasks {
    MlpForm form;
    std::vector<std::vector<std::uint8_t>> plus;  // per block, empty if no relu
};

LoweredMasks lowered_with_masks(const Network& net, const Trace& trace) {
    LoweredMasks lm{lower_to_mlp(net), {}};
    lm.plus.resize(lm.form.blocks());
    for (std::size_t j = 0; j < lm.form.blocks(); ++j) {
        if (!lm.form.relu_after[j]) continue;
        const Tensor& z = trace.values[lm.form.preact_position[j]];
        auto& mask = lm.plus[j];
        mask.resize(static_cast<std::size_t>(z.size()));
        for (std::int64_t i = 0; i < z.size(); ++i) mask[i] = z[i] >= 0.0 ? 1 : 0;
    }
    return lm;
}

Tensor apply_mask_row(const Tensor& row, const std::vector<std::uint8_t>& mask, bool plus) {
    Tensor out = row;
    for (std::int64_t i = 0; i < out.size(); ++i) {
        const bool on = mask[static_cast<std::size_t>(i)] != 0;
        if (plus != on) out[i] = 0.0;
    }
    return out;
}

}  // namespace

Tensor q_network_grad(const Network& net, const Trace& trace, std::int64_t l,
                      std::int64_t out_index) {
    const LoweredMasks lm = lowered_with_masks(net, trace);
    const std::int64_t m = static_cast<std::int64_t>(lm.form.blocks());
    if (l < 1 || l > m) throw ConfigError("q_network_grad: block index out of range");
    const std::size_t li = static_cast<std::size_t>(l - 1);
    const Tensor& wl = lm.form.weights[li];
    // Suffix |W| product down to block l+1.
    Tensor acc = basis_row(lm.form.weights.back().dim(0), out_index);
    for (std::int64_t j = m - 1; j >= l; --j) {
        acc = row_times(acc, abs(lm.form.weights[static_cast<std::size_t>(j)]));
    }
    // M^(l,-) W^(l): zero when block l has no activation.
    if (!lm.form.relu_after[li]) return Tensor({lm.form.input_dim}).reshaped(net.input_shape);
    acc = apply_mask_row(acc, lm.plus[li], false);
    acc = row_times(acc, wl);
    // Masked prefix product through blocks l-1 .. 1.
    for (std::int64_t j = l - 2; j >= 0; --j) {
        acc = apply_mask_row(acc, lm.plus[static_cast<std::size_t>(j)], true);
        acc = row_times(acc, lm.form.weights[static_cast<std::size_t>(j)]);
    }
    return acc.reshaped(net.input_shape);
}

std::pair<Tensor, Tensor> closed_form_shifted_grads(const Network& net, const Trace& trace,
                                                    const StabConfig& cfg,
                                                    std::int64_t out_index) {
    cfg.validate();
    const LoweredMasks lm = lowered_with_masks(net, trace);
    const std::size_t m = lm.form.blocks();
    if (weight_layer_positions(net).size() != m) {
        throw ConversionError(
            "closed_form_shifted_grads: lowered blocks do not map 1:1 onto weight layers");
    }
    const std::vector<double> alphas = cfg.resolve_alphas(m + 1);

    // Standard input gradient through the lowered form.
    Tensor delta = basis_row(lm.form.weights.back().dim(0), out_index);
    for (std::size_t j = m; j-- > 0;) {
        if (lm.form.relu_after[j]) delta = apply_mask_row(delta, lm.plus[j], true);
        delta = row_times(delta, lm.form.weights[j]);
    }

    // Correction terms: alpha-bar_l * dQ[l]/dx for blocks 1..m, where
    // alpha-bar_l is the product of the (1 - 2 alpha) factors over shift
    // points l..m (the seed included, the input point never).
    Tensor corr({1, lm.form.input_dim});
    double bar = 1.0;
    for (std::int64_t l = static_cast<std::int64_t>(m); l >= 1; --l) {
        bar *= 1.0 - 2.0 * alphas[static_cast<std::size_t>(l)];
        if (bar == 0.0) continue;
        Tensor q = q_network_grad(net, trace, l, out_index).reshaped({1, lm.form.input_dim});
        corr = add(corr, scale(q, bar));
    }

    Tensor dg = scale(sub(delta, corr), 0.5).reshaped(net.input_shape);
    Tensor dh = scale(add(delta, corr), -0.5).reshaped(net.input_shape);
    return {std::move(dg), std::move(dh)};
}

Network build_q_network(const Network& net, std::int64_t l) {
    for (const Layer& layer : net.layers) {
        if (layer.kind == LayerKind::Bias) {
            throw ConversionError("build_q_network: bias-free networks only");
        }
    }
    const MlpForm form = lower_to_mlp(net);
    const std::int64_t m = static_cast<std::int64_t>(form.blocks());
    if (l < 1 || l > m) throw ConfigError("build_q_network: block index out of range");
    if (!form.relu_after[static_cast<std::size_t>(l - 1)]) {
        throw ConfigError("build_q_network: block has no activation to replace");
    }
    Network q;
    q.input_shape = {form.input_dim};
    auto push_min_block = [&q](std::int64_t d) {
        Tensor neg_id({d, d});
        for (std::int64_t i = 0; i < d; ++i) neg_id.at2(i, i) = -1.0;
        q.layers.push_back(Layer::linear(neg_id));
        q.layers.push_back(Layer::relu());
        q.layers.push_back(Layer::linear(std::move(neg_id)));
    };
    for (std::int64_t j = 0; j < m; ++j) {
        const Tensor& w = form.weights[static_cast<std::size_t>(j)];
        const bool suffix = j >= l;  // absolute weights after block l
        q.layers.push_back(Layer::linear(suffix ? abs(w) : w));
        if (!form.relu_after[static_cast<std::size_t>(j)]) continue;
        if (j >= l - 1) {
            push_min_block(w.dim(0));
        } else {
            q.layers.push_back(Layer::relu());
        }
    }
    q.validate();
    return q;
}

}  // namespace splitkit
