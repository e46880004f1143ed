#include "splitkit/splitter.hpp"

#include <cmath>
#include <tuple>

#include "splitkit/error.hpp"

namespace splitkit {

const char* maxpool_mode_name(MaxPoolMode m) {
    return m == MaxPoolMode::Convex ? "convex" : "wta";
}

std::pair<Tensor, Tensor> split_weights(const Tensor& w) {
    return {relu(w), negpart(w)};
}

namespace {

// BatchNormEval in eval mode is the per-channel affine x -> s*x + o.
void fold_batchnorm(const Layer& l, Tensor& s, Tensor& o) {
    const std::int64_t C = l.gamma.size();
    s = Tensor({C});
    o = Tensor({C});
    for (std::int64_t c = 0; c < C; ++c) {
        s[c] = l.gamma[c] / std::sqrt(l.var[c] + l.eps);
        o[c] = l.beta[c] - l.mean[c] * s[c];
    }
}

}  // namespace

SplitNetwork split_network(const Network& net, MaxPoolMode mode) {
    net.validate();
    SplitNetwork sn;
    sn.input_shape = net.input_shape;
    sn.maxpool_mode = mode;
    sn.source = net;
    sn.layers.reserve(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const Layer& l = net.layers[i];
        SplitLayer sl;
        sl.kind = l.kind;
        switch (l.kind) {
            case LayerKind::Linear:
            case LayerKind::Conv2d:
                std::tie(sl.weight_pos, sl.weight_neg) = split_weights(l.weight);
                sl.stride = l.stride;
                sl.padding = l.padding;
                break;
            case LayerKind::Bias:
                std::tie(sl.bias_pos, sl.bias_neg) = split_weights(l.bias);
                break;
            case LayerKind::BatchNormEval: {
                Tensor s, o;
                fold_batchnorm(l, s, o);
                std::tie(sl.scale_pos, sl.scale_neg) = split_weights(s);
                std::tie(sl.offset_pos, sl.offset_neg) = split_weights(o);
                break;
            }
            case LayerKind::MaxPool2d:
            case LayerKind::AvgPool2d:
                sl.pool_k = l.pool_k;
                sl.pool_stride = l.pool_stride;
                break;
            case LayerKind::ReLU:
            case LayerKind::MaxoutRank2:
            case LayerKind::ResidualAddStart:
            case LayerKind::ResidualAddEnd:
            case LayerKind::Flatten:
                break;
        }
        sn.layers.push_back(std::move(sl));
    }
    return sn;
}

double SplitNetwork::max_negativity() const {
    double worst = 0.0;
    auto scan = [&worst](const Tensor& t) {
        for (std::int64_t i = 0; i < t.size(); ++i) worst = std::max(worst, -t[i]);
    };
    for (const SplitLayer& l : layers) {
        scan(l.weight_pos);
        scan(l.weight_neg);
        scan(l.bias_pos);
        scan(l.bias_neg);
        scan(l.scale_pos);
        scan(l.scale_neg);
        scan(l.offset_pos);
        scan(l.offset_neg);
    }
    return worst;
}

double SplitNetwork::max_reconstruction_error() const {
    double worst = 0.0;
    auto check = [&worst](const Tensor& p, const Tensor& n, const Tensor& src) {
        for (std::int64_t i = 0; i < src.size(); ++i) {
            worst = std::max(worst, std::fabs((p[i] - n[i]) - src[i]));
        }
    };
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const SplitLayer& sl = layers[i];
        const Layer& src = source.layers[i];
        switch (sl.kind) {
            case LayerKind::Linear:
            case LayerKind::Conv2d:
                check(sl.weight_pos, sl.weight_neg, src.weight);
                break;
            case LayerKind::Bias:
                check(sl.bias_pos, sl.bias_neg, src.bias);
                break;
            case LayerKind::BatchNormEval: {
                Tensor s, o;
                fold_batchnorm(src, s, o);
                check(sl.scale_pos, sl.scale_neg, s);
                check(sl.offset_pos, sl.offset_neg, o);
                break;
            }
            default:
                break;
        }
    }
    return worst;
}

std::pair<Tensor, Tensor> split_input(const Tensor& x, InputSplitStrategy strategy) {
    switch (strategy) {
        case InputSplitStrategy::HalfHalf: {
            Tensor xp = scale(x, 0.5);
            Tensor xn = scale(x, -0.5);
            return {xp, xn};
        }
        case InputSplitStrategy::PosNegParts:
            return {relu(x), negpart(x)};
        case InputSplitStrategy::NonnegShift: {
            double m = 0.0;
            for (std::int64_t i = 0; i < x.size(); ++i) m = std::min(m, x[i]);
            Tensor xp = add_scalar(x, -m);
            Tensor xn = Tensor::full(x.shape(), -m);
            return {xp, xn};
        }
    }
    throw ConfigError("split_input: unknown strategy");
}

namespace {

struct StreamPair {
    Tensor p, n;
};

// Forward one split layer; records maxout/pool patterns when `trace` given.
StreamPair split_layer_forward(const SplitLayer& sl, const Tensor& ap, const Tensor& an,
                               MaxPoolMode mode, std::vector<StreamPair>* residual_stack,
                               SplitTrace* trace, std::size_t layer_index) {
    switch (sl.kind) {
        case LayerKind::Linear: {
            Tensor cp = ap.reshaped({ap.size(), 1});
            Tensor cn = an.reshaped({an.size(), 1});
            const std::int64_t out = sl.weight_pos.dim(0);
            Tensor zp = add(matmul(sl.weight_pos, cp), matmul(sl.weight_neg, cn)).reshaped({out});
            Tensor zn = add(matmul(sl.weight_neg, cp), matmul(sl.weight_pos, cn)).reshaped({out});
            return {std::move(zp), std::move(zn)};
        }
        case LayerKind::Conv2d: {
            Tensor zp = add(conv2d(ap, sl.weight_pos, sl.stride, sl.padding),
                            conv2d(an, sl.weight_neg, sl.stride, sl.padding));
            Tensor zn = add(conv2d(ap, sl.weight_neg, sl.stride, sl.padding),
                            conv2d(an, sl.weight_pos, sl.stride, sl.padding));
            return {std::move(zp), std::move(zn)};
        }
        case LayerKind::ReLU: {
            Tensor op = emax(ap, an);
            if (trace) {
                auto& mask = trace->maxout_mask[layer_index];
                mask.resize(static_cast<std::size_t>(ap.size()));
                for (std::int64_t i = 0; i < ap.size(); ++i) mask[i] = ap[i] >= an[i] ? 1 : 0;
            }
            return {std::move(op), an};
        }
        case LayerKind::MaxoutRank2: {
            const std::int64_t d = ap.size() / 2;
            Tensor op({d}), on({d});
            std::vector<std::int64_t> choice(static_cast<std::size_t>(d));
            for (std::int64_t j = 0; j < d; ++j) {
                const std::int64_t ia = j, ib = d + j;
                const std::int64_t win = (ap[ia] - an[ia] >= ap[ib] - an[ib]) ? ia : ib;
                if (mode == MaxPoolMode::Wta) {
                    op[j] = ap[win];
                    on[j] = an[win];
                } else {
                    // Branch values again differ by the stream differences;
                    // select on those, evaluate the identity on the winner.
                    op[j] = win == ia ? ap[ia] + an[ib] : ap[ib] + an[ia];
                    on[j] = an[ia] + an[ib];
                }
                choice[j] = win;
            }
            if (trace) trace->pool_choice[layer_index] = std::move(choice);
            return {std::move(op), std::move(on)};
        }
        case LayerKind::MaxPool2d: {
            MaxPoolSplitResult r = maxpool_split(ap, an, sl.pool_k, sl.pool_stride, mode);
            if (trace) trace->pool_choice[layer_index] = std::move(r.choice);
            return {std::move(r.out_pos), std::move(r.out_neg)};
        }
        case LayerKind::AvgPool2d:
            return {avgpool2d(ap, sl.pool_k, sl.pool_stride), avgpool2d(an, sl.pool_k, sl.pool_stride)};
        case LayerKind::BatchNormEval: {
            const std::int64_t C = ap.dim(0);
            const std::int64_t inner = ap.size() / C;
            Tensor zp = Tensor::zeros_like(ap), zn = Tensor::zeros_like(an);
            for (std::int64_t c = 0; c < C; ++c) {
                const double spos = sl.scale_pos[c], sneg = sl.scale_neg[c];
                for (std::int64_t i = 0; i < inner; ++i) {
                    const std::int64_t k = c * inner + i;
                    zp[k] = spos * ap[k] + sneg * an[k] + sl.offset_pos[c];
                    zn[k] = sneg * ap[k] + spos * an[k] + sl.offset_neg[c];
                }
            }
            return {std::move(zp), std::move(zn)};
        }
        case LayerKind::Bias: {
            auto broadcast_add = [](const Tensor& a, const Tensor& b) {
                Tensor out = a;
                if (a.rank() == 3 && b.size() == a.dim(0)) {
                    const std::int64_t HW = a.dim(1) * a.dim(2);
                    for (std::int64_t c = 0; c < a.dim(0); ++c) {
                        for (std::int64_t i = 0; i < HW; ++i) out[c * HW + i] += b[c];
                    }
                    return out;
                }
                for (std::int64_t i = 0; i < out.size(); ++i) out[i] += b[i];
                return out;
            };
            return {broadcast_add(ap, sl.bias_pos), broadcast_add(an, sl.bias_neg)};
        }
        case LayerKind::ResidualAddStart:
            residual_stack->push_back({ap, an});
            return {ap, an};
        case LayerKind::ResidualAddEnd: {
            if (residual_stack->empty()) {
                throw ShapeError("split forward: ResidualAddEnd without matching start");
            }
            StreamPair saved = std::move(residual_stack->back());
            residual_stack->pop_back();
            return {add(ap, saved.p), add(an, saved.n)};
        }
        case LayerKind::Flatten:
            return {ap.reshaped({ap.size()}), an.reshaped({an.size()})};
    }
    throw ConversionError("split forward: unhandled layer kind");
}

}  // namespace

MaxPoolSplitResult maxpool_split(const Tensor& ap, const Tensor& an, std::int64_t k,
                                 std::int64_t stride, MaxPoolMode mode) {
    if (!ap.same_shape(an)) throw ShapeError("maxpool_split: stream shapes disagree");
    const PoolGeometry geo = pool_geometry(ap.shape(), k, stride);
    const std::int64_t out_size = shape_product(geo.out_shape);
    MaxPoolSplitResult res{Tensor(geo.out_shape), Tensor(geo.out_shape), {}};
    res.choice.resize(static_cast<std::size_t>(out_size));
    for (std::int64_t o = 0; o < out_size; ++o) {
        const std::int64_t* win = &geo.offsets[static_cast<std::size_t>(o * geo.window)];
        if (mode == MaxPoolMode::Wta) {
            std::int64_t best = win[0];
            double bestv = ap[win[0]] - an[win[0]];
            for (std::int64_t j = 1; j < geo.window; ++j) {
                const double v = ap[win[j]] - an[win[j]];
                if (v > bestv) {
                    bestv = v;
                    best = win[j];
                }
            }
            res.out_pos[o] = ap[best];
            res.out_neg[o] = an[best];
            res.choice[static_cast<std::size_t>(o)] = best;
        } else {
            double neg_sum = 0.0;
            for (std::int64_t j = 0; j < geo.window; ++j) neg_sum += an[win[j]];
            // The identity's branch values a_j+ + sum_{i != j} a_i- differ
            // from each other exactly by the stream differences a_j+ - a_j-,
            // so the winner is selected on those: per-branch summation order
            // must not decide ties inside constant regions.
            std::int64_t best = 0;
            double bestd = ap[win[0]] - an[win[0]];
            for (std::int64_t j = 1; j < geo.window; ++j) {
                const double d = ap[win[j]] - an[win[j]];
                if (d > bestd) {
                    bestd = d;
                    best = j;
                }
            }
            double branch = ap[win[best]];
            for (std::int64_t i = 0; i < geo.window; ++i) {
                if (i != best) branch += an[win[i]];
            }
            res.out_pos[o] = branch;
            res.out_neg[o] = neg_sum;
            res.choice[static_cast<std::size_t>(o)] = win[best];
        }
    }
    return res;
}

SplitTrace split_forward(const SplitNetwork& snet, const Tensor& xp, const Tensor& xn,
                         const StabConfig& cfg, const Trace* cache) {
    cfg.validate();
    if (xp.shape() != snet.input_shape || xn.shape() != snet.input_shape) {
        throw ShapeError("split_forward: stream inputs must match the network input shape");
    }
    if (cfg.forward_mode == ForwardStabMode::ScaleThreshold && !cfg.correct_forward) {
        throw ConfigError(
            "split_forward: scale_threshold changes the stream difference and requires "
            "correct_forward to compensate");
    }
    if (cfg.correct_forward && cache == nullptr) {
        throw ConfigError("split_forward: correct_forward requires the original trace cache");
    }
    if (cache && cache->values.size() != snet.layers.size() + 1) {
        throw ShapeError("split_forward: cache trace does not match network depth");
    }

    SplitTrace tr;
    const std::size_t n = snet.layers.size();
    tr.pos.reserve(n + 1);
    tr.neg.reserve(n + 1);
    tr.maxout_mask.resize(n);
    tr.pool_choice.resize(n);
    tr.stab_log.resize(n);
    tr.pos.push_back(xp);
    tr.neg.push_back(xn);

    std::vector<StreamPair> residual_stack;
    for (std::size_t i = 0; i < n; ++i) {
        StreamPair out = split_layer_forward(snet.layers[i], tr.pos[i], tr.neg[i],
                                             snet.maxpool_mode, &residual_stack, &tr, i);
        StabLogEntry& log = tr.stab_log[i];
        switch (cfg.forward_mode) {
            case ForwardStabMode::None:
                break;
            case ForwardStabMode::ShiftToHalf: {
                // Same shift on both streams; lands the pair at
                // (d/2, -d/2) for d = current stream difference.
                for (std::int64_t j = 0; j < out.p.size(); ++j) {
                    const double c = -0.5 * (out.p[j] + out.n[j]);
                    out.p[j] += c;
                    out.n[j] += c;
                }
                log.shifted = true;
                break;
            }
            case ForwardStabMode::ScaleThreshold: {
                int guard = 0;
                while (std::max(out.p.max_abs(), out.n.max_abs()) > cfg.big_theta &&
                       cfg.theta < 1.0 && guard++ < 1024) {
                    out.p = scale(out.p, cfg.theta);
                    out.n = scale(out.n, cfg.theta);
                    log.scale *= cfg.theta;
                }
                break;
            }
        }
        if (cfg.correct_forward) {
            const Tensor& orig = cache->values[i + 1];
            out.p = add(out.n, orig);
            log.corrected = true;
        }
        if (!out.p.all_finite() || !out.n.all_finite()) {
            throw OverflowError("split_forward: non-finite activation after layer " +
                                std::to_string(i) + " (" +
                                layer_kind_name(snet.layers[i].kind) + ")" +
                                (cfg.forward_mode == ForwardStabMode::None
                                     ? "; stabilization is disabled"
                                     : ""));
        }
        tr.pos.push_back(std::move(out.p));
        tr.neg.push_back(std::move(out.n));
    }
    return tr;
}

std::pair<Tensor, Tensor> split_forward_from(const SplitNetwork& snet, std::size_t position,
                                             const Tensor& ap, const Tensor& an) {
    std::vector<StreamPair> residual_stack;
    StreamPair cur{ap, an};
    for (std::size_t i = position; i < snet.layers.size(); ++i) {
        cur = split_layer_forward(snet.layers[i], cur.p, cur.n, snet.maxpool_mode,
                                  &residual_stack, nullptr, i);
    }
    return {cur.p, cur.n};
}

std::vector<std::size_t> weight_layer_positions(const Network& net) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerKind k = net.layers[i].kind;
        if (k == LayerKind::Linear || k == LayerKind::Conv2d || k == LayerKind::BatchNormEval) {
            out.push_back(i);
        }
    }
    return out;
}

}  // namespace splitkit
