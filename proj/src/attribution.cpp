#include "splitkit/attribution.hpp"

#include <cmath>

#include "splitkit/error.hpp"

namespace splitkit {

const char* stream_select_name(StreamSelect s) {
    switch (s) {
        case StreamSelect::PosG: return "+g";
        case StreamSelect::NegG: return "-g";
        case StreamSelect::CombG: return "g";
        case StreamSelect::PosH: return "+h";
        case StreamSelect::NegH: return "-h";
        case StreamSelect::CombH: return "h";
    }
    return "?";
}

StreamSelect stream_select_from_name(const std::string& name) {
    if (name == "+g") return StreamSelect::PosG;
    if (name == "-g") return StreamSelect::NegG;
    if (name == "g") return StreamSelect::CombG;
    if (name == "+h") return StreamSelect::PosH;
    if (name == "-h") return StreamSelect::NegH;
    if (name == "h") return StreamSelect::CombH;
    throw ConfigError("unknown stream selector '" + name + "' (use g, h, +g, -g, +h, -h)");
}

Tensor channel_mean(const Tensor& t) {
    if (t.rank() != 3) return t;
    const std::int64_t C = t.dim(0), H = t.dim(1), W = t.dim(2);
    Tensor out({H, W});
    for (std::int64_t c = 0; c < C; ++c) {
        for (std::int64_t i = 0; i < H * W; ++i) out[i] += t[c * H * W + i];
    }
    return scale(out, 1.0 / static_cast<double>(C));
}

namespace {

Tensor maybe_abs(Tensor t, bool abs_flag) { return abs_flag ? abs(t) : t; }

std::string tag_str(std::int64_t l, const char* stream) {
    return "(" + std::to_string(l) + "," + stream + ")";
}

Tensor select_sens(const SensTrace& sens, std::int64_t l, StreamSelect s) {
    const auto p = static_cast<std::size_t>(l);
    if (l < 0 || p >= sens.positions()) {
        throw ShapeError("attribution: position " + std::to_string(l) + " out of range");
    }
    switch (s) {
        case StreamSelect::PosG: return sens.gp[p];
        case StreamSelect::NegG: return sens.gn[p];
        case StreamSelect::CombG: return sens.comb_g(p);
        case StreamSelect::PosH: return sens.hp[p];
        case StreamSelect::NegH: return sens.hn[p];
        case StreamSelect::CombH: return sens.comb_h(p);
    }
    throw ConfigError("attribution: bad stream selector");
}

}  // namespace

AttributionMap vanilla_gradient(const Network& net, const Tensor& x, std::int64_t out_index,
                                bool reduce_channels) {
    const Trace tr = forward(net, x);
    const GradTrace gt = backward(net, tr, out_index);
    AttributionMap map;
    map.values = reduce_channels ? channel_mean(gt.input_grad()) : gt.input_grad();
    map.method = "vanilla";
    map.layer = 0;
    map.tag = tag_str(0, "grad");
    return map;
}

AttributionMap layer_cam(const Network& net, const Trace& trace, const GradTrace& grads,
                         std::int64_t l) {
    (void)net;
    const auto p = static_cast<std::size_t>(l);
    if (l < 0 || p >= trace.values.size()) {
        throw ShapeError("layer_cam: position out of range");
    }
    const Tensor& a = trace.values[p];
    if (a.rank() != 3) {
        throw ShapeError("layer_cam: position " + std::to_string(l) +
                         " has no channel x spatial activation");
    }
    const Tensor& g = grads.grads[p];
    const std::int64_t C = a.dim(0), HW = a.dim(1) * a.dim(2);
    Tensor out({a.dim(1), a.dim(2)});
    for (std::int64_t c = 0; c < C; ++c) {
        for (std::int64_t i = 0; i < HW; ++i) out[i] += g[c * HW + i] * a[c * HW + i];
    }
    out = relu(out);
    AttributionMap map;
    map.values = std::move(out);
    map.method = "layercam";
    map.layer = l;
    map.tag = tag_str(l, "cam");
    return map;
}

AttributionMap split_grad(const SensTrace& sens, std::int64_t l, StreamSelect select,
                          bool abs_flag) {
    AttributionMap map;
    map.values = maybe_abs(channel_mean(select_sens(sens, l, select)), abs_flag);
    map.method = "splitgrad";
    map.layer = l;
    map.tag = tag_str(l, stream_select_name(select));
    map.abs = abs_flag;
    return map;
}

AttributionMap split_cam(const SplitTrace& strace, const SensTrace& sens,
                         const Trace* net_trace, std::int64_t l, StreamSelect variant,
                         bool abs_flag) {
    const auto p = static_cast<std::size_t>(l);
    if (l < 0 || p >= strace.pos.size()) throw ShapeError("split_cam: position out of range");
    Tensor delta = select_sens(sens, l, variant);
    Tensor act;
    switch (variant) {
        case StreamSelect::PosG:
        case StreamSelect::PosH:
            act = strace.pos[p];
            break;
        case StreamSelect::NegG:
        case StreamSelect::NegH:
            act = strace.neg[p];
            break;
        case StreamSelect::CombG:
        case StreamSelect::CombH:
            act = net_trace ? net_trace->values[p] : sub(strace.pos[p], strace.neg[p]);
            break;
    }
    if (act.rank() != 3) {
        throw ShapeError("split_cam: position " + std::to_string(l) +
                         " has no channel x spatial activation");
    }
    const std::int64_t C = act.dim(0), HW = act.dim(1) * act.dim(2);
    Tensor out({act.dim(1), act.dim(2)});
    for (std::int64_t c = 0; c < C; ++c) {
        for (std::int64_t i = 0; i < HW; ++i) out[i] += delta[c * HW + i] * act[c * HW + i];
    }
    AttributionMap map;
    map.values = maybe_abs(std::move(out), abs_flag);
    map.method = "splitcam";
    map.layer = l;
    map.tag = tag_str(l, stream_select_name(variant));
    map.abs = abs_flag;
    return map;
}

namespace {

double eps_sign(double x) { return x >= 0.0 ? 1.0 : -1.0; }

}  // namespace

AttributionMap LrpResult::input_map() const {
    AttributionMap map;
    map.values = relevance.front();
    map.method = "lrp-gamma";
    map.layer = 0;
    map.tag = "(0,rel)";
    return map;
}

LrpResult lrp_gamma(const Network& net_in, const Tensor& x, std::int64_t out_index, double gamma,
                    double eps) {
    if (gamma < 0.0) throw ConfigError("lrp_gamma: gamma must be >= 0");
    if (eps <= 0.0) throw ConfigError("lrp_gamma: eps must be > 0");
    bool has_bn = false;
    for (const Layer& l : net_in.layers) has_bn |= l.kind == LayerKind::BatchNormEval;
    const Network net = has_bn ? merge_batchnorm(net_in) : net_in;
    const Trace trace = forward(net, x);

    const std::size_t n = net.layers.size();
    LrpResult res;
    res.relevance.resize(n + 1);
    Tensor seed = Tensor::zeros_like(trace.output());
    if (out_index < 0 || out_index >= seed.size()) throw ShapeError("lrp_gamma: bad out_index");
    seed[out_index] = trace.output()[out_index];
    res.relevance[n] = std::move(seed);

    std::vector<Tensor> pending;
    for (std::size_t pos = n; pos-- > 0;) {
        const Layer& l = net.layers[pos];
        const Tensor& a = trace.values[pos];
        const Tensor& rout = res.relevance[pos + 1];
        Tensor rin(a.shape());
        auto boosted = [gamma](double w) { return w + gamma * std::max(w, 0.0); };
        switch (l.kind) {
            case LayerKind::Linear: {
                const Tensor& w = l.weight;
                for (std::int64_t i = 0; i < w.dim(0); ++i) {
                    if (rout[i] == 0.0) continue;
                    double denom = 0.0;
                    for (std::int64_t j = 0; j < w.dim(1); ++j) denom += a[j] * boosted(w.at2(i, j));
                    const double d = denom + eps * eps_sign(denom);
                    const double r = rout[i] / d;
                    for (std::int64_t j = 0; j < w.dim(1); ++j) {
                        rin[j] += a[j] * boosted(w.at2(i, j)) * r;
                    }
                }
                break;
            }
            case LayerKind::Conv2d: {
                const std::int64_t C = a.dim(0), H = a.dim(1), W = a.dim(2);
                const std::int64_t F = l.weight.dim(0), kh = l.weight.dim(2), kw = l.weight.dim(3);
                const Tensor& out_t = trace.values[pos + 1];
                const std::int64_t Ho = out_t.dim(1), Wo = out_t.dim(2);
                for (std::int64_t f = 0; f < F; ++f) {
                    for (std::int64_t oy = 0; oy < Ho; ++oy) {
                        for (std::int64_t ox = 0; ox < Wo; ++ox) {
                            const double ro = rout[(f * Ho + oy) * Wo + ox];
                            if (ro == 0.0) continue;
                            double denom = 0.0;
                            for (std::int64_t c = 0; c < C; ++c) {
                                for (std::int64_t ky = 0; ky < kh; ++ky) {
                                    const std::int64_t iy = oy * l.stride[0] - l.padding[0] + ky;
                                    if (iy < 0 || iy >= H) continue;
                                    for (std::int64_t kx = 0; kx < kw; ++kx) {
                                        const std::int64_t ix = ox * l.stride[1] - l.padding[1] + kx;
                                        if (ix < 0 || ix >= W) continue;
                                        denom += a.at3(c, iy, ix) *
                                                 boosted(l.weight[((f * C + c) * kh + ky) * kw + kx]);
                                    }
                                }
                            }
                            const double d = denom + eps * eps_sign(denom);
                            const double r = ro / d;
                            for (std::int64_t c = 0; c < C; ++c) {
                                for (std::int64_t ky = 0; ky < kh; ++ky) {
                                    const std::int64_t iy = oy * l.stride[0] - l.padding[0] + ky;
                                    if (iy < 0 || iy >= H) continue;
                                    for (std::int64_t kx = 0; kx < kw; ++kx) {
                                        const std::int64_t ix = ox * l.stride[1] - l.padding[1] + kx;
                                        if (ix < 0 || ix >= W) continue;
                                        rin.at3(c, iy, ix) +=
                                            a.at3(c, iy, ix) *
                                            boosted(l.weight[((f * C + c) * kh + ky) * kw + kx]) * r;
                                    }
                                }
                            }
                        }
                    }
                }
                break;
            }
            case LayerKind::ReLU:
            case LayerKind::Bias:
                rin = rout;
                break;
            case LayerKind::MaxoutRank2: {
                const std::int64_t d2 = a.size() / 2;
                for (std::int64_t j = 0; j < d2; ++j) {
                    rin[a[j] >= a[d2 + j] ? j : d2 + j] += rout[j];
                }
                break;
            }
            case LayerKind::MaxPool2d: {
                const MaxPoolResult mp = maxpool2d(a, l.pool_k, l.pool_stride);
                for (std::size_t o = 0; o < mp.argmax.size(); ++o) {
                    rin[mp.argmax[o]] += rout[static_cast<std::int64_t>(o)];
                }
                break;
            }
            case LayerKind::AvgPool2d: {
                const PoolGeometry geo = pool_geometry(a.shape(), l.pool_k, l.pool_stride);
                const std::int64_t out_size = shape_product(geo.out_shape);
                for (std::int64_t o = 0; o < out_size; ++o) {
                    if (rout[o] == 0.0) continue;
                    const std::int64_t* win = &geo.offsets[static_cast<std::size_t>(o * geo.window)];
                    double denom = 0.0;
                    for (std::int64_t j = 0; j < geo.window; ++j) denom += a[win[j]];
                    const double d = denom + eps * eps_sign(denom);
                    for (std::int64_t j = 0; j < geo.window; ++j) {
                        rin[win[j]] += a[win[j]] / d * rout[o];
                    }
                }
                break;
            }
            case LayerKind::BatchNormEval:
                throw ConversionError("lrp_gamma: unexpected unmerged BatchNormEval");
            case LayerKind::ResidualAddStart:
                rin = add(rout, pending.back());
                pending.pop_back();
                break;
            case LayerKind::ResidualAddEnd: {
                rin = scale(rout, 0.5);
                pending.push_back(rin);
                break;
            }
            case LayerKind::Flatten:
                rin = rout.reshaped(a.shape());
                break;
        }
        res.relevance[pos] = std::move(rin);
    }
    return res;
}

AttributionMap SplitLrpResult::pos_map() const {
    AttributionMap m;
    m.values = rel_pos.front();
    m.method = "splitlrp";
    m.tag = "(0,pos)";
    return m;
}

AttributionMap SplitLrpResult::neg_map() const {
    AttributionMap m;
    m.values = rel_neg.front();
    m.method = "splitlrp";
    m.tag = "(0,neg)";
    return m;
}

AttributionMap SplitLrpResult::comb_map() const {
    AttributionMap m;
    m.values = sub(rel_pos.front(), rel_neg.front());
    m.method = "splitlrp";
    m.tag = "(0,comb)";
    return m;
}

SplitLrpResult split_lrp(const SplitNetwork& snet, const SplitTrace& strace,
                         std::int64_t out_index, double eps) {
    if (eps <= 0.0) throw ConfigError("split_lrp: eps must be > 0");
    const std::size_t n = snet.layers.size();
    if (strace.pos.size() != n + 1) throw ShapeError("split_lrp: trace/network mismatch");
    const Tensor& out = strace.pos.back();
    if (out_index < 0 || out_index >= out.size()) throw ShapeError("split_lrp: bad out_index");

    SplitLrpResult res;
    res.rel_pos.resize(n + 1);
    res.rel_neg.resize(n + 1);
    res.absorbed.assign(n + 1, 0.0);
    res.seed_value = out[out_index];
    Tensor seed = Tensor::zeros_like(out);
    seed[out_index] = res.seed_value;
    res.rel_pos[n] = std::move(seed);
    res.rel_neg[n] = Tensor::zeros_like(strace.neg.back());

    std::vector<Tensor> pend_p, pend_n;
    for (std::size_t pos = n; pos-- > 0;) {
        const SplitLayer& sl = snet.layers[pos];
        const Tensor& ap = strace.pos[pos];
        const Tensor& an = strace.neg[pos];
        const Tensor& rp_out = res.rel_pos[pos + 1];
        const Tensor& rn_out = res.rel_neg[pos + 1];
        Tensor rp(ap.shape()), rn(an.shape());
        double absorbed_here = 0.0;
        switch (sl.kind) {
            case LayerKind::Linear: {
                const Tensor& wp = sl.weight_pos;
                const Tensor& wn = sl.weight_neg;
                for (std::int64_t i = 0; i < wp.dim(0); ++i) {
                    // z+ collects wp*a+ and wn*a-; z- the mirrored pairing.
                    if (rp_out[i] != 0.0) {
                        double denom = 0.0;
                        for (std::int64_t j = 0; j < wp.dim(1); ++j) {
                            denom += wp.at2(i, j) * ap[j] + wn.at2(i, j) * an[j];
                        }
                        const double r = rp_out[i] / (denom + eps * eps_sign(denom));
                        for (std::int64_t j = 0; j < wp.dim(1); ++j) {
                            rp[j] += wp.at2(i, j) * ap[j] * r;
                            rn[j] += wn.at2(i, j) * an[j] * r;
                        }
                        absorbed_here += rp_out[i] - r * denom;
                    }
                    if (rn_out[i] != 0.0) {
                        double denom = 0.0;
                        for (std::int64_t j = 0; j < wp.dim(1); ++j) {
                            denom += wn.at2(i, j) * ap[j] + wp.at2(i, j) * an[j];
                        }
                        const double r = rn_out[i] / (denom + eps * eps_sign(denom));
                        for (std::int64_t j = 0; j < wp.dim(1); ++j) {
                            rp[j] += wn.at2(i, j) * ap[j] * r;
                            rn[j] += wp.at2(i, j) * an[j] * r;
                        }
                        absorbed_here += rn_out[i] - r * denom;
                    }
                }
                break;
            }
            case LayerKind::Conv2d: {
                const std::int64_t C = ap.dim(0), H = ap.dim(1), W = ap.dim(2);
                const Tensor& kp = sl.weight_pos;
                const Tensor& kn = sl.weight_neg;
                const std::int64_t F = kp.dim(0), kh = kp.dim(2), kw = kp.dim(3);
                const Tensor& out_t = strace.pos[pos + 1];
                const std::int64_t Ho = out_t.dim(1), Wo = out_t.dim(2);
                for (int side = 0; side < 2; ++side) {
                    const Tensor& rout = side == 0 ? rp_out : rn_out;
                    const Tensor& k_for_p = side == 0 ? kp : kn;
                    const Tensor& k_for_n = side == 0 ? kn : kp;
                    for (std::int64_t f = 0; f < F; ++f) {
                        for (std::int64_t oy = 0; oy < Ho; ++oy) {
                            for (std::int64_t ox = 0; ox < Wo; ++ox) {
                                const double ro = rout[(f * Ho + oy) * Wo + ox];
                                if (ro == 0.0) continue;
                                double denom = 0.0;
                                for (std::int64_t c = 0; c < C; ++c) {
                                    for (std::int64_t ky = 0; ky < kh; ++ky) {
                                        const std::int64_t iy =
                                            oy * sl.stride[0] - sl.padding[0] + ky;
                                        if (iy < 0 || iy >= H) continue;
                                        for (std::int64_t kx = 0; kx < kw; ++kx) {
                                            const std::int64_t ix =
                                                ox * sl.stride[1] - sl.padding[1] + kx;
                                            if (ix < 0 || ix >= W) continue;
                                            const std::int64_t ki = ((f * C + c) * kh + ky) * kw + kx;
                                            denom += k_for_p[ki] * ap.at3(c, iy, ix) +
                                                     k_for_n[ki] * an.at3(c, iy, ix);
                                        }
                                    }
                                }
                                const double r = ro / (denom + eps * eps_sign(denom));
                                for (std::int64_t c = 0; c < C; ++c) {
                                    for (std::int64_t ky = 0; ky < kh; ++ky) {
                                        const std::int64_t iy =
                                            oy * sl.stride[0] - sl.padding[0] + ky;
                                        if (iy < 0 || iy >= H) continue;
                                        for (std::int64_t kx = 0; kx < kw; ++kx) {
                                            const std::int64_t ix =
                                                ox * sl.stride[1] - sl.padding[1] + kx;
                                            if (ix < 0 || ix >= W) continue;
                                            const std::int64_t ki = ((f * C + c) * kh + ky) * kw + kx;
                                            rp.at3(c, iy, ix) += k_for_p[ki] * ap.at3(c, iy, ix) * r;
                                            rn.at3(c, iy, ix) += k_for_n[ki] * an.at3(c, iy, ix) * r;
                                        }
                                    }
                                }
                                absorbed_here += ro - r * denom;
                            }
                        }
                    }
                }
                break;
            }
            case LayerKind::ReLU:
            case LayerKind::Bias:
                rp = rp_out;
                rn = rn_out;
                break;
            case LayerKind::MaxoutRank2: {
                const auto& choice = strace.pool_choice[pos];
                if (choice.size() != static_cast<std::size_t>(rp_out.size())) {
                    throw ConfigError("split_lrp: missing maxout choice record");
                }
                const std::int64_t d2 = ap.size() / 2;
                for (std::int64_t j = 0; j < rp_out.size(); ++j) {
                    const std::int64_t win = choice[static_cast<std::size_t>(j)];
                    if (snet.maxpool_mode == MaxPoolMode::Wta) {
                        rp[win] += rp_out[j];
                        rn[win] += rn_out[j];
                        continue;
                    }
                    const std::int64_t other = win < d2 ? win + d2 : win - d2;
                    if (rp_out[j] != 0.0) {
                        // out+ = ap[win] + an[other], an affine pattern.
                        const double denom = ap[win] + an[other];
                        const double r = rp_out[j] / (denom + eps * eps_sign(denom));
                        rp[win] += ap[win] * r;
                        rn[other] += an[other] * r;
                        absorbed_here += rp_out[j] - r * denom;
                    }
                    if (rn_out[j] != 0.0) {
                        const double denom = an[win] + an[other];
                        const double r = rn_out[j] / (denom + eps * eps_sign(denom));
                        rn[win] += an[win] * r;
                        rn[other] += an[other] * r;
                        absorbed_here += rn_out[j] - r * denom;
                    }
                }
                break;
            }
            case LayerKind::MaxPool2d: {
                const auto& choice = strace.pool_choice[pos];
                if (choice.size() != static_cast<std::size_t>(rp_out.size())) {
                    throw ConfigError("split_lrp: missing maxpool choice record");
                }
                if (snet.maxpool_mode == MaxPoolMode::Wta) {
                    for (std::int64_t o = 0; o < rp_out.size(); ++o) {
                        const std::int64_t win = choice[static_cast<std::size_t>(o)];
                        rp[win] += rp_out[o];
                        rn[win] += rn_out[o];
                    }
                } else {
                    const PoolGeometry geo = pool_geometry(ap.shape(), sl.pool_k, sl.pool_stride);
                    for (std::int64_t o = 0; o < rp_out.size(); ++o) {
                        const std::int64_t* win =
                            &geo.offsets[static_cast<std::size_t>(o * geo.window)];
                        const std::int64_t jstar = choice[static_cast<std::size_t>(o)];
                        if (rp_out[o] != 0.0) {
                            double denom = ap[jstar];
                            for (std::int64_t j = 0; j < geo.window; ++j) {
                                if (win[j] != jstar) denom += an[win[j]];
                            }
                            const double r = rp_out[o] / (denom + eps * eps_sign(denom));
                            rp[jstar] += ap[jstar] * r;
                            for (std::int64_t j = 0; j < geo.window; ++j) {
                                if (win[j] != jstar) rn[win[j]] += an[win[j]] * r;
                            }
                            absorbed_here += rp_out[o] - r * denom;
                        }
                        if (rn_out[o] != 0.0) {
                            double denom = 0.0;
                            for (std::int64_t j = 0; j < geo.window; ++j) denom += an[win[j]];
                            const double r = rn_out[o] / (denom + eps * eps_sign(denom));
                            for (std::int64_t j = 0; j < geo.window; ++j) {
                                rn[win[j]] += an[win[j]] * r;
                            }
                            absorbed_here += rn_out[o] - r * denom;
                        }
                    }
                }
                break;
            }
            case LayerKind::AvgPool2d: {
                const PoolGeometry geo = pool_geometry(ap.shape(), sl.pool_k, sl.pool_stride);
                const std::int64_t out_size = shape_product(geo.out_shape);
                for (int side = 0; side < 2; ++side) {
                    const Tensor& rout = side == 0 ? rp_out : rn_out;
                    const Tensor& a = side == 0 ? ap : an;
                    Tensor& rin = side == 0 ? rp : rn;
                    for (std::int64_t o = 0; o < out_size; ++o) {
                        if (rout[o] == 0.0) continue;
                        const std::int64_t* win =
                            &geo.offsets[static_cast<std::size_t>(o * geo.window)];
                        double denom = 0.0;
                        for (std::int64_t j = 0; j < geo.window; ++j) denom += a[win[j]];
                        const double r = rout[o] / (denom + eps * eps_sign(denom));
                        for (std::int64_t j = 0; j < geo.window; ++j) rin[win[j]] += a[win[j]] * r;
                        absorbed_here += rout[o] - r * denom;
                    }
                }
                break;
            }
            case LayerKind::BatchNormEval: {
                const std::int64_t C = ap.dim(0);
                const std::int64_t inner = ap.size() / C;
                for (std::int64_t c = 0; c < C; ++c) {
                    const double sp = sl.scale_pos[c], sn = sl.scale_neg[c];
                    for (std::int64_t i = 0; i < inner; ++i) {
                        const std::int64_t k = c * inner + i;
                        if (rp_out[k] != 0.0) {
                            const double denom = sp * ap[k] + sn * an[k];
                            const double r = rp_out[k] / (denom + eps * eps_sign(denom));
                            rp[k] += sp * ap[k] * r;
                            rn[k] += sn * an[k] * r;
                            absorbed_here += rp_out[k] - r * denom;
                        }
                        if (rn_out[k] != 0.0) {
                            const double denom = sn * ap[k] + sp * an[k];
                            const double r = rn_out[k] / (denom + eps * eps_sign(denom));
                            rp[k] += sn * ap[k] * r;
                            rn[k] += sp * an[k] * r;
                            absorbed_here += rn_out[k] - r * denom;
                        }
                    }
                }
                break;
            }
            case LayerKind::ResidualAddStart:
                rp = add(rp_out, pend_p.back());
                rn = add(rn_out, pend_n.back());
                pend_p.pop_back();
                pend_n.pop_back();
                break;
            case LayerKind::ResidualAddEnd:
                rp = scale(rp_out, 0.5);
                rn = scale(rn_out, 0.5);
                pend_p.push_back(rp);
                pend_n.push_back(rn);
                break;
            case LayerKind::Flatten:
                rp = rp_out.reshaped(ap.shape());
                rn = rn_out.reshaped(an.shape());
                break;
        }
        res.rel_pos[pos] = std::move(rp);
        res.rel_neg[pos] = std::move(rn);
        res.absorbed[pos] = res.absorbed[pos + 1] + absorbed_here;
    }
    return res;
}

}  // namespace splitkit
