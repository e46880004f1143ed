// splitkit command line: split / verify / attribute / evaluate.
//
// Exit codes: 0 ok, 1 property or metric failure, 2 usage/load error.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "splitkit/attribution.hpp"
#include "splitkit/error.hpp"
#include "splitkit/image_io.hpp"
#include "splitkit/metrics.hpp"
#include "splitkit/mnist.hpp"
#include "splitkit/model_io.hpp"
#include "splitkit/network.hpp"
#include "splitkit/rng.hpp"
#include "splitkit/splitter.hpp"
#include "splitkit/stabilization.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace splitkit;

namespace {

struct RunConfig {
    std::string model;
    std::string input;
    std::string mnist_dir;
    std::int64_t index = 0;
    std::string method = "splitgrad";
    std::int64_t layer = 0;
    std::string stream = "g";
    double alpha = 0.4;
    std::string forward = "scale";
    double theta = 0.1;
    double big_theta = 10.0;
    std::string maxpool = "convex";
    std::string input_split = "half";
    bool abs_flag = false;
    double gamma = 0.0;
    double epsilon = 1e-6;
    std::uint64_t seed = 0;
    std::string out = "out";
    std::int64_t trials = 100;
    std::vector<std::string> methods;
    std::vector<std::string> metrics;
    std::int64_t limit = 0;
    std::string masks_dir;
    bool selftest = false;

    json echo() const {
        json j;
        j["model"] = model;
        j["input"] = input;
        j["mnist"] = mnist_dir;
        j["index"] = index;
        j["method"] = method;
        j["layer"] = layer;
        j["stream"] = stream;
        j["alpha"] = alpha;
        j["forward"] = forward;
        j["theta"] = theta;
        j["Theta"] = big_theta;
        j["maxpool"] = maxpool;
        j["input_split"] = input_split;
        j["abs"] = abs_flag;
        j["gamma"] = gamma;
        j["epsilon"] = epsilon;
        j["seed"] = seed;
        j["out"] = out;
        return j;
    }
};

MaxPoolMode parse_maxpool(const std::string& s) {
    if (s == "convex") return MaxPoolMode::Convex;
    if (s == "wta") return MaxPoolMode::Wta;
    throw ConfigError("--maxpool must be convex or wta");
}

InputSplitStrategy parse_input_split(const std::string& s) {
    if (s == "half") return InputSplitStrategy::HalfHalf;
    if (s == "posneg") return InputSplitStrategy::PosNegParts;
    if (s == "shift") return InputSplitStrategy::NonnegShift;
    throw ConfigError("--input-split must be half, posneg or shift");
}

ForwardStabMode parse_forward(const std::string& s) {
    if (s == "none") return ForwardStabMode::None;
    if (s == "shift") return ForwardStabMode::ShiftToHalf;
    if (s == "scale") return ForwardStabMode::ScaleThreshold;
    throw ConfigError("--forward must be none, shift or scale");
}

StabConfig stab_from(const RunConfig& rc) {
    StabConfig cfg;
    cfg.forward_mode = parse_forward(rc.forward);
    cfg.theta = rc.theta;
    cfg.big_theta = rc.big_theta;
    cfg.alpha = rc.alpha;
    cfg.correct_forward = cfg.forward_mode != ForwardStabMode::None;
    cfg.correct_backward = true;
    // Backward patterns come from the cached original activations, not the
    // split maxima; the original trace is always computed alongside.
    cfg.pattern_source = PatternSource::OriginalPositivity;
    cfg.validate();
    return cfg;
}

int thread_budget(std::size_t jobs) {
    unsigned n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
    if (const char* env = std::getenv("SPLITKIT_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) n = static_cast<unsigned>(v);
    }
    return static_cast<int>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

// Ordered parallel map: results land by index, so output does not depend on
// scheduling.
template <typename Fn>
void parallel_for(std::size_t jobs, Fn&& fn) {
    const int threads = thread_budget(jobs);
    if (threads <= 1) {
        for (std::size_t i = 0; i < jobs; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < jobs; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

struct LoadedModel {
    Network net;
    SplitNetwork snet;
    bool was_split_file = false;
    bool merged_batchnorm = false;
};

LoadedModel load_any_model(const std::string& path, MaxPoolMode mode) {
    LoadedModel lm;
    if (manifest_is_split(path)) {
        lm.snet = load_split_model(path);
        lm.net = lm.snet.source;
        lm.was_split_file = true;
        return lm;
    }
    lm.net = load_model(path);
    Network to_split = lm.net;
    for (const Layer& l : lm.net.layers) {
        if (l.kind == LayerKind::BatchNormEval) {
            to_split = merge_batchnorm(lm.net);
            lm.merged_batchnorm = true;
            break;
        }
    }
    lm.snet = split_network(to_split, mode);
    lm.net = std::move(to_split);
    return lm;
}

Tensor load_input(const RunConfig& rc, const Network& net, std::int64_t* label_out) {
    if (!rc.mnist_dir.empty()) {
        const fs::path dir(rc.mnist_dir);
        auto ds = load_mnist_idx((dir / "t10k-images-idx3-ubyte").string(),
                                 (dir / "t10k-labels-idx1-ubyte").string());
        if (rc.index < 0 || rc.index >= static_cast<std::int64_t>(ds.size())) {
            throw ConfigError("--index out of range for the dataset");
        }
        if (label_out) *label_out = ds[static_cast<std::size_t>(rc.index)].label;
        return ds[static_cast<std::size_t>(rc.index)].image;
    }
    if (rc.input == "random" || rc.input.empty()) {
        Rng rng = Rng(rc.seed).stream("input");
        Tensor x(net.input_shape);
        for (std::int64_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
        return x;
    }
    Tensor grid = read_pgm(rc.input);
    if (net.input_shape.size() == 3) {
        if (grid.dim(0) != net.input_shape[1] || grid.dim(1) != net.input_shape[2]) {
            throw ConfigError("input image does not match the model input shape");
        }
        return grid.reshaped({1, grid.dim(0), grid.dim(1)});
    }
    return grid.reshaped(net.input_shape);
}

Tensor spatial_map(const Tensor& t) { return t.rank() == 3 ? channel_mean(t) : t; }

AttributionMap compute_attribution(const RunConfig& rc, const LoadedModel& lm, const Tensor& x,
                                   std::int64_t out_index) {
    if (rc.method == "vanilla") {
        AttributionMap m = vanilla_gradient(lm.net, x, out_index, x.rank() == 3);
        m.values = spatial_map(m.values);
        m.abs = rc.abs_flag;
        if (rc.abs_flag) m.values = abs(m.values);
        return m;
    }
    if (rc.method == "layercam") {
        const Trace tr = forward(lm.net, x);
        const GradTrace gt = backward(lm.net, tr, out_index);
        AttributionMap m = layer_cam(lm.net, tr, gt, rc.layer);
        m.abs = rc.abs_flag;
        if (rc.abs_flag) m.values = abs(m.values);
        return m;
    }
    if (rc.method == "lrp-gamma") {
        const LrpResult r = lrp_gamma(lm.net, x, out_index, rc.gamma, rc.epsilon);
        AttributionMap m = r.input_map();
        m.values = spatial_map(m.values);
        m.abs = rc.abs_flag;
        if (rc.abs_flag) m.values = abs(m.values);
        return m;
    }

    const StabConfig cfg = stab_from(rc);
    const Trace tr = forward(lm.net, x);
    auto [xp, xn] = split_input(x, parse_input_split(rc.input_split));
    const Trace* cache = cfg.correct_forward ? &tr : nullptr;
    const SplitTrace st = split_forward(lm.snet, xp, xn, cfg, cache);

    if (rc.method == "splitlrp") {
        const SplitLrpResult r = split_lrp(lm.snet, st, out_index, rc.epsilon);
        AttributionMap m;
        // The relevance streams correspond to the gradient stream heads, so
        // the default selectors map across.
        if (rc.stream == "pos" || rc.stream == "g" || rc.stream == "+g") {
            m = r.pos_map();
        } else if (rc.stream == "neg" || rc.stream == "h") {
            m = r.neg_map();
        } else if (rc.stream == "comb") {
            m = r.comb_map();
        } else {
            throw ConfigError("splitlrp --stream must be pos, neg or comb");
        }
        m.values = spatial_map(m.values);
        m.abs = rc.abs_flag;
        if (rc.abs_flag) m.values = abs(m.values);
        return m;
    }

    SensTrace sens = local_sensitivities(lm.snet, st, &tr, cfg, out_index);
    if (cfg.correct_backward) {
        const GradTrace gt = backward(lm.net, tr, out_index);
        sens = backward_correct(sens, gt);
    }
    const StreamSelect sel = stream_select_from_name(rc.stream);
    if (rc.method == "splitgrad") {
        AttributionMap m = split_grad(sens, rc.layer, sel, rc.abs_flag);
        m.values = spatial_map(m.values);
        m.alpha = rc.alpha;
        return m;
    }
    if (rc.method == "splitcam") {
        AttributionMap m = split_cam(st, sens, &tr, rc.layer, sel, rc.abs_flag);
        m.alpha = rc.alpha;
        return m;
    }
    throw ConfigError("unknown --method '" + rc.method +
                      "' (use splitgrad, splitcam, splitlrp, vanilla, layercam, lrp-gamma)");
}

void require_valid_layer(const RunConfig& rc, const Network& net) {
    const auto shapes = net.position_shapes();
    const auto n = static_cast<std::int64_t>(shapes.size());
    if (rc.layer < 0 || rc.layer >= n) {
        throw ConfigError("--layer must be in [0, " + std::to_string(n - 1) + "]");
    }
    if (rc.method != "splitcam" && rc.method != "layercam") return;
    if (shapes[static_cast<std::size_t>(rc.layer)].size() == 3) return;
    std::string valid;
    for (std::int64_t p = 0; p < n; ++p) {
        if (shapes[static_cast<std::size_t>(p)].size() == 3) {
            valid += (valid.empty() ? "" : ", ") + std::to_string(p);
        }
    }
    throw ConfigError("--layer " + std::to_string(rc.layer) + " has no channel x spatial shape; " +
                      (valid.empty() ? std::string("this model has no spatial layers")
                                     : "valid layers: " + valid));
}

int cmd_attribute(const RunConfig& rc) {
    const LoadedModel lm = load_any_model(rc.model, parse_maxpool(rc.maxpool));
    require_valid_layer(rc, lm.net);
    std::int64_t label = 0;
    const Tensor x = load_input(rc, lm.net, &label);
    const Trace tr = forward(lm.net, x);
    std::int64_t out_index = 0;
    for (std::int64_t i = 1; i < tr.output().size(); ++i) {
        if (tr.output()[i] > tr.output()[out_index]) out_index = i;
    }

    if (rc.selftest) {
        RunConfig probe = rc;
        probe.method = "splitgrad";
        probe.alpha = 0.5;
        probe.stream = "g";
        probe.abs_flag = false;
        probe.layer = 0;
        const AttributionMap half = compute_attribution(probe, lm, x, out_index);
        AttributionMap base = vanilla_gradient(lm.net, x, out_index, x.rank() == 3);
        base.values = spatial_map(base.values);
        const double resid = max_abs_diff(half.values, scale(base.values, 0.5));
        const double tol = 1e-9 * std::max(1.0, base.values.max_abs());
        std::cout << "selftest splitgrad(alpha=0.5) vs 0.5*vanilla: residual " << resid
                  << (resid <= tol ? " PASS" : " FAIL") << "\n";
        return resid <= tol ? 0 : 1;
    }

    const AttributionMap map = compute_attribution(rc, lm, x, out_index);
    if (!map.values.all_finite()) throw Error("attribution map has non-finite entries");
    std::string stem = rc.method + "_l" + std::to_string(rc.layer) + "_" + rc.stream;
    if (rc.abs_flag) stem += "_abs";
    const fs::path out(rc.out);
    write_raw_f64(map.values, (out / (stem + ".f64")).string());
    if (map.values.rank() == 2) write_pgm(map.values, (out / (stem + ".pgm")).string());
    json side;
    side["method"] = map.method;
    side["tag"] = map.tag;
    side["layer"] = map.layer;
    side["alpha"] = map.alpha;
    side["abs"] = map.abs;
    side["out_index"] = out_index;
    side["label"] = label;
    side["shape"] = map.values.shape();
    side["config"] = rc.echo();
    write_text_file(side.dump(2) + "\n", (out / (stem + ".json")).string());
    std::cout << "wrote " << (out / stem).string() << ".{f64,pgm,json}\n";
    return 0;
}

int cmd_split(const RunConfig& rc) {
    const LoadedModel lm = load_any_model(rc.model, parse_maxpool(rc.maxpool));
    const fs::path out(rc.out);
    fs::create_directories(out);
    save_split_model(lm.snet, (out / "split_model.json").string());
    json report;
    report["source"] = rc.model;
    report["maxpool_mode"] = rc.maxpool;
    report["merged_batchnorm"] = lm.merged_batchnorm;
    report["layers"] = lm.snet.layer_count();
    report["max_violation"] = lm.snet.max_negativity();
    report["max_reconstruction_error"] = lm.snet.max_reconstruction_error();
    report["config"] = rc.echo();
    write_text_file(report.dump(2) + "\n", (out / "split_report.json").string());
    std::cout << "split model written to " << (out / "split_model.json").string()
              << " (max_violation: " << lm.snet.max_negativity() << ")\n";
    return lm.snet.max_negativity() == 0.0 ? 0 : 1;
}

struct PropertyResult {
    std::string id;
    int trials = 0;
    double max_residual = 0.0;
    double tolerance = 0.0;
    bool skipped = false;
    std::string note;

    bool pass() const { return skipped || max_residual <= tolerance; }
};

bool is_mlp_form(const Network& net) {
    try {
        (void)lower_to_mlp(net);
        return true;
    } catch (const Error&) {
        return false;
    }
}

int cmd_verify(const RunConfig& rc) {
    if (rc.trials <= 0) throw ConfigError("--trials must be >= 1");
    const LoadedModel lm = load_any_model(rc.model, parse_maxpool(rc.maxpool));
    const Network& net = lm.net;
    const SplitNetwork& snet = lm.snet;
    Rng root(rc.seed);

    std::vector<PropertyResult> results;

    {
        PropertyResult structure{"split_structure", 1, 0.0, 0.0};
        structure.max_residual = std::max(snet.max_negativity(), snet.max_reconstruction_error());
        results.push_back(structure);
    }

    const InputSplitStrategy strategies[] = {InputSplitStrategy::HalfHalf,
                                             InputSplitStrategy::PosNegParts,
                                             InputSplitStrategy::NonnegShift};
    {
        PropertyResult plain{"dc_correctness", 0, 0.0, 1e-6};
        PropertyResult corrected{"dc_correctness_corrected", 0, 0.0, 1e-9};
        Rng rng = root.stream("correctness");
        for (std::int64_t t = 0; t < rc.trials; ++t) {
            Tensor x(net.input_shape);
            for (std::int64_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
            const Trace cache = forward(net, x);
            const double fscale = std::max(1.0, cache.output().max_abs());
            auto [xp, xn] = split_input(x, strategies[t % 3]);
            StabConfig cfg;
            const SplitTrace tr = split_forward(snet, xp, xn, cfg);
            plain.max_residual = std::max(
                plain.max_residual, max_abs_diff(sub(tr.g(), tr.h()), cache.output()) / fscale);
            ++plain.trials;
            StabConfig sc;
            sc.forward_mode = ForwardStabMode::ScaleThreshold;
            sc.correct_forward = true;
            const SplitTrace tc = split_forward(snet, xp, xn, sc, &cache);
            corrected.max_residual = std::max(
                corrected.max_residual, max_abs_diff(sub(tc.g(), tc.h()), cache.output()) / fscale);
            ++corrected.trials;
        }
        results.push_back(plain);
        results.push_back(corrected);
    }

    const bool mlp = is_mlp_form(net);
    {
        PropertyResult shift{"shift_forward", 0, 0.0, 1e-9};
        PropertyResult conn{"delta_connection", 0, 0.0, 1e-9};
        PropertyResult closed{"closed_formula_agreement", 0, 0.0, 1e-9};
        PropertyResult bdiff{"backward_difference", 0, 0.0, 1e-9};
        if (!mlp) {
            for (auto* p : {&shift, &conn, &closed, &bdiff}) {
                p->skipped = true;
                p->note = "model is not in plain Linear/ReLU form";
            }
        } else {
            Rng rng = root.stream("backward");
            const auto wpos = weight_layer_positions(net);
            const std::size_t m = wpos.size();
            for (std::int64_t t = 0; t < rc.trials; ++t) {
                Tensor x(net.input_shape);
                for (std::int64_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
                const Trace cache = forward(net, x);
                auto [xp, xn] = split_input(x, InputSplitStrategy::HalfHalf);
                StabConfig cfg;
                cfg.alpha = rng.uniform(0.0, 0.5);
                const SplitTrace st = split_forward(snet, xp, xn, cfg);
                const std::int64_t out = rng.uniform_int(0, net.output_dim() - 1);
                const SensTrace sens = local_sensitivities(snet, st, &cache, cfg, out);
                const GradTrace gt = backward(net, cache, out);

                const std::size_t l =
                    static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(m)));
                const std::size_t pos = l == m ? net.layers.size() : wpos[l];
                const Tensor wabs = w_abs_product(net, static_cast<std::int64_t>(l));
                Tensor c(st.pos[pos].shape());
                for (std::int64_t i = 0; i < c.size(); ++i) c[i] = rng.uniform(-1.0, 1.0);
                auto [g0, h0] = split_forward_from(snet, pos, st.pos[pos], st.neg[pos]);
                auto [g1, h1] =
                    split_forward_from(snet, pos, add(st.pos[pos], c), add(st.neg[pos], c));
                const Tensor expected =
                    matmul(wabs, c.reshaped({c.size(), 1})).reshaped({wabs.dim(0)});
                const double sscale = std::max(1.0, expected.max_abs());
                shift.max_residual =
                    std::max({shift.max_residual, max_abs_diff(sub(g1, g0), expected) / sscale,
                              max_abs_diff(sub(h1, h0), expected) / sscale});
                ++shift.trials;

                for (std::size_t lb = 0; lb <= m; ++lb) {
                    const std::size_t p = lb == m ? net.layers.size() : wpos[lb];
                    double damp = 1.0;
                    for (std::size_t j = lb; j <= m; ++j) damp *= 1.0 - 2.0 * cfg.alpha;
                    const Tensor wb = w_abs_product(net, static_cast<std::int64_t>(lb));
                    Tensor expect({wb.dim(1)});
                    for (std::int64_t j = 0; j < wb.dim(1); ++j) expect[j] = damp * wb.at2(out, j);
                    const double cscale = std::max(1.0, expect.max_abs());
                    conn.max_residual =
                        std::max({conn.max_residual,
                                  max_abs_diff(add(sens.gp[p], sens.gn[p]), expect) / cscale,
                                  max_abs_diff(add(sens.hp[p], sens.hn[p]), expect) / cscale});
                }
                ++conn.trials;

                auto [dg, dh] = closed_form_shifted_grads(net, cache, cfg, out);
                const double gscale = std::max(1.0, dg.max_abs());
                closed.max_residual =
                    std::max({closed.max_residual, max_abs_diff(sens.comb_g(0), dg) / gscale,
                              max_abs_diff(sens.comb_h(0), dh) / gscale});
                ++closed.trials;

                const double bscale = std::max(1.0, gt.input_grad().max_abs());
                bdiff.max_residual = std::max(
                    bdiff.max_residual,
                    max_abs_diff(sub(sens.comb_g(0), sens.comb_h(0)), gt.input_grad()) / bscale);
                ++bdiff.trials;
            }
        }
        results.push_back(shift);
        results.push_back(conn);
        results.push_back(closed);
        results.push_back(bdiff);
    }

    {
        // Conservation including the explicitly tracked stabilizer
        // absorption: exact up to rounding on any model, so residuals
        // indicate redistribution bugs rather than epsilon effects. The
        // absorbed share itself is surfaced in the note.
        PropertyResult lrp{"splitlrp_conservation", 0, 0.0, 1e-9};
        bool has_residual_blocks = false;
        for (const Layer& l : net.layers) {
            has_residual_blocks |= l.kind == LayerKind::ResidualAddStart;
        }
        double max_absorbed_fraction = 0.0;
        Rng rng = root.stream("lrp");
        for (std::int64_t t = 0; t < rc.trials; ++t) {
            Tensor x(net.input_shape);
            for (std::int64_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(0.1, 1.0);
            const Trace cache = forward(net, x);
            auto [xp, xn] = split_input(x, InputSplitStrategy::PosNegParts);
            StabConfig cfg;
            cfg.forward_mode = ForwardStabMode::ScaleThreshold;
            cfg.correct_forward = true;
            const SplitTrace st = split_forward(snet, xp, xn, cfg, &cache);
            const std::int64_t out = rng.uniform_int(0, net.output_dim() - 1);
            const SplitLrpResult r = split_lrp(snet, st, out, rc.epsilon);
            const double s = std::max(1.0, std::fabs(r.seed_value));
            for (std::size_t p = 0; p < r.rel_pos.size(); ++p) {
                // Inside residual blocks half the relevance is deliberately
                // in flight between the markers.
                if (has_residual_blocks && p != 0 && p + 1 != r.rel_pos.size()) continue;
                const double total =
                    r.rel_pos[p].sum() + r.rel_neg[p].sum() + r.absorbed[p];
                lrp.max_residual = std::max(lrp.max_residual, std::fabs(total - r.seed_value) / s);
            }
            max_absorbed_fraction =
                std::max(max_absorbed_fraction, std::fabs(r.absorbed.front()) / s);
            ++lrp.trials;
        }
        std::ostringstream note;
        note.precision(3);
        note << "max stabilizer-absorbed fraction " << max_absorbed_fraction;
        lrp.note = note.str();
        results.push_back(lrp);
    }

    json out;
    out["model"] = rc.model;
    out["trials"] = rc.trials;
    out["seed"] = rc.seed;
    out["config"] = rc.echo();
    bool all_pass = true;
    json props = json::array();
    for (const PropertyResult& p : results) {
        json pj;
        pj["id"] = p.id;
        pj["trials"] = p.trials;
        pj["max_residual"] = p.max_residual;
        pj["tolerance"] = p.tolerance;
        pj["status"] = p.skipped ? "skipped" : (p.pass() ? "pass" : "fail");
        if (!p.note.empty()) pj["note"] = p.note;
        props.push_back(std::move(pj));
        if (!p.pass()) all_pass = false;
        std::cout << (p.skipped ? "[skip] " : (p.pass() ? "[pass] " : "[FAIL] ")) << p.id
                  << " residual=" << p.max_residual << " tol=" << p.tolerance << "\n";
    }
    out["properties"] = std::move(props);
    out["status"] = all_pass ? "pass" : "fail";
    if (!rc.out.empty()) {
        write_text_file(out.dump(2) + "\n", (fs::path(rc.out) / "verify_report.json").string());
    }
    return all_pass ? 0 : 1;
}

Tensor method_map(const RunConfig& rc, const std::string& method, const LoadedModel& lm,
                  const ImageSample& sample, std::uint64_t image_seed) {
    if (method == "random") {
        Rng rng(image_seed);
        Tensor m({sample.image.dim(1), sample.image.dim(2)});
        for (std::int64_t i = 0; i < m.size(); ++i) m[i] = rng.uniform();
        return m;
    }
    RunConfig mc = rc;
    mc.method = method;
    AttributionMap map = compute_attribution(mc, lm, sample.image, sample.label);
    Tensor v = spatial_map(map.values);
    if (rc.abs_flag && !map.abs) v = abs(v);
    return v;
}

int cmd_evaluate(const RunConfig& rc) {
    if (rc.methods.empty()) throw ConfigError("--methods must name at least one method");
    if (rc.metrics.empty()) throw ConfigError("--metrics must name at least one metric");
    const LoadedModel lm = load_any_model(rc.model, parse_maxpool(rc.maxpool));
    const fs::path dir(rc.mnist_dir);
    auto ds = load_mnist_idx((dir / "t10k-images-idx3-ubyte").string(),
                             (dir / "t10k-labels-idx1-ubyte").string());
    if (rc.limit > 0 && rc.limit < static_cast<std::int64_t>(ds.size())) {
        ds.resize(static_cast<std::size_t>(rc.limit));
    }
    if (!rc.masks_dir.empty()) attach_pgm_masks(ds, rc.masks_dir);

    // Counterpart model for the randomization sanity metric: the last
    // three weight layers are reinitialized from Gaussian noise.
    LoadedModel randomized;
    bool have_randomized = false;
    for (const std::string& metric : rc.metrics) {
        if (metric != "spearman_randomization") continue;
        randomized.net = reinit_last_weight_layers(lm.net, 3, rc.seed ^ 0x5eed5eedULL);
        randomized.snet = split_network(randomized.net, parse_maxpool(rc.maxpool));
        have_randomized = true;
    }

    struct Job {
        std::string method;
        std::size_t image;
    };
    std::vector<Job> jobs;
    for (const std::string& m : rc.methods) {
        for (std::size_t i = 0; i < ds.size(); ++i) jobs.push_back({m, i});
    }
    std::vector<std::vector<MetricRow>> rows(jobs.size());

    parallel_for(jobs.size(), [&](std::size_t j) {
        const Job& job = jobs[j];
        const ImageSample& sample = ds[job.image];
        const std::uint64_t image_seed = Rng(rc.seed).stream("eval", job.image).next_u64();
        auto put = [&](const std::string& metric, double value, bool failed = false,
                       const std::string& err = "") {
            MetricRow r;
            r.method = job.method;
            r.layer = rc.layer;
            r.abs = rc.abs_flag;
            r.metric = metric;
            r.image_index = static_cast<std::int64_t>(job.image);
            r.value = value;
            r.failed = failed;
            r.error = err;
            rows[j].push_back(std::move(r));
        };
        Tensor map;
        try {
            map = method_map(rc, job.method, lm, sample, image_seed);
        } catch (const Error& e) {
            for (const std::string& metric : rc.metrics) put(metric, 0.0, true, e.what());
            return;
        }
        for (const std::string& metric : rc.metrics) {
            try {
                if (metric == "pixel_flipping") {
                    const PixelFlipCurve c = pixel_flipping(lm.net, sample, map, 8, {0.05, 0.20});
                    put("pixel_flipping_auc5", c.auc[0]);
                    put("pixel_flipping_auc20", c.auc[1]);
                } else if (metric == "pointing_game") {
                    put(metric, pointing_game(map, sample.mask) ? 1.0 : 0.0);
                } else if (metric == "attribution_localization") {
                    put(metric, attribution_localization(map, sample.mask));
                } else if (metric == "max_sensitivity") {
                    auto attr = [&](const Tensor& x) {
                        ImageSample s = sample;
                        s.image = x;
                        return method_map(rc, job.method, lm, s, image_seed);
                    };
                    put(metric, max_sensitivity(attr, sample, 25, 0.02, image_seed));
                } else if (metric == "spearman_randomization") {
                    if (!have_randomized) throw ConfigError("randomized model missing");
                    const Tensor other = method_map(rc, job.method, randomized, sample, image_seed);
                    put(metric, spearman_sanity(map, other));
                } else {
                    put(metric, 0.0, true, "unknown metric '" + metric + "'");
                }
            } catch (const Error& e) {
                put(metric, 0.0, true, e.what());
            }
        }
    });

    MetricReport report;
    json echo = rc.echo();
    echo["pixels_per_step"] = 8;
    echo["sensitivity_samples"] = 25;
    echo["sensitivity_radius"] = 0.02;
    echo["auc_limits"] = {0.05, 0.20};
    report.config_echo = echo.dump();
    for (auto& rv : rows) {
        for (MetricRow& r : rv) report.add(std::move(r));
    }
    report.append_aggregates();
    const fs::path out(rc.out);
    fs::create_directories(out);
    write_text_file(report.to_csv(), (out / "metrics.csv").string());
    write_text_file(echo.dump(2) + "\n", (out / "evaluate_config.json").string());
    bool any_error = false;
    for (const MetricRow& r : report.rows) any_error |= r.failed;
    std::cout << "wrote " << (out / "metrics.csv").string() << " (" << report.rows.size()
              << " rows)\n";
    return any_error ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DC split toolkit for ReLU networks"};
    app.require_subcommand(1);
    RunConfig rc;

    auto add_common = [&rc](CLI::App* cmd) {
        cmd->add_option("--model", rc.model, "model manifest path")->required();
        cmd->add_option("--seed", rc.seed, "root seed");
        cmd->add_option("--out", rc.out, "output directory");
        cmd->add_option("--maxpool", rc.maxpool, "maxpool split mode: convex|wta");
        cmd->add_option("--alpha", rc.alpha, "backward shift factor in [0,0.5]");
        cmd->add_option("--forward", rc.forward, "forward stabilization: none|shift|scale");
        cmd->add_option("--theta", rc.theta, "scale factor");
        cmd->add_option("--Theta", rc.big_theta, "scale trigger threshold");
        cmd->add_option("--input-split", rc.input_split, "input split: half|posneg|shift");
        cmd->add_option("--epsilon", rc.epsilon, "LRP stabilizer");
        cmd->add_option("--gamma", rc.gamma, "LRP gamma");
    };

    CLI::App* split = app.add_subcommand("split", "write the split-pair model and a report");
    add_common(split);

    CLI::App* verify = app.add_subcommand("verify", "run the invariant suite on a model");
    add_common(verify);
    verify->add_option("--trials", rc.trials, "seeded trials per property");

    CLI::App* attribute = app.add_subcommand("attribute", "compute one attribution map");
    add_common(attribute);
    attribute->add_option("--input", rc.input, "input image (PGM) or 'random'");
    attribute->add_option("--mnist", rc.mnist_dir, "IDX dataset directory");
    attribute->add_option("--index", rc.index, "dataset image index");
    attribute->add_option("--method", rc.method,
                          "splitgrad|splitcam|splitlrp|vanilla|layercam|lrp-gamma");
    attribute->add_option("--layer", rc.layer, "trace position the method reads");
    attribute->add_option("--stream", rc.stream, "g|h|+g|-g|+h|-h or pos|neg|comb");
    attribute->add_flag("--abs", rc.abs_flag, "absolute value of the map");
    attribute->add_flag("--selftest", rc.selftest,
                        "check splitgrad(alpha=0.5) against 0.5 * vanilla gradient");

    CLI::App* evaluate = app.add_subcommand("evaluate", "run metrics over an IDX dataset");
    add_common(evaluate);
    evaluate->add_option("--mnist", rc.mnist_dir, "IDX dataset directory")->required();
    evaluate->add_option("--methods", rc.methods, "methods to evaluate")->delimiter(',');
    evaluate->add_option("--metrics", rc.metrics, "metrics to run")->delimiter(',');
    evaluate->add_option("--layer", rc.layer, "trace position for layer methods");
    evaluate->add_option("--stream", rc.stream, "stream selector");
    evaluate->add_flag("--abs", rc.abs_flag, "absolute value of maps");
    evaluate->add_option("--limit", rc.limit, "evaluate only the first N images");
    evaluate->add_option("--masks", rc.masks_dir,
                         "directory of PGM masks replacing the synthesized ones");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (split->parsed()) return cmd_split(rc);
        if (verify->parsed()) return cmd_verify(rc);
        if (attribute->parsed()) return cmd_attribute(rc);
        if (evaluate->parsed()) return cmd_evaluate(rc);
    } catch (const ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const LoadError& e) {
        std::cerr << "load error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
