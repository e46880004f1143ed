// Python bindings for the main splitkit operations.

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "splitkit/attribution.hpp"
#include "splitkit/error.hpp"
#include "splitkit/maxout_mult.hpp"
#include "splitkit/metrics.hpp"
#include "splitkit/mnist.hpp"
#include "splitkit/model_io.hpp"
#include "splitkit/network.hpp"
#include "splitkit/splitter.hpp"
#include "splitkit/stabilization.hpp"

namespace py = pybind11;
using namespace splitkit;

namespace {

Tensor tensor_from(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    std::vector<std::int64_t> shape(arr.ndim());
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[static_cast<std::size_t>(i)] = arr.shape(i);
    std::vector<double> data(arr.data(), arr.data() + arr.size());
    return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> tensor_to(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> arr(shape);
    std::copy(t.data(), t.data() + t.size(), arr.mutable_data());
    return arr;
}

MaxPoolMode mode_from(const std::string& s) {
    if (s == "convex") return MaxPoolMode::Convex;
    if (s == "wta") return MaxPoolMode::Wta;
    throw ConfigError("maxpool mode must be 'convex' or 'wta'");
}

InputSplitStrategy strategy_from(const std::string& s) {
    if (s == "half") return InputSplitStrategy::HalfHalf;
    if (s == "posneg") return InputSplitStrategy::PosNegParts;
    if (s == "shift") return InputSplitStrategy::NonnegShift;
    throw ConfigError("input split must be 'half', 'posneg' or 'shift'");
}

StabConfig config_from(double alpha, const std::string& forward, bool correct_forward,
                       bool correct_backward, double theta, double big_theta) {
    StabConfig cfg;
    cfg.alpha = alpha;
    if (forward == "none") {
        cfg.forward_mode = ForwardStabMode::None;
    } else if (forward == "shift") {
        cfg.forward_mode = ForwardStabMode::ShiftToHalf;
    } else if (forward == "scale") {
        cfg.forward_mode = ForwardStabMode::ScaleThreshold;
    } else {
        throw ConfigError("forward mode must be 'none', 'shift' or 'scale'");
    }
    cfg.correct_forward = correct_forward;
    cfg.correct_backward = correct_backward;
    cfg.theta = theta;
    cfg.big_theta = big_theta;
    cfg.validate();
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_splitkit, m) {
    m.doc() = "Difference-of-convex decomposition toolkit for ReLU networks";

    py::register_exception<Error>(m, "SplitkitError");

    py::class_<Network>(m, "Network")
        .def_property_readonly("input_shape", [](const Network& n) { return n.input_shape; })
        .def_property_readonly("layer_count", [](const Network& n) { return n.layer_count(); })
        .def_property_readonly("output_dim", [](const Network& n) { return n.output_dim(); })
        .def("layer_kinds", [](const Network& n) {
            std::vector<std::string> kinds;
            for (const Layer& l : n.layers) kinds.emplace_back(layer_kind_name(l.kind));
            return kinds;
        });

    py::class_<SplitNetwork>(m, "SplitNetwork")
        .def_property_readonly("layer_count", [](const SplitNetwork& n) { return n.layer_count(); })
        .def_property_readonly("max_negativity", [](const SplitNetwork& n) { return n.max_negativity(); })
        .def_property_readonly("max_reconstruction_error",
                               [](const SplitNetwork& n) { return n.max_reconstruction_error(); })
        .def_property_readonly("source", [](const SplitNetwork& n) { return n.source; });

    py::class_<Trace>(m, "Trace")
        .def("value", [](const Trace& t, std::size_t p) { return tensor_to(t.values.at(p)); })
        .def_property_readonly("output", [](const Trace& t) { return tensor_to(t.output()); })
        .def_property_readonly("positions", [](const Trace& t) { return t.values.size(); });

    py::class_<GradTrace>(m, "GradTrace")
        .def("grad", [](const GradTrace& t, std::size_t p) { return tensor_to(t.grads.at(p)); })
        .def_property_readonly("input_grad",
                               [](const GradTrace& t) { return tensor_to(t.input_grad()); });

    py::class_<SplitTrace>(m, "SplitTrace")
        .def_property_readonly("g", [](const SplitTrace& t) { return tensor_to(t.g()); })
        .def_property_readonly("h", [](const SplitTrace& t) { return tensor_to(t.h()); })
        .def("pos", [](const SplitTrace& t, std::size_t p) { return tensor_to(t.pos.at(p)); })
        .def("neg", [](const SplitTrace& t, std::size_t p) { return tensor_to(t.neg.at(p)); })
        .def_property_readonly("positions", [](const SplitTrace& t) { return t.pos.size(); });

    py::class_<SensTrace>(m, "SensTrace")
        .def("pos_g", [](const SensTrace& t, std::size_t p) { return tensor_to(t.gp.at(p)); })
        .def("neg_g", [](const SensTrace& t, std::size_t p) { return tensor_to(t.gn.at(p)); })
        .def("pos_h", [](const SensTrace& t, std::size_t p) { return tensor_to(t.hp.at(p)); })
        .def("neg_h", [](const SensTrace& t, std::size_t p) { return tensor_to(t.hn.at(p)); })
        .def("comb_g", [](const SensTrace& t, std::size_t p) { return tensor_to(t.comb_g(p)); })
        .def("comb_h", [](const SensTrace& t, std::size_t p) { return tensor_to(t.comb_h(p)); })
        .def_property_readonly("positions", [](const SensTrace& t) { return t.positions(); });

    m.def("load_model", &load_model, py::arg("path"));
    m.def("save_model", &save_model, py::arg("net"), py::arg("path"));
    m.def("load_split_model", &load_split_model, py::arg("path"));
    m.def("save_split_model", &save_split_model, py::arg("snet"), py::arg("path"));

    m.def(
        "random_mlp",
        [](std::vector<std::int64_t> widths, std::uint64_t seed, bool bias, bool final_relu) {
            RandomNetSpec spec;
            spec.widths = std::move(widths);
            spec.bias = bias;
            spec.final_relu = final_relu;
            return random_network(spec, seed);
        },
        py::arg("widths"), py::arg("seed"), py::arg("bias") = false,
        py::arg("final_relu") = false);

    m.def("merge_batchnorm", &merge_batchnorm, py::arg("net"));

    m.def(
        "forward", [](const Network& net, const py::array_t<double>& x) {
            return forward(net, tensor_from(x));
        },
        py::arg("net"), py::arg("x"));
    m.def(
        "backward",
        [](const Network& net, const Trace& tr, std::int64_t out_index) {
            return backward(net, tr, out_index);
        },
        py::arg("net"), py::arg("trace"), py::arg("out_index"));
    m.def(
        "finite_diff_grad",
        [](const Network& net, const py::array_t<double>& x, std::int64_t out_index, double h) {
            return tensor_to(finite_diff_grad(net, tensor_from(x), out_index, h));
        },
        py::arg("net"), py::arg("x"), py::arg("out_index"), py::arg("h") = 1e-5);

    m.def(
        "split_network",
        [](const Network& net, const std::string& mode) {
            return split_network(net, mode_from(mode));
        },
        py::arg("net"), py::arg("maxpool_mode") = "convex");
    m.def(
        "split_input",
        [](const py::array_t<double>& x, const std::string& strategy) {
            auto [p, n] = split_input(tensor_from(x), strategy_from(strategy));
            return py::make_tuple(tensor_to(p), tensor_to(n));
        },
        py::arg("x"), py::arg("strategy") = "half");
    m.def(
        "split_forward",
        [](const SplitNetwork& snet, const py::array_t<double>& xp, const py::array_t<double>& xn,
           double alpha, const std::string& forward_mode, bool correct_forward, double theta,
           double big_theta, const Trace* cache) {
            const StabConfig cfg =
                config_from(alpha, forward_mode, correct_forward, false, theta, big_theta);
            return split_forward(snet, tensor_from(xp), tensor_from(xn), cfg, cache);
        },
        py::arg("snet"), py::arg("xp"), py::arg("xn"), py::arg("alpha") = 0.4,
        py::arg("forward_mode") = "none", py::arg("correct_forward") = false,
        py::arg("theta") = 0.1, py::arg("big_theta") = 10.0, py::arg("cache") = nullptr);

    m.def(
        "local_sensitivities",
        [](const SplitNetwork& snet, const SplitTrace& st, const Trace* net_trace, double alpha,
           std::int64_t out_index, const std::string& patterns) {
            StabConfig cfg;
            cfg.alpha = alpha;
            if (patterns == "original") {
                cfg.pattern_source = PatternSource::OriginalPositivity;
            } else if (patterns != "split") {
                throw ConfigError("patterns must be 'split' or 'original'");
            }
            return local_sensitivities(snet, st, net_trace, cfg, out_index);
        },
        py::arg("snet"), py::arg("strace"), py::arg("net_trace") = nullptr,
        py::arg("alpha") = 0.4, py::arg("out_index") = 0, py::arg("patterns") = "split");
    m.def("backward_correct", &backward_correct, py::arg("sens"), py::arg("grads"));

    m.def(
        "w_abs_product",
        [](const Network& net, std::int64_t l) { return tensor_to(w_abs_product(net, l)); },
        py::arg("net"), py::arg("l"));
    m.def(
        "closed_form_shifted_grads",
        [](const Network& net, const Trace& tr, double alpha, std::int64_t out_index) {
            StabConfig cfg;
            cfg.alpha = alpha;
            auto [g, h] = closed_form_shifted_grads(net, tr, cfg, out_index);
            return py::make_tuple(tensor_to(g), tensor_to(h));
        },
        py::arg("net"), py::arg("trace"), py::arg("alpha"), py::arg("out_index") = 0);

    m.def(
        "vanilla_gradient",
        [](const Network& net, const py::array_t<double>& x, std::int64_t out_index,
           bool reduce) {
            return tensor_to(vanilla_gradient(net, tensor_from(x), out_index, reduce).values);
        },
        py::arg("net"), py::arg("x"), py::arg("out_index"), py::arg("reduce_channels") = false);
    m.def(
        "split_grad_map",
        [](const SensTrace& sens, std::int64_t layer, const std::string& stream, bool abs_flag) {
            return tensor_to(
                split_grad(sens, layer, stream_select_from_name(stream), abs_flag).values);
        },
        py::arg("sens"), py::arg("layer") = 0, py::arg("stream") = "g", py::arg("abs") = false);
    m.def(
        "split_cam_map",
        [](const SplitTrace& st, const SensTrace& sens, const Trace* net_trace,
           std::int64_t layer, const std::string& variant, bool abs_flag) {
            return tensor_to(
                split_cam(st, sens, net_trace, layer, stream_select_from_name(variant), abs_flag)
                    .values);
        },
        py::arg("strace"), py::arg("sens"), py::arg("net_trace") = nullptr, py::arg("layer") = 0,
        py::arg("variant") = "g", py::arg("abs") = false);
    m.def(
        "lrp_gamma_map",
        [](const Network& net, const py::array_t<double>& x, std::int64_t out_index, double gamma,
           double eps) {
            return tensor_to(lrp_gamma(net, tensor_from(x), out_index, gamma, eps).relevance.front());
        },
        py::arg("net"), py::arg("x"), py::arg("out_index"), py::arg("gamma") = 0.0,
        py::arg("eps") = 1e-6);
    m.def(
        "split_lrp_maps",
        [](const SplitNetwork& snet, const SplitTrace& st, std::int64_t out_index, double eps) {
            const SplitLrpResult r = split_lrp(snet, st, out_index, eps);
            return py::make_tuple(tensor_to(r.pos_map().values), tensor_to(r.neg_map().values),
                                  tensor_to(r.comb_map().values));
        },
        py::arg("snet"), py::arg("strace"), py::arg("out_index"), py::arg("eps") = 1e-6);

    py::class_<ImageSample>(m, "ImageSample")
        .def_property_readonly("image", [](const ImageSample& s) { return tensor_to(s.image); })
        .def_readonly("label", &ImageSample::label)
        .def_property_readonly("mask", [](const ImageSample& s) { return tensor_to(s.mask); });

    m.def("load_mnist_idx", &load_mnist_idx, py::arg("images_path"), py::arg("labels_path"),
          py::arg("mask_threshold") = 0.35);

    m.def(
        "pixel_flipping",
        [](const Network& net, const ImageSample& sample, const py::array_t<double>& map,
           std::int64_t pixels_per_step, std::vector<double> limits) {
            const PixelFlipCurve c =
                pixel_flipping(net, sample, tensor_from(map), pixels_per_step, limits);
            return py::make_tuple(c.fraction, c.logit_drop, c.auc);
        },
        py::arg("net"), py::arg("sample"), py::arg("map"), py::arg("pixels_per_step") = 8,
        py::arg("frac_limits") = std::vector<double>{0.05, 0.20});
    m.def(
        "pointing_game",
        [](const py::array_t<double>& map, const py::array_t<double>& mask) {
            return pointing_game(tensor_from(map), tensor_from(mask));
        },
        py::arg("map"), py::arg("mask"));
    m.def(
        "attribution_localization",
        [](const py::array_t<double>& map, const py::array_t<double>& mask) {
            return attribution_localization(tensor_from(map), tensor_from(mask));
        },
        py::arg("map"), py::arg("mask"));
    m.def(
        "max_sensitivity",
        [](const std::function<py::array_t<double>(py::array_t<double>)>& attr_fn,
           const ImageSample& sample, int n_samples, double radius, std::uint64_t seed) {
            auto wrapped = [&attr_fn](const Tensor& x) { return tensor_from(attr_fn(tensor_to(x))); };
            return max_sensitivity(wrapped, sample, n_samples, radius, seed);
        },
        py::arg("attr_fn"), py::arg("sample"), py::arg("n_samples") = 25, py::arg("radius") = 0.02,
        py::arg("seed") = 0);
    m.def(
        "spearman_sanity",
        [](const py::array_t<double>& a, const py::array_t<double>& b) {
            return spearman_sanity(tensor_from(a), tensor_from(b));
        },
        py::arg("map_a"), py::arg("map_b"));

    py::class_<MultNet>(m, "MultNet")
        .def_property_readonly("neuron_count", [](const MultNet& g) { return g.neurons.size(); })
        .def_property_readonly("input_count", [](const MultNet& g) { return g.inputs.size(); });
    m.def("load_multnet", &load_multnet, py::arg("path"));
    m.def("save_multnet", &save_multnet, py::arg("net"), py::arg("path"));
    m.def("multnet_from_json", &multnet_from_json_text, py::arg("text"));
    m.def("multnet_to_json", &multnet_to_json_text, py::arg("net"));
    m.def("eval_multnet", &eval_multnet, py::arg("net"), py::arg("x"));
    m.def(
        "split_multnet",
        [](const MultNet& g, bool split_inputs) {
            MultSplitOptions opt;
            opt.split_inputs = split_inputs;
            const MultSplit s = split_multnet(g, opt);
            return py::make_tuple(s.pos, s.neg);
        },
        py::arg("net"), py::arg("split_inputs") = true);
    m.def(
        "classify_multnet",
        [](const MultNet& g) { return std::string(multnet_class_name(classify_multnet(g))); },
        py::arg("net"));
}
