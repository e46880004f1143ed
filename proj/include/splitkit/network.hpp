#ifndef SPLITKIT_NETWORK_HPP
#define SPLITKIT_NETWORK_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "splitkit/rng.hpp"
#include "splitkit/tensor.hpp"

namespace splitkit {

enum class LayerKind {
    Linear,
    Conv2d,
    ReLU,
    MaxoutRank2,
    MaxPool2d,
    AvgPool2d,
    BatchNormEval,
    Bias,
    ResidualAddStart,
    ResidualAddEnd,
    Flatten,
};

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

struct Layer {
    LayerKind kind;

    // Linear: weight [out x in]. Conv2d: weight [F x C x kh x kw].
    Tensor weight;
    // Bias: bias [d] matching the activation, or [C] broadcast over H x W.
    Tensor bias;
    // BatchNormEval parameters, all [C].
    Tensor gamma, beta, mean, var;
    double eps = 0.0;
    // MaxPool2d / AvgPool2d.
    std::int64_t pool_k = 0, pool_stride = 0;
    // Conv2d.
    std::array<std::int64_t, 2> stride{1, 1};
    std::array<std::int64_t, 2> padding{0, 0};

    static Layer linear(Tensor w);
    static Layer conv2d(Tensor w, std::array<std::int64_t, 2> stride,
                        std::array<std::int64_t, 2> padding);
    static Layer relu();
    static Layer maxout_rank2();
    static Layer maxpool2d(std::int64_t k, std::int64_t stride);
    static Layer avgpool2d(std::int64_t k, std::int64_t stride);
    static Layer batchnorm_eval(Tensor gamma, Tensor beta, Tensor mean, Tensor var, double eps);
    static Layer bias_layer(Tensor b);
    static Layer residual_start();
    static Layer residual_end();
    static Layer flatten();
};

// Ordered layer list plus the declared input shape. Immutable after
// construction; forward/backward are pure, so concurrent evaluation on a
// shared Network is safe.
struct Network {
    std::vector<Layer> layers;
    std::vector<std::int64_t> input_shape;

    std::size_t layer_count() const { return layers.size(); }

    // Output shape of every position: shapes[0] = input_shape, shapes[i+1] =
    // output of layer i. Throws ShapeError if the layers do not compose.
    std::vector<std::vector<std::int64_t>> position_shapes() const;

    std::vector<std::int64_t> output_shape() const { return position_shapes().back(); }
    std::int64_t output_dim() const { return shape_product(output_shape()); }

    void validate() const { (void)position_shapes(); }
};

// values[0] = x, values[i+1] = output of layer i. For an activation layer at
// index i, values[i] is its preactivation and values[i+1] its activation.
struct Trace {
    std::vector<Tensor> values;

    const Tensor& input() const { return values.front(); }
    const Tensor& output() const { return values.back(); }
};

// grads[p] = d output[out_index] / d values[p] for every position p.
struct GradTrace {
    std::vector<Tensor> grads;
    std::int64_t out_index = 0;

    const Tensor& input_grad() const { return grads.front(); }
};

Trace forward(const Network& net, const Tensor& x);

// Standard backprop through the trace. ReLU counts z = 0 as active; maxout
// and maxpool break ties toward the first index in row-major scan order.
GradTrace backward(const Network& net, const Trace& trace, std::int64_t out_index);

// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h per input coordinate.
Tensor finite_diff_grad(const Network& net, const Tensor& x, std::int64_t out_index, double h);

// Folds every BatchNormEval into the directly preceding Linear/Conv2d
// (+Bias) pair; the result contains no BatchNormEval layers.
Network merge_batchnorm(const Network& net);

// Deterministic MLP generator: Linear(+optional Bias)+ReLU chain with the
// given widths, weights from uniform(-1,1) scaled by 1/sqrt(fan_in).
struct RandomNetSpec {
    std::vector<std::int64_t> widths;  // widths[0] = input dim
    bool bias = false;
    bool final_relu = false;
    double weight_scale = 0.0;         // 0 means 1/sqrt(fan_in)
};
Network random_network(const RandomNetSpec& spec, std::uint64_t seed);

// Redraws the weights of the last `count` Linear/Conv2d layers from a
// Gaussian scaled by 1/sqrt(fan_in); the randomization sanity-check
// counterpart of a trained model.
Network reinit_last_weight_layers(const Network& net, int count, std::uint64_t seed);

}  // namespace splitkit

#endif
