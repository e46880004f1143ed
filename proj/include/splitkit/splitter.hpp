#ifndef SPLITKIT_SPLITTER_HPP
#define SPLITKIT_SPLITTER_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "splitkit/network.hpp"
#include "splitkit/stab_config.hpp"
#include "splitkit/tensor.hpp"

namespace splitkit {

enum class MaxPoolMode { Convex, Wta };
enum class InputSplitStrategy { HalfHalf, PosNegParts, NonnegShift };

const char* maxpool_mode_name(MaxPoolMode m);

// One layer of the split-pair. Mirrors the source layer kind; weight-bearing
// kinds hold the elementwise non-negative parts with pos - neg equal to the
// source parameter bitwise.
struct SplitLayer {
    LayerKind kind;
    Tensor weight_pos, weight_neg;      // Linear / Conv2d
    Tensor bias_pos, bias_neg;          // Bias
    Tensor scale_pos, scale_neg;        // BatchNormEval folded per-channel affine
    Tensor offset_pos, offset_neg;
    std::int64_t pool_k = 0, pool_stride = 0;
    std::array<std::int64_t, 2> stride{1, 1};
    std::array<std::int64_t, 2> padding{0, 0};
};

struct SplitNetwork {
    std::vector<SplitLayer> layers;
    std::vector<std::int64_t> input_shape;
    MaxPoolMode maxpool_mode = MaxPoolMode::Convex;
    Network source;

    std::size_t layer_count() const { return layers.size(); }
    // Largest non-negativity violation over all split parameters (0 for a
    // well-formed split) and the largest |pos - neg - source| reconstruction
    // error; both are reported by the split subcommand.
    double max_negativity() const;
    double max_reconstruction_error() const;
};

// Per-layer record of what the forward stabilizer did.
struct StabLogEntry {
    double scale = 1.0;     // cumulative factor applied at this layer
    bool shifted = false;
    bool corrected = false;
};

struct SplitTrace {
    // pos[0], neg[0] are the split inputs; pos[i+1], neg[i+1] the outputs of
    // split layer i, after any stabilization of that layer.
    std::vector<Tensor> pos, neg;
    // Maxout mask at ReLU layers: 1 where z+ >= z-, indexed by layer.
    std::vector<std::vector<std::uint8_t>> maxout_mask;
    // Chosen window position (flat input index) per output cell for
    // MaxPool2d / MaxoutRank2 layers, in both convex and wta mode.
    std::vector<std::vector<std::int64_t>> pool_choice;
    std::vector<StabLogEntry> stab_log;

    const Tensor& g() const { return pos.back(); }
    const Tensor& h() const { return neg.back(); }
};

// Elementwise parameter split: Wp = max(W,0), Wn = max(-W,0).
std::pair<Tensor, Tensor> split_weights(const Tensor& w);

// Builds the split-pair. ReLU becomes a rank-2 maxout coupling the streams;
// BatchNormEval is folded to a per-channel affine and split like a weight.
SplitNetwork split_network(const Network& net, MaxPoolMode mode);

std::pair<Tensor, Tensor> split_input(const Tensor& x, InputSplitStrategy strategy);

// Runs both streams. `cache` must be the original network's trace on
// xp - xn whenever cfg.correct_forward or pattern caching requires it.
SplitTrace split_forward(const SplitNetwork& snet, const Tensor& xp, const Tensor& xn,
                         const StabConfig& cfg, const Trace* cache = nullptr);

// Continues a split forward from an arbitrary position with given stream
// activations (no stabilization); used to probe the shift-forward behaviour.
std::pair<Tensor, Tensor> split_forward_from(const SplitNetwork& snet, std::size_t position,
                                             const Tensor& ap, const Tensor& an);

struct MaxPoolSplitResult {
    Tensor out_pos, out_neg;
    std::vector<std::int64_t> choice;  // flat input index per output cell
};

// Split maxpool over k x k windows. Convex mode evaluates
// max_j { a_j+ + sum_{i != j} a_i- } and sum_i a_i- per window; wta forwards
// the pair at the window position maximizing a+ - a-. First index wins ties.
MaxPoolSplitResult maxpool_split(const Tensor& ap, const Tensor& an, std::int64_t k,
                                 std::int64_t stride, MaxPoolMode mode);

// Indices of weight-bearing layers (Linear/Conv2d/BatchNormEval), the
// backward shift points. The alpha schedule has one entry per element here
// plus one for the output seed.
std::vector<std::size_t> weight_layer_positions(const Network& net);

}  // namespace splitkit

#endif
