#ifndef SPLITKIT_ATTRIBUTION_HPP
#define SPLITKIT_ATTRIBUTION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "splitkit/network.hpp"
#include "splitkit/splitter.hpp"
#include "splitkit/stabilization.hpp"

namespace splitkit {

// Which sensitivity map (or relevance stream) an attribution method reads.
enum class StreamSelect { PosG, NegG, CombG, PosH, NegH, CombH };

const char* stream_select_name(StreamSelect s);
StreamSelect stream_select_from_name(const std::string& name);

struct AttributionMap {
    Tensor values;          // H x W after channel reduction, or input-shaped
    std::string method;
    std::string tag;        // layer + stream, e.g. "(3,+,g)"
    std::int64_t layer = 0;
    double alpha = 0.0;
    bool abs = false;
};

// Mean over the channel axis of a [CxHxW] tensor; identity otherwise.
Tensor channel_mean(const Tensor& t);

// Plain input gradient of the chosen logit.
AttributionMap vanilla_gradient(const Network& net, const Tensor& x, std::int64_t out_index,
                                bool reduce_channels = false);

// ReLU(sum_c grad_c * act_c) at trace position l (spatial layers only).
AttributionMap layer_cam(const Network& net, const Trace& trace, const GradTrace& grads,
                         std::int64_t l);

// Channel mean of the selected shifted sensitivity at position l.
AttributionMap split_grad(const SensTrace& sens, std::int64_t l, StreamSelect select,
                          bool abs_flag);

// Channel sum of the selected sensitivity times the matching activation:
// +/- variants pair with the stream activation, combined variants with the
// cached original activation (stream difference when no cache is given).
// No positive filtering is applied.
AttributionMap split_cam(const SplitTrace& strace, const SensTrace& sens,
                         const Trace* net_trace, std::int64_t l, StreamSelect variant,
                         bool abs_flag);

// Relevance per position for the gamma-rule LRP baseline; BatchNormEval
// layers are merged into their host layers first.
struct LrpResult {
    std::vector<Tensor> relevance;  // one tensor per position
    AttributionMap input_map() const;
};
LrpResult lrp_gamma(const Network& net, const Tensor& x, std::int64_t out_index, double gamma,
                    double eps);

// LRP over the split-pair treated as one unified system; relevance is
// seeded with the + stream output of the target logit.
struct SplitLrpResult {
    std::vector<Tensor> rel_pos, rel_neg;  // per position
    // Relevance the epsilon stabilizer absorbed strictly above position p;
    // rel_pos[p].sum() + rel_neg[p].sum() + absorbed[p] equals the seed up
    // to float rounding on any model.
    std::vector<double> absorbed;
    double seed_value = 0.0;               // a^(L,+)[target]
    AttributionMap pos_map() const;
    AttributionMap neg_map() const;
    AttributionMap comb_map() const;       // R+(0) - R-(0)
};
SplitLrpResult split_lrp(const SplitNetwork& snet, const SplitTrace& strace,
                         std::int64_t out_index, double eps);

}  // namespace splitkit

#endif
