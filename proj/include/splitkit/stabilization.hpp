#ifndef SPLITKIT_STABILIZATION_HPP
#define SPLITKIT_STABILIZATION_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "splitkit/network.hpp"
#include "splitkit/splitter.hpp"
#include "splitkit/stab_config.hpp"
#include "splitkit/tensor.hpp"

namespace splitkit {

// Local sensitivities of both stream heads w.r.t. the +/- activations at
// every position, after the per-layer alpha shifts. Position p matches the
// trace convention (0 = input, p = output of layer p-1).
struct SensTrace {
    std::vector<Tensor> gp, gn, hp, hn;
    std::vector<double> alpha_at_position;  // 0 where no shift was applied
    std::int64_t out_index = 0;

    Tensor comb_g(std::size_t pos) const { return scale(sub(gp[pos], gn[pos]), 0.5); }
    Tensor comb_h(std::size_t pos) const { return scale(sub(hp[pos], hn[pos]), 0.5); }
    std::size_t positions() const { return gp.size(); }
};

// Standalone forward re-centering of one stream pair (the same procedure
// split_forward applies per layer).
std::pair<Tensor, Tensor> stabilize_forward(const Tensor& ap, const Tensor& an,
                                            ForwardStabMode mode, double theta, double big_theta,
                                            const Tensor* reference = nullptr,
                                            double* applied_scale = nullptr);

// Shared constant shift of a stream pair; preserves the difference.
std::pair<Tensor, Tensor> shift_pair(const Tensor& ap, const Tensor& an, const Tensor& c);

// Minimal correction restoring the forward invariant: keeps the negative
// stream and rebuilds the positive one as an + a_orig.
std::pair<Tensor, Tensor> forward_correct(const Tensor& ap, const Tensor& an,
                                          const Tensor& a_orig);

// Network lowered to alternating affine blocks and ReLU flags; consecutive
// linear operations (conv, avgpool, linear, flatten) fold into one matrix.
struct MlpForm {
    std::vector<Tensor> weights;              // block matrices, input side first
    std::vector<bool> relu_after;             // whether block j ends in a ReLU
    std::vector<std::size_t> preact_position; // trace position of block j's preactivation
    std::int64_t input_dim = 0;

    std::size_t blocks() const { return weights.size(); }
};
MlpForm lower_to_mlp(const Network& net);

// Product of |W| over blocks l+1..L of the lowered network; identity for
// l = L. Index l counts affine blocks from the input, 0-based positions.
Tensor w_abs_product(const Network& net, std::int64_t l);

// Iterative alpha-shifted backward pass over the split-pair (the
// production path; works on any supported layer mix).
SensTrace local_sensitivities(const SplitNetwork& snet, const SplitTrace& strace,
                              const Trace* net_trace, const StabConfig& cfg,
                              std::int64_t out_index);

// Rebuilds the h-pair from the g-pair and the cached original gradients so
// that at every position gp - hp = grad and gn - hn = -grad hold bitwise
// (hence the stream difference of combined maps reproduces the original
// gradient). Exact sensitivities are left unchanged.
SensTrace backward_correct(const SensTrace& sens, const GradTrace& grad);

// Largest residual of the backward invariant across positions.
double backward_invariant_residual(const SensTrace& sens, const GradTrace& grad);

// Closed-formula oracle for the shifted input-layer gradients of g and h.
// MLP-form networks only; alphas resolved as in local_sensitivities.
std::pair<Tensor, Tensor> closed_form_shifted_grads(const Network& net, const Trace& trace,
                                                    const StabConfig& cfg,
                                                    std::int64_t out_index);

// Gradient of the companion network Q[l] (original net with min(x,0)
// activations and absolute weights from block l on), evaluated via the
// closed formula on the cached trace. l is 1-based over blocks.
Tensor q_network_grad(const Network& net, const Trace& trace, std::int64_t l,
                      std::int64_t out_index);

// Explicit Q[l] construction as a plain network; min(x,0) is realized as
// -ReLU(-x) so the standard forward/backward/finite-difference machinery
// applies unchanged.
Network build_q_network(const Network& net, std::int64_t l);

}  // namespace splitkit

#endif
