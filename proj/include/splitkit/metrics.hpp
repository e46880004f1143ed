#ifndef SPLITKIT_METRICS_HPP
#define SPLITKIT_METRICS_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "splitkit/mnist.hpp"
#include "splitkit/network.hpp"
#include "splitkit/tensor.hpp"

namespace splitkit {

struct PixelFlipCurve {
    std::vector<double> fraction;      // flipped-pixel fraction after each step
    std::vector<double> logit_drop;    // logit(x) - logit(flipped) per step
    std::vector<double> limits;        // requested fraction limits
    std::vector<double> auc;           // trapezoid area of the drop curve per limit
};

// Flips the highest-attributed pixels in batches of `pixels_per_step`
// (ties break toward the lower flat index), replacing them with the
// per-channel image mean, and integrates the drop of the label logit.
PixelFlipCurve pixel_flipping(const Network& net, const ImageSample& sample, const Tensor& map,
                              std::int64_t pixels_per_step, const std::vector<double>& frac_limits);

// True iff the maximum-attribution pixel (first index on ties) is inside
// the mask.
bool pointing_game(const Tensor& map, const Tensor& mask);

// Fraction of attribution mass inside the mask; signed maps may leave
// [0, 1]. Zero total mass is an error.
double attribution_localization(const Tensor& map, const Tensor& mask);

// max over n seeded uniform perturbations (inf-norm radius) of
// ||attr(x') - attr(x)||_F / ||attr(x)||_F.
double max_sensitivity(const std::function<Tensor(const Tensor&)>& attr_fn,
                       const ImageSample& sample, int n_samples, double radius,
                       std::uint64_t seed);

// Spearman rank correlation with average ranks on ties; constant inputs
// are an error.
double spearman_sanity(const Tensor& map_a, const Tensor& map_b);

struct MetricRow {
    std::string method;
    std::int64_t layer = 0;
    bool abs = false;
    std::string metric;
    std::int64_t image_index = -1;  // -1 marks an aggregate row
    double value = 0.0;
    bool failed = false;
    std::string error;
};

// Accumulates per-image rows and appends per-(method,metric) means.
struct MetricReport {
    std::vector<MetricRow> rows;
    std::string config_echo;  // JSON text of the run configuration

    void add(MetricRow row) { rows.push_back(std::move(row)); }
    void append_aggregates();
    std::string to_csv() const;
};

}  // namespace splitkit

#endif
