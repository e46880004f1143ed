#ifndef SPLITKIT_STAB_CONFIG_HPP
#define SPLITKIT_STAB_CONFIG_HPP

#include <cstddef>
#include <vector>

#include "splitkit/error.hpp"

namespace splitkit {

enum class ForwardStabMode { None, ShiftToHalf, ScaleThreshold };
enum class PatternSource { SplitMaxima, OriginalPositivity };

// Stabilization settings for the split forward pass and the alpha-shifted
// backward pass.
struct StabConfig {
    ForwardStabMode forward_mode = ForwardStabMode::None;
    double theta = 0.1;       // scale factor applied when the threshold trips
    double big_theta = 10.0;  // magnitude threshold
    bool correct_forward = false;
    bool correct_backward = false;
    PatternSource pattern_source = PatternSource::SplitMaxima;

    // One entry per shift point: index j < n_weight_layers shifts at the
    // position just before weight layer j, the last entry shifts the output
    // seed. Empty means uniform `alpha` everywhere.
    std::vector<double> alpha_schedule;
    double alpha = 0.4;

    void validate() const {
        if (!(theta > 0.0 && theta <= 1.0)) throw ConfigError("StabConfig: need 0 < theta <= 1");
        if (!(big_theta > 0.0)) throw ConfigError("StabConfig: need Theta > 0");
        for (double a : alpha_schedule) {
            if (!(a >= 0.0 && a <= 0.5)) throw ConfigError("StabConfig: alpha entries must be in [0, 0.5]");
        }
        if (alpha_schedule.empty() && !(alpha >= 0.0 && alpha <= 0.5)) {
            throw ConfigError("StabConfig: alpha must be in [0, 0.5]");
        }
    }

    // Schedule resolved to exactly n_points entries.
    std::vector<double> resolve_alphas(std::size_t n_points) const {
        if (alpha_schedule.empty()) return std::vector<double>(n_points, alpha);
        if (alpha_schedule.size() != n_points) {
            throw ConfigError("StabConfig: alpha schedule has " +
                              std::to_string(alpha_schedule.size()) + " entries, network needs " +
                              std::to_string(n_points));
        }
        return alpha_schedule;
    }
};

}  // namespace splitkit

#endif
