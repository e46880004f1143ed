#include "splitkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "splitkit/error.hpp"
#include "splitkit/rng.hpp"

namespace splitkit {

PixelFlipCurve pixel_flipping(const Network& net, const ImageSample& sample, const Tensor& map,
                              std::int64_t pixels_per_step,
                              const std::vector<double>& frac_limits) {
    const Tensor& img = sample.image;
    if (img.rank() != 3) throw ShapeError("pixel_flipping: image must be CxHxW");
    const std::int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    if (map.rank() != 2 || map.dim(0) != H || map.dim(1) != W) {
        throw ShapeError("pixel_flipping: map shape does not match image spatial shape");
    }
    if (pixels_per_step < 1) throw ConfigError("pixel_flipping: pixels_per_step must be >= 1");

    std::vector<double> channel_means(static_cast<std::size_t>(C), 0.0);
    for (std::int64_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (std::int64_t i = 0; i < H * W; ++i) s += img[c * H * W + i];
        channel_means[static_cast<std::size_t>(c)] = s / static_cast<double>(H * W);
    }

    // Descending attribution with deterministic index tie-break.
    std::vector<std::int64_t> order(static_cast<std::size_t>(H * W));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&map](std::int64_t a, std::int64_t b) {
        if (map[a] != map[b]) return map[a] > map[b];
        return a < b;
    });

    double max_frac = 0.0;
    for (double f : frac_limits) {
        if (!(f > 0.0 && f <= 1.0)) throw ConfigError("pixel_flipping: limits must be in (0, 1]");
        max_frac = std::max(max_frac, f);
    }
    const std::int64_t total = H * W;
    const std::int64_t to_flip =
        std::min<std::int64_t>(total, static_cast<std::int64_t>(std::ceil(max_frac * total)));

    const double base_logit = forward(net, img).output()[sample.label];
    Tensor work = img;
    PixelFlipCurve curve;
    curve.fraction.push_back(0.0);
    curve.logit_drop.push_back(0.0);
    std::int64_t flipped = 0;
    while (flipped < to_flip) {
        const std::int64_t step = std::min(pixels_per_step, to_flip - flipped);
        for (std::int64_t k = 0; k < step; ++k) {
            const std::int64_t px = order[static_cast<std::size_t>(flipped + k)];
            for (std::int64_t c = 0; c < C; ++c) {
                work[c * H * W + px] = channel_means[static_cast<std::size_t>(c)];
            }
        }
        flipped += step;
        const double logit = forward(net, work).output()[sample.label];
        curve.fraction.push_back(static_cast<double>(flipped) / static_cast<double>(total));
        curve.logit_drop.push_back(base_logit - logit);
    }

    curve.limits = frac_limits;
    for (double limit : frac_limits) {
        // Trapezoid integral of the piecewise-linear drop curve on [0, limit].
        double area = 0.0;
        for (std::size_t k = 1; k < curve.fraction.size(); ++k) {
            const double x0 = curve.fraction[k - 1], x1 = curve.fraction[k];
            const double y0 = curve.logit_drop[k - 1], y1 = curve.logit_drop[k];
            if (x0 >= limit) break;
            if (x1 <= limit) {
                area += 0.5 * (y0 + y1) * (x1 - x0);
            } else {
                const double t = (limit - x0) / (x1 - x0);
                const double ylim = y0 + t * (y1 - y0);
                area += 0.5 * (y0 + ylim) * (limit - x0);
                break;
            }
        }
        curve.auc.push_back(area);
    }
    return curve;
}

bool pointing_game(const Tensor& map, const Tensor& mask) {
    if (!map.same_shape(mask)) throw ShapeError("pointing_game: map/mask shape mismatch");
    std::int64_t best = 0;
    for (std::int64_t i = 1; i < map.size(); ++i) {
        if (map[i] > map[best]) best = i;
    }
    return mask[best] != 0.0;
}

double attribution_localization(const Tensor& map, const Tensor& mask) {
    if (!map.same_shape(mask)) {
        throw ShapeError("attribution_localization: map/mask shape mismatch");
    }
    double inside = 0.0, total = 0.0;
    for (std::int64_t i = 0; i < map.size(); ++i) {
        total += map[i];
        if (mask[i] != 0.0) inside += map[i];
    }
    if (total == 0.0) {
        throw MetricError("attribution_localization: total attribution mass is zero");
    }
    return inside / total;
}

double max_sensitivity(const std::function<Tensor(const Tensor&)>& attr_fn,
                       const ImageSample& sample, int n_samples, double radius,
                       std::uint64_t seed) {
    if (n_samples < 1) throw ConfigError("max_sensitivity: n_samples must be >= 1");
    if (!(radius > 0.0)) throw ConfigError("max_sensitivity: radius must be > 0");
    const Tensor base = attr_fn(sample.image);
    double base_norm = 0.0;
    for (std::int64_t i = 0; i < base.size(); ++i) base_norm += base[i] * base[i];
    base_norm = std::sqrt(base_norm);
    if (base_norm == 0.0) {
        throw MetricError("max_sensitivity: attribution of the unperturbed input is zero");
    }
    Rng rng = Rng(seed).stream("max_sensitivity");
    double worst = 0.0;
    for (int s = 0; s < n_samples; ++s) {
        Tensor x = sample.image;
        for (std::int64_t i = 0; i < x.size(); ++i) x[i] += rng.uniform(-radius, radius);
        const Tensor attr = attr_fn(x);
        double diff = 0.0;
        for (std::int64_t i = 0; i < attr.size(); ++i) {
            const double d = attr[i] - base[i];
            diff += d * d;
        }
        worst = std::max(worst, std::sqrt(diff) / base_norm);
    }
    return worst;
}

namespace {

std::vector<double> average_ranks(const Tensor& t) {
    const std::int64_t n = t.size();
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&t](std::int64_t a, std::int64_t b) { return t[a] < t[b]; });
    std::vector<double> ranks(static_cast<std::size_t>(n));
    std::int64_t i = 0;
    while (i < n) {
        std::int64_t j = i;
        while (j + 1 < n && t[idx[static_cast<std::size_t>(j + 1)]] == t[idx[static_cast<std::size_t>(i)]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based average rank
        for (std::int64_t k = i; k <= j; ++k) ranks[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman_sanity(const Tensor& map_a, const Tensor& map_b) {
    if (!map_a.same_shape(map_b)) throw ShapeError("spearman_sanity: shape mismatch");
    const std::int64_t n = map_a.size();
    if (n < 2) throw MetricError("spearman_sanity: need at least two entries");
    auto constant = [](const Tensor& t) {
        for (std::int64_t i = 1; i < t.size(); ++i) {
            if (t[i] != t[0]) return false;
        }
        return true;
    };
    if (constant(map_a) || constant(map_b)) {
        throw MetricError("spearman_sanity: correlation undefined for a constant map");
    }
    const std::vector<double> ra = average_ranks(map_a);
    const std::vector<double> rb = average_ranks(map_b);
    double ma = 0.0, mb = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        ma += ra[static_cast<std::size_t>(i)];
        mb += rb[static_cast<std::size_t>(i)];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double xa = ra[static_cast<std::size_t>(i)] - ma;
        const double xb = rb[static_cast<std::size_t>(i)] - mb;
        num += xa * xb;
        da += xa * xa;
        db += xb * xb;
    }
    return num / std::sqrt(da * db);
}

void MetricReport::append_aggregates() {
    struct Key {
        std::string method;
        std::int64_t layer;
        bool abs;
        std::string metric;
        bool operator<(const Key& o) const {
            return std::tie(method, layer, abs, metric) < std::tie(o.method, o.layer, o.abs, o.metric);
        }
    };
    std::map<Key, std::pair<double, std::int64_t>> agg;
    for (const MetricRow& r : rows) {
        if (r.failed || r.image_index < 0) continue;
        auto& slot = agg[{r.method, r.layer, r.abs, r.metric}];
        slot.first += r.value;
        slot.second += 1;
    }
    for (const auto& [key, slot] : agg) {
        MetricRow mean;
        mean.method = key.method;
        mean.layer = key.layer;
        mean.abs = key.abs;
        mean.metric = key.metric + "_mean";
        mean.image_index = -1;
        mean.value = slot.first / static_cast<double>(slot.second);
        rows.push_back(std::move(mean));
    }
}

std::string MetricReport::to_csv() const {
    std::ostringstream os;
    os.setf(std::ios::fmtflags(0), std::ios::floatfield);
    os.precision(17);
    os << "method,layer,abs,metric,image,value,error\n";
    for (const MetricRow& r : rows) {
        os << r.method << "," << r.layer << "," << (r.abs ? "y" : "n") << "," << r.metric << ",";
        if (r.image_index >= 0) os << r.image_index;
        os << ",";
        if (r.failed) {
            os << "," << r.error;
        } else {
            os << r.value << ",";
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace splitkit
