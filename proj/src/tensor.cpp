#include "splitkit/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "splitkit/error.hpp"

namespace splitkit {

std::int64_t shape_product(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
    for (auto d : shape_) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str());
    }
    data_.assign(static_cast<std::size_t>(shape_product(shape_)), 0.0);
}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto d : shape_) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str());
    }
    if (shape_product(shape_) != static_cast<std::int64_t>(data_.size())) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str());
    }
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
}

Tensor Tensor::reshaped(std::vector<std::int64_t> shape) const {
    if (shape_product(shape) != size()) {
        throw ShapeError("cannot reshape " + shape_str() + " into new element count " +
                         std::to_string(shape_product(shape)));
    }
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
}

double Tensor::sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << "]";
    return os.str();
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = a;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= s;
    return out;
}

Tensor add_scalar(const Tensor& a, double s) {
    Tensor out = a;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += s;
    return out;
}

Tensor relu(const Tensor& a) {
    Tensor out = a;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], 0.0);
    return out;
}

Tensor negpart(const Tensor& a) {
    Tensor out = a;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::max(-out[i], 0.0);
    return out;
}

Tensor abs(const Tensor& a) {
    Tensor out = a;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::fabs(out[i]);
    return out;
}

Tensor emax(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "emax");
    Tensor out = a;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], b[i]);
    return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("matmul expects 2-d operands, got " + a.shape_str() + " and " +
                         b.shape_str());
    }
    if (a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: inner dimensions disagree, " + a.shape_str() + " * " +
                         b.shape_str());
    }
    const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t p = 0; p < k; ++p) {
            const double aip = a.at2(i, p);
            if (aip == 0.0) continue;
            for (std::int64_t j = 0; j < n; ++j) c.at2(i, j) += aip * b.at2(p, j);
        }
    }
    return c;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::array<std::int64_t, 2> stride,
              std::array<std::int64_t, 2> padding) {
    if (input.rank() != 3 || kernel.rank() != 4) {
        throw ShapeError("conv2d expects input [CxHxW] and kernel [FxCxkhxkw], got " +
                         input.shape_str() + " and " + kernel.shape_str());
    }
    const std::int64_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const std::int64_t F = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    const std::int64_t sh = stride[0], sw = stride[1], ph = padding[0], pw = padding[1];
    if (kernel.dim(1) != C) {
        throw ShapeError("conv2d: kernel channels " + std::to_string(kernel.dim(1)) +
                         " != input channels " + std::to_string(C));
    }
    if (sh < 1 || sw < 1) throw ShapeError("conv2d: stride must be >= 1");
    if (kh > H + 2 * ph || kw > W + 2 * pw) {
        throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " larger than padded input " + std::to_string(H + 2 * ph) + "x" +
                         std::to_string(W + 2 * pw));
    }
    const std::int64_t Ho = (H + 2 * ph - kh) / sh + 1;
    const std::int64_t Wo = (W + 2 * pw - kw) / sw + 1;
    Tensor out({F, Ho, Wo});
    for (std::int64_t f = 0; f < F; ++f) {
        for (std::int64_t oy = 0; oy < Ho; ++oy) {
            for (std::int64_t ox = 0; ox < Wo; ++ox) {
                double acc = 0.0;
                for (std::int64_t c = 0; c < C; ++c) {
                    for (std::int64_t ky = 0; ky < kh; ++ky) {
                        const std::int64_t iy = oy * sh - ph + ky;
                        if (iy < 0 || iy >= H) continue;
                        for (std::int64_t kx = 0; kx < kw; ++kx) {
                            const std::int64_t ix = ox * sw - pw + kx;
                            if (ix < 0 || ix >= W) continue;
                            acc += input.at3(c, iy, ix) *
                                   kernel[((f * C + c) * kh + ky) * kw + kx];
                        }
                    }
                }
                out.at3(f, oy, ox) = acc;
            }
        }
    }
    return out;
}

Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& kernel,
                         std::array<std::int64_t, 2> stride, std::array<std::int64_t, 2> padding,
                         const std::vector<std::int64_t>& input_shape) {
    const std::int64_t C = input_shape[0], H = input_shape[1], W = input_shape[2];
    const std::int64_t F = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    const std::int64_t sh = stride[0], sw = stride[1], ph = padding[0], pw = padding[1];
    const std::int64_t Ho = grad_out.dim(1), Wo = grad_out.dim(2);
    Tensor gin({C, H, W});
    for (std::int64_t f = 0; f < F; ++f) {
        for (std::int64_t oy = 0; oy < Ho; ++oy) {
            for (std::int64_t ox = 0; ox < Wo; ++ox) {
                const double g = grad_out.at3(f, oy, ox);
                if (g == 0.0) continue;
                for (std::int64_t c = 0; c < C; ++c) {
                    for (std::int64_t ky = 0; ky < kh; ++ky) {
                        const std::int64_t iy = oy * sh - ph + ky;
                        if (iy < 0 || iy >= H) continue;
                        for (std::int64_t kx = 0; kx < kw; ++kx) {
                            const std::int64_t ix = ox * sw - pw + kx;
                            if (ix < 0 || ix >= W) continue;
                            gin.at3(c, iy, ix) += g * kernel[((f * C + c) * kh + ky) * kw + kx];
                        }
                    }
                }
            }
        }
    }
    return gin;
}

PoolGeometry pool_geometry(const std::vector<std::int64_t>& input_shape, std::int64_t k,
                           std::int64_t stride) {
    if (input_shape.size() != 3) throw ShapeError("pooling expects a [CxHxW] input");
    const std::int64_t C = input_shape[0], H = input_shape[1], W = input_shape[2];
    if (k > H || k > W) {
        throw ShapeError("pool window " + std::to_string(k) + " exceeds input " +
                         std::to_string(H) + "x" + std::to_string(W));
    }
    if (stride < 1) throw ShapeError("pool stride must be >= 1");
    const std::int64_t Ho = (H - k) / stride + 1;
    const std::int64_t Wo = (W - k) / stride + 1;
    PoolGeometry geo;
    geo.out_shape = {C, Ho, Wo};
    geo.window = k * k;
    geo.offsets.reserve(static_cast<std::size_t>(C * Ho * Wo * geo.window));
    for (std::int64_t c = 0; c < C; ++c) {
        for (std::int64_t oy = 0; oy < Ho; ++oy) {
            for (std::int64_t ox = 0; ox < Wo; ++ox) {
                for (std::int64_t ky = 0; ky < k; ++ky) {
                    for (std::int64_t kx = 0; kx < k; ++kx) {
                        const std::int64_t iy = oy * stride + ky;
                        const std::int64_t ix = ox * stride + kx;
                        geo.offsets.push_back((c * H + iy) * W + ix);
                    }
                }
            }
        }
    }
    return geo;
}

MaxPoolResult maxpool2d(const Tensor& input, std::int64_t k, std::int64_t stride) {
    const PoolGeometry geo = pool_geometry(input.shape(), k, stride);
    const std::int64_t out_size = shape_product(geo.out_shape);
    MaxPoolResult res{Tensor(geo.out_shape), {}};
    res.argmax.resize(static_cast<std::size_t>(out_size));
    for (std::int64_t o = 0; o < out_size; ++o) {
        const std::int64_t* win = &geo.offsets[static_cast<std::size_t>(o * geo.window)];
        std::int64_t best = win[0];
        double bestv = input[win[0]];
        for (std::int64_t j = 1; j < geo.window; ++j) {
            const double v = input[win[j]];
            if (v > bestv) {
                bestv = v;
                best = win[j];
            }
        }
        res.values[o] = bestv;
        res.argmax[static_cast<std::size_t>(o)] = best;
    }
    return res;
}

Tensor avgpool2d(const Tensor& input, std::int64_t k, std::int64_t stride) {
    const PoolGeometry geo = pool_geometry(input.shape(), k, stride);
    const std::int64_t out_size = shape_product(geo.out_shape);
    Tensor out(geo.out_shape);
    const double inv = 1.0 / static_cast<double>(geo.window);
    for (std::int64_t o = 0; o < out_size; ++o) {
        const std::int64_t* win = &geo.offsets[static_cast<std::size_t>(o * geo.window)];
        double acc = 0.0;
        for (std::int64_t j = 0; j < geo.window; ++j) acc += input[win[j]];
        out[o] = acc * inv;
    }
    return out;
}

Tensor avgpool2d_input_grad(const Tensor& grad_out, std::int64_t k, std::int64_t stride,
                            const std::vector<std::int64_t>& input_shape) {
    const PoolGeometry geo = pool_geometry(input_shape, k, stride);
    Tensor gin(input_shape);
    const double inv = 1.0 / static_cast<double>(geo.window);
    const std::int64_t out_size = shape_product(geo.out_shape);
    for (std::int64_t o = 0; o < out_size; ++o) {
        const std::int64_t* win = &geo.offsets[static_cast<std::size_t>(o * geo.window)];
        const double g = grad_out[o] * inv;
        for (std::int64_t j = 0; j < geo.window; ++j) gin[win[j]] += g;
    }
    return gin;
}

}  // namespace splitkit
