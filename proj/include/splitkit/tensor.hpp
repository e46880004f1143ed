#ifndef SPLITKIT_TENSOR_HPP
#define SPLITKIT_TENSOR_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace splitkit {

// Dense n-dimensional array of f64, row-major. Values are immutable by
// convention once an operation has returned them; all ops below are pure.
class Tensor {
public:
    Tensor() = default;

    // Zero-initialized tensor of the given shape.
    explicit Tensor(std::vector<std::int64_t> shape);

    Tensor(std::vector<std::int64_t> shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }
    static Tensor full(std::vector<std::int64_t> shape, double v);

    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t dim(std::int64_t i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& buffer() { return data_; }
    const std::vector<double>& buffer() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // 2-d / 3-d accessors for the shapes the layers use.
    double& at2(std::int64_t i, std::int64_t j) { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
    double at2(std::int64_t i, std::int64_t j) const { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
    double& at3(std::int64_t c, std::int64_t h, std::int64_t w) {
        return data_[static_cast<std::size_t>((c * shape_[1] + h) * shape_[2] + w)];
    }
    double at3(std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data_[static_cast<std::size_t>((c * shape_[1] + h) * shape_[2] + w)];
    }

    // Same data, new shape (element count must match).
    Tensor reshaped(std::vector<std::int64_t> shape) const;

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    double max_abs() const;
    double sum() const;

    std::string shape_str() const;

private:
    std::vector<std::int64_t> shape_;
    std::vector<double> data_;
};

std::int64_t shape_product(const std::vector<std::int64_t>& shape);

// Elementwise arithmetic; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor relu(const Tensor& a);          // max(x, 0)
Tensor negpart(const Tensor& a);       // max(-x, 0)
Tensor abs(const Tensor& a);
Tensor emax(const Tensor& a, const Tensor& b);

double max_abs_diff(const Tensor& a, const Tensor& b);

// C = A * B for 2-d operands [m x k] * [k x n].
Tensor matmul(const Tensor& a, const Tensor& b);

// Cross-correlation with zero padding. input [C x H x W], kernel
// [F x C x kh x kw]; output [F x H' x W'] with H' = (H + 2*ph - kh)/sh + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel,
              std::array<std::int64_t, 2> stride, std::array<std::int64_t, 2> padding);

// Gradient of conv2d w.r.t. its input, given the gradient at the output.
Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& kernel,
                         std::array<std::int64_t, 2> stride, std::array<std::int64_t, 2> padding,
                         const std::vector<std::int64_t>& input_shape);

struct MaxPoolResult {
    Tensor values;                      // [C x H' x W']
    std::vector<std::int64_t> argmax;   // flat input index per output cell,
                                        // first maximum in row-major scan
};

MaxPoolResult maxpool2d(const Tensor& input, std::int64_t k, std::int64_t stride);

Tensor avgpool2d(const Tensor& input, std::int64_t k, std::int64_t stride);
Tensor avgpool2d_input_grad(const Tensor& grad_out, std::int64_t k, std::int64_t stride,
                            const std::vector<std::int64_t>& input_shape);

// Enumerates pooling windows: for output cell o, offsets[o*k*k .. ) are the
// flat input indices inside its window, row-major. Shared by maxpool, its
// split variants and their backward passes so tie-breaking stays identical.
struct PoolGeometry {
    std::vector<std::int64_t> out_shape;              // C x H' x W'
    std::int64_t window = 0;                          // k*k
    std::vector<std::int64_t> offsets;                // out_size * window
};
PoolGeometry pool_geometry(const std::vector<std::int64_t>& input_shape, std::int64_t k,
                           std::int64_t stride);

}  // namespace splitkit

#endif
