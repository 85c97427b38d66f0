#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mapsed {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Raised when tensor shapes are incompatible. `axis()` names the offending
/// axis, or -1 when the mismatch is in rank.
class DimensionError : public std::invalid_argument {
public:
    DimensionError(const std::string& what, int axis = -1)
        : std::invalid_argument(what), axis_(axis) {}
    int axis() const noexcept { return axis_; }

private:
    int axis_;
};

/// Dense row-major array of doubles.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
    static Tensor from(std::initializer_list<double> values);
    static Tensor from(std::initializer_list<std::initializer_list<double>> rows);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::initializer_list<std::size_t> index);
    double at(std::initializer_list<std::size_t> index) const;
    std::size_t offset(std::initializer_list<std::size_t> index) const;

    double item() const;

    /// Same data, new shape. Throws if the element count differs.
    Tensor reshaped(Shape shape) const;

    double sum() const;
    double squared_norm() const;
    bool all_finite() const;

    void fill(double v);
    Tensor& operator+=(const Tensor& other);
    Tensor& operator-=(const Tensor& other);
    Tensor& operator*=(double s);

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);

void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

/// Kernel plus per-output-channel bias. The kernel is out×in×k (2D) or
/// out×in×k×k×k (3D) with k ∈ {1, 3}.
struct ConvParams {
    Tensor kernel;
    Tensor bias;

    std::size_t out_channels() const { return kernel.dim(0); }
    std::size_t in_channels() const { return kernel.dim(1); }
    std::size_t spatial_rank() const { return kernel.rank() - 2; }
};

void validate_conv(const Shape& input, const ConvParams& params, std::size_t spatial_rank);

// Pure kernels. All accept and return values; none retains state.

Tensor conv2d_same(const Tensor& input, const ConvParams& params);
Tensor conv3d_same(const Tensor& input, const ConvParams& params);
Tensor softmax(const Tensor& input, std::size_t axis);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& a);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor concat(const std::vector<const Tensor*>& parts, std::size_t axis);
Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);

/// Counter-clockwise rotation of the last two axes: out[i][j] = in[j][w-1-i].
Tensor rotate90(const Tensor& input, int quarter_turns);
/// Mirrors the last axis.
Tensor flip_horizontal(const Tensor& input);

namespace detail {

// Shared convolution loops. Input c_in×d×h×w, kernel out×in×kd×kh×kw, same
// zero padding. 2D convolution passes d = kd = 1.
struct ConvGeometry {
    std::size_t in_ch, out_ch, d, h, w, kd, kh, kw;
};
void conv_forward(const ConvGeometry& g, const double* in, const double* kernel,
                  const double* bias, double* out);
void conv_backward_input(const ConvGeometry& g, const double* grad_out,
                         const double* kernel, double* grad_in);
void conv_backward_kernel(const ConvGeometry& g, const double* grad_out,
                          const double* in, double* grad_kernel, double* grad_bias);
ConvGeometry conv_geometry(const Shape& input, const Shape& kernel, std::size_t spatial_rank);

void matmul_into(const double* a, const double* b, double* c, std::size_t p, std::size_t q,
                 std::size_t r, bool accumulate);

}  // namespace detail

}  // namespace mapsed
