#include "mapsed/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mapsed {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
        throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_to_string(shape_));
    }
}

Tensor Tensor::from(std::initializer_list<double> values) {
    return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::from(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(rows.size() * cols);
    for (const auto& row : rows) {
        if (row.size() != cols) throw DimensionError("ragged matrix literal", 1);
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(Shape{rows.size(), cols}, std::move(data));
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size()) {
        throw DimensionError("index rank " + std::to_string(index.size()) + " vs tensor rank " +
                             std::to_string(shape_.size()));
    }
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
        if (i >= shape_[axis]) {
            throw std::out_of_range("index " + std::to_string(i) + " out of range on axis " +
                                    std::to_string(axis));
        }
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

double& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
double Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

double Tensor::item() const {
    if (data_.size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_to_string(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw DimensionError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

double Tensor::sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
}

double Tensor::squared_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return s;
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
    require_same_shape(*this, other, "add");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
    require_same_shape(*this, other, "sub");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rank() != b.rank()) {
        throw DimensionError(std::string(op) + ": rank mismatch " + shape_to_string(a.shape()) + " vs " +
                             shape_to_string(b.shape()));
    }
    for (std::size_t i = 0; i < a.rank(); ++i) {
        if (a.dim(i) != b.dim(i)) {
            throw DimensionError(std::string(op) + ": axis " + std::to_string(i) + " mismatch " +
                                     shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()),
                                 static_cast<int>(i));
        }
    }
}

// ---------------------------------------------------------------------------
// Convolution

namespace detail {

ConvGeometry conv_geometry(const Shape& input, const Shape& kernel, std::size_t spatial_rank) {
    ConvGeometry g{};
    g.out_ch = kernel[0];
    g.in_ch = kernel[1];
    if (spatial_rank == 2) {
        g.d = 1;
        g.h = input[1];
        g.w = input[2];
        g.kd = 1;
        g.kh = kernel[2];
        g.kw = kernel[3];
    } else {
        g.d = input[1];
        g.h = input[2];
        g.w = input[3];
        g.kd = kernel[2];
        g.kh = kernel[3];
        g.kw = kernel[4];
    }
    return g;
}

namespace {

// Output range [lo, hi) along one axis for kernel tap k of a same-padded
// convolution of extent n and kernel size ks. The input index is o + k - pad.
struct TapRange {
    std::ptrdiff_t lo, hi, shift;
};

TapRange tap_range(std::size_t n, std::size_t ks, std::size_t k) {
    const auto pad = static_cast<std::ptrdiff_t>(ks / 2);
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n),
                                                      static_cast<std::ptrdiff_t>(n) - shift);
    return {lo, hi, shift};
}

template <typename Fn>
void for_each_tap(const ConvGeometry& g, Fn&& fn) {
    const std::size_t plane = g.h * g.w;
    const std::size_t volume = g.d * plane;
    const std::size_t ktaps = g.kd * g.kh * g.kw;
    for (std::size_t o = 0; o < g.out_ch; ++o) {
        for (std::size_t i = 0; i < g.in_ch; ++i) {
            for (std::size_t kz = 0; kz < g.kd; ++kz) {
                const TapRange rz = tap_range(g.d, g.kd, kz);
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                    const TapRange ry = tap_range(g.h, g.kh, ky);
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                        const TapRange rx = tap_range(g.w, g.kw, kx);
                        if (rx.lo >= rx.hi || ry.lo >= ry.hi || rz.lo >= rz.hi) continue;
                        const std::size_t kidx = (o * g.in_ch + i) * ktaps + (kz * g.kh + ky) * g.kw + kx;
                        for (std::ptrdiff_t z = rz.lo; z < rz.hi; ++z) {
                            for (std::ptrdiff_t y = ry.lo; y < ry.hi; ++y) {
                                const std::size_t out_row =
                                    o * volume + static_cast<std::size_t>(z) * plane + static_cast<std::size_t>(y) * g.w;
                                const std::size_t in_row = i * volume +
                                                           static_cast<std::size_t>(z + rz.shift) * plane +
                                                           static_cast<std::size_t>(y + ry.shift) * g.w;
                                fn(kidx, out_row, in_row, rx);
                            }
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

void conv_forward(const ConvGeometry& g, const double* in, const double* kernel, const double* bias,
                  double* out) {
    const std::size_t volume = g.d * g.h * g.w;
    for (std::size_t o = 0; o < g.out_ch; ++o) {
        std::fill(out + o * volume, out + (o + 1) * volume, bias ? bias[o] : 0.0);
    }
    for_each_tap(g, [&](std::size_t kidx, std::size_t out_row, std::size_t in_row, const TapRange& rx) {
        const double wv = kernel[kidx];
        if (wv == 0.0) return;
        double* dst = out + out_row;
        const double* src = in + in_row + rx.shift;
        for (std::ptrdiff_t x = rx.lo; x < rx.hi; ++x) dst[x] += wv * src[x];
    });
}

void conv_backward_input(const ConvGeometry& g, const double* grad_out, const double* kernel,
                         double* grad_in) {
    for_each_tap(g, [&](std::size_t kidx, std::size_t out_row, std::size_t in_row, const TapRange& rx) {
        const double wv = kernel[kidx];
        if (wv == 0.0) return;
        const double* src = grad_out + out_row;
        double* dst = grad_in + in_row + rx.shift;
        for (std::ptrdiff_t x = rx.lo; x < rx.hi; ++x) dst[x] += wv * src[x];
    });
}

void conv_backward_kernel(const ConvGeometry& g, const double* grad_out, const double* in,
                          double* grad_kernel, double* grad_bias) {
    const std::size_t volume = g.d * g.h * g.w;
    if (grad_bias) {
        for (std::size_t o = 0; o < g.out_ch; ++o) {
            double s = 0.0;
            for (std::size_t v = 0; v < volume; ++v) s += grad_out[o * volume + v];
            grad_bias[o] += s;
        }
    }
    for_each_tap(g, [&](std::size_t kidx, std::size_t out_row, std::size_t in_row, const TapRange& rx) {
        const double* go = grad_out + out_row;
        const double* src = in + in_row + rx.shift;
        double s = 0.0;
        for (std::ptrdiff_t x = rx.lo; x < rx.hi; ++x) s += go[x] * src[x];
        grad_kernel[kidx] += s;
    });
}

void matmul_into(const double* a, const double* b, double* c, std::size_t p, std::size_t q, std::size_t r,
                 bool accumulate) {
    if (!accumulate) std::fill(c, c + p * r, 0.0);
    for (std::size_t i = 0; i < p; ++i) {
        double* crow = c + i * r;
        for (std::size_t k = 0; k < q; ++k) {
            const double av = a[i * q + k];
            if (av == 0.0) continue;
            const double* brow = b + k * r;
            for (std::size_t j = 0; j < r; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace detail

void validate_conv(const Shape& input, const ConvParams& params, std::size_t spatial_rank) {
    const Shape& k = params.kernel.shape();
    if (input.size() != spatial_rank + 1) {
        throw DimensionError("conv" + std::to_string(spatial_rank) + "d: input " + shape_to_string(input) +
                             " must have rank " + std::to_string(spatial_rank + 1));
    }
    if (k.size() != spatial_rank + 2) {
        throw DimensionError("conv" + std::to_string(spatial_rank) + "d: kernel " + shape_to_string(k) +
                             " must have rank " + std::to_string(spatial_rank + 2));
    }
    if (k[1] != input[0]) {
        throw DimensionError("conv: kernel expects " + std::to_string(k[1]) + " input channels, input has " +
                                 std::to_string(input[0]),
                             0);
    }
    for (std::size_t s = 2; s < k.size(); ++s) {
        if (k[s] != 1 && k[s] != 3) {
            throw DimensionError("conv: kernel spatial size must be 1 or 3, got " + std::to_string(k[s]),
                                 static_cast<int>(s));
        }
    }
    if (params.bias.rank() != 1 || params.bias.dim(0) != k[0]) {
        throw DimensionError("conv: bias " + shape_to_string(params.bias.shape()) + " does not match " +
                                 std::to_string(k[0]) + " output channels",
                             0);
    }
}

namespace {

Tensor conv_same(const Tensor& input, const ConvParams& params, std::size_t spatial_rank) {
    validate_conv(input.shape(), params, spatial_rank);
    const auto g = detail::conv_geometry(input.shape(), params.kernel.shape(), spatial_rank);
    Shape out_shape = input.shape();
    out_shape[0] = g.out_ch;
    Tensor out(out_shape);
    detail::conv_forward(g, input.data().data(), params.kernel.data().data(), params.bias.data().data(),
                         out.data().data());
    return out;
}

}  // namespace

Tensor conv2d_same(const Tensor& input, const ConvParams& params) { return conv_same(input, params, 2); }
Tensor conv3d_same(const Tensor& input, const ConvParams& params) { return conv_same(input, params, 3); }

// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& input, std::size_t axis) {
    if (axis >= input.rank()) throw DimensionError("softmax: axis out of range", static_cast<int>(axis));
    const Shape& s = input.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t len = s[axis];
    Tensor out(s);
    const double* in = input.data().data();
    double* o = out.data().data();
    for (std::size_t a = 0; a < outer; ++a) {
        for (std::size_t b = 0; b < inner; ++b) {
            const std::size_t base = a * len * inner + b;
            double mx = in[base];
            for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, in[base + k * inner]);
            double total = 0.0;
            for (std::size_t k = 0; k < len; ++k) {
                const double e = std::exp(in[base + k * inner] - mx);
                o[base + k * inner] = e;
                total += e;
            }
            const double inv = 1.0 / total;
            for (std::size_t k = 0; k < len; ++k) o[base + k * inner] *= inv;
        }
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul: operands must be 2D");
    if (a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: inner dimensions differ " + shape_to_string(a.shape()) + " · " +
                                 shape_to_string(b.shape()),
                             1);
    }
    Tensor c(Shape{a.dim(0), b.dim(1)});
    detail::matmul_into(a.data().data(), b.data().data(), c.data().data(), a.dim(0), a.dim(1), b.dim(1), false);
    return c;
}

Tensor transpose2d(const Tensor& a) {
    if (a.rank() != 2) throw DimensionError("transpose2d: operand must be 2D");
    const std::size_t p = a.dim(0), q = a.dim(1);
    Tensor t(Shape{q, p});
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < q; ++j) t[j * p + i] = a[i * q + j];
    return t;
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
    const std::size_t r = a.rank();
    if (axes.size() != r) throw DimensionError("permute: axis list length differs from rank");
    std::vector<bool> seen(r, false);
    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) {
        if (axes[i] >= r || seen[axes[i]]) throw DimensionError("permute: invalid axis list", static_cast<int>(i));
        seen[axes[i]] = true;
        out_shape[i] = a.dim(axes[i]);
    }
    std::vector<std::size_t> in_strides(r, 1);
    for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * a.dim(i);
    std::vector<std::size_t> stride(r);
    for (std::size_t i = 0; i < r; ++i) stride[i] = in_strides[axes[i]];

    Tensor out(out_shape);
    std::vector<std::size_t> idx(r, 0);
    std::size_t src = 0;
    const std::size_t n = out.size();
    for (std::size_t k = 0; k < n; ++k) {
        out[k] = a[src];
        for (std::size_t ax = r; ax-- > 0;) {
            ++idx[ax];
            src += stride[ax];
            if (idx[ax] < out_shape[ax]) break;
            src -= stride[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    return out;
}

Tensor concat(const std::vector<const Tensor*>& parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    const Shape& first = parts.front()->shape();
    if (axis >= first.size()) throw DimensionError("concat: axis out of range", static_cast<int>(axis));
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const Tensor* t : parts) {
        if (t->rank() != first.size()) throw DimensionError("concat: rank mismatch");
        for (std::size_t i = 0; i < first.size(); ++i) {
            if (i != axis && t->dim(i) != first[i]) {
                throw DimensionError("concat: axis " + std::to_string(i) + " mismatch", static_cast<int>(i));
            }
        }
        out_shape[axis] += t->dim(axis);
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
    for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
    Tensor out(out_shape);
    double* dst = out.data().data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (const Tensor* t : parts) {
            const std::size_t chunk = t->dim(axis) * inner;
            const double* src = t->data().data() + o * chunk;
            std::copy(src, src + chunk, dst);
            dst += chunk;
        }
    }
    return out;
}

Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
    if (axis >= a.rank()) throw DimensionError("narrow: axis out of range", static_cast<int>(axis));
    if (start + length > a.dim(axis)) throw DimensionError("narrow: range exceeds axis", static_cast<int>(axis));
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
    for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
    Shape out_shape = a.shape();
    out_shape[axis] = length;
    Tensor out(out_shape);
    for (std::size_t o = 0; o < outer; ++o) {
        const double* src = a.data().data() + (o * a.dim(axis) + start) * inner;
        std::copy(src, src + length * inner, out.data().data() + o * length * inner);
    }
    return out;
}

Tensor rotate90(const Tensor& input, int quarter_turns) {
    if (input.rank() < 2) throw DimensionError("rotate90: need at least 2 axes");
    const int turns = ((quarter_turns % 4) + 4) % 4;
    const std::size_t h = input.dim(input.rank() - 2);
    const std::size_t w = input.dim(input.rank() - 1);
    if (turns % 2 == 1 && h != w) {
        throw DimensionError("rotate90: odd quarter turns need a square grid, got " + shape_to_string(input.shape()),
                             static_cast<int>(input.rank() - 1));
    }
    if (turns == 0) return input;
    Tensor out(input.shape());
    const std::size_t plane = h * w;
    const std::size_t planes = input.size() / plane;
    for (std::size_t p = 0; p < planes; ++p) {
        const double* src = input.data().data() + p * plane;
        double* dst = out.data().data() + p * plane;
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                double v = 0.0;
                switch (turns) {
                    case 1: v = src[j * w + (w - 1 - i)]; break;
                    case 2: v = src[(h - 1 - i) * w + (w - 1 - j)]; break;
                    case 3: v = src[(h - 1 - j) * w + i]; break;
                    default: break;
                }
                dst[i * w + j] = v;
            }
        }
    }
    return out;
}

Tensor flip_horizontal(const Tensor& input) {
    if (input.rank() < 1) throw DimensionError("flip_horizontal: need at least 1 axis");
    const std::size_t w = input.dim(input.rank() - 1);
    Tensor out(input.shape());
    const std::size_t rows = w ? input.size() / w : 0;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < w; ++j) out[r * w + j] = input[r * w + (w - 1 - j)];
    return out;
}

}  // namespace mapsed
