#pragma once

// Test-side helpers: random tensors, central-difference gradient checking and
// brute-force oracles that share no code with the library kernels.

#include "mapsed/autodiff.hpp"
#include "mapsed/data.hpp"
#include "mapsed/model.hpp"
#include "mapsed/optim.hpp"
#include "mapsed/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace testing_support {

using namespace mapsed;

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(shape);
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// Normwise relative error ‖a − n‖ / max(‖a‖, ‖n‖). Gradients whose norms are
/// both below `floor` are unresolvable by differencing and score 0 when they
/// agree within `floor`.
inline double normwise_error(const std::vector<double>& a, const std::vector<double>& n, double floor = 1e-7) {
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - n[i]) * (a[i] - n[i]);
        na += a[i] * a[i];
        nn += n[i] * n[i];
    }
    const double scale = std::sqrt(std::max(na, nn));
    if (scale < floor) return std::sqrt(diff) <= floor ? 0.0 : std::sqrt(diff) / floor;
    return std::sqrt(diff) / scale;
}

struct GradCheckReport {
    double worst = 0.0;
    std::string worst_name;
    std::size_t checked = 0;
};

using LossBuilder = std::function<Var(Tape&)>;

/// Compares tape gradients of `build` against central differences for every
/// listed tensor. `max_per_tensor` caps the checked entries (0 = all); the
/// subset is drawn from `rng`. The error floor is the rounding noise of a
/// central difference at the loss magnitude, so tensors whose true gradient
/// vanishes are not judged on noise.
inline GradCheckReport check_gradients(const std::vector<NamedParam>& params, const LossBuilder& build,
                                       double step = 1e-5, std::size_t max_per_tensor = 0, Rng* rng = nullptr) {
    std::vector<Tensor> analytic;
    double loss_value = 0.0;
    {
        Tape tape;
        Var loss = build(tape);
        loss_value = loss.value().item();
        tape.backward(loss);
        for (const NamedParam& p : params) analytic.push_back(tape.param_grad(*p.value));
    }
    auto evaluate = [&] {
        Tape tape;
        return build(tape).value().item();
    };
    GradCheckReport report;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& t = *params[i].value;
        std::vector<std::size_t> idx(t.size());
        for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = j;
        if (max_per_tensor > 0 && idx.size() > max_per_tensor && rng) {
            rng->shuffle(idx);
            idx.resize(max_per_tensor);
        }
        std::vector<double> a, n;
        for (std::size_t j : idx) {
            const double saved = t[j];
            t[j] = saved + step;
            const double up = evaluate();
            t[j] = saved - step;
            const double down = evaluate();
            t[j] = saved;
            n.push_back((up - down) / (2.0 * step));
            a.push_back(analytic[i][j]);
        }
        const double noise = 1e3 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(loss_value)) / step;
        const double err = normwise_error(a, n, std::max(1e-7, noise * std::sqrt(static_cast<double>(idx.size()))));
        report.checked += idx.size();
        if (err > report.worst) {
            report.worst = err;
            report.worst_name = params[i].name;
        }
    }
    return report;
}

inline std::vector<NamedParam> model_parameters(ModelParams& p) {
    std::vector<NamedParam> out;
    p.visit([&](const std::string& name, Tensor& t) { out.push_back({name, &t}); });
    return out;
}

/// Zero biases put whole regions exactly on the rectifier kink, where a
/// central difference measures half the one-sided slope.
inline void randomize_biases(ModelParams& p, Rng& rng) {
    p.visit([&](const std::string& name, Tensor& t) {
        if (name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0) t = random_tensor(t.shape(), rng, -0.2, 0.2);
    });
}

// ---------------------------------------------------------------- oracles

/// Direct same-padded 2D convolution, one output at a time.
inline Tensor naive_conv2d(const Tensor& x, const ConvParams& p) {
    const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t cout = p.kernel.dim(0), k = p.kernel.dim(2);
    const long r = static_cast<long>(k / 2);
    Tensor out(Shape{cout, h, w});
    for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                double s = p.bias[o];
                for (std::size_t c = 0; c < cin; ++c)
                    for (long di = -r; di <= r; ++di)
                        for (long dj = -r; dj <= r; ++dj) {
                            const long ii = static_cast<long>(i) + di, jj = static_cast<long>(j) + dj;
                            if (ii < 0 || jj < 0 || ii >= static_cast<long>(h) || jj >= static_cast<long>(w)) continue;
                            s += p.kernel.at({o, c, static_cast<std::size_t>(di + r), static_cast<std::size_t>(dj + r)}) *
                                 x.at({c, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj)});
                        }
                out.at({o, i, j}) = s;
            }
    return out;
}

inline Tensor naive_conv3d(const Tensor& x, const ConvParams& p) {
    const std::size_t cin = x.dim(0), d = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t cout = p.kernel.dim(0), k = p.kernel.dim(2);
    const long r = static_cast<long>(k / 2);
    Tensor out(Shape{cout, d, h, w});
    for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t z = 0; z < d; ++z)
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    double s = p.bias[o];
                    for (std::size_t c = 0; c < cin; ++c)
                        for (long dz = -r; dz <= r; ++dz)
                            for (long di = -r; di <= r; ++di)
                                for (long dj = -r; dj <= r; ++dj) {
                                    const long zz = static_cast<long>(z) + dz;
                                    const long ii = static_cast<long>(i) + di, jj = static_cast<long>(j) + dj;
                                    if (zz < 0 || ii < 0 || jj < 0 || zz >= static_cast<long>(d) ||
                                        ii >= static_cast<long>(h) || jj >= static_cast<long>(w))
                                        continue;
                                    s += p.kernel.at({o, c, static_cast<std::size_t>(dz + r),
                                                      static_cast<std::size_t>(di + r),
                                                      static_cast<std::size_t>(dj + r)}) *
                                         x.at({c, static_cast<std::size_t>(zz), static_cast<std::size_t>(ii),
                                               static_cast<std::size_t>(jj)});
                                }
                    out.at({o, z, i, j}) = s;
                }
    return out;
}

inline Tensor naive_relu(Tensor t) {
    for (double& v : t.data()) v = v > 0.0 ? v : 0.0;
    return t;
}

inline Tensor naive_bottleneck(const Tensor& x, const Bottleneck& b, bool relu = true) {
    auto conv = [&](const Tensor& in, const ConvParams& p) {
        return p.spatial_rank() == 3 ? naive_conv3d(in, p) : naive_conv2d(in, p);
    };
    Tensor h = conv(x, b.reduce);
    if (relu) h = naive_relu(h);
    h = conv(h, b.middle);
    if (relu) h = naive_relu(h);
    return conv(h, b.expand);
}

/// Spatial attention written as explicit loops over positions.
struct NaiveAttention {
    Tensor out;
    Tensor weights;
};

inline NaiveAttention naive_spatial_attention(const Tensor& z, const MABParams& p) {
    const std::size_t c = z.dim(0), h = z.dim(1), w = z.dim(2), u = h * w;
    const Tensor q = naive_conv2d(z, p.phi_q), k = naive_conv2d(z, p.phi_k), v = naive_conv2d(z, p.phi_v);
    NaiveAttention r{Tensor(Shape{c, h, w}), Tensor(Shape{u, u})};
    for (std::size_t i = 0; i < u; ++i) {
        std::vector<double> s(u);
        double peak = -1e300;
        for (std::size_t j = 0; j < u; ++j) {
            double acc = 0.0;
            for (std::size_t ch = 0; ch < c; ++ch) acc += q[ch * u + i] * k[ch * u + j];
            s[j] = acc;
            peak = std::max(peak, acc);
        }
        double total = 0.0;
        for (double& e : s) total += (e = std::exp(e - peak));
        for (std::size_t j = 0; j < u; ++j) r.weights[i * u + j] = s[j] / total;
        for (std::size_t ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (std::size_t j = 0; j < u; ++j) acc += r.weights[i * u + j] * v[ch * u + j];
            r.out[ch * u + i] = acc;
        }
    }
    return r;
}

inline NaiveAttention naive_channel_attention(const Tensor& z, const MABParams& p) {
    const std::size_t c = z.dim(0), h = z.dim(1), w = z.dim(2), u = h * w;
    const Tensor f = naive_conv2d(z, p.phi_c);
    NaiveAttention r{Tensor(Shape{c, h, w}), Tensor(Shape{c, c})};
    for (std::size_t i = 0; i < c; ++i) {
        std::vector<double> s(c);
        double peak = -1e300;
        for (std::size_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t x = 0; x < u; ++x) acc += f[i * u + x] * f[j * u + x];
            s[j] = acc;
            peak = std::max(peak, acc);
        }
        double total = 0.0;
        for (double& e : s) total += (e = std::exp(e - peak));
        for (std::size_t j = 0; j < c; ++j) r.weights[i * c + j] = s[j] / total;
        for (std::size_t x = 0; x < u; ++x) {
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j) acc += r.weights[i * c + j] * f[j * u + x];
            r.out[i * u + x] = acc;
        }
    }
    return r;
}

inline Tensor naive_mab(const Tensor& z, const MABParams& p, bool relu = true) {
    const Tensor a = naive_spatial_attention(z, p).out;
    const Tensor b = naive_channel_attention(z, p).out;
    const std::size_t c = z.dim(0), u = z.dim(1) * z.dim(2);
    Tensor stacked(Shape{2 * c, z.dim(1), z.dim(2)});
    for (std::size_t i = 0; i < c * u; ++i) {
        stacked[i] = a[i];
        stacked[c * u + i] = b[i];
    }
    Tensor out = naive_bottleneck(stacked, p.fusion, relu);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += z[i];
    return out;
}

/// (1/n) Σ_τ Σ_entries (d² + λ|d|) by explicit loops.
inline double naive_recon_loss(const Tensor& y, const Tensor& yp, double lambda) {
    const std::size_t n = y.dim(0), per = y.size() / n;
    double total = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        double sq = 0.0, l1 = 0.0;
        for (std::size_t i = 0; i < per; ++i) {
            const double d = y[t * per + i] - yp[t * per + i];
            sq += d * d;
            l1 += std::abs(d);
        }
        total += sq + lambda * l1;
    }
    return total / static_cast<double>(n);
}

inline double naive_sqdist(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

inline double naive_triplet(const Tensor& anchor, const Tensor& pos, const std::vector<Tensor>& negs, double omega) {
    double nearest = naive_sqdist(negs.front(), anchor);
    for (const Tensor& n : negs) nearest = std::min(nearest, naive_sqdist(n, anchor));
    return std::max(naive_sqdist(pos, anchor) - nearest + omega, 0.0);
}

/// Direct exp/sum form; only valid for small inner products.
inline double naive_infonce(const Tensor& anchor, const Tensor& pos, const std::vector<Tensor>& negs) {
    auto ip = [&](const Tensor& t) {
        double s = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * anchor[i];
        return s;
    };
    const double p = std::exp(ip(pos));
    double denom = p;
    for (const Tensor& n : negs) denom += std::exp(ip(n));
    return -std::log(p / denom);
}

/// Counts, per frame, category and cell, the records that fall inside by
/// direct comparison against the cell edges.
inline std::vector<Tensor> naive_rasterize(const std::vector<EventRecord>& records, const GridSpec& spec,
                                           Days start, Days end) {
    const long days = (end - start).count();
    const std::size_t frames = static_cast<std::size_t>(days / spec.interval_days);
    std::vector<Tensor> out(frames, Tensor(spec.frame_shape()));
    const BoundingBox& b = spec.bbox;
    auto inside = [](double v, double lo, double hi, std::size_t i, std::size_t cells) {
        const double width = (hi - lo) / static_cast<double>(cells);
        const double a = lo + static_cast<double>(i) * width, z = lo + static_cast<double>(i + 1) * width;
        if (i + 1 == cells) return v >= a && v <= hi;
        return v >= a && v < z;
    };
    for (std::size_t t = 0; t < frames; ++t) {
        const Seconds t0 = Seconds(start + std::chrono::days(static_cast<long>(t) * spec.interval_days));
        const Seconds t1 = t0 + std::chrono::days(spec.interval_days);
        for (std::size_t k = 0; k < spec.c(); ++k)
            for (std::size_t i = 0; i < spec.h; ++i)
                for (std::size_t j = 0; j < spec.w; ++j) {
                    double count = 0.0;
                    for (const EventRecord& r : records) {
                        if (r.category != spec.categories[k] || r.timestamp < t0 || r.timestamp >= t1) continue;
                        if (inside(r.latitude, b.lat_min, b.lat_max, i, spec.h) &&
                            inside(r.longitude, b.lon_min, b.lon_max, j, spec.w))
                            count += 1.0;
                    }
                    out[t].at({k, i, j}) = count;
                }
    }
    return out;
}

}  // namespace testing_support
