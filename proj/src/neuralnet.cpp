#include "covmap/neuralnet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "covmap/errors.hpp"
#include "covmap/io.hpp"
#include "covmap/rng.hpp"

namespace covmap::nn {

namespace {

constexpr std::ptrdiff_t kPad = static_cast<std::ptrdiff_t>(kPadding);
constexpr std::ptrdiff_t kStep = static_cast<std::ptrdiff_t>(kStride);

// Dot product accumulated in eight fixed lanes (vectorizable, order-stable).
double lane_dot(const double* a, const double* b, std::size_t n) {
    double acc[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8)
        for (std::size_t k = 0; k < 8; ++k) acc[k] += a[j + k] * b[j + k];
    for (std::size_t k = 0; j < n; ++j, ++k) acc[k] += a[j] * b[j];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

void expect(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

struct ConvDims {
    std::size_t cin, cout, h, w, oh, ow;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const char* op) {
    const std::string name(op);
    expect(x.rank() == 3, name + ": input must be [C, H, W], got " + shape_string(x.shape()));
    expect(w.rank() == 4 && w.dim(2) == kKernel && w.dim(3) == kKernel,
           name + ": weights must be [C_out, C_in, 3, 3], got " + shape_string(w.shape()));
    expect(w.dim(1) == x.dim(0), name + ": channel mismatch between input and weights");
    expect(x.dim(1) >= kKernel && x.dim(2) >= kKernel, name + ": spatial extent must be at least 3");
    return {x.dim(0), w.dim(0), x.dim(1), x.dim(2), conv_output_extent(x.dim(1)), conv_output_extent(x.dim(2))};
}

ConvDims conv_transpose_dims(const Tensor& x, const Tensor& w, const char* op) {
    const std::string name(op);
    expect(x.rank() == 3, name + ": input must be [C, H, W], got " + shape_string(x.shape()));
    expect(w.rank() == 4 && w.dim(2) == kKernel && w.dim(3) == kKernel,
           name + ": weights must be [C_in, C_out, 3, 3], got " + shape_string(w.shape()));
    expect(w.dim(0) == x.dim(0), name + ": channel mismatch between input and weights");
    expect(x.dim(1) >= 1 && x.dim(2) >= 1, name + ": empty input");
    return {x.dim(0), w.dim(1), x.dim(1), x.dim(2), conv_transpose_output_extent(x.dim(1)),
            conv_transpose_output_extent(x.dim(2))};
}

void expect_bias(const Tensor& b, std::size_t n, const char* op) {
    expect(b.rank() == 1 && b.dim(0) == n, std::string(op) + ": bias must be [" + std::to_string(n) + "]");
}

// Input index touched by output position p and kernel tap k, or -1 when it falls in the padding.
inline std::ptrdiff_t tap(std::size_t p, std::size_t k, std::size_t extent) {
    const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(p) * kStep - kPad + static_cast<std::ptrdiff_t>(k);
    return r >= 0 && r < static_cast<std::ptrdiff_t>(extent) ? r : -1;
}

// Output positions p in [lo, hi) whose tap k lands inside [0, extent).
inline void tap_range(std::size_t k, std::size_t extent, std::size_t out_extent, std::size_t& lo, std::size_t& hi) {
    lo = 0;
    while (lo < out_extent && tap(lo, k, extent) < 0) ++lo;
    hi = out_extent;
    while (hi > lo && tap(hi - 1, k, extent) < 0) --hi;
}

} // namespace

std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t k = 0; k < shape.size(); ++k) s += (k ? ", " : "") + std::to_string(shape[k]);
    return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
    data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size())
        throw ShapeError("tensor data has " + std::to_string(data_.size()) + " values for shape " +
                         shape_string(shape_));
}

void Tensor::reshape(std::vector<std::size_t> shape) {
    if (element_count(shape) != data_.size())
        throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    shape_ = std::move(shape);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------- kernels

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    const ConvDims d = conv_dims(x, w, "conv2d");
    expect_bias(b, d.cout, "conv2d");
    Tensor y({d.cout, d.oh, d.ow});
    const std::size_t plane = d.oh * d.ow;
#pragma omp parallel for schedule(static) if (d.cout * plane * d.cin > 4096)
    for (std::size_t o = 0; o < d.cout; ++o) {
        double* yo = y.data() + o * plane;
        std::fill(yo, yo + plane, b[o]);
        for (std::size_t c = 0; c < d.cin; ++c) {
            const double* xc = x.data() + c * d.h * d.w;
            for (std::size_t ki = 0; ki < kKernel; ++ki) {
                std::size_t p0, p1;
                tap_range(ki, d.h, d.oh, p0, p1);
                for (std::size_t kj = 0; kj < kKernel; ++kj) {
                    const double wv = w[((o * d.cin + c) * kKernel + ki) * kKernel + kj];
                    std::size_t q0, q1;
                    tap_range(kj, d.w, d.ow, q0, q1);
                    for (std::size_t p = p0; p < p1; ++p) {
                        const double* xr = xc + static_cast<std::size_t>(tap(p, ki, d.h)) * d.w;
                        double* yr = yo + p * d.ow;
                        const std::size_t col0 = static_cast<std::size_t>(tap(q0, kj, d.w));
                        for (std::size_t q = q0; q < q1; ++q) yr[q] += wv * xr[col0 + (q - q0) * kStride];
                    }
                }
            }
        }
    }
    return y;
}

LayerGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy) {
    const ConvDims d = conv_dims(x, w, "conv2d_backward");
    expect(dy.shape() == std::vector<std::size_t>{d.cout, d.oh, d.ow}, "conv2d_backward: upstream gradient shape");
    LayerGrads g{Tensor(x.shape()), Tensor(w.shape()), Tensor({d.cout})};
    const std::size_t plane = d.oh * d.ow;
#pragma omp parallel for schedule(static) if (d.cout * plane * d.cin > 4096)
    for (std::size_t o = 0; o < d.cout; ++o) {
        const double* dyo = dy.data() + o * plane;
        double db = 0.0;
        for (std::size_t k = 0; k < plane; ++k) db += dyo[k];
        g.db[o] = db;
        for (std::size_t c = 0; c < d.cin; ++c) {
            const double* xc = x.data() + c * d.h * d.w;
            for (std::size_t ki = 0; ki < kKernel; ++ki)
                for (std::size_t kj = 0; kj < kKernel; ++kj) {
                    double acc = 0.0;
                    for (std::size_t p = 0; p < d.oh; ++p) {
                        const std::ptrdiff_t r = tap(p, ki, d.h);
                        if (r < 0) continue;
                        for (std::size_t q = 0; q < d.ow; ++q) {
                            const std::ptrdiff_t s = tap(q, kj, d.w);
                            if (s < 0) continue;
                            acc += dyo[p * d.ow + q] * xc[static_cast<std::size_t>(r) * d.w + static_cast<std::size_t>(s)];
                        }
                    }
                    g.dw[((o * d.cin + c) * kKernel + ki) * kKernel + kj] = acc;
                }
        }
    }
#pragma omp parallel for schedule(static) if (d.cout * plane * d.cin > 4096)
    for (std::size_t c = 0; c < d.cin; ++c) {
        double* dxc = g.dx.data() + c * d.h * d.w;
        for (std::size_t o = 0; o < d.cout; ++o) {
            const double* dyo = dy.data() + o * plane;
            for (std::size_t ki = 0; ki < kKernel; ++ki) {
                std::size_t p0, p1;
                tap_range(ki, d.h, d.oh, p0, p1);
                for (std::size_t kj = 0; kj < kKernel; ++kj) {
                    const double wv = w[((o * d.cin + c) * kKernel + ki) * kKernel + kj];
                    std::size_t q0, q1;
                    tap_range(kj, d.w, d.ow, q0, q1);
                    for (std::size_t p = p0; p < p1; ++p) {
                        double* dxr = dxc + static_cast<std::size_t>(tap(p, ki, d.h)) * d.w;
                        const std::size_t col0 = static_cast<std::size_t>(tap(q0, kj, d.w));
                        for (std::size_t q = q0; q < q1; ++q) dxr[col0 + (q - q0) * kStride] += wv * dyo[p * d.ow + q];
                    }
                }
            }
        }
    }
    return g;
}

Tensor conv_transpose2d_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    const ConvDims d = conv_transpose_dims(x, w, "conv_transpose2d");
    expect_bias(b, d.cout, "conv_transpose2d");
    Tensor y({d.cout, d.oh, d.ow});
    const std::size_t plane = d.oh * d.ow;
#pragma omp parallel for schedule(static) if (d.cout * plane * d.cin > 4096)
    for (std::size_t o = 0; o < d.cout; ++o) {
        double* yo = y.data() + o * plane;
        std::fill(yo, yo + plane, b[o]);
        for (std::size_t c = 0; c < d.cin; ++c) {
            const double* xc = x.data() + c * d.h * d.w;
            for (std::size_t ki = 0; ki < kKernel; ++ki) {
                std::size_t i0, i1;
                tap_range(ki, d.oh, d.h, i0, i1);
                for (std::size_t kj = 0; kj < kKernel; ++kj) {
                    const double wv = w[((c * d.cout + o) * kKernel + ki) * kKernel + kj];
                    std::size_t j0, j1;
                    tap_range(kj, d.ow, d.w, j0, j1);
                    for (std::size_t i = i0; i < i1; ++i) {
                        double* yr = yo + static_cast<std::size_t>(tap(i, ki, d.oh)) * d.ow;
                        const double* xr = xc + i * d.w;
                        const std::size_t col0 = static_cast<std::size_t>(tap(j0, kj, d.ow));
                        for (std::size_t j = j0; j < j1; ++j) yr[col0 + (j - j0) * kStride] += wv * xr[j];
                    }
                }
            }
        }
    }
    return y;
}

LayerGrads conv_transpose2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy) {
    const ConvDims d = conv_transpose_dims(x, w, "conv_transpose2d_backward");
    expect(dy.shape() == std::vector<std::size_t>{d.cout, d.oh, d.ow},
           "conv_transpose2d_backward: upstream gradient shape");
    LayerGrads g{Tensor(x.shape()), Tensor(w.shape()), Tensor({d.cout})};
    const std::size_t plane = d.oh * d.ow;
    for (std::size_t o = 0; o < d.cout; ++o) {
        double db = 0.0;
        for (std::size_t k = 0; k < plane; ++k) db += dy[o * plane + k];
        g.db[o] = db;
    }
#pragma omp parallel for schedule(static) if (d.cout * plane * d.cin > 4096)
    for (std::size_t c = 0; c < d.cin; ++c) {
        const double* xc = x.data() + c * d.h * d.w;
        double* dxc = g.dx.data() + c * d.h * d.w;
        for (std::size_t o = 0; o < d.cout; ++o) {
            const double* dyo = dy.data() + o * plane;
            for (std::size_t ki = 0; ki < kKernel; ++ki) {
                std::size_t i0, i1;
                tap_range(ki, d.oh, d.h, i0, i1);
                for (std::size_t kj = 0; kj < kKernel; ++kj) {
                    std::size_t j0, j1;
                    tap_range(kj, d.ow, d.w, j0, j1);
                    const std::size_t widx = ((c * d.cout + o) * kKernel + ki) * kKernel + kj;
                    const double wv = w[widx];
                    double acc = 0.0;
                    for (std::size_t i = i0; i < i1; ++i) {
                        const double* dyr = dyo + static_cast<std::size_t>(tap(i, ki, d.oh)) * d.ow;
                        const std::size_t col0 = static_cast<std::size_t>(tap(j0, kj, d.ow));
                        double* dxr = dxc + i * d.w;
                        const double* xr = xc + i * d.w;
                        for (std::size_t j = j0; j < j1; ++j) {
                            const double up = dyr[col0 + (j - j0) * kStride];
                            dxr[j] += wv * up;
                            acc += xr[j] * up;
                        }
                    }
                    g.dw[widx] = acc;
                }
            }
        }
    }
    return g;
}

Tensor affine_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    expect(w.rank() == 2, "affine: weights must be [out, in]");
    const std::size_t out = w.dim(0), in = w.dim(1);
    expect(x.size() == in, "affine: input has " + std::to_string(x.size()) + " values, expected " + std::to_string(in));
    expect_bias(b, out, "affine");
    Tensor y({out});
#pragma omp parallel for schedule(static) if (out * in > 65536)
    for (std::size_t o = 0; o < out; ++o) y[o] = lane_dot(w.data() + o * in, x.data(), in) + b[o];
    return y;
}

LayerGrads affine_backward(const Tensor& x, const Tensor& w, const Tensor& dy) {
    expect(w.rank() == 2, "affine_backward: weights must be [out, in]");
    const std::size_t out = w.dim(0), in = w.dim(1);
    expect(x.size() == in && dy.size() == out, "affine_backward: shape mismatch");
    LayerGrads g{Tensor(x.shape()), Tensor(w.shape()), Tensor({out})};
    for (std::size_t o = 0; o < out; ++o) g.db[o] = dy[o];
    constexpr std::size_t kChunk = 256;
    const std::size_t chunks = (in + kChunk - 1) / kChunk;
#pragma omp parallel for schedule(static) if (out * in > 65536)
    for (std::size_t ch = 0; ch < chunks; ++ch) {
        const std::size_t i0 = ch * kChunk, i1 = std::min(in, i0 + kChunk);
        double* dx = g.dx.data();
        for (std::size_t o = 0; o < out; ++o) {
            const double u = dy[o];
            const double* wr = w.data() + o * in;
            double* dwr = g.dw.data() + o * in;
            for (std::size_t i = i0; i < i1; ++i) {
                dx[i] += wr[i] * u;
                dwr[i] = u * x[i];
            }
        }
    }
    return g;
}

Tensor relu_forward(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
    expect(x.size() == dy.size(), "relu_backward: shape mismatch");
    Tensor dx(x.shape());
    for (std::size_t k = 0; k < x.size(); ++k) dx[k] = x[k] > 0.0 ? dy[k] : 0.0;
    return dx;
}

Tensor sigmoid_forward(const Tensor& x) {
    constexpr double lo = std::numeric_limits<double>::min();
    constexpr double hi = 1.0 - 0x1.0p-53;
    Tensor y = x;
    for (double& v : y.values()) {
        const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        v = std::clamp(s, lo, hi);
    }
    return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& dy) {
    expect(y.size() == dy.size(), "sigmoid_backward: shape mismatch");
    Tensor dx(y.shape());
    for (std::size_t k = 0; k < y.size(); ++k) dx[k] = dy[k] * (y[k] * (1.0 - y[k]));
    return dx;
}

// ---------------------------------------------------------------- reference kernels

namespace reference {

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    const ConvDims d = conv_dims(x, w, "conv2d");
    expect_bias(b, d.cout, "conv2d");
    Tensor y({d.cout, d.oh, d.ow});
    for (std::size_t o = 0; o < d.cout; ++o)
        for (std::size_t p = 0; p < d.oh; ++p)
            for (std::size_t q = 0; q < d.ow; ++q) {
                double acc = b[o];
                for (std::size_t c = 0; c < d.cin; ++c)
                    for (std::size_t ki = 0; ki < kKernel; ++ki)
                        for (std::size_t kj = 0; kj < kKernel; ++kj) {
                            const std::ptrdiff_t r = tap(p, ki, d.h), s = tap(q, kj, d.w);
                            if (r < 0 || s < 0) continue;
                            acc += w[((o * d.cin + c) * kKernel + ki) * kKernel + kj] *
                                   x[(c * d.h + static_cast<std::size_t>(r)) * d.w + static_cast<std::size_t>(s)];
                        }
                y[(o * d.oh + p) * d.ow + q] = acc;
            }
    return y;
}

LayerGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy) {
    const ConvDims d = conv_dims(x, w, "conv2d_backward");
    expect(dy.shape() == std::vector<std::size_t>{d.cout, d.oh, d.ow}, "conv2d_backward: upstream gradient shape");
    LayerGrads g{Tensor(x.shape()), Tensor(w.shape()), Tensor({d.cout})};
    for (std::size_t o = 0; o < d.cout; ++o) {
        for (std::size_t k = 0; k < d.oh * d.ow; ++k) g.db[o] += dy[o * d.oh * d.ow + k];
        for (std::size_t c = 0; c < d.cin; ++c)
            for (std::size_t ki = 0; ki < kKernel; ++ki)
                for (std::size_t kj = 0; kj < kKernel; ++kj) {
                    double acc = 0.0;
                    for (std::size_t p = 0; p < d.oh; ++p)
                        for (std::size_t q = 0; q < d.ow; ++q) {
                            const std::ptrdiff_t r = tap(p, ki, d.h), s = tap(q, kj, d.w);
                            if (r < 0 || s < 0) continue;
                            acc += dy[(o * d.oh + p) * d.ow + q] *
                                   x[(c * d.h + static_cast<std::size_t>(r)) * d.w + static_cast<std::size_t>(s)];
                        }
                    g.dw[((o * d.cin + c) * kKernel + ki) * kKernel + kj] = acc;
                }
    }
    for (std::size_t c = 0; c < d.cin; ++c)
        for (std::size_t o = 0; o < d.cout; ++o)
            for (std::size_t ki = 0; ki < kKernel; ++ki)
                for (std::size_t kj = 0; kj < kKernel; ++kj)
                    for (std::size_t p = 0; p < d.oh; ++p)
                        for (std::size_t q = 0; q < d.ow; ++q) {
                            const std::ptrdiff_t r = tap(p, ki, d.h), s = tap(q, kj, d.w);
                            if (r < 0 || s < 0) continue;
                            g.dx[(c * d.h + static_cast<std::size_t>(r)) * d.w + static_cast<std::size_t>(s)] +=
                                w[((o * d.cin + c) * kKernel + ki) * kKernel + kj] * dy[(o * d.oh + p) * d.ow + q];
                        }
    return g;
}

Tensor conv_transpose2d_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    const ConvDims d = conv_transpose_dims(x, w, "conv_transpose2d");
    expect_bias(b, d.cout, "conv_transpose2d");
    Tensor y({d.cout, d.oh, d.ow});
    for (std::size_t o = 0; o < d.cout; ++o) {
        for (std::size_t k = 0; k < d.oh * d.ow; ++k) y[o * d.oh * d.ow + k] = b[o];
        for (std::size_t c = 0; c < d.cin; ++c)
            for (std::size_t ki = 0; ki < kKernel; ++ki)
                for (std::size_t kj = 0; kj < kKernel; ++kj)
                    for (std::size_t i = 0; i < d.h; ++i)
                        for (std::size_t j = 0; j < d.w; ++j) {
                            const std::ptrdiff_t r = tap(i, ki, d.oh), s = tap(j, kj, d.ow);
                            if (r < 0 || s < 0) continue;
                            y[(o * d.oh + static_cast<std::size_t>(r)) * d.ow + static_cast<std::size_t>(s)] +=
                                w[((c * d.cout + o) * kKernel + ki) * kKernel + kj] * x[(c * d.h + i) * d.w + j];
                        }
    }
    return y;
}

LayerGrads conv_transpose2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy) {
    const ConvDims d = conv_transpose_dims(x, w, "conv_transpose2d_backward");
    expect(dy.shape() == std::vector<std::size_t>{d.cout, d.oh, d.ow},
           "conv_transpose2d_backward: upstream gradient shape");
    LayerGrads g{Tensor(x.shape()), Tensor(w.shape()), Tensor({d.cout})};
    for (std::size_t o = 0; o < d.cout; ++o)
        for (std::size_t k = 0; k < d.oh * d.ow; ++k) g.db[o] += dy[o * d.oh * d.ow + k];
    for (std::size_t c = 0; c < d.cin; ++c)
        for (std::size_t o = 0; o < d.cout; ++o)
            for (std::size_t ki = 0; ki < kKernel; ++ki)
                for (std::size_t kj = 0; kj < kKernel; ++kj) {
                    const std::size_t widx = ((c * d.cout + o) * kKernel + ki) * kKernel + kj;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < d.h; ++i)
                        for (std::size_t j = 0; j < d.w; ++j) {
                            const std::ptrdiff_t r = tap(i, ki, d.oh), s = tap(j, kj, d.ow);
                            if (r < 0 || s < 0) continue;
                            const double up =
                                dy[(o * d.oh + static_cast<std::size_t>(r)) * d.ow + static_cast<std::size_t>(s)];
                            g.dx[(c * d.h + i) * d.w + j] += w[widx] * up;
                            acc += x[(c * d.h + i) * d.w + j] * up;
                        }
                    g.dw[widx] = acc;
                }
    return g;
}

Tensor affine_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    expect(w.rank() == 2 && x.size() == w.dim(1), "affine: shape mismatch");
    const std::size_t out = w.dim(0), in = w.dim(1);
    expect_bias(b, out, "affine");
    Tensor y({out});
    for (std::size_t o = 0; o < out; ++o) {
        // Eight interleaved partial sums, combined pairwise.
        double lane[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
        for (std::size_t i = 0; i < in; ++i) {
            const std::size_t tail_start = in - in % 8;
            const std::size_t k = i < tail_start ? i % 8 : i - tail_start;
            lane[k] += w[o * in + i] * x[i];
        }
        y[o] = ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7])) + b[o];
    }
    return y;
}

LayerGrads affine_backward(const Tensor& x, const Tensor& w, const Tensor& dy) {
    expect(w.rank() == 2 && x.size() == w.dim(1) && dy.size() == w.dim(0), "affine_backward: shape mismatch");
    const std::size_t out = w.dim(0), in = w.dim(1);
    LayerGrads g{Tensor(x.shape()), Tensor(w.shape()), Tensor({out})};
    for (std::size_t o = 0; o < out; ++o) {
        g.db[o] = dy[o];
        for (std::size_t i = 0; i < in; ++i) {
            g.dw[o * in + i] = dy[o] * x[i];
            g.dx[i] += w[o * in + i] * dy[o];
        }
    }
    return g;
}

} // namespace reference

// ---------------------------------------------------------------- layers

std::string to_string(LayerKind kind) {
    switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::conv_transpose: return "conv_transpose";
    case LayerKind::affine: return "affine";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    }
    return "unknown";
}

LayerKind parse_layer_kind(const std::string& text) {
    for (LayerKind k : {LayerKind::conv, LayerKind::conv_transpose, LayerKind::affine, LayerKind::relu,
                        LayerKind::sigmoid})
        if (to_string(k) == text) return k;
    throw ConfigError("unknown layer kind '" + text + "'");
}

LayerSpec LayerSpec::conv(std::size_t in_channels, std::size_t out_channels) {
    return {LayerKind::conv, in_channels, out_channels, {}};
}
LayerSpec LayerSpec::conv_transpose(std::size_t in_channels, std::size_t out_channels) {
    return {LayerKind::conv_transpose, in_channels, out_channels, {}};
}
LayerSpec LayerSpec::affine(std::size_t in_dim, std::size_t out_dim, std::vector<std::size_t> out_shape) {
    if (out_shape.empty()) out_shape = {out_dim};
    if (element_count(out_shape) != out_dim) throw ShapeError("affine output shape does not match its width");
    return {LayerKind::affine, in_dim, out_dim, std::move(out_shape)};
}
LayerSpec LayerSpec::relu() { return {LayerKind::relu, 0, 0, {}}; }
LayerSpec LayerSpec::sigmoid() { return {LayerKind::sigmoid, 0, 0, {}}; }

bool LayerSpec::has_params() const {
    return kind == LayerKind::conv || kind == LayerKind::conv_transpose || kind == LayerKind::affine;
}

std::vector<std::size_t> LayerSpec::weight_shape() const {
    switch (kind) {
    case LayerKind::conv: return {out, in, kKernel, kKernel};
    case LayerKind::conv_transpose: return {in, out, kKernel, kKernel};
    case LayerKind::affine: return {out, in};
    default: return {};
    }
}

std::vector<std::size_t> LayerSpec::bias_shape() const {
    return has_params() ? std::vector<std::size_t>{out} : std::vector<std::size_t>{};
}

std::size_t LayerSpec::fan_in() const {
    return kind == LayerKind::affine ? in : in * kKernel * kKernel;
}

std::size_t LayerSpec::fan_out() const {
    return kind == LayerKind::affine ? out : out * kKernel * kKernel;
}

bool operator==(const Layer& a, const Layer& b) {
    return a.spec == b.spec && a.weight == b.weight && a.bias == b.bias;
}

bool operator==(const Network& a, const Network& b) { return a.layers_ == b.layers_; }

void Gradients::add(const Gradients& other) {
    if (other.weight.size() != weight.size()) throw ShapeError("gradient sets have different layer counts");
    for (std::size_t l = 0; l < weight.size(); ++l) {
        if (weight[l].shape() != other.weight[l].shape() || bias[l].shape() != other.bias[l].shape())
            throw ShapeError("gradient shapes differ at layer " + std::to_string(l));
        for (std::size_t k = 0; k < weight[l].size(); ++k) weight[l][k] += other.weight[l][k];
        for (std::size_t k = 0; k < bias[l].size(); ++k) bias[l][k] += other.bias[l][k];
    }
}

void Gradients::scale(double factor) {
    for (auto* set : {&weight, &bias})
        for (Tensor& t : *set)
            for (double& v : t.values()) v *= factor;
}

void Gradients::zero() {
    for (auto* set : {&weight, &bias})
        for (Tensor& t : *set) t.fill(0.0);
}

bool Gradients::all_finite() const {
    for (const auto* set : {&weight, &bias})
        for (const Tensor& t : *set)
            if (!t.all_finite()) return false;
    return true;
}

Network::Network(std::vector<LayerSpec> specs) {
    for (LayerSpec& s : specs) {
        if (s.has_params() && (s.in == 0 || s.out == 0)) throw ShapeError("layer widths must be positive");
        if (s.kind == LayerKind::affine && s.out_shape.empty()) s.out_shape = {s.out};
        Layer layer{s, Tensor(s.weight_shape()), Tensor(s.bias_shape())};
        if (!s.has_params()) layer.weight = Tensor(), layer.bias = Tensor();
        layers_.push_back(std::move(layer));
    }
}

void Network::init_xavier(std::uint64_t seed) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Layer& layer = layers_[l];
        if (!layer.spec.has_params()) continue;
        const double bound = std::sqrt(6.0 / static_cast<double>(layer.spec.fan_in() + layer.spec.fan_out()));
        rng::Stream stream(seed, l, 0);
        for (double& v : layer.weight.values()) v = (2.0 * stream.uniform() - 1.0) * bound;
        layer.bias.fill(0.0);
    }
}

namespace {

Tensor apply(const Layer& layer, const Tensor& x) {
    switch (layer.spec.kind) {
    case LayerKind::conv: return conv2d_forward(x, layer.weight, layer.bias);
    case LayerKind::conv_transpose: return conv_transpose2d_forward(x, layer.weight, layer.bias);
    case LayerKind::affine: {
        Tensor y = affine_forward(x, layer.weight, layer.bias);
        y.reshape(layer.spec.out_shape);
        return y;
    }
    case LayerKind::relu: return relu_forward(x);
    case LayerKind::sigmoid: return sigmoid_forward(x);
    }
    throw ShapeError("unknown layer kind");
}

} // namespace

Tensor Network::forward(const Tensor& x) const {
    Tensor cur = x;
    for (const Layer& layer : layers_) cur = apply(layer, cur);
    return cur;
}

Tensor Network::forward(const Tensor& x, Tape& tape) const {
    tape.values.clear();
    tape.values.reserve(layers_.size() + 1);
    tape.values.push_back(x);
    for (const Layer& layer : layers_) tape.values.push_back(apply(layer, tape.values.back()));
    return tape.values.back();
}

Tensor Network::backward(const Tape& tape, const Tensor& dy, Gradients& grads) const {
    if (tape.values.size() != layers_.size() + 1) throw ShapeError("tape does not match the network");
    if (grads.weight.size() != layers_.size() || grads.bias.size() != layers_.size())
        throw ShapeError("gradient set does not match the network");
    if (dy.size() != tape.values.back().size()) throw ShapeError("upstream gradient does not match the output");
    Tensor cur = dy;
    cur.reshape(tape.values.back().shape());
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const Layer& layer = layers_[l];
        const Tensor& x = tape.values[l];
        LayerGrads g;
        switch (layer.spec.kind) {
        case LayerKind::conv: g = conv2d_backward(x, layer.weight, cur); break;
        case LayerKind::conv_transpose: g = conv_transpose2d_backward(x, layer.weight, cur); break;
        case LayerKind::affine: g = affine_backward(x, layer.weight, cur); break;
        case LayerKind::relu: g.dx = relu_backward(x, cur); break;
        case LayerKind::sigmoid: g.dx = sigmoid_backward(tape.values[l + 1], cur); break;
        }
        if (layer.spec.has_params()) {
            Tensor& gw = grads.weight[l];
            Tensor& gb = grads.bias[l];
            if (gw.shape() != g.dw.shape() || gb.shape() != g.db.shape())
                throw ShapeError("gradient shapes differ at layer " + std::to_string(l));
            for (std::size_t k = 0; k < gw.size(); ++k) gw[k] += g.dw[k];
            for (std::size_t k = 0; k < gb.size(); ++k) gb[k] += g.db[k];
        }
        cur = std::move(g.dx);
    }
    return cur;
}

Gradients Network::zero_gradients() const {
    Gradients g;
    for (const Layer& layer : layers_) {
        g.weight.emplace_back(layer.spec.has_params() ? Tensor(layer.weight.shape()) : Tensor());
        g.bias.emplace_back(layer.spec.has_params() ? Tensor(layer.bias.shape()) : Tensor());
    }
    return g;
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const Layer& layer : layers_) n += layer.weight.size() + layer.bias.size();
    return n;
}

void Network::round_to_float() {
    for (Layer& layer : layers_)
        for (Tensor* t : {&layer.weight, &layer.bias})
            for (double& v : t->values()) v = static_cast<double>(static_cast<float>(v));
}

void sgd_step(Tensor& param, const Tensor& grad, double lr) {
    if (param.shape() != grad.shape()) throw ShapeError("parameter and gradient shapes differ");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
    for (std::size_t k = 0; k < param.size(); ++k) param[k] -= lr * grad[k];
}

void sgd_step(Network& net, const Gradients& grads, double lr) {
    auto& layers = net.layers();
    if (grads.weight.size() != layers.size() || grads.bias.size() != layers.size())
        throw ShapeError("gradient set does not match the network");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (!layers[l].spec.has_params()) continue;
        sgd_step(layers[l].weight, grads.weight[l], lr);
        sgd_step(layers[l].bias, grads.bias[l], lr);
    }
}

// ---------------------------------------------------------------- gradient check

LossFn linear_probe(const std::vector<std::size_t>& output_shape, std::uint64_t seed) {
    Tensor c(output_shape);
    rng::Stream stream(seed, 0x9c0be, 0);
    for (double& v : c.values()) v = 2.0 * stream.uniform() - 1.0;
    return [c](const Tensor& y, Tensor* grad) {
        if (y.size() != c.size()) throw ShapeError("probe does not match the output size");
        double sum = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) sum += c[k] * y[k];
        if (grad) {
            *grad = c;
            grad->reshape(y.shape());
        }
        return sum;
    };
}

nlohmann::json GradientCheckReport::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : entries)
        rows.push_back({{"layer", e.layer}, {"tensor", e.tensor}, {"checked", e.checked},
                        {"max_rel_error", e.max_rel_error}, {"passed", e.passed}});
    return {{"passed", passed}, {"max_rel_error", max_rel_error}, {"tolerance", tolerance}, {"entries", rows}};
}

GradientCheckReport check_gradients(const Network& net, const Tensor& input, const LossFn& loss,
                                    const GradientCheckOptions& opts, const BackwardFn& backward) {
    Tape tape;
    const Tensor out = net.forward(input, tape);
    Tensor dy;
    loss(out, &dy);
    Gradients analytic = net.zero_gradients();
    const Tensor dx = backward ? backward(net, tape, dy, analytic) : net.backward(tape, dy, analytic);

    GradientCheckReport report;
    report.tolerance = opts.tolerance;
    rng::Stream pick(opts.seed, 0x5e1ec7, 0);

    const auto rel_error = [&](double a, double n) {
        return std::abs(a - n) / std::max({std::abs(a), std::abs(n), opts.floor});
    };
    const auto indices = [&](std::size_t n) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        if (opts.max_entries > 0 && n > opts.max_entries) {
            rng::shuffle(std::span(idx), pick);
            idx.resize(opts.max_entries);
            std::sort(idx.begin(), idx.end());
        }
        return idx;
    };

    Network probe = net;
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
        if (!net.layers()[l].spec.has_params()) continue;
        for (const char* which : {"weight", "bias"}) {
            const bool is_weight = std::string(which) == "weight";
            Tensor& param = is_weight ? probe.layers()[l].weight : probe.layers()[l].bias;
            const Tensor& grad = is_weight ? analytic.weight[l] : analytic.bias[l];
            GradientCheckEntry entry{l, which, 0, 0.0, true};
            for (std::size_t k : indices(param.size())) {
                const double saved = param[k];
                param[k] = saved + opts.h;
                const double up = loss(probe.forward(input), nullptr);
                param[k] = saved - opts.h;
                const double down = loss(probe.forward(input), nullptr);
                param[k] = saved;
                const double numeric = (up - down) / (2.0 * opts.h);
                entry.max_rel_error = std::max(entry.max_rel_error, rel_error(grad[k], numeric));
                ++entry.checked;
            }
            entry.passed = entry.max_rel_error < opts.tolerance;
            report.entries.push_back(entry);
        }
    }
    GradientCheckEntry in_entry{net.layers().size(), "input", 0, 0.0, true};
    Tensor x = input;
    for (std::size_t k : indices(x.size())) {
        const double saved = x[k];
        x[k] = saved + opts.h;
        const double up = loss(net.forward(x), nullptr);
        x[k] = saved - opts.h;
        const double down = loss(net.forward(x), nullptr);
        x[k] = saved;
        in_entry.max_rel_error = std::max(in_entry.max_rel_error, rel_error(dx[k], (up - down) / (2.0 * opts.h)));
        ++in_entry.checked;
    }
    in_entry.passed = in_entry.max_rel_error < opts.tolerance;
    report.entries.push_back(in_entry);

    for (const auto& e : report.entries) {
        report.max_rel_error = std::max(report.max_rel_error, e.max_rel_error);
        report.passed = report.passed && e.passed;
    }
    return report;
}

// ---------------------------------------------------------------- serialization

nlohmann::json layout_json(const Network& net) {
    nlohmann::json layers = nlohmann::json::array();
    std::size_t offset = 0;
    for (const Layer& layer : net.layers()) {
        nlohmann::json entry = {{"kind", to_string(layer.spec.kind)}};
        if (layer.spec.has_params()) {
            entry["in"] = layer.spec.in;
            entry["out"] = layer.spec.out;
            if (layer.spec.kind == LayerKind::affine) entry["out_shape"] = layer.spec.out_shape;
            for (const auto& [name, tensor] : {std::pair{"weight", &layer.weight}, std::pair{"bias", &layer.bias}}) {
                entry[name] = {{"shape", tensor->shape()}, {"offset", offset}, {"count", tensor->size()}};
                offset += tensor->size() * sizeof(float);
            }
        }
        layers.push_back(entry);
    }
    return {{"format", "float32-le"}, {"total_bytes", offset}, {"layers", layers}};
}

std::vector<std::uint8_t> weights_blob(const Network& net) {
    std::vector<std::uint8_t> blob;
    blob.reserve(net.parameter_count() * sizeof(float));
    for (const Layer& layer : net.layers())
        for (const Tensor* t : {&layer.weight, &layer.bias})
            for (double v : t->values()) {
                const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
                for (int b = 0; b < 4; ++b) blob.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
            }
    return blob;
}

void write_weights(const std::filesystem::path& path, const Network& net) {
    const auto blob = weights_blob(net);
    io::write_text(path, std::string(blob.begin(), blob.end()));
}

Network network_from_blob(const nlohmann::json& layout, std::span<const std::uint8_t> blob) {
    try {
        if (layout.at("format").get<std::string>() != "float32-le") throw ConfigError("unsupported weight format");
        std::vector<LayerSpec> specs;
        for (const auto& entry : layout.at("layers")) {
            const LayerKind kind = parse_layer_kind(entry.at("kind").get<std::string>());
            switch (kind) {
            case LayerKind::conv:
                specs.push_back(LayerSpec::conv(entry.at("in").get<std::size_t>(), entry.at("out").get<std::size_t>()));
                break;
            case LayerKind::conv_transpose:
                specs.push_back(LayerSpec::conv_transpose(entry.at("in").get<std::size_t>(),
                                                          entry.at("out").get<std::size_t>()));
                break;
            case LayerKind::affine:
                specs.push_back(LayerSpec::affine(entry.at("in").get<std::size_t>(), entry.at("out").get<std::size_t>(),
                                                  entry.at("out_shape").get<std::vector<std::size_t>>()));
                break;
            case LayerKind::relu: specs.push_back(LayerSpec::relu()); break;
            case LayerKind::sigmoid: specs.push_back(LayerSpec::sigmoid()); break;
            }
        }
        Network net(specs);
        if (blob.size() != layout.at("total_bytes").get<std::size_t>() ||
            blob.size() != net.parameter_count() * sizeof(float))
            throw ShapeError("weight blob has " + std::to_string(blob.size()) + " bytes, layout expects " +
                             std::to_string(net.parameter_count() * sizeof(float)));
        const auto& entries = layout.at("layers");
        for (std::size_t l = 0; l < net.layers().size(); ++l) {
            Layer& layer = net.layers()[l];
            if (!layer.spec.has_params()) continue;
            for (const auto& [name, tensor] : {std::pair{"weight", &layer.weight}, std::pair{"bias", &layer.bias}}) {
                const auto& meta = entries[l].at(name);
                if (meta.at("shape").get<std::vector<std::size_t>>() != tensor->shape())
                    throw ShapeError("layer " + std::to_string(l) + " " + name + " shape mismatch");
                const std::size_t offset = meta.at("offset").get<std::size_t>();
                if (offset + tensor->size() * 4 > blob.size()) throw ShapeError("weight blob is truncated");
                for (std::size_t k = 0; k < tensor->size(); ++k) {
                    std::uint32_t bits = 0;
                    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(blob[offset + 4 * k + b]) << (8 * b);
                    (*tensor)[k] = static_cast<double>(std::bit_cast<float>(bits));
                }
            }
        }
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed weight layout: ") + e.what());
    }
}

Network read_weights(const std::filesystem::path& path, const nlohmann::json& layout) {
    const std::string bytes = io::read_text(path);
    const std::vector<std::uint8_t> blob(bytes.begin(), bytes.end());
    return network_from_blob(layout, blob);
}

} // namespace covmap::nn
