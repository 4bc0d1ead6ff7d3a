#include "kronmark/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>

namespace kronmark::ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

inline void require_rank(const Shape& shape, std::size_t rank, const char* op) {
    if (shape.size() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_string(shape));
    }
}

inline void require_same(const Shape& a, const Shape& b, const char* op) {
    if (a != b) throw DimensionError(std::string(op) + ": shape " + shape_string(a) + " vs " + shape_string(b));
}

// ---- convolution ----------------------------------------------------------

struct ConvDims {
    std::size_t s, h, w, d, k, stride, pad, oh, ow;
    std::size_t kdim() const { return s * k * k; }
    std::size_t cells() const { return oh * ow; }
    bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

ConvDims conv_dims(const Shape& in, const Shape& wt, const Shape& bias, ConvGeometry g) {
    require_rank(in, 3, "conv2d input");
    require_rank(wt, 4, "conv2d weight");
    require_rank(bias, 1, "conv2d bias");
    if (wt[1] != in[0]) {
        throw DimensionError("conv2d: weight expects " + std::to_string(wt[1]) + " input channels, input has " +
                             std::to_string(in[0]));
    }
    if (wt[2] != wt[3]) throw DimensionError("conv2d: kernel must be square, got " + shape_string(wt));
    if (bias[0] != wt[0]) throw DimensionError("conv2d: bias length does not match output channels");
    if (g.stride < 1) throw ContractError("conv2d: stride must be >= 1");
    ConvDims c{in[0], in[1], in[2], wt[0], wt[2], g.stride, g.padding, 0, 0};
    if (c.k > c.h + 2 * c.pad || c.k > c.w + 2 * c.pad) {
        throw DimensionError("conv2d: kernel " + std::to_string(c.k) + " exceeds padded input " + shape_string(in));
    }
    c.oh = (c.h + 2 * c.pad - c.k) / c.stride + 1;
    c.ow = (c.w + 2 * c.pad - c.k) / c.stride + 1;
    return c;
}

// Output rows [y0, y1) only; `col` has kdim() rows of (y1 - y0) * ow cells.
template <typename T>
void im2col(const T* in, const ConvDims& c, std::size_t y0, std::size_t y1, T* col) {
    const std::size_t n = (y1 - y0) * c.ow;
    for (std::size_t ch = 0; ch < c.s; ++ch) {
        for (std::size_t ki = 0; ki < c.k; ++ki) {
            for (std::size_t kj = 0; kj < c.k; ++kj) {
                T* row = col + ((ch * c.k + ki) * c.k + kj) * n;
                for (std::size_t oy = y0; oy < y1; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * c.stride + ki) - static_cast<std::ptrdiff_t>(c.pad);
                    T* dst = row + (oy - y0) * c.ow;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(c.h)) {
                        std::fill(dst, dst + c.ow, T(0));
                        continue;
                    }
                    const T* src = in + (ch * c.h + static_cast<std::size_t>(iy)) * c.w;
                    if (c.stride == 1) {
                        // valid ox range: 0 <= ox + kj - pad < w
                        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kj) - static_cast<std::ptrdiff_t>(c.pad);
                        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -off);
                        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(c.ow),
                                                                           static_cast<std::ptrdiff_t>(c.w) - off);
                        if (hi <= lo) {
                            std::fill(dst, dst + c.ow, T(0));
                            continue;
                        }
                        std::fill(dst, dst + lo, T(0));
                        std::copy(src + lo + off, src + hi + off, dst + lo);
                        std::fill(dst + hi, dst + c.ow, T(0));
                        continue;
                    }
                    for (std::size_t ox = 0; ox < c.ow; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * c.stride + kj) - static_cast<std::ptrdiff_t>(c.pad);
                        dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(c.w)) ? T(0) : src[ix];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, const ConvDims& c, std::size_t y0, std::size_t y1, T* in_grad) {
    const std::size_t n = (y1 - y0) * c.ow;
    for (std::size_t ch = 0; ch < c.s; ++ch) {
        for (std::size_t ki = 0; ki < c.k; ++ki) {
            for (std::size_t kj = 0; kj < c.k; ++kj) {
                const T* row = col + ((ch * c.k + ki) * c.k + kj) * n;
                for (std::size_t oy = y0; oy < y1; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * c.stride + ki) - static_cast<std::ptrdiff_t>(c.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(c.h)) continue;
                    const T* src = row + (oy - y0) * c.ow;
                    T* dst = in_grad + (ch * c.h + static_cast<std::size_t>(iy)) * c.w;
                    if (c.stride == 1) {
                        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kj) - static_cast<std::ptrdiff_t>(c.pad);
                        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -off);
                        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(c.ow),
                                                                           static_cast<std::ptrdiff_t>(c.w) - off);
                        for (std::ptrdiff_t ox = lo; ox < hi; ++ox) dst[ox + off] += src[ox];
                        continue;
                    }
                    for (std::size_t ox = 0; ox < c.ow; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * c.stride + kj) - static_cast<std::ptrdiff_t>(c.pad);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(c.w)) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

// Output rows per band, sized so one band of im2col columns stays in cache.
std::size_t band_rows(const ConvDims& c) {
    const std::size_t target = 1 << 17;  // elements
    const std::size_t per_row = std::max<std::size_t>(1, c.kdim() * c.ow);
    return std::clamp<std::size_t>(target / per_row, 1, c.oh);
}

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, const ConvDims& c) {
    Tensor<T> out(Shape{c.d, c.oh, c.ow});
    ConstMatMap<T> wm(weight.data().data(), c.d, c.kdim());
    MatMap<T> om(out.data().data(), c.d, c.cells());
    if (c.pointwise()) {
        ConstMatMap<T> cm(input.data().data(), c.kdim(), c.cells());
        om.noalias() = wm * cm;
    } else {
        const std::size_t band = band_rows(c);
        std::vector<T> col(c.kdim() * band * c.ow);
        for (std::size_t y0 = 0; y0 < c.oh; y0 += band) {
            const std::size_t y1 = std::min(c.oh, y0 + band), n = (y1 - y0) * c.ow;
            im2col(input.data().data(), c, y0, y1, col.data());
            ConstMatMap<T> cm(col.data(), c.kdim(), n);
            om.middleCols(y0 * c.ow, n).noalias() = wm * cm;
        }
    }
    for (std::size_t o = 0; o < c.d; ++o) om.row(o).array() += bias[o];
    return out;
}

// ---- pooling ----------------------------------------------------------------

template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& x, std::vector<std::uint32_t>* argmax) {
    require_rank(x.shape(), 3, "maxpool2");
    const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    if (h % 2 || w % 2) throw DimensionError("maxpool2: odd spatial extent " + shape_string(x.shape()));
    const std::size_t oh = h / 2, ow = w / 2;
    Tensor<T> out(Shape{c, oh, ow});
    if (argmax) argmax->resize(out.size());
    const T* in = x.data().data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xo = 0; xo < ow; ++xo) {
                const std::size_t base = (ch * h + 2 * y) * w + 2 * xo;
                const std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
                std::size_t best = cand[0];
                for (int t = 1; t < 4; ++t)
                    if (in[cand[t]] > in[best]) best = cand[t];
                const std::size_t o = (ch * oh + y) * ow + xo;
                out[o] = in[best];
                if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(best);
            }
        }
    }
    return out;
}

// ---- bilinear ---------------------------------------------------------------

struct Taps {
    std::vector<std::size_t> lo, hi;
    std::vector<double> frac;
};

Taps bilinear_taps(std::size_t in, std::size_t out) {
    Taps t;
    t.lo.resize(out);
    t.hi.resize(out);
    t.frac.resize(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t j = 0; j < out; ++j) {
        double u = (static_cast<double>(j) + 0.5) * ratio - 0.5;
        u = std::clamp(u, 0.0, static_cast<double>(in - 1));
        const auto lo = static_cast<std::size_t>(std::floor(u));
        t.lo[j] = lo;
        t.hi[j] = std::min(lo + 1, in - 1);
        t.frac[j] = u - static_cast<double>(lo);
    }
    return t;
}

template <typename T>
Tensor<T> resize_forward(const Tensor<T>& x, const Taps& ty, const Taps& tx) {
    const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    const std::size_t oh = ty.lo.size(), ow = tx.lo.size();
    Tensor<T> out(Shape{c, oh, ow});
    const T* in = x.data().data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        const T* plane = in + ch * h * w;
        for (std::size_t y = 0; y < oh; ++y) {
            const T fy = static_cast<T>(ty.frac[y]);
            const T* r0 = plane + ty.lo[y] * w;
            const T* r1 = plane + ty.hi[y] * w;
            for (std::size_t xo = 0; xo < ow; ++xo) {
                const T fx = static_cast<T>(tx.frac[xo]);
                const T top = (T(1) - fx) * r0[tx.lo[xo]] + fx * r0[tx.hi[xo]];
                const T bot = (T(1) - fx) * r1[tx.lo[xo]] + fx * r1[tx.hi[xo]];
                out[(ch * oh + y) * ow + xo] = (T(1) - fy) * top + fy * bot;
            }
        }
    }
    return out;
}

// ---- kron ----------------------------------------------------------------------

struct KronDims {
    std::size_t p, q, a, b, tail;
};

KronDims kron_dims(const Shape& a, const Shape& f) {
    require_rank(a, 2, "kron matrix");
    if (f.size() != 2 && f.size() != 4) throw DimensionError("kron: filter block must be rank 2 or 4, got " + shape_string(f));
    std::size_t tail = 1;
    for (std::size_t i = 2; i < f.size(); ++i) tail *= f[i];
    return {a[0], a[1], f[0], f[1], tail};
}

Shape kron_shape(const KronDims& k, const Shape& f) {
    Shape s = f;
    s[0] = k.p * k.a;
    s[1] = k.q * k.b;
    return s;
}

template <typename T>
Tensor<T> kron_forward(const Tensor<T>& a, const Tensor<T>& f) {
    const KronDims k = kron_dims(a.shape(), f.shape());
    Tensor<T> out(kron_shape(k, f.shape()));
    const std::size_t out_cols = k.q * k.b;
    for (std::size_t i = 0; i < k.p; ++i)
        for (std::size_t j = 0; j < k.q; ++j) {
            const T aij = a[i * k.q + j];
            for (std::size_t r = 0; r < k.a; ++r)
                for (std::size_t c = 0; c < k.b; ++c) {
                    const T* src = f.data().data() + (r * k.b + c) * k.tail;
                    T* dst = out.data().data() + ((i * k.a + r) * out_cols + (j * k.b + c)) * k.tail;
                    for (std::size_t t = 0; t < k.tail; ++t) dst[t] = aij * src[t];
                }
        }
    return out;
}

template <typename T>
Tensor<T> swap_forward(const Tensor<T>& x) {
    if (x.rank() < 2) throw DimensionError("swap_leading_axes: rank must be >= 2");
    const std::size_t a = x.extent(0), b = x.extent(1);
    const std::size_t tail = x.size() / (a * b);
    Shape s = x.shape();
    std::swap(s[0], s[1]);
    Tensor<T> out(s);
    for (std::size_t i = 0; i < a; ++i)
        for (std::size_t j = 0; j < b; ++j)
            std::copy_n(x.data().data() + (i * b + j) * tail, tail, out.data().data() + (j * a + i) * tail);
    return out;
}

template <typename T>
void swap_backward(std::span<const T> g, const Shape& in_shape, std::span<T> dst) {
    const std::size_t a = in_shape[0], b = in_shape[1];
    const std::size_t tail = dst.size() / (a * b);
    for (std::size_t i = 0; i < a; ++i)
        for (std::size_t j = 0; j < b; ++j) {
            const T* src = g.data() + (j * a + i) * tail;
            T* d = dst.data() + (i * b + j) * tail;
            for (std::size_t t = 0; t < tail; ++t) d[t] += src[t];
        }
}

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    require_rank(w.shape(), 2, "linear weight");
    require_rank(b.shape(), 1, "linear bias");
    const std::size_t out = w.extent(0), m = w.extent(1);
    if (b.extent(0) != out) throw DimensionError("linear: bias length does not match weight rows");
    std::size_t batch = 1;
    Shape out_shape;
    if (x.rank() == 1) {
        out_shape = {out};
    } else if (x.rank() == 2) {
        batch = x.extent(0);
        out_shape = {batch, out};
    } else {
        throw DimensionError("linear: input must be rank 1 or 2, got " + shape_string(x.shape()));
    }
    if (x.shape().back() != m) {
        throw DimensionError("linear: input extent " + std::to_string(x.shape().back()) + " vs weight columns " +
                             std::to_string(m));
    }
    Tensor<T> y(out_shape);
    ConstMatMap<T> xm(x.data().data(), batch, m);
    ConstMatMap<T> wm(w.data().data(), out, m);
    MatMap<T> ym(y.data().data(), batch, out);
    ym.noalias() = xm * wm.transpose();
    for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t o = 0; o < out; ++o) ym(r, o) += b[o];
    return y;
}

template <typename T>
Tensor<T> softmax_forward(const Tensor<T>& x) {
    require_rank(x.shape(), 3, "spatial_softmax");
    const std::size_t c = x.extent(0), n = x.extent(1) * x.extent(2);
    Tensor<T> y(x.shape());
    for (std::size_t ch = 0; ch < c; ++ch) {
        const T* in = x.data().data() + ch * n;
        T* out = y.data().data() + ch * n;
        T mx = in[0];
        for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
        T total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = std::exp(in[i] - mx);
            total += out[i];
        }
        for (std::size_t i = 0; i < n; ++i) out[i] /= total;
    }
    return y;
}

template <typename T>
std::span<T> grad_if(Tape<T>& tape, Var v) {
    return tape.needs_grad(v) ? tape.grad_buffer(v) : std::span<T>{};
}

}  // namespace

// ---- conv2d ---------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, ConvGeometry g) {
    const ConvDims c = conv_dims(input.shape(), weight.shape(), bias.shape(), g);
    return conv_forward(input, weight, bias, c);
}

template <typename T>
Var conv2d(Tape<T>& tape, Var input, Var weight, Var bias, ConvGeometry g) {
    const ConvDims c = conv_dims(tape.value(input).shape(), tape.value(weight).shape(), tape.value(bias).shape(), g);
    Tensor<T> out = conv_forward(tape.value(input), tape.value(weight), tape.value(bias), c);
    return tape.record(std::move(out), {input, weight, bias}, [input, weight, bias, c](Tape<T>& t, std::span<const T> go) {
        ConstMatMap<T> gm(go.data(), c.d, c.cells());
        const bool need_w = t.needs_grad(weight), need_in = t.needs_grad(input);
        if (t.needs_grad(bias)) {
            auto db = t.grad_buffer(bias);
            for (std::size_t o = 0; o < c.d; ++o) {
                T acc = 0;
                for (std::size_t i = 0; i < c.cells(); ++i) acc += go[o * c.cells() + i];
                db[o] += acc;
            }
        }
        if (!need_w && !need_in) return;
        const T* x = t.value(input).data().data();
        ConstMatMap<T> wm(t.value(weight).data().data(), c.d, c.kdim());
        if (c.pointwise()) {
            ConstMatMap<T> cm(x, c.kdim(), c.cells());
            if (need_w) {
                MatMap<T> dw(t.grad_buffer(weight).data(), c.d, c.kdim());
                dw.noalias() += gm * cm.transpose();
            }
            if (need_in) {
                MatMap<T> dm(t.grad_buffer(input).data(), c.kdim(), c.cells());
                dm.noalias() += wm.transpose() * gm;
            }
            return;
        }
        const std::size_t band = band_rows(c);
        std::vector<T> col(c.kdim() * band * c.ow);
        T* dw_data = need_w ? t.grad_buffer(weight).data() : nullptr;
        T* din = need_in ? t.grad_buffer(input).data() : nullptr;
        for (std::size_t y0 = 0; y0 < c.oh; y0 += band) {
            const std::size_t y1 = std::min(c.oh, y0 + band), n = (y1 - y0) * c.ow;
            auto gband = gm.middleCols(y0 * c.ow, n);
            MatMap<T> cm(col.data(), c.kdim(), n);
            if (need_w) {
                im2col(x, c, y0, y1, col.data());
                MatMap<T> dw(dw_data, c.d, c.kdim());
                dw.noalias() += gband * cm.transpose();
            }
            if (need_in) {
                cm.noalias() = wm.transpose() * gband;
                col2im_add(col.data(), c, y0, y1, din);
            }
        }
    });
}

// ---- elementwise ----------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    return y;
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
    return tape.record(relu(tape.value(x)), {x}, [x](Tape<T>& t, std::span<const T> go) {
        const auto& xv = t.value(x);
        auto dx = t.grad_buffer(x);
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (xv[i] > T(0)) dx[i] += go[i];
    });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
    return y;
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var x) {
    Tensor<T> y = sigmoid(tape.value(x));
    auto out = std::make_shared<std::vector<T>>(y.values());
    return tape.record(std::move(y), {x}, [x, out](Tape<T>& t, std::span<const T> go) {
        auto dx = t.grad_buffer(x);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += go[i] * (*out)[i] * (T(1) - (*out)[i]);
    });
}

template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x) {
    return maxpool_forward(x, static_cast<std::vector<std::uint32_t>*>(nullptr));
}

template <typename T>
Var maxpool2(Tape<T>& tape, Var x) {
    std::vector<std::uint32_t> argmax;
    Tensor<T> out = maxpool_forward(tape.value(x), &argmax);
    return tape.record(std::move(out), {x}, [x, argmax = std::move(argmax)](Tape<T>& t, std::span<const T> go) {
        auto dx = t.grad_buffer(x);
        for (std::size_t o = 0; o < go.size(); ++o) dx[argmax[o]] += go[o];
    });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    return linear_forward(x, weight, bias);
}

template <typename T>
Var linear(Tape<T>& tape, Var x, Var weight, Var bias) {
    Tensor<T> y = linear_forward(tape.value(x), tape.value(weight), tape.value(bias));
    return tape.record(std::move(y), {x, weight, bias}, [x, weight, bias](Tape<T>& t, std::span<const T> go) {
        const auto& xv = t.value(x);
        const auto& wv = t.value(weight);
        const std::size_t out = wv.extent(0), m = wv.extent(1);
        const std::size_t batch = xv.rank() == 2 ? xv.extent(0) : 1;
        ConstMatMap<T> gm(go.data(), batch, out);
        if (t.needs_grad(x)) {
            MatMap<T> dx(t.grad_buffer(x).data(), batch, m);
            dx.noalias() += gm * ConstMatMap<T>(wv.data().data(), out, m);
        }
        if (t.needs_grad(weight)) {
            MatMap<T> dw(t.grad_buffer(weight).data(), out, m);
            dw.noalias() += gm.transpose() * ConstMatMap<T>(xv.data().data(), batch, m);
        }
        if (t.needs_grad(bias)) {
            auto db = t.grad_buffer(bias);
            for (std::size_t r = 0; r < batch; ++r)
                for (std::size_t o = 0; o < out; ++o) db[o] += gm(r, o);
        }
    });
}

template <typename T>
Tensor<T> spatial_softmax(const Tensor<T>& x) {
    return softmax_forward(x);
}

template <typename T>
Var spatial_softmax(Tape<T>& tape, Var x) {
    Tensor<T> y = softmax_forward(tape.value(x));
    const std::size_t c = y.extent(0), n = y.extent(1) * y.extent(2);
    // Keep a copy of the output for the rule; the tape node owns the other.
    auto probs = std::make_shared<std::vector<T>>(y.values());
    return tape.record(std::move(y), {x}, [x, c, n, probs](Tape<T>& t, std::span<const T> go) {
        auto dx = t.grad_buffer(x);
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T* p = probs->data() + ch * n;
            const T* g = go.data() + ch * n;
            T dot = 0;
            for (std::size_t i = 0; i < n; ++i) dot += p[i] * g[i];
            T* d = dx.data() + ch * n;
            for (std::size_t i = 0; i < n; ++i) d[i] += p[i] * (g[i] - dot);
        }
    });
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
    require_rank(x.shape(), 3, "bilinear_resize");
    if (out_h < 1 || out_w < 1) throw ContractError("bilinear_resize: output extents must be >= 1");
    return resize_forward(x, bilinear_taps(x.extent(1), out_h), bilinear_taps(x.extent(2), out_w));
}

template <typename T>
Var bilinear_resize(Tape<T>& tape, Var x, std::size_t out_h, std::size_t out_w) {
    const auto& xv = tape.value(x);
    require_rank(xv.shape(), 3, "bilinear_resize");
    if (out_h < 1 || out_w < 1) throw ContractError("bilinear_resize: output extents must be >= 1");
    auto ty = std::make_shared<Taps>(bilinear_taps(xv.extent(1), out_h));
    auto tx = std::make_shared<Taps>(bilinear_taps(xv.extent(2), out_w));
    Tensor<T> out = resize_forward(xv, *ty, *tx);
    const std::size_t c = xv.extent(0), h = xv.extent(1), w = xv.extent(2);
    return tape.record(std::move(out), {x}, [x, ty, tx, c, h, w](Tape<T>& t, std::span<const T> go) {
        auto dx = t.grad_buffer(x);
        const std::size_t oh = ty->lo.size(), ow = tx->lo.size();
        for (std::size_t ch = 0; ch < c; ++ch) {
            T* plane = dx.data() + ch * h * w;
            for (std::size_t y = 0; y < oh; ++y) {
                const T fy = static_cast<T>(ty->frac[y]);
                T* r0 = plane + ty->lo[y] * w;
                T* r1 = plane + ty->hi[y] * w;
                for (std::size_t xo = 0; xo < ow; ++xo) {
                    const T fx = static_cast<T>(tx->frac[xo]);
                    const T g = go[(ch * oh + y) * ow + xo];
                    r0[tx->lo[xo]] += (T(1) - fy) * (T(1) - fx) * g;
                    r0[tx->hi[xo]] += (T(1) - fy) * fx * g;
                    r1[tx->lo[xo]] += fy * (T(1) - fx) * g;
                    r1[tx->hi[xo]] += fy * fx * g;
                }
            }
        }
    });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    require_rank(x.shape(), 3, "global_avg_pool");
    const std::size_t c = x.extent(0), n = x.extent(1) * x.extent(2);
    Tensor<T> y(Shape{c});
    for (std::size_t ch = 0; ch < c; ++ch) {
        T acc = 0;
        for (std::size_t i = 0; i < n; ++i) acc += x[ch * n + i];
        y[ch] = acc / static_cast<T>(n);
    }
    return y;
}

template <typename T>
Var global_avg_pool(Tape<T>& tape, Var x) {
    Tensor<T> y = global_avg_pool(tape.value(x));
    const std::size_t n = tape.value(x).extent(1) * tape.value(x).extent(2);
    return tape.record(std::move(y), {x}, [x, n](Tape<T>& t, std::span<const T> go) {
        auto dx = t.grad_buffer(x);
        const T inv = T(1) / static_cast<T>(n);
        for (std::size_t ch = 0; ch < go.size(); ++ch)
            for (std::size_t i = 0; i < n; ++i) dx[ch * n + i] += go[ch] * inv;
    });
}

template <typename T>
Tensor<T> kron(const Tensor<T>& a, const Tensor<T>& f) {
    return kron_forward(a, f);
}

template <typename T>
Var kron(Tape<T>& tape, Var a, Var f) {
    Tensor<T> out = kron_forward(tape.value(a), tape.value(f));
    return tape.record(std::move(out), {a, f}, [a, f](Tape<T>& t, std::span<const T> go) {
        const auto& av = t.value(a);
        const auto& fv = t.value(f);
        const KronDims k = kron_dims(av.shape(), fv.shape());
        const std::size_t out_cols = k.q * k.b;
        std::span<T> da = grad_if(t, a);
        std::span<T> df = grad_if(t, f);
        for (std::size_t i = 0; i < k.p; ++i)
            for (std::size_t j = 0; j < k.q; ++j) {
                const T aij = av[i * k.q + j];
                T acc = 0;
                for (std::size_t r = 0; r < k.a; ++r)
                    for (std::size_t c = 0; c < k.b; ++c) {
                        const std::size_t fo = (r * k.b + c) * k.tail;
                        const T* g = go.data() + ((i * k.a + r) * out_cols + (j * k.b + c)) * k.tail;
                        for (std::size_t s = 0; s < k.tail; ++s) {
                            acc += g[s] * fv[fo + s];
                            if (!df.empty()) df[fo + s] += aij * g[s];
                        }
                    }
                if (!da.empty()) da[i * k.q + j] += acc;
            }
    });
}

template <typename T>
Tensor<T> swap_leading_axes(const Tensor<T>& x) {
    return swap_forward(x);
}

template <typename T>
Var swap_leading_axes(Tape<T>& tape, Var x) {
    Tensor<T> out = swap_forward(tape.value(x));
    Shape in_shape = tape.value(x).shape();
    return tape.record(std::move(out), {x}, [x, in_shape](Tape<T>& t, std::span<const T> go) {
        swap_backward<T>(go, in_shape, t.grad_buffer(x));
    });
}

// ---- structural -----------------------------------------------------------------

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
    const auto& av = tape.value(a);
    const auto& bv = tape.value(b);
    require_same(av.shape(), bv.shape(), "add");
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, std::span<const T> go) {
        for (Var v : {a, b}) {
            if (!t.needs_grad(v)) continue;
            auto d = t.grad_buffer(v);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += go[i];
        }
    });
}

template <typename T>
Var add_n(Tape<T>& tape, std::span<const Var> terms) {
    if (terms.empty()) throw ContractError("add_n: no terms");
    const Shape& shape = tape.value(terms[0]).shape();
    Tensor<T> out(shape);
    for (Var v : terms) {
        const auto& tv = tape.value(v);
        require_same(shape, tv.shape(), "add_n");
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += tv[i];
    }
    std::vector<Var> inputs(terms.begin(), terms.end());
    return tape.record(std::move(out), inputs, [inputs](Tape<T>& t, std::span<const T> go) {
        for (Var v : inputs) {
            if (!t.needs_grad(v)) continue;
            auto d = t.grad_buffer(v);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += go[i];
        }
    });
}

template <typename T>
Var scale(Tape<T>& tape, Var x, T factor) {
    const auto& xv = tape.value(x);
    Tensor<T> out(xv.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
    return tape.record(std::move(out), {x}, [x, factor](Tape<T>& t, std::span<const T> go) {
        auto d = t.grad_buffer(x);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += go[i] * factor;
    });
}

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape) {
    Tensor<T> out = tape.value(x).reshaped(std::move(shape));
    return tape.record(std::move(out), {x}, [x](Tape<T>& t, std::span<const T> go) {
        auto d = t.grad_buffer(x);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += go[i];
    });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
    T acc = 0;
    for (T v : tape.value(x).data()) acc += v;
    return tape.record(Tensor<T>::scalar(acc), {x}, [x](Tape<T>& t, std::span<const T> go) {
        auto d = t.grad_buffer(x);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += go[0];
    });
}

template <typename T>
Var mean(Tape<T>& tape, Var x) {
    const std::size_t n = tape.value(x).size();
    return scale(tape, sum(tape, x), T(1) / static_cast<T>(n));
}

// ---- losses ---------------------------------------------------------------------

template <typename T>
Var mse_loss(Tape<T>& tape, Var pred, const Tensor<T>& target) {
    const auto& pv = tape.value(pred);
    require_same(pv.shape(), target.shape(), "mse_loss");
    const std::size_t n = pv.size();
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T e = pv[i] - target[i];
        acc += e * e;
    }
    return tape.record(Tensor<T>::scalar(acc / static_cast<T>(n)), {pred}, [pred, target, n](Tape<T>& t, std::span<const T> go) {
        const auto& p = t.value(pred);
        auto d = t.grad_buffer(pred);
        const T k = T(2) * go[0] / static_cast<T>(n);
        for (std::size_t i = 0; i < n; ++i) d[i] += k * (p[i] - target[i]);
    });
}

template <typename T>
Var jsd_loss(Tape<T>& tape, Var pred, const Tensor<T>& target) {
    const auto& pv = tape.value(pred);
    require_same(pv.shape(), target.shape(), "jsd_loss");
    const std::size_t c = pv.extent(0), n = pv.size() / c;
    auto per_channel = std::make_shared<std::vector<T>>(c);
    T total = 0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        T js = 0;
        for (std::size_t i = ch * n; i < (ch + 1) * n; ++i) {
            const T p = pv[i], q = target[i];
            const T m = (p + q) / T(2);
            if (p > T(0)) js += p * std::log(p / m);
            if (q > T(0)) js += q * std::log(q / m);
        }
        const T d = std::sqrt(std::max(js / T(2), T(0)));
        (*per_channel)[ch] = d;
        total += d;
    }
    return tape.record(Tensor<T>::scalar(total / static_cast<T>(c)), {pred},
                       [pred, target, c, n, per_channel](Tape<T>& t, std::span<const T> go) {
                           const auto& p = t.value(pred);
                           auto d = t.grad_buffer(pred);
                           for (std::size_t ch = 0; ch < c; ++ch) {
                               const T dist = (*per_channel)[ch];
                               if (!(dist > T(0))) continue;
                               // d sqrt(JS)/dp_i = log(p_i / m_i) / (4 sqrt(JS))
                               const T k = go[0] / (static_cast<T>(c) * T(4) * dist);
                               for (std::size_t i = ch * n; i < (ch + 1) * n; ++i) {
                                   if (!(p[i] > T(0))) continue;
                                   const T m = (p[i] + target[i]) / T(2);
                                   d[i] += k * std::log(p[i] / m);
                               }
                           }
                       });
}

template <typename T>
Var euclidean_loss(Tape<T>& tape, Var pred, const Tensor<T>& target) {
    const auto& pv = tape.value(pred);
    require_same(pv.shape(), target.shape(), "euclidean_loss");
    T acc = 0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const T e = pv[i] - target[i];
        acc += e * e;
    }
    const T dist = std::sqrt(acc);
    return tape.record(Tensor<T>::scalar(dist), {pred}, [pred, target, dist](Tape<T>& t, std::span<const T> go) {
        if (!(dist > T(0))) return;
        const auto& p = t.value(pred);
        auto d = t.grad_buffer(pred);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += go[0] * (p[i] - target[i]) / dist;
    });
}

#define KRONMARK_INSTANTIATE_OPS(T)                                                                 \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, ConvGeometry); \
    template Var conv2d(Tape<T>&, Var, Var, Var, ConvGeometry);                                     \
    template Tensor<T> relu(const Tensor<T>&);                                                      \
    template Var relu(Tape<T>&, Var);                                                               \
    template Tensor<T> sigmoid(const Tensor<T>&);                                                   \
    template Var sigmoid(Tape<T>&, Var);                                                            \
    template Tensor<T> maxpool2(const Tensor<T>&);                                                  \
    template Var maxpool2(Tape<T>&, Var);                                                           \
    template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                \
    template Var linear(Tape<T>&, Var, Var, Var);                                                   \
    template Tensor<T> spatial_softmax(const Tensor<T>&);                                           \
    template Var spatial_softmax(Tape<T>&, Var);                                                    \
    template Tensor<T> bilinear_resize(const Tensor<T>&, std::size_t, std::size_t);                 \
    template Var bilinear_resize(Tape<T>&, Var, std::size_t, std::size_t);                          \
    template Tensor<T> global_avg_pool(const Tensor<T>&);                                           \
    template Var global_avg_pool(Tape<T>&, Var);                                                    \
    template Tensor<T> kron(const Tensor<T>&, const Tensor<T>&);                                    \
    template Var kron(Tape<T>&, Var, Var);                                                          \
    template Tensor<T> swap_leading_axes(const Tensor<T>&);                                         \
    template Var swap_leading_axes(Tape<T>&, Var);                                                  \
    template Var add(Tape<T>&, Var, Var);                                                           \
    template Var add_n(Tape<T>&, std::span<const Var>);                                             \
    template Var scale(Tape<T>&, Var, T);                                                           \
    template Var reshape(Tape<T>&, Var, Shape);                                                     \
    template Var sum(Tape<T>&, Var);                                                                \
    template Var mean(Tape<T>&, Var);                                                               \
    template Var mse_loss(Tape<T>&, Var, const Tensor<T>&);                                         \
    template Var jsd_loss(Tape<T>&, Var, const Tensor<T>&);                                         \
    template Var euclidean_loss(Tape<T>&, Var, const Tensor<T>&);

KRONMARK_INSTANTIATE_OPS(float)
KRONMARK_INSTANTIATE_OPS(double)

}  // namespace kronmark::ops
