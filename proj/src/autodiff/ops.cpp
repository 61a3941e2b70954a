#include "ggsa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace ggsa::ad {

namespace {

void require(bool cond, ErrorKind kind, const std::string& msg) {
    if (!cond) fail(kind, msg);
}

std::string dim_msg(const char* op, const std::vector<TensorPtr>& inputs) {
    std::string m = op;
    m += " got shapes";
    for (const auto& t : inputs) m += " " + shape_str(t->shape);
    return m;
}

// Broadcast mode resolved from the operand shapes of Add.
enum class AddMode { Equal, ChannelBias, RowBias };

AddMode add_mode(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape == b->shape) return AddMode::Equal;
    if (a->shape.size() == 4 && b->shape.size() == 1 && b->shape[0] == a->shape[1])
        return AddMode::ChannelBias;
    if (a->shape.size() == 2 && b->shape.size() == 1 && b->shape[0] == a->shape[1])
        return AddMode::RowBias;
    fail(ErrorKind::Dimension,
         "add requires equal shapes or a rank-1 bias, got " + shape_str(a->shape) +
             " and " + shape_str(b->shape));
}

int conv_out_extent(int n, int p, int k, int s) {
    return (n + 2 * p - k) / s + 1;
}

// Floor division; plain '/' truncates toward zero and overshoots the valid
// index range for negative numerators.
int floor_div(int a, int b) {
    return a >= 0 ? a / b : -((-a + b - 1) / b);
}

// ---------------------------------------------------------------------------
// conv2d kernels: x (B,Ci,H,W), w (Co,Ci,kh,kw), out (B,Co,OH,OW)
// ---------------------------------------------------------------------------

void conv2d_forward(const double* __restrict__ x, const double* __restrict__ w, double* __restrict__ out, int B, int Ci,
                    int H, int W, int Co, int kh, int kw, int s, int p, int OH,
                    int OW) {
    for (int b = 0; b < B; ++b) {
        for (int co = 0; co < Co; ++co) {
            double* oplane = out + (static_cast<std::size_t>(b) * Co + co) * OH * OW;
            for (int ci = 0; ci < Ci; ++ci) {
                const double* xplane = x + (static_cast<std::size_t>(b) * Ci + ci) * H * W;
                const double* wp = w + (static_cast<std::size_t>(co) * Ci + ci) * kh * kw;
                for (int ki = 0; ki < kh; ++ki) {
                    for (int kj = 0; kj < kw; ++kj) {
                        const double wv = wp[ki * kw + kj];
                        const int lo = (p - kj <= 0) ? 0 : (p - kj + s - 1) / s;
                        int hi = floor_div(W - 1 + p - kj, s);
                        if (hi > OW - 1) hi = OW - 1;
                        for (int oh = 0; oh < OH; ++oh) {
                            const int ih = oh * s - p + ki;
                            if (ih < 0 || ih >= H) continue;
                            const double* xrow = xplane + static_cast<std::size_t>(ih) * W;
                            double* orow = oplane + static_cast<std::size_t>(oh) * OW;
                            if (s == 1) {
                                const double* xs = xrow + (kj - p);
                                for (int ow = lo; ow <= hi; ++ow) orow[ow] += wv * xs[ow];
                            } else {
                                for (int ow = lo; ow <= hi; ++ow)
                                    orow[ow] += wv * xrow[ow * s - p + kj];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_input(const double* __restrict__ g, const double* __restrict__ w, double* __restrict__ dx, int B,
                           int Ci, int H, int W, int Co, int kh, int kw, int s,
                           int p, int OH, int OW) {
    for (int b = 0; b < B; ++b) {
        for (int co = 0; co < Co; ++co) {
            const double* gplane = g + (static_cast<std::size_t>(b) * Co + co) * OH * OW;
            for (int ci = 0; ci < Ci; ++ci) {
                double* dxplane = dx + (static_cast<std::size_t>(b) * Ci + ci) * H * W;
                const double* wp = w + (static_cast<std::size_t>(co) * Ci + ci) * kh * kw;
                for (int ki = 0; ki < kh; ++ki) {
                    for (int kj = 0; kj < kw; ++kj) {
                        const double wv = wp[ki * kw + kj];
                        const int lo = (p - kj <= 0) ? 0 : (p - kj + s - 1) / s;
                        int hi = floor_div(W - 1 + p - kj, s);
                        if (hi > OW - 1) hi = OW - 1;
                        for (int oh = 0; oh < OH; ++oh) {
                            const int ih = oh * s - p + ki;
                            if (ih < 0 || ih >= H) continue;
                            double* dxrow = dxplane + static_cast<std::size_t>(ih) * W;
                            const double* grow = gplane + static_cast<std::size_t>(oh) * OW;
                            if (s == 1) {
                                double* dxs = dxrow + (kj - p);
                                for (int ow = lo; ow <= hi; ++ow) dxs[ow] += wv * grow[ow];
                            } else {
                                for (int ow = lo; ow <= hi; ++ow)
                                    dxrow[ow * s - p + kj] += wv * grow[ow];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_weight(const double* __restrict__ g, const double* __restrict__ x, double* __restrict__ dw, int B,
                            int Ci, int H, int W, int Co, int kh, int kw, int s,
                            int p, int OH, int OW) {
    for (int b = 0; b < B; ++b) {
        for (int co = 0; co < Co; ++co) {
            const double* gplane = g + (static_cast<std::size_t>(b) * Co + co) * OH * OW;
            for (int ci = 0; ci < Ci; ++ci) {
                const double* xplane = x + (static_cast<std::size_t>(b) * Ci + ci) * H * W;
                double* dwp = dw + (static_cast<std::size_t>(co) * Ci + ci) * kh * kw;
                for (int ki = 0; ki < kh; ++ki) {
                    for (int kj = 0; kj < kw; ++kj) {
                        const int lo = (p - kj <= 0) ? 0 : (p - kj + s - 1) / s;
                        int hi = floor_div(W - 1 + p - kj, s);
                        if (hi > OW - 1) hi = OW - 1;
                        // four independent accumulators keep the dot product
                        // out of a serial FP dependency chain
                        double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
                        for (int oh = 0; oh < OH; ++oh) {
                            const int ih = oh * s - p + ki;
                            if (ih < 0 || ih >= H) continue;
                            const double* xrow = xplane + static_cast<std::size_t>(ih) * W;
                            const double* grow = gplane + static_cast<std::size_t>(oh) * OW;
                            if (s == 1) {
                                const double* xs = xrow + (kj - p);
                                int ow = lo;
                                for (; ow + 3 <= hi; ow += 4) {
                                    a0 += xs[ow] * grow[ow];
                                    a1 += xs[ow + 1] * grow[ow + 1];
                                    a2 += xs[ow + 2] * grow[ow + 2];
                                    a3 += xs[ow + 3] * grow[ow + 3];
                                }
                                for (; ow <= hi; ++ow) a0 += xs[ow] * grow[ow];
                            } else {
                                for (int ow = lo; ow <= hi; ++ow)
                                    a0 += xrow[ow * s - p + kj] * grow[ow];
                            }
                        }
                        dwp[ki * kw + kj] += (a0 + a1) + (a2 + a3);
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// conv_transpose2d kernels: x (B,Ci,H,W), w (Ci,Co,kh,kw)
// out extent: (H-1)*s - 2p + kh
// ---------------------------------------------------------------------------

void convt2d_forward(const double* __restrict__ x, const double* __restrict__ w, double* __restrict__ out, int B, int Ci,
                     int H, int W, int Co, int kh, int kw, int s, int p, int OH,
                     int OW) {
    for (int b = 0; b < B; ++b) {
        for (int ci = 0; ci < Ci; ++ci) {
            const double* xplane = x + (static_cast<std::size_t>(b) * Ci + ci) * H * W;
            for (int co = 0; co < Co; ++co) {
                double* oplane = out + (static_cast<std::size_t>(b) * Co + co) * OH * OW;
                const double* wp = w + (static_cast<std::size_t>(ci) * Co + co) * kh * kw;
                for (int ki = 0; ki < kh; ++ki) {
                    for (int kj = 0; kj < kw; ++kj) {
                        const double wv = wp[ki * kw + kj];
                        // ow = iw*s - p + kj must lie in [0, OW)
                        const int lo = (p - kj <= 0) ? 0 : (p - kj + s - 1) / s;
                        int hi = floor_div(OW - 1 + p - kj, s);
                        if (hi > W - 1) hi = W - 1;
                        for (int ih = 0; ih < H; ++ih) {
                            const int oh = ih * s - p + ki;
                            if (oh < 0 || oh >= OH) continue;
                            const double* xrow = xplane + static_cast<std::size_t>(ih) * W;
                            double* orow = oplane + static_cast<std::size_t>(oh) * OW;
                            if (s == 1) {
                                double* os = orow + (kj - p);
                                for (int iw = lo; iw <= hi; ++iw) os[iw] += wv * xrow[iw];
                            } else {
                                for (int iw = lo; iw <= hi; ++iw)
                                    orow[iw * s - p + kj] += wv * xrow[iw];
                            }
                        }
                    }
                }
            }
        }
    }
}

void convt2d_backward_input(const double* __restrict__ g, const double* __restrict__ w, double* __restrict__ dx, int B,
                            int Ci, int H, int W, int Co, int kh, int kw, int s,
                            int p, int OH, int OW) {
    for (int b = 0; b < B; ++b) {
        for (int ci = 0; ci < Ci; ++ci) {
            double* dxplane = dx + (static_cast<std::size_t>(b) * Ci + ci) * H * W;
            for (int co = 0; co < Co; ++co) {
                const double* gplane = g + (static_cast<std::size_t>(b) * Co + co) * OH * OW;
                const double* wp = w + (static_cast<std::size_t>(ci) * Co + co) * kh * kw;
                for (int ki = 0; ki < kh; ++ki) {
                    for (int kj = 0; kj < kw; ++kj) {
                        const double wv = wp[ki * kw + kj];
                        const int lo = (p - kj <= 0) ? 0 : (p - kj + s - 1) / s;
                        int hi = floor_div(OW - 1 + p - kj, s);
                        if (hi > W - 1) hi = W - 1;
                        for (int ih = 0; ih < H; ++ih) {
                            const int oh = ih * s - p + ki;
                            if (oh < 0 || oh >= OH) continue;
                            double* dxrow = dxplane + static_cast<std::size_t>(ih) * W;
                            const double* grow = gplane + static_cast<std::size_t>(oh) * OW;
                            if (s == 1) {
                                const double* gs = grow + (kj - p);
                                for (int iw = lo; iw <= hi; ++iw) dxrow[iw] += wv * gs[iw];
                            } else {
                                for (int iw = lo; iw <= hi; ++iw)
                                    dxrow[iw] += wv * grow[iw * s - p + kj];
                            }
                        }
                    }
                }
            }
        }
    }
}

void convt2d_backward_weight(const double* __restrict__ g, const double* __restrict__ x, double* __restrict__ dw, int B,
                             int Ci, int H, int W, int Co, int kh, int kw, int s,
                             int p, int OH, int OW) {
    for (int b = 0; b < B; ++b) {
        for (int ci = 0; ci < Ci; ++ci) {
            const double* xplane = x + (static_cast<std::size_t>(b) * Ci + ci) * H * W;
            for (int co = 0; co < Co; ++co) {
                const double* gplane = g + (static_cast<std::size_t>(b) * Co + co) * OH * OW;
                double* dwp = dw + (static_cast<std::size_t>(ci) * Co + co) * kh * kw;
                for (int ki = 0; ki < kh; ++ki) {
                    for (int kj = 0; kj < kw; ++kj) {
                        const int lo = (p - kj <= 0) ? 0 : (p - kj + s - 1) / s;
                        int hi = floor_div(OW - 1 + p - kj, s);
                        if (hi > W - 1) hi = W - 1;
                        double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
                        for (int ih = 0; ih < H; ++ih) {
                            const int oh = ih * s - p + ki;
                            if (oh < 0 || oh >= OH) continue;
                            const double* xrow = xplane + static_cast<std::size_t>(ih) * W;
                            const double* grow = gplane + static_cast<std::size_t>(oh) * OW;
                            if (s == 1) {
                                const double* gs = grow + (kj - p);
                                int iw = lo;
                                for (; iw + 3 <= hi; iw += 4) {
                                    a0 += xrow[iw] * gs[iw];
                                    a1 += xrow[iw + 1] * gs[iw + 1];
                                    a2 += xrow[iw + 2] * gs[iw + 2];
                                    a3 += xrow[iw + 3] * gs[iw + 3];
                                }
                                for (; iw <= hi; ++iw) a0 += xrow[iw] * gs[iw];
                            } else {
                                for (int iw = lo; iw <= hi; ++iw)
                                    a0 += xrow[iw] * grow[iw * s - p + kj];
                            }
                        }
                        dwp[ki * kw + kj] += (a0 + a1) + (a2 + a3);
                    }
                }
            }
        }
    }
}

double stable_sigmoid(double v) {
    if (v >= 0.0) {
        return 1.0 / (1.0 + std::exp(-v));
    }
    double e = std::exp(v);
    return e / (1.0 + e);
}

} // namespace

const char* op_name(Op op) {
    switch (op) {
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Scale: return "scale";
        case Op::MatMul: return "matmul";
        case Op::Conv2d: return "conv2d";
        case Op::ConvTranspose2d: return "conv_transpose2d";
        case Op::Relu: return "relu";
        case Op::Sigmoid: return "sigmoid";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Square: return "square";
        case Op::Sum: return "sum";
        case Op::Mean: return "mean";
        case Op::Reshape: return "reshape";
        case Op::ConcatChannels: return "concat_channels";
        case Op::MaxPool2d: return "max_pool2d";
        case Op::UpsampleNearest2d: return "upsample_nearest2d";
    }
    return "unknown";
}

TensorPtr apply_primitive(Op op, const std::vector<TensorPtr>& inputs,
                          const OpAttrs& attrs) {
    auto arity = [&](std::size_t n) {
        require(inputs.size() == n, ErrorKind::Contract,
                std::string(op_name(op)) + " expects " + std::to_string(n) + " inputs");
    };

    TensorPtr out;
    std::vector<std::int64_t> saved;

    switch (op) {
        case Op::Add: {
            arity(2);
            const auto& a = inputs[0];
            const auto& b = inputs[1];
            AddMode mode = add_mode(a, b);
            std::vector<double> v(a->values);
            if (mode == AddMode::Equal) {
                for (std::size_t i = 0; i < v.size(); ++i) v[i] += b->values[i];
            } else if (mode == AddMode::ChannelBias) {
                const int C = a->shape[1];
                const std::size_t plane = static_cast<std::size_t>(a->shape[2]) * a->shape[3];
                std::size_t idx = 0;
                for (int n = 0; n < a->shape[0]; ++n)
                    for (int c = 0; c < C; ++c) {
                        const double bias = b->values[c];
                        for (std::size_t i = 0; i < plane; ++i) v[idx++] += bias;
                    }
            } else {
                const int N = a->shape[1];
                std::size_t idx = 0;
                for (int r = 0; r < a->shape[0]; ++r)
                    for (int c = 0; c < N; ++c) v[idx++] += b->values[c];
            }
            out = Tensor::make(a->shape, std::move(v));
            break;
        }
        case Op::Sub: {
            arity(2);
            require(inputs[0]->shape == inputs[1]->shape, ErrorKind::Dimension,
                    dim_msg("sub", inputs));
            std::vector<double> v(inputs[0]->values);
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= inputs[1]->values[i];
            out = Tensor::make(inputs[0]->shape, std::move(v));
            break;
        }
        case Op::Mul: {
            arity(2);
            require(inputs[0]->shape == inputs[1]->shape, ErrorKind::Dimension,
                    dim_msg("mul", inputs));
            std::vector<double> v(inputs[0]->values);
            for (std::size_t i = 0; i < v.size(); ++i) v[i] *= inputs[1]->values[i];
            out = Tensor::make(inputs[0]->shape, std::move(v));
            break;
        }
        case Op::Scale: {
            arity(1);
            std::vector<double> v(inputs[0]->values);
            for (auto& x : v) x *= attrs.scalar;
            out = Tensor::make(inputs[0]->shape, std::move(v));
            break;
        }
        case Op::MatMul: {
            arity(2);
            const auto& a = inputs[0];
            const auto& b = inputs[1];
            require(a->shape.size() == 2 && b->shape.size() == 2 &&
                        a->shape[1] == b->shape[0],
                    ErrorKind::Dimension, dim_msg("matmul", inputs));
            const int M = a->shape[0], K = a->shape[1], N = b->shape[1];
            std::vector<double> v(static_cast<std::size_t>(M) * N, 0.0);
            for (int i = 0; i < M; ++i) {
                const double* arow = a->values.data() + static_cast<std::size_t>(i) * K;
                double* crow = v.data() + static_cast<std::size_t>(i) * N;
                for (int l = 0; l < K; ++l) {
                    const double av = arow[l];
                    const double* brow = b->values.data() + static_cast<std::size_t>(l) * N;
                    for (int j = 0; j < N; ++j) crow[j] += av * brow[j];
                }
            }
            out = Tensor::make({M, N}, std::move(v));
            break;
        }
        case Op::Conv2d: {
            arity(2);
            const auto& x = inputs[0];
            const auto& w = inputs[1];
            require(x->shape.size() == 4 && w->shape.size() == 4 &&
                        x->shape[1] == w->shape[1],
                    ErrorKind::Dimension, dim_msg("conv2d", inputs));
            require(attrs.stride >= 1 && attrs.padding >= 0, ErrorKind::Contract,
                    "conv2d stride must be >= 1 and padding >= 0");
            const int B = x->shape[0], Ci = x->shape[1], H = x->shape[2], W = x->shape[3];
            const int Co = w->shape[0], kh = w->shape[2], kw = w->shape[3];
            const int OH = conv_out_extent(H, attrs.padding, kh, attrs.stride);
            const int OW = conv_out_extent(W, attrs.padding, kw, attrs.stride);
            require(OH >= 1 && OW >= 1 && H + 2 * attrs.padding >= kh &&
                        W + 2 * attrs.padding >= kw,
                    ErrorKind::Dimension,
                    "conv2d kernel larger than padded input: " + dim_msg("", inputs));
            std::vector<double> v(static_cast<std::size_t>(B) * Co * OH * OW, 0.0);
            conv2d_forward(x->values.data(), w->values.data(), v.data(), B, Ci, H, W,
                           Co, kh, kw, attrs.stride, attrs.padding, OH, OW);
            out = Tensor::make({B, Co, OH, OW}, std::move(v));
            break;
        }
        case Op::ConvTranspose2d: {
            arity(2);
            const auto& x = inputs[0];
            const auto& w = inputs[1];
            require(x->shape.size() == 4 && w->shape.size() == 4 &&
                        x->shape[1] == w->shape[0],
                    ErrorKind::Dimension, dim_msg("conv_transpose2d", inputs));
            require(attrs.stride >= 1 && attrs.padding >= 0, ErrorKind::Contract,
                    "conv_transpose2d stride must be >= 1 and padding >= 0");
            const int B = x->shape[0], Ci = x->shape[1], H = x->shape[2], W = x->shape[3];
            const int Co = w->shape[1], kh = w->shape[2], kw = w->shape[3];
            const int OH = (H - 1) * attrs.stride - 2 * attrs.padding + kh;
            const int OW = (W - 1) * attrs.stride - 2 * attrs.padding + kw;
            require(OH >= 1 && OW >= 1, ErrorKind::Dimension,
                    "conv_transpose2d output would be empty: " + dim_msg("", inputs));
            std::vector<double> v(static_cast<std::size_t>(B) * Co * OH * OW, 0.0);
            convt2d_forward(x->values.data(), w->values.data(), v.data(), B, Ci, H, W,
                            Co, kh, kw, attrs.stride, attrs.padding, OH, OW);
            out = Tensor::make({B, Co, OH, OW}, std::move(v));
            break;
        }
        case Op::Relu: {
            arity(1);
            std::vector<double> v(inputs[0]->values);
            for (auto& x : v) x = x > 0.0 ? x : 0.0;
            out = Tensor::make(inputs[0]->shape, std::move(v));
            break;
        }
        case Op::Sigmoid: {
            arity(1);
            std::vector<double> v(inputs[0]->values);
            for (auto& x : v) x = stable_sigmoid(x);
            out = Tensor::make(inputs[0]->shape, std::move(v));
            break;
        }
        case Op::Exp: {
            arity(1);
            std::vector<double> v(inputs[0]->values);
            for (auto& x : v) x = std::exp(x);
            out = Tensor::make(inputs[0]->shape, std::move(v));
            break;
        }
        case Op::Log: {
            arity(1);
            std::vector<double> v(inputs[0]->values);
            for (auto& x : v) {
                require(x > 0.0, ErrorKind::Numeric, "log requires positive values");
                x = std::log(x);
            }
            out = Tensor::make(inputs[0]->shape, std::move(v));
            break;
        }
        case Op::Square: {
            arity(1);
            std::vector<double> v(inputs[0]->values);
            for (auto& x : v) x *= x;
            out = Tensor::make(inputs[0]->shape, std::move(v));
            break;
        }
        case Op::Sum: {
            arity(1);
            double acc = 0.0;
            for (double x : inputs[0]->values) acc += x;
            out = Tensor::scalar(acc);
            break;
        }
        case Op::Mean: {
            arity(1);
            double acc = 0.0;
            for (double x : inputs[0]->values) acc += x;
            out = Tensor::scalar(acc / static_cast<double>(inputs[0]->values.size()));
            break;
        }
        case Op::Reshape: {
            arity(1);
            require(numel(attrs.target_shape) == inputs[0]->size(), ErrorKind::Dimension,
                    "reshape cannot map " + shape_str(inputs[0]->shape) + " onto " +
                        shape_str(attrs.target_shape));
            out = Tensor::make(attrs.target_shape, inputs[0]->values);
            break;
        }
        case Op::ConcatChannels: {
            arity(2);
            const auto& a = inputs[0];
            const auto& b = inputs[1];
            require(a->shape.size() == 4 && b->shape.size() == 4 &&
                        a->shape[0] == b->shape[0] && a->shape[2] == b->shape[2] &&
                        a->shape[3] == b->shape[3],
                    ErrorKind::Dimension, dim_msg("concat_channels", inputs));
            const int B = a->shape[0], Ca = a->shape[1], Cb = b->shape[1];
            const std::size_t plane = static_cast<std::size_t>(a->shape[2]) * a->shape[3];
            std::vector<double> v(static_cast<std::size_t>(B) * (Ca + Cb) * plane);
            for (int n = 0; n < B; ++n) {
                std::memcpy(v.data() + (static_cast<std::size_t>(n) * (Ca + Cb)) * plane,
                            a->values.data() + static_cast<std::size_t>(n) * Ca * plane,
                            sizeof(double) * Ca * plane);
                std::memcpy(v.data() + (static_cast<std::size_t>(n) * (Ca + Cb) + Ca) * plane,
                            b->values.data() + static_cast<std::size_t>(n) * Cb * plane,
                            sizeof(double) * Cb * plane);
            }
            out = Tensor::make({B, Ca + Cb, a->shape[2], a->shape[3]}, std::move(v));
            break;
        }
        case Op::MaxPool2d: {
            arity(1);
            const auto& x = inputs[0];
            const int k = attrs.kernel;
            require(x->shape.size() == 4, ErrorKind::Dimension, dim_msg("max_pool2d", inputs));
            require(k >= 1, ErrorKind::Contract, "max_pool2d kernel must be >= 1");
            const int B = x->shape[0], C = x->shape[1], H = x->shape[2], W = x->shape[3];
            require(H % k == 0 && W % k == 0, ErrorKind::Dimension,
                    "max_pool2d needs spatial dims divisible by " + std::to_string(k) +
                        ", got " + shape_str(x->shape));
            const int OH = H / k, OW = W / k;
            std::vector<double> v(static_cast<std::size_t>(B) * C * OH * OW);
            saved.resize(v.size());
            std::size_t o = 0;
            for (int n = 0; n < B; ++n)
                for (int c = 0; c < C; ++c) {
                    const std::size_t base = (static_cast<std::size_t>(n) * C + c) * H * W;
                    for (int oh = 0; oh < OH; ++oh)
                        for (int ow = 0; ow < OW; ++ow) {
                            // first maximal element in scan order wins ties
                            double best = -std::numeric_limits<double>::infinity();
                            std::int64_t best_idx = -1;
                            for (int i = 0; i < k; ++i)
                                for (int j = 0; j < k; ++j) {
                                    const std::size_t idx =
                                        base + static_cast<std::size_t>(oh * k + i) * W +
                                        (ow * k + j);
                                    if (x->values[idx] > best) {
                                        best = x->values[idx];
                                        best_idx = static_cast<std::int64_t>(idx);
                                    }
                                }
                            v[o] = best;
                            saved[o] = best_idx;
                            ++o;
                        }
                }
            out = Tensor::make({B, C, OH, OW}, std::move(v));
            break;
        }
        case Op::UpsampleNearest2d: {
            arity(1);
            const auto& x = inputs[0];
            const int f = attrs.factor;
            require(x->shape.size() == 4, ErrorKind::Dimension,
                    dim_msg("upsample_nearest2d", inputs));
            require(f >= 1, ErrorKind::Contract, "upsample factor must be >= 1");
            const int B = x->shape[0], C = x->shape[1], H = x->shape[2], W = x->shape[3];
            const int OH = H * f, OW = W * f;
            std::vector<double> v(static_cast<std::size_t>(B) * C * OH * OW);
            std::size_t o = 0;
            for (int n = 0; n < B; ++n)
                for (int c = 0; c < C; ++c) {
                    const double* plane =
                        x->values.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
                    for (int oh = 0; oh < OH; ++oh) {
                        const double* row = plane + static_cast<std::size_t>(oh / f) * W;
                        for (int ow = 0; ow < OW; ++ow) v[o++] = row[ow / f];
                    }
                }
            out = Tensor::make({B, C, OH, OW}, std::move(v));
            break;
        }
        default:
            fail(ErrorKind::UnsupportedOp,
                 "unsupported primitive kind " + std::to_string(static_cast<int>(op)));
    }

    bool needs_grad = false;
    for (const auto& t : inputs) needs_grad = needs_grad || t->requires_grad;
    out->requires_grad = needs_grad;

    if (needs_grad) {
        if (Tape* tape = active_tape()) {
            tape->record({op, attrs, inputs, out, std::move(saved)});
        }
    }
    return out;
}

// Accumulates input gradients for one recorded application. The output grad
// buffer is always allocated by the backward driver before this runs.
void backward_entry(const Tape::Entry& e) {
    const std::vector<double>& g = e.output->grad;
    auto wants = [&](std::size_t i) { return e.inputs[i]->requires_grad; };
    auto gbuf = [&](std::size_t i) -> std::vector<double>& { return e.inputs[i]->grad; };

    switch (e.op) {
        case Op::Add: {
            AddMode mode = add_mode(e.inputs[0], e.inputs[1]);
            if (wants(0)) {
                auto& da = gbuf(0);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
            }
            if (wants(1)) {
                auto& db = gbuf(1);
                const auto& ash = e.inputs[0]->shape;
                if (mode == AddMode::Equal) {
                    for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
                } else if (mode == AddMode::ChannelBias) {
                    const int C = ash[1];
                    const std::size_t plane = static_cast<std::size_t>(ash[2]) * ash[3];
                    std::size_t idx = 0;
                    for (int n = 0; n < ash[0]; ++n)
                        for (int c = 0; c < C; ++c) {
                            double acc = 0.0;
                            for (std::size_t i = 0; i < plane; ++i) acc += g[idx++];
                            db[c] += acc;
                        }
                } else {
                    const int N = ash[1];
                    std::size_t idx = 0;
                    for (int r = 0; r < ash[0]; ++r)
                        for (int c = 0; c < N; ++c) db[c] += g[idx++];
                }
            }
            break;
        }
        case Op::Sub: {
            if (wants(0)) {
                auto& da = gbuf(0);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
            }
            if (wants(1)) {
                auto& db = gbuf(1);
                for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
            }
            break;
        }
        case Op::Mul: {
            if (wants(0)) {
                auto& da = gbuf(0);
                const auto& bv = e.inputs[1]->values;
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
            }
            if (wants(1)) {
                auto& db = gbuf(1);
                const auto& av = e.inputs[0]->values;
                for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
            }
            break;
        }
        case Op::Scale: {
            if (wants(0)) {
                auto& da = gbuf(0);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * e.attrs.scalar;
            }
            break;
        }
        case Op::MatMul: {
            const auto& a = e.inputs[0];
            const auto& b = e.inputs[1];
            const int M = a->shape[0], K = a->shape[1], N = b->shape[1];
            if (wants(0)) {
                auto& da = gbuf(0);
                for (int i = 0; i < M; ++i)
                    for (int l = 0; l < K; ++l) {
                        const double* grow = g.data() + static_cast<std::size_t>(i) * N;
                        const double* brow = b->values.data() + static_cast<std::size_t>(l) * N;
                        double acc = 0.0;
                        for (int j = 0; j < N; ++j) acc += grow[j] * brow[j];
                        da[static_cast<std::size_t>(i) * K + l] += acc;
                    }
            }
            if (wants(1)) {
                auto& db = gbuf(1);
                for (int i = 0; i < M; ++i) {
                    const double* arow = a->values.data() + static_cast<std::size_t>(i) * K;
                    const double* grow = g.data() + static_cast<std::size_t>(i) * N;
                    for (int l = 0; l < K; ++l) {
                        const double av = arow[l];
                        double* dbrow = db.data() + static_cast<std::size_t>(l) * N;
                        for (int j = 0; j < N; ++j) dbrow[j] += av * grow[j];
                    }
                }
            }
            break;
        }
        case Op::Conv2d: {
            const auto& x = e.inputs[0];
            const auto& w = e.inputs[1];
            const int B = x->shape[0], Ci = x->shape[1], H = x->shape[2], W = x->shape[3];
            const int Co = w->shape[0], kh = w->shape[2], kw = w->shape[3];
            const int OH = e.output->shape[2], OW = e.output->shape[3];
            if (wants(0))
                conv2d_backward_input(g.data(), w->values.data(), gbuf(0).data(), B, Ci,
                                      H, W, Co, kh, kw, e.attrs.stride, e.attrs.padding,
                                      OH, OW);
            if (wants(1))
                conv2d_backward_weight(g.data(), x->values.data(), gbuf(1).data(), B, Ci,
                                       H, W, Co, kh, kw, e.attrs.stride, e.attrs.padding,
                                       OH, OW);
            break;
        }
        case Op::ConvTranspose2d: {
            const auto& x = e.inputs[0];
            const auto& w = e.inputs[1];
            const int B = x->shape[0], Ci = x->shape[1], H = x->shape[2], W = x->shape[3];
            const int Co = w->shape[1], kh = w->shape[2], kw = w->shape[3];
            const int OH = e.output->shape[2], OW = e.output->shape[3];
            if (wants(0))
                convt2d_backward_input(g.data(), w->values.data(), gbuf(0).data(), B, Ci,
                                       H, W, Co, kh, kw, e.attrs.stride, e.attrs.padding,
                                       OH, OW);
            if (wants(1))
                convt2d_backward_weight(g.data(), x->values.data(), gbuf(1).data(), B,
                                        Ci, H, W, Co, kh, kw, e.attrs.stride,
                                        e.attrs.padding, OH, OW);
            break;
        }
        case Op::Relu: {
            if (wants(0)) {
                auto& dx = gbuf(0);
                const auto& xv = e.inputs[0]->values;
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (xv[i] > 0.0) dx[i] += g[i];
            }
            break;
        }
        case Op::Sigmoid: {
            if (wants(0)) {
                auto& dx = gbuf(0);
                const auto& yv = e.output->values;
                for (std::size_t i = 0; i < g.size(); ++i)
                    dx[i] += g[i] * yv[i] * (1.0 - yv[i]);
            }
            break;
        }
        case Op::Exp: {
            if (wants(0)) {
                auto& dx = gbuf(0);
                const auto& yv = e.output->values;
                for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * yv[i];
            }
            break;
        }
        case Op::Log: {
            if (wants(0)) {
                auto& dx = gbuf(0);
                const auto& xv = e.inputs[0]->values;
                for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] / xv[i];
            }
            break;
        }
        case Op::Square: {
            if (wants(0)) {
                auto& dx = gbuf(0);
                const auto& xv = e.inputs[0]->values;
                for (std::size_t i = 0; i < g.size(); ++i) dx[i] += 2.0 * g[i] * xv[i];
            }
            break;
        }
        case Op::Sum: {
            if (wants(0)) {
                auto& dx = gbuf(0);
                const double gv = g[0];
                for (auto& d : dx) d += gv;
            }
            break;
        }
        case Op::Mean: {
            if (wants(0)) {
                auto& dx = gbuf(0);
                const double gv = g[0] / static_cast<double>(dx.size());
                for (auto& d : dx) d += gv;
            }
            break;
        }
        case Op::Reshape: {
            if (wants(0)) {
                auto& dx = gbuf(0);
                for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
            }
            break;
        }
        case Op::ConcatChannels: {
            const auto& ash = e.inputs[0]->shape;
            const auto& bsh = e.inputs[1]->shape;
            const int B = ash[0], Ca = ash[1], Cb = bsh[1];
            const std::size_t plane = static_cast<std::size_t>(ash[2]) * ash[3];
            for (int n = 0; n < B; ++n) {
                const std::size_t gbase = static_cast<std::size_t>(n) * (Ca + Cb) * plane;
                if (wants(0)) {
                    auto& da = gbuf(0);
                    const std::size_t abase = static_cast<std::size_t>(n) * Ca * plane;
                    for (std::size_t i = 0; i < static_cast<std::size_t>(Ca) * plane; ++i)
                        da[abase + i] += g[gbase + i];
                }
                if (wants(1)) {
                    auto& db = gbuf(1);
                    const std::size_t bbase = static_cast<std::size_t>(n) * Cb * plane;
                    for (std::size_t i = 0; i < static_cast<std::size_t>(Cb) * plane; ++i)
                        db[bbase + i] += g[gbase + Ca * plane + i];
                }
            }
            break;
        }
        case Op::MaxPool2d: {
            if (wants(0)) {
                auto& dx = gbuf(0);
                for (std::size_t i = 0; i < g.size(); ++i)
                    dx[static_cast<std::size_t>(e.saved[i])] += g[i];
            }
            break;
        }
        case Op::UpsampleNearest2d: {
            if (wants(0)) {
                auto& dx = gbuf(0);
                const auto& xsh = e.inputs[0]->shape;
                const int f = e.attrs.factor;
                const int B = xsh[0], C = xsh[1], H = xsh[2], W = xsh[3];
                const int OW = W * f, OH = H * f;
                std::size_t o = 0;
                for (int n = 0; n < B; ++n)
                    for (int c = 0; c < C; ++c) {
                        double* dplane = dx.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
                        for (int oh = 0; oh < OH; ++oh) {
                            double* drow = dplane + static_cast<std::size_t>(oh / f) * W;
                            for (int ow = 0; ow < OW; ++ow) drow[ow / f] += g[o++];
                        }
                    }
            }
            break;
        }
        default:
            fail(ErrorKind::UnsupportedOp, "no backward rule for primitive");
    }
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) { return apply_primitive(Op::Add, {a, b}); }
TensorPtr sub(const TensorPtr& a, const TensorPtr& b) { return apply_primitive(Op::Sub, {a, b}); }
TensorPtr mul(const TensorPtr& a, const TensorPtr& b) { return apply_primitive(Op::Mul, {a, b}); }

TensorPtr scale(const TensorPtr& a, double factor) {
    OpAttrs attrs;
    attrs.scalar = factor;
    return apply_primitive(Op::Scale, {a}, attrs);
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    return apply_primitive(Op::MatMul, {a, b});
}

TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, int stride, int padding) {
    OpAttrs attrs;
    attrs.stride = stride;
    attrs.padding = padding;
    return apply_primitive(Op::Conv2d, {x, w}, attrs);
}

TensorPtr conv_transpose2d(const TensorPtr& x, const TensorPtr& w, int stride, int padding) {
    OpAttrs attrs;
    attrs.stride = stride;
    attrs.padding = padding;
    return apply_primitive(Op::ConvTranspose2d, {x, w}, attrs);
}

TensorPtr relu(const TensorPtr& x) { return apply_primitive(Op::Relu, {x}); }
TensorPtr sigmoid(const TensorPtr& x) { return apply_primitive(Op::Sigmoid, {x}); }
TensorPtr exp(const TensorPtr& x) { return apply_primitive(Op::Exp, {x}); }
TensorPtr log(const TensorPtr& x) { return apply_primitive(Op::Log, {x}); }
TensorPtr square(const TensorPtr& x) { return apply_primitive(Op::Square, {x}); }
TensorPtr sum(const TensorPtr& x) { return apply_primitive(Op::Sum, {x}); }
TensorPtr mean(const TensorPtr& x) { return apply_primitive(Op::Mean, {x}); }

TensorPtr reshape(const TensorPtr& x, Shape target) {
    OpAttrs attrs;
    attrs.target_shape = std::move(target);
    return apply_primitive(Op::Reshape, {x}, attrs);
}

TensorPtr concat_channels(const TensorPtr& a, const TensorPtr& b) {
    return apply_primitive(Op::ConcatChannels, {a, b});
}

TensorPtr max_pool2d(const TensorPtr& x, int kernel) {
    OpAttrs attrs;
    attrs.kernel = kernel;
    return apply_primitive(Op::MaxPool2d, {x}, attrs);
}

TensorPtr upsample_nearest2d(const TensorPtr& x, int factor) {
    OpAttrs attrs;
    attrs.factor = factor;
    return apply_primitive(Op::UpsampleNearest2d, {x}, attrs);
}

} // namespace ggsa::ad
