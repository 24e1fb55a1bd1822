#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace depthfill {

// Dense rank-3 value field, height x width x channels, channel-fastest.
struct Tensor {
    int h = 0, w = 0, c = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int h_, int w_, int c_)
        : h(h_), w(w_), c(c_),
          v(static_cast<std::size_t>(h_) * w_ * c_, 0.0) {}

    const double& at(int y, int x, int ch) const {
        return v[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }
    double& at(int y, int x, int ch) {
        return v[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }
    std::size_t size() const { return v.size(); }
};

// Shape of one convolution. Weights are laid out [out][ky][kx][in] and are
// followed by the out_ch biases in the model's flat parameter vector.
struct ConvShape {
    int in_ch = 0;
    int out_ch = 0;
    int ksize = 3;  // 1 or 3, zero-padded to keep resolution

    std::size_t weight_count() const {
        return static_cast<std::size_t>(out_ch) * ksize * ksize * in_ch;
    }
    std::size_t param_count() const { return weight_count() + out_ch; }
};

inline Tensor conv_forward(const Tensor& in, const ConvShape& shape,
                           std::span<const double> params) {
    const int k = shape.ksize;
    const int pad = k / 2;
    const double* weights = params.data();
    const double* bias = params.data() + shape.weight_count();
    Tensor out(in.h, in.w, shape.out_ch);
    for (int y = 0; y < in.h; ++y) {
        for (int x = 0; x < in.w; ++x) {
            double* out_px = &out.at(y, x, 0);
            for (int oc = 0; oc < shape.out_ch; ++oc) out_px[oc] = bias[oc];
            for (int ky = 0; ky < k; ++ky) {
                const int yy = y + ky - pad;
                if (yy < 0 || yy >= in.h) continue;
                for (int kx = 0; kx < k; ++kx) {
                    const int xx = x + kx - pad;
                    if (xx < 0 || xx >= in.w) continue;
                    const double* in_px = &in.at(yy, xx, 0);
                    const double* w_tap = weights + (static_cast<std::size_t>(ky) * k + kx) * shape.in_ch;
                    const std::size_t oc_stride = static_cast<std::size_t>(k) * k * shape.in_ch;
                    for (int oc = 0; oc < shape.out_ch; ++oc) {
                        const double* wp = w_tap + oc * oc_stride;
                        double acc = 0.0;
                        for (int ic = 0; ic < shape.in_ch; ++ic) acc += in_px[ic] * wp[ic];
                        out_px[oc] += acc;
                    }
                }
            }
        }
    }
    return out;
}

// Accumulates dL/dweights and dL/dbias into param_grad and returns dL/dinput.
inline Tensor conv_backward(const Tensor& in, const Tensor& d_out, const ConvShape& shape,
                            std::span<const double> params, std::span<double> param_grad) {
    const int k = shape.ksize;
    const int pad = k / 2;
    const double* weights = params.data();
    double* d_weights = param_grad.data();
    double* d_bias = param_grad.data() + shape.weight_count();
    Tensor d_in(in.h, in.w, shape.in_ch);
    const std::size_t oc_stride = static_cast<std::size_t>(k) * k * shape.in_ch;
    for (int y = 0; y < in.h; ++y) {
        for (int x = 0; x < in.w; ++x) {
            const double* g_px = &d_out.at(y, x, 0);
            for (int oc = 0; oc < shape.out_ch; ++oc) d_bias[oc] += g_px[oc];
            for (int ky = 0; ky < k; ++ky) {
                const int yy = y + ky - pad;
                if (yy < 0 || yy >= in.h) continue;
                for (int kx = 0; kx < k; ++kx) {
                    const int xx = x + kx - pad;
                    if (xx < 0 || xx >= in.w) continue;
                    const double* in_px = &in.at(yy, xx, 0);
                    double* din_px = &d_in.at(yy, xx, 0);
                    const std::size_t tap = (static_cast<std::size_t>(ky) * k + kx) * shape.in_ch;
                    for (int oc = 0; oc < shape.out_ch; ++oc) {
                        const double g = g_px[oc];
                        if (g == 0.0) continue;
                        const double* wp = weights + oc * oc_stride + tap;
                        double* dwp = d_weights + oc * oc_stride + tap;
                        for (int ic = 0; ic < shape.in_ch; ++ic) {
                            dwp[ic] += g * in_px[ic];
                            din_px[ic] += g * wp[ic];
                        }
                    }
                }
            }
        }
    }
    return d_in;
}

inline void relu_inplace(Tensor& t) {
    for (auto& x : t.v)
        if (x < 0.0) x = 0.0;
}

// d_pre = d_post where the activation survived, 0 elsewhere.
inline void relu_backward_inplace(const Tensor& activated, Tensor& grad) {
    for (std::size_t i = 0; i < grad.v.size(); ++i)
        if (activated.v[i] <= 0.0) grad.v[i] = 0.0;
}

// 2x2 max pooling, stride 2. Ties resolve to the first maximum in scan order
// so the backward routing is deterministic.
inline Tensor maxpool2_forward(const Tensor& in, std::vector<std::size_t>& argmax) {
    if (in.h % 2 != 0 || in.w % 2 != 0)
        throw std::invalid_argument("maxpool2_forward: odd input resolution");
    Tensor out(in.h / 2, in.w / 2, in.c);
    argmax.assign(out.size(), 0);
    std::size_t o = 0;
    for (int y = 0; y < out.h; ++y) {
        for (int x = 0; x < out.w; ++x) {
            for (int ch = 0; ch < in.c; ++ch, ++o) {
                double best = in.at(2 * y, 2 * x, ch);
                std::size_t best_idx = (static_cast<std::size_t>(2 * y) * in.w + 2 * x) * in.c + ch;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        if (dy == 0 && dx == 0) continue;
                        const std::size_t idx =
                            (static_cast<std::size_t>(2 * y + dy) * in.w + (2 * x + dx)) * in.c + ch;
                        if (in.v[idx] > best) {
                            best = in.v[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.v[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    return out;
}

inline Tensor maxpool2_backward(const Tensor& d_out, const std::vector<std::size_t>& argmax,
                                int in_h, int in_w) {
    Tensor d_in(in_h, in_w, d_out.c);
    for (std::size_t o = 0; o < d_out.v.size(); ++o) d_in.v[argmax[o]] += d_out.v[o];
    return d_in;
}

inline Tensor upsample2_forward(const Tensor& in) {
    Tensor out(in.h * 2, in.w * 2, in.c);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            for (int ch = 0; ch < in.c; ++ch)
                out.at(y, x, ch) = in.at(y / 2, x / 2, ch);
    return out;
}

inline Tensor upsample2_backward(const Tensor& d_out) {
    Tensor d_in(d_out.h / 2, d_out.w / 2, d_out.c);
    for (int y = 0; y < d_out.h; ++y)
        for (int x = 0; x < d_out.w; ++x)
            for (int ch = 0; ch < d_out.c; ++ch)
                d_in.at(y / 2, x / 2, ch) += d_out.at(y, x, ch);
    return d_in;
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.h != b.h || a.w != b.w)
        throw std::invalid_argument("concat_channels: resolution mismatch");
    Tensor out(a.h, a.w, a.c + b.c);
    for (int y = 0; y < a.h; ++y) {
        for (int x = 0; x < a.w; ++x) {
            for (int ch = 0; ch < a.c; ++ch) out.at(y, x, ch) = a.at(y, x, ch);
            for (int ch = 0; ch < b.c; ++ch) out.at(y, x, a.c + ch) = b.at(y, x, ch);
        }
    }
    return out;
}

inline void split_channels_grad(const Tensor& d_out, Tensor& d_a, Tensor& d_b) {
    for (int y = 0; y < d_out.h; ++y) {
        for (int x = 0; x < d_out.w; ++x) {
            for (int ch = 0; ch < d_a.c; ++ch) d_a.at(y, x, ch) = d_out.at(y, x, ch);
            for (int ch = 0; ch < d_b.c; ++ch) d_b.at(y, x, ch) = d_out.at(y, x, d_a.c + ch);
        }
    }
}

} // namespace depthfill
