#include <algorithm>
#include <cmath>

#include "faultline/qnn/kernels.hpp"

// Reference implementations. The parallel variants in kernels_omp.cpp must
// stay arithmetic-for-arithmetic identical to these loops.

namespace faultline::qnn::kern {

Mode& mode() {
    static Mode m = Mode::Parallel;
    return m;
}

namespace serial {

void dense_forward(const double* x, const double* w, const double* bias, double* y,
                   int B, int I, int O) {
    for (int b = 0; b < B; ++b)
        for (int o = 0; o < O; ++o) {
            double acc = bias ? bias[o] : 0.0;
            const double* xb = x + static_cast<int64_t>(b) * I;
            const double* wo = w + static_cast<int64_t>(o) * I;
            for (int i = 0; i < I; ++i) acc += xb[i] * wo[i];
            y[static_cast<int64_t>(b) * O + o] = acc;
        }
}

void dense_backward_input(const double* dy, const double* w, double* dx, int B, int I, int O) {
    for (int b = 0; b < B; ++b)
        for (int i = 0; i < I; ++i) {
            double acc = 0.0;
            const double* dyb = dy + static_cast<int64_t>(b) * O;
            for (int o = 0; o < O; ++o) acc += dyb[o] * w[static_cast<int64_t>(o) * I + i];
            dx[static_cast<int64_t>(b) * I + i] = acc;
        }
}

void dense_backward_params(const double* x, const double* dy, double* dw, double* db,
                           int B, int I, int O) {
    for (int o = 0; o < O; ++o) {
        double bacc = 0.0;
        for (int b = 0; b < B; ++b) bacc += dy[static_cast<int64_t>(b) * O + o];
        db[o] = bacc;
        for (int i = 0; i < I; ++i) {
            double acc = 0.0;
            for (int b = 0; b < B; ++b)
                acc += x[static_cast<int64_t>(b) * I + i] * dy[static_cast<int64_t>(b) * O + o];
            dw[static_cast<int64_t>(o) * I + i] = acc;
        }
    }
}

void conv3x3_forward(const double* x, const double* k, const double* bias, double* y,
                     int B, int C, int H, int W, int OC) {
    const int64_t in_plane = static_cast<int64_t>(H) * W;
    for (int b = 0; b < B; ++b)
        for (int oc = 0; oc < OC; ++oc)
            for (int iy = 0; iy < H; ++iy)
                for (int ix = 0; ix < W; ++ix) {
                    double acc = bias ? bias[oc] : 0.0;
                    for (int c = 0; c < C; ++c)
                        for (int ky = 0; ky < 3; ++ky) {
                            const int sy = iy + ky - 1;
                            if (sy < 0 || sy >= H) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int sx = ix + kx - 1;
                                if (sx < 0 || sx >= W) continue;
                                acc += x[((static_cast<int64_t>(b) * C + c) * H + sy) * W + sx] *
                                       k[((static_cast<int64_t>(oc) * C + c) * 3 + ky) * 3 + kx];
                            }
                        }
                    y[(static_cast<int64_t>(b) * OC + oc) * in_plane + iy * W + ix] = acc;
                }
}

void conv3x3_backward_input(const double* dy, const double* k, double* dx,
                            int B, int C, int H, int W, int OC) {
    const int64_t plane = static_cast<int64_t>(H) * W;
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int sy = 0; sy < H; ++sy)
                for (int sx = 0; sx < W; ++sx) {
                    double acc = 0.0;
                    for (int oc = 0; oc < OC; ++oc)
                        for (int ky = 0; ky < 3; ++ky) {
                            const int iy = sy - ky + 1;
                            if (iy < 0 || iy >= H) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int ix = sx - kx + 1;
                                if (ix < 0 || ix >= W) continue;
                                acc += dy[(static_cast<int64_t>(b) * OC + oc) * plane + iy * W + ix] *
                                       k[((static_cast<int64_t>(oc) * C + c) * 3 + ky) * 3 + kx];
                            }
                        }
                    dx[(static_cast<int64_t>(b) * C + c) * plane + sy * W + sx] = acc;
                }
}

void conv3x3_backward_params(const double* x, const double* dy, double* dk, double* db,
                             int B, int C, int H, int W, int OC) {
    const int64_t plane = static_cast<int64_t>(H) * W;
    for (int oc = 0; oc < OC; ++oc) {
        double bacc = 0.0;
        for (int b = 0; b < B; ++b)
            for (int64_t p = 0; p < plane; ++p)
                bacc += dy[(static_cast<int64_t>(b) * OC + oc) * plane + p];
        db[oc] = bacc;
        for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    double acc = 0.0;
                    for (int b = 0; b < B; ++b)
                        for (int iy = 0; iy < H; ++iy) {
                            const int sy = iy + ky - 1;
                            if (sy < 0 || sy >= H) continue;
                            for (int ix = 0; ix < W; ++ix) {
                                const int sx = ix + kx - 1;
                                if (sx < 0 || sx >= W) continue;
                                acc += x[((static_cast<int64_t>(b) * C + c) * H + sy) * W + sx] *
                                       dy[(static_cast<int64_t>(b) * OC + oc) * plane + iy * W + ix];
                            }
                        }
                    dk[((static_cast<int64_t>(oc) * C + c) * 3 + ky) * 3 + kx] = acc;
                }
    }
}

void relu_forward(const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* dy, double* dx, int64_t n) {
    for (int64_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

void maxpool2_forward(const double* x, double* y, int32_t* argmax, int B, int C, int H, int W) {
    const int OH = H / 2, OW = W / 2;
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const int64_t base = (static_cast<int64_t>(b) * C + c) * H * W;
            const int64_t obase = (static_cast<int64_t>(b) * C + c) * OH * OW;
            for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox) {
                    int64_t best = base + (2 * oy) * W + 2 * ox;
                    double bv = x[best];
                    for (int dy_ = 0; dy_ < 2; ++dy_)
                        for (int dx_ = 0; dx_ < 2; ++dx_) {
                            const int64_t idx = base + (2 * oy + dy_) * W + 2 * ox + dx_;
                            if (x[idx] > bv) {
                                bv = x[idx];
                                best = idx;
                            }
                        }
                    y[obase + oy * OW + ox] = bv;
                    argmax[obase + oy * OW + ox] = static_cast<int32_t>(best);
                }
        }
}

void maxpool2_backward(const double* dy, const int32_t* argmax, double* dx,
                       int B, int C, int H, int W) {
    const int OH = H / 2, OW = W / 2;
    const int64_t n_in = static_cast<int64_t>(B) * C * H * W;
    std::fill(dx, dx + n_in, 0.0);
    const int64_t n_out = static_cast<int64_t>(B) * C * OH * OW;
    for (int64_t i = 0; i < n_out; ++i) dx[argmax[i]] += dy[i];
}

void softmax_xent(const double* logits, const int* labels, double* probs, double* losses,
                  int B, int K) {
    for (int b = 0; b < B; ++b) {
        const double* lb = logits + static_cast<int64_t>(b) * K;
        double* pb = probs + static_cast<int64_t>(b) * K;
        double mx = lb[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, lb[k]);
        double sum = 0.0;
        for (int k = 0; k < K; ++k) {
            pb[k] = std::exp(lb[k] - mx);
            sum += pb[k];
        }
        for (int k = 0; k < K; ++k) pb[k] /= sum;
        losses[b] = -std::log(pb[labels[b]]);
    }
}

}  // namespace serial
}  // namespace faultline::qnn::kern
