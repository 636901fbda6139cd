#pragma once

#include <cstdint>

namespace faultline::qnn::kern {

/// Kernel dispatch mode. Parallel variants split only over independent
/// output elements and keep every inner reduction in serial order, so both
/// modes produce bit-identical results.
enum class Mode { Serial, Parallel };

Mode& mode();

// Dense: x[B,I], w[O,I], bias[O] -> y[B,O]
// Conv 3x3, stride 1, pad 1: x[B,C,H,W], k[OC,C,3,3], bias[OC] -> y[B,OC,H,W]
// MaxPool 2x2, stride 2: H and W must be even; argmax records the flat input
// index of each window maximum (first occurrence wins ties).
// Softmax cross entropy: logits[B,K], labels[B] -> probs[B,K], losses[B]

namespace serial {
void dense_forward(const double* x, const double* w, const double* bias, double* y,
                   int B, int I, int O);
void dense_backward_input(const double* dy, const double* w, double* dx, int B, int I, int O);
void dense_backward_params(const double* x, const double* dy, double* dw, double* db,
                           int B, int I, int O);
void conv3x3_forward(const double* x, const double* k, const double* bias, double* y,
                     int B, int C, int H, int W, int OC);
void conv3x3_backward_input(const double* dy, const double* k, double* dx,
                            int B, int C, int H, int W, int OC);
void conv3x3_backward_params(const double* x, const double* dy, double* dk, double* db,
                             int B, int C, int H, int W, int OC);
void relu_forward(const double* x, double* y, int64_t n);
void relu_backward(const double* x, const double* dy, double* dx, int64_t n);
void maxpool2_forward(const double* x, double* y, int32_t* argmax, int B, int C, int H, int W);
void maxpool2_backward(const double* dy, const int32_t* argmax, double* dx,
                       int B, int C, int H, int W);
void softmax_xent(const double* logits, const int* labels, double* probs, double* losses,
                  int B, int K);
}  // namespace serial

namespace par {
void dense_forward(const double* x, const double* w, const double* bias, double* y,
                   int B, int I, int O);
void dense_backward_input(const double* dy, const double* w, double* dx, int B, int I, int O);
void dense_backward_params(const double* x, const double* dy, double* dw, double* db,
                           int B, int I, int O);
void conv3x3_forward(const double* x, const double* k, const double* bias, double* y,
                     int B, int C, int H, int W, int OC);
void conv3x3_backward_input(const double* dy, const double* k, double* dx,
                            int B, int C, int H, int W, int OC);
void conv3x3_backward_params(const double* x, const double* dy, double* dk, double* db,
                             int B, int C, int H, int W, int OC);
void relu_forward(const double* x, double* y, int64_t n);
void relu_backward(const double* x, const double* dy, double* dx, int64_t n);
void maxpool2_forward(const double* x, double* y, int32_t* argmax, int B, int C, int H, int W);
void maxpool2_backward(const double* dy, const int32_t* argmax, double* dx,
                       int B, int C, int H, int W);
void softmax_xent(const double* logits, const int* labels, double* probs, double* losses,
                  int B, int K);
}  // namespace par

// Dispatchers used by the model code.
#define FAULTLINE_DISPATCH(fn, ...) \
    (mode() == Mode::Serial ? serial::fn(__VA_ARGS__) : par::fn(__VA_ARGS__))

inline void dense_forward(const double* x, const double* w, const double* bias, double* y,
                          int B, int I, int O) {
    FAULTLINE_DISPATCH(dense_forward, x, w, bias, y, B, I, O);
}
inline void dense_backward_input(const double* dy, const double* w, double* dx, int B, int I,
                                 int O) {
    FAULTLINE_DISPATCH(dense_backward_input, dy, w, dx, B, I, O);
}
inline void dense_backward_params(const double* x, const double* dy, double* dw, double* db,
                                  int B, int I, int O) {
    FAULTLINE_DISPATCH(dense_backward_params, x, dy, dw, db, B, I, O);
}
inline void conv3x3_forward(const double* x, const double* k, const double* bias, double* y,
                            int B, int C, int H, int W, int OC) {
    FAULTLINE_DISPATCH(conv3x3_forward, x, k, bias, y, B, C, H, W, OC);
}
inline void conv3x3_backward_input(const double* dy, const double* k, double* dx, int B, int C,
                                   int H, int W, int OC) {
    FAULTLINE_DISPATCH(conv3x3_backward_input, dy, k, dx, B, C, H, W, OC);
}
inline void conv3x3_backward_params(const double* x, const double* dy, double* dk, double* db,
                                    int B, int C, int H, int W, int OC) {
    FAULTLINE_DISPATCH(conv3x3_backward_params, x, dy, dk, db, B, C, H, W, OC);
}
inline void relu_forward(const double* x, double* y, int64_t n) {
    FAULTLINE_DISPATCH(relu_forward, x, y, n);
}
inline void relu_backward(const double* x, const double* dy, double* dx, int64_t n) {
    FAULTLINE_DISPATCH(relu_backward, x, dy, dx, n);
}
inline void maxpool2_forward(const double* x, double* y, int32_t* argmax, int B, int C, int H,
                             int W) {
    FAULTLINE_DISPATCH(maxpool2_forward, x, y, argmax, B, C, H, W);
}
inline void maxpool2_backward(const double* dy, const int32_t* argmax, double* dx, int B, int C,
                              int H, int W) {
    FAULTLINE_DISPATCH(maxpool2_backward, dy, argmax, dx, B, C, H, W);
}
inline void softmax_xent(const double* logits, const int* labels, double* probs, double* losses,
                         int B, int K) {
    FAULTLINE_DISPATCH(softmax_xent, logits, labels, probs, losses, B, K);
}

#undef FAULTLINE_DISPATCH

}  // namespace faultline::qnn::kern
