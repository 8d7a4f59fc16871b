#pragma once

#include <cstddef>

// Dense double-precision kernels behind the autodiff ops.
//
// Two implementations share the same per-row workers:
//   kernels::*          OpenMP-parallel over independent output rows
//   kernels::serial::*  plain loops, the reference the tests compare against
//
// Every output element is written by exactly one thread and every inner
// reduction runs in a fixed order, so parallel and serial results are
// bit-identical for any thread count.
namespace loralab::kernels {

// c[p x s] (+)= a[p x q] * b[q x s]
void gemm_nn(std::size_t p, std::size_t q, std::size_t s,
             const double* a, const double* b, double* c, bool accumulate);

// c[p x s] (+)= a[p x q] * b[s x q]^T
void gemm_nt(std::size_t p, std::size_t q, std::size_t s,
             const double* a, const double* b, double* c, bool accumulate);

// c[q x s] (+)= a[p x q]^T * b[p x s]
void gemm_tn(std::size_t p, std::size_t q, std::size_t s,
             const double* a, const double* b, double* c, bool accumulate);

// Per-row layer norm: y = (x - mean) / sqrt(var + eps) * gain + bias.
// inv_std[r] and mean[r] are stored for the backward pass.
void layer_norm_forward(std::size_t rows, std::size_t cols, const double* x,
                        const double* gain, const double* bias, double eps,
                        double* y, double* mean, double* inv_std);

void layer_norm_backward(std::size_t rows, std::size_t cols, const double* x,
                         const double* gain, const double* mean,
                         const double* inv_std, const double* grad_y,
                         double* grad_x, double* grad_gain, double* grad_bias);

// Row-wise softmax over the causal prefix: row r attends to columns 0..r.
// Columns beyond the prefix are exactly zero. Max-subtraction inside.
void causal_softmax_forward(std::size_t t, const double* scores, double* probs);

void causal_softmax_backward(std::size_t t, const double* probs,
                             const double* grad_probs, double* grad_scores);

// Row-wise log-softmax with max-subtraction.
void log_softmax_forward(std::size_t rows, std::size_t cols, const double* x,
                         double* y);

void log_softmax_backward(std::size_t rows, std::size_t cols, const double* y,
                          const double* grad_y, double* grad_x);

namespace serial {

void gemm_nn(std::size_t p, std::size_t q, std::size_t s,
             const double* a, const double* b, double* c, bool accumulate);
void gemm_nt(std::size_t p, std::size_t q, std::size_t s,
             const double* a, const double* b, double* c, bool accumulate);
void gemm_tn(std::size_t p, std::size_t q, std::size_t s,
             const double* a, const double* b, double* c, bool accumulate);
void layer_norm_forward(std::size_t rows, std::size_t cols, const double* x,
                        const double* gain, const double* bias, double eps,
                        double* y, double* mean, double* inv_std);
void layer_norm_backward(std::size_t rows, std::size_t cols, const double* x,
                         const double* gain, const double* mean,
                         const double* inv_std, const double* grad_y,
                         double* grad_x, double* grad_gain, double* grad_bias);
void causal_softmax_forward(std::size_t t, const double* scores, double* probs);
void causal_softmax_backward(std::size_t t, const double* probs,
                             const double* grad_probs, double* grad_scores);
void log_softmax_forward(std::size_t rows, std::size_t cols, const double* x,
                         double* y);
void log_softmax_backward(std::size_t rows, std::size_t cols, const double* y,
                          const double* grad_y, double* grad_x);

}  // namespace serial

}  // namespace loralab::kernels
