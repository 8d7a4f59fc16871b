#include "loralab/kernels.hpp"

#include <cmath>

namespace loralab::kernels {

namespace {

// Row workers shared by the serial and OpenMP entry points. Keeping one
// definition guarantees identical floating-point sequences in both paths.

inline void gemm_nn_row(std::size_t q, std::size_t s, const double* a_row,
                        const double* b, double* c_row, bool accumulate) {
    if (!accumulate) {
        for (std::size_t j = 0; j < s; ++j) c_row[j] = 0.0;
    }
    for (std::size_t k = 0; k < q; ++k) {
        const double aik = a_row[k];
        const double* b_row = b + k * s;
#pragma omp simd
        for (std::size_t j = 0; j < s; ++j) c_row[j] += aik * b_row[j];
    }
}

inline void gemm_nt_row(std::size_t q, std::size_t s, const double* a_row,
                        const double* b, double* c_row, bool accumulate) {
    for (std::size_t j = 0; j < s; ++j) {
        const double* b_row = b + j * q;
        double sum = 0.0;
#pragma omp simd reduction(+ : sum)
        for (std::size_t k = 0; k < q; ++k) sum += a_row[k] * b_row[k];
        c_row[j] = accumulate ? c_row[j] + sum : sum;
    }
}

// Output row i of a^T * b; a column i is strided, b rows stream.
inline void gemm_tn_row(std::size_t p, std::size_t q, std::size_t s,
                        std::size_t i, const double* a, const double* b,
                        double* c_row, bool accumulate) {
    if (!accumulate) {
        for (std::size_t j = 0; j < s; ++j) c_row[j] = 0.0;
    }
    for (std::size_t k = 0; k < p; ++k) {
        const double aki = a[k * q + i];
        const double* b_row = b + k * s;
#pragma omp simd
        for (std::size_t j = 0; j < s; ++j) c_row[j] += aki * b_row[j];
    }
}

inline void layer_norm_row(std::size_t cols, const double* x_row,
                           const double* gain, const double* bias, double eps,
                           double* y_row, double* mean_out, double* inv_std_out) {
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) sum += x_row[j];
    const double mean = sum / static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
        const double d = x_row[j] - mean;
        var += d * d;
    }
    var /= static_cast<double>(cols);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) {
        y_row[j] = (x_row[j] - mean) * inv_std * gain[j] + bias[j];
    }
    *mean_out = mean;
    *inv_std_out = inv_std;
}

inline void layer_norm_backward_row(std::size_t cols, const double* x_row,
                                    const double* gain, double mean,
                                    double inv_std, const double* g_row,
                                    double* gx_row) {
    // d/dx of y = xhat*gain + bias with xhat = (x-mean)*inv_std:
    //   gx = inv_std * (gh - mean(gh) - xhat * mean(gh*xhat)), gh = g*gain
    double sum_gh = 0.0;
    double sum_gh_xhat = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
        const double xhat = (x_row[j] - mean) * inv_std;
        const double gh = g_row[j] * gain[j];
        sum_gh += gh;
        sum_gh_xhat += gh * xhat;
    }
    const double inv_n = 1.0 / static_cast<double>(cols);
    for (std::size_t j = 0; j < cols; ++j) {
        const double xhat = (x_row[j] - mean) * inv_std;
        const double gh = g_row[j] * gain[j];
        gx_row[j] += inv_std * (gh - inv_n * sum_gh - xhat * inv_n * sum_gh_xhat);
    }
}

inline void causal_softmax_row(std::size_t t, std::size_t r,
                               const double* s_row, double* p_row) {
    double max_v = s_row[0];
    for (std::size_t j = 1; j <= r; ++j) max_v = s_row[j] > max_v ? s_row[j] : max_v;
    double denom = 0.0;
    for (std::size_t j = 0; j <= r; ++j) {
        p_row[j] = std::exp(s_row[j] - max_v);
        denom += p_row[j];
    }
    const double inv = 1.0 / denom;
    for (std::size_t j = 0; j <= r; ++j) p_row[j] *= inv;
    for (std::size_t j = r + 1; j < t; ++j) p_row[j] = 0.0;
}

inline void causal_softmax_backward_row(std::size_t t, std::size_t r,
                                        const double* p_row, const double* g_row,
                                        double* gs_row) {
    double dot = 0.0;
    for (std::size_t j = 0; j <= r; ++j) dot += g_row[j] * p_row[j];
    for (std::size_t j = 0; j <= r; ++j) gs_row[j] += p_row[j] * (g_row[j] - dot);
    (void)t;
}

inline void log_softmax_row(std::size_t cols, const double* x_row, double* y_row) {
    double max_v = x_row[0];
    for (std::size_t j = 1; j < cols; ++j) max_v = x_row[j] > max_v ? x_row[j] : max_v;
    double denom = 0.0;
    for (std::size_t j = 0; j < cols; ++j) denom += std::exp(x_row[j] - max_v);
    const double lse = max_v + std::log(denom);
    for (std::size_t j = 0; j < cols; ++j) y_row[j] = x_row[j] - lse;
}

inline void log_softmax_backward_row(std::size_t cols, const double* y_row,
                                     const double* g_row, double* gx_row) {
    double sum_g = 0.0;
    for (std::size_t j = 0; j < cols; ++j) sum_g += g_row[j];
    for (std::size_t j = 0; j < cols; ++j) {
        gx_row[j] += g_row[j] - std::exp(y_row[j]) * sum_g;
    }
}

}  // namespace

void gemm_nn(std::size_t p, std::size_t q, std::size_t s, const double* a,
             const double* b, double* c, bool accumulate) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(p);
#pragma omp parallel for schedule(static) if (p * q * s > 16384)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        gemm_nn_row(q, s, a + i * static_cast<std::ptrdiff_t>(q),
                    b, c + i * static_cast<std::ptrdiff_t>(s), accumulate);
    }
}

void gemm_nt(std::size_t p, std::size_t q, std::size_t s, const double* a,
             const double* b, double* c, bool accumulate) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(p);
#pragma omp parallel for schedule(static) if (p * q * s > 16384)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        gemm_nt_row(q, s, a + i * static_cast<std::ptrdiff_t>(q),
                    b, c + i * static_cast<std::ptrdiff_t>(s), accumulate);
    }
}

void gemm_tn(std::size_t p, std::size_t q, std::size_t s, const double* a,
             const double* b, double* c, bool accumulate) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(q);
#pragma omp parallel for schedule(static) if (p * q * s > 16384)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        gemm_tn_row(p, q, s, static_cast<std::size_t>(i), a, b,
                    c + i * static_cast<std::ptrdiff_t>(s), accumulate);
    }
}

void layer_norm_forward(std::size_t rows, std::size_t cols, const double* x,
                        const double* gain, const double* bias, double eps,
                        double* y, double* mean, double* inv_std) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > 16384)
    for (std::ptrdiff_t r = 0; r < n; ++r) {
        layer_norm_row(cols, x + r * static_cast<std::ptrdiff_t>(cols), gain,
                       bias, eps, y + r * static_cast<std::ptrdiff_t>(cols),
                       mean + r, inv_std + r);
    }
}

void layer_norm_backward(std::size_t rows, std::size_t cols, const double* x,
                         const double* gain, const double* mean,
                         const double* inv_std, const double* grad_y,
                         double* grad_x, double* grad_gain, double* grad_bias) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > 16384)
    for (std::ptrdiff_t r = 0; r < n; ++r) {
        layer_norm_backward_row(cols, x + r * static_cast<std::ptrdiff_t>(cols),
                                gain, mean[r], inv_std[r],
                                grad_y + r * static_cast<std::ptrdiff_t>(cols),
                                grad_x + r * static_cast<std::ptrdiff_t>(cols));
    }
    // Gain/bias reductions run over rows in index order; kept serial so the
    // accumulation order is fixed.
    if (grad_gain != nullptr || grad_bias != nullptr) {
        for (std::size_t r = 0; r < rows; ++r) {
            const double* g_row = grad_y + r * cols;
            const double* x_row = x + r * cols;
            for (std::size_t j = 0; j < cols; ++j) {
                const double xhat = (x_row[j] - mean[r]) * inv_std[r];
                if (grad_gain) grad_gain[j] += g_row[j] * xhat;
                if (grad_bias) grad_bias[j] += g_row[j];
            }
        }
    }
}

void causal_softmax_forward(std::size_t t, const double* scores, double* probs) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(t);
#pragma omp parallel for schedule(static) if (t * t > 16384)
    for (std::ptrdiff_t r = 0; r < n; ++r) {
        causal_softmax_row(t, static_cast<std::size_t>(r),
                           scores + r * static_cast<std::ptrdiff_t>(t),
                           probs + r * static_cast<std::ptrdiff_t>(t));
    }
}

void causal_softmax_backward(std::size_t t, const double* probs,
                             const double* grad_probs, double* grad_scores) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(t);
#pragma omp parallel for schedule(static) if (t * t > 16384)
    for (std::ptrdiff_t r = 0; r < n; ++r) {
        causal_softmax_backward_row(t, static_cast<std::size_t>(r),
                                    probs + r * static_cast<std::ptrdiff_t>(t),
                                    grad_probs + r * static_cast<std::ptrdiff_t>(t),
                                    grad_scores + r * static_cast<std::ptrdiff_t>(t));
    }
}

void log_softmax_forward(std::size_t rows, std::size_t cols, const double* x,
                         double* y) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > 16384)
    for (std::ptrdiff_t r = 0; r < n; ++r) {
        log_softmax_row(cols, x + r * static_cast<std::ptrdiff_t>(cols),
                        y + r * static_cast<std::ptrdiff_t>(cols));
    }
}

void log_softmax_backward(std::size_t rows, std::size_t cols, const double* y,
                          const double* grad_y, double* grad_x) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > 16384)
    for (std::ptrdiff_t r = 0; r < n; ++r) {
        log_softmax_backward_row(cols, y + r * static_cast<std::ptrdiff_t>(cols),
                                 grad_y + r * static_cast<std::ptrdiff_t>(cols),
                                 grad_x + r * static_cast<std::ptrdiff_t>(cols));
    }
}

namespace serial {

void gemm_nn(std::size_t p, std::size_t q, std::size_t s, const double* a,
             const double* b, double* c, bool accumulate) {
    for (std::size_t i = 0; i < p; ++i) {
        gemm_nn_row(q, s, a + i * q, b, c + i * s, accumulate);
    }
}

void gemm_nt(std::size_t p, std::size_t q, std::size_t s, const double* a,
             const double* b, double* c, bool accumulate) {
    for (std::size_t i = 0; i < p; ++i) {
        gemm_nt_row(q, s, a + i * q, b, c + i * s, accumulate);
    }
}

void gemm_tn(std::size_t p, std::size_t q, std::size_t s, const double* a,
             const double* b, double* c, bool accumulate) {
    for (std::size_t i = 0; i < q; ++i) {
        gemm_tn_row(p, q, s, i, a, b, c + i * s, accumulate);
    }
}

void layer_norm_forward(std::size_t rows, std::size_t cols, const double* x,
                        const double* gain, const double* bias, double eps,
                        double* y, double* mean, double* inv_std) {
    for (std::size_t r = 0; r < rows; ++r) {
        layer_norm_row(cols, x + r * cols, gain, bias, eps, y + r * cols,
                       mean + r, inv_std + r);
    }
}

void layer_norm_backward(std::size_t rows, std::size_t cols, const double* x,
                         const double* gain, const double* mean,
                         const double* inv_std, const double* grad_y,
                         double* grad_x, double* grad_gain, double* grad_bias) {
    for (std::size_t r = 0; r < rows; ++r) {
        layer_norm_backward_row(cols, x + r * cols, gain, mean[r], inv_std[r],
                                grad_y + r * cols, grad_x + r * cols);
    }
    if (grad_gain != nullptr || grad_bias != nullptr) {
        for (std::size_t r = 0; r < rows; ++r) {
            const double* g_row = grad_y + r * cols;
            const double* x_row = x + r * cols;
            for (std::size_t j = 0; j < cols; ++j) {
                const double xhat = (x_row[j] - mean[r]) * inv_std[r];
                if (grad_gain) grad_gain[j] += g_row[j] * xhat;
                if (grad_bias) grad_bias[j] += g_row[j];
            }
        }
    }
}

void causal_softmax_forward(std::size_t t, const double* scores, double* probs) {
    for (std::size_t r = 0; r < t; ++r) {
        causal_softmax_row(t, r, scores + r * t, probs + r * t);
    }
}

void causal_softmax_backward(std::size_t t, const double* probs,
                             const double* grad_probs, double* grad_scores) {
    for (std::size_t r = 0; r < t; ++r) {
        causal_softmax_backward_row(t, r, probs + r * t, grad_probs + r * t,
                                    grad_scores + r * t);
    }
}

void log_softmax_forward(std::size_t rows, std::size_t cols, const double* x,
                         double* y) {
    for (std::size_t r = 0; r < rows; ++r) {
        log_softmax_row(cols, x + r * cols, y + r * cols);
    }
}

void log_softmax_backward(std::size_t rows, std::size_t cols, const double* y,
                          const double* grad_y, double* grad_x) {
    for (std::size_t r = 0; r < rows; ++r) {
        log_softmax_backward_row(cols, y + r * cols, grad_y + r * cols,
                                 grad_x + r * cols);
    }
}

}  // namespace serial

}  // namespace loralab::kernels
