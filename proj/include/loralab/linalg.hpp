#pragma once

#include <cstddef>
#include <vector>

namespace loralab::linalg {

// Thin SVD, M = U * diag(S) * V^T with k = min(m, n).
// U is m x k and V is n x k, both column-orthonormal; S is non-negative and
// descending. Columns of U paired with zero singular values are filled by a
// deterministic orthonormal completion.
struct SvdResult {
    std::size_t m = 0, n = 0, k = 0;
    std::vector<double> u;  // m x k, row-major
    std::vector<double> s;  // k
    std::vector<double> v;  // n x k, row-major
};

// One-sided Jacobi, tolerance 1e-12 on the relative off-diagonal residual,
// capped at 100 sweeps (numeric error past the cap, reporting the residual).
SvdResult jacobi_svd(std::size_t m, std::size_t n, const std::vector<double>& a);

// Thin QR via Householder reflections, M = Q * R with k = min(m, n).
// Q is m x k with orthonormal columns; R is k x n with exact zeros below the
// diagonal. Columns already in triangular form are left unreflected, so
// Q = R = I for an identity input.
struct QrResult {
    std::size_t m = 0, n = 0, k = 0;
    std::vector<double> q;  // m x k, row-major
    std::vector<double> r;  // k x n, row-major
};

QrResult householder_qr(std::size_t m, std::size_t n, const std::vector<double>& a);

}  // namespace loralab::linalg
