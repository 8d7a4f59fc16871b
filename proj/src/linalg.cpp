#include "loralab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "loralab/error.hpp"

namespace loralab::linalg {

namespace {

constexpr double kJacobiTol = 1e-12;
constexpr int kJacobiMaxSweeps = 100;

double column_dot(const std::vector<double>& g, std::size_t rows,
                  std::size_t cols, std::size_t ci, std::size_t cj) {
    double acc = 0.0;
    for (std::size_t r = 0; r < rows; ++r) acc += g[r * cols + ci] * g[r * cols + cj];
    return acc;
}

// Fill U columns whose singular value is zero with unit vectors orthogonal to
// every other column. Candidates are the standard basis vectors; the one with
// the largest residual after projection wins, which keeps the choice
// deterministic.
void complete_orthonormal(std::vector<double>& u, std::size_t m, std::size_t k,
                          const std::vector<bool>& filled) {
    for (std::size_t j = 0; j < k; ++j) {
        if (filled[j]) continue;
        std::vector<double> best(m, 0.0);
        double best_norm = -1.0;
        for (std::size_t cand = 0; cand < m; ++cand) {
            std::vector<double> w(m, 0.0);
            w[cand] = 1.0;
            for (std::size_t c = 0; c < k; ++c) {
                if (c == j || (!filled[c] && c > j)) continue;
                double proj = 0.0;
                for (std::size_t r = 0; r < m; ++r) proj += w[r] * u[r * k + c];
                for (std::size_t r = 0; r < m; ++r) w[r] -= proj * u[r * k + c];
            }
            double norm = std::sqrt(
                std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
            if (norm > best_norm) {
                best_norm = norm;
                best = std::move(w);
            }
        }
        for (std::size_t r = 0; r < m; ++r) u[r * k + j] = best[r] / best_norm;
    }
}

SvdResult jacobi_svd_tall(std::size_t m, std::size_t n,
                          const std::vector<double>& a) {
    // m >= n here; G starts as A and its columns are rotated until mutually
    // orthogonal, V accumulates the rotations: A = G_final * V^T.
    std::vector<double> g = a;
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

    double residual = 0.0;
    bool converged = (n <= 1);
    for (int sweep = 0; sweep < kJacobiMaxSweeps && !converged; ++sweep) {
        converged = true;
        residual = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double alpha = column_dot(g, m, n, i, i);
                const double beta = column_dot(g, m, n, j, j);
                const double gamma = column_dot(g, m, n, i, j);
                const double scale = std::sqrt(alpha * beta);
                if (scale == 0.0) continue;
                const double rel = std::abs(gamma) / scale;
                residual = std::max(residual, rel);
                if (rel <= kJacobiTol) continue;
                converged = false;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t =
                    (zeta >= 0.0 ? 1.0 : -1.0) /
                    (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t r = 0; r < m; ++r) {
                    const double gi = g[r * n + i];
                    const double gj = g[r * n + j];
                    g[r * n + i] = c * gi - s * gj;
                    g[r * n + j] = s * gi + c * gj;
                }
                for (std::size_t r = 0; r < n; ++r) {
                    const double vi = v[r * n + i];
                    const double vj = v[r * n + j];
                    v[r * n + i] = c * vi - s * vj;
                    v[r * n + j] = s * vi + c * vj;
                }
            }
        }
    }
    if (!converged) {
        fail(ErrorKind::numeric,
             "jacobi_svd: no convergence after " +
                 std::to_string(kJacobiMaxSweeps) +
                 " sweeps; off-diagonal residual " + std::to_string(residual));
    }

    SvdResult out;
    out.m = m;
    out.n = n;
    out.k = n;
    out.s.assign(n, 0.0);
    out.u.assign(m * n, 0.0);
    out.v = std::move(v);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
        out.s[i] = std::sqrt(column_dot(g, m, n, i, i));
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return out.s[x] > out.s[y];
    });

    std::vector<double> s_sorted(n);
    std::vector<double> u_sorted(m * n, 0.0);
    std::vector<double> v_sorted(n * n, 0.0);
    std::vector<bool> filled(n, false);
    for (std::size_t c = 0; c < n; ++c) {
        const std::size_t src = order[c];
        s_sorted[c] = out.s[src];
        for (std::size_t r = 0; r < n; ++r) v_sorted[r * n + c] = out.v[r * n + src];
        if (s_sorted[c] > 0.0) {
            const double inv = 1.0 / s_sorted[c];
            for (std::size_t r = 0; r < m; ++r)
                u_sorted[r * n + c] = g[r * n + src] * inv;
            filled[c] = true;
        }
    }
    complete_orthonormal(u_sorted, m, n, filled);
    out.s = std::move(s_sorted);
    out.u = std::move(u_sorted);
    out.v = std::move(v_sorted);
    return out;
}

}  // namespace

SvdResult jacobi_svd(std::size_t m, std::size_t n, const std::vector<double>& a) {
    if (m == 0 || n == 0 || a.size() != m * n) {
        fail(ErrorKind::contract, "jacobi_svd: bad dimensions");
    }
    for (double x : a) {
        if (!std::isfinite(x)) {
            fail(ErrorKind::numeric, "jacobi_svd: non-finite entry");
        }
    }
    if (m >= n) return jacobi_svd_tall(m, n, a);

    // Wide input: factor the transpose and swap the singular bases.
    std::vector<double> at(n * m);
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) at[c * m + r] = a[r * n + c];
    }
    SvdResult t = jacobi_svd_tall(n, m, at);
    SvdResult out;
    out.m = m;
    out.n = n;
    out.k = t.k;
    out.s = std::move(t.s);
    out.u = std::move(t.v);  // m x k
    out.v = std::move(t.u);  // n x k
    return out;
}

QrResult householder_qr(std::size_t m, std::size_t n,
                        const std::vector<double>& a) {
    if (m == 0 || n == 0 || a.size() != m * n) {
        fail(ErrorKind::contract, "householder_qr: bad dimensions");
    }
    for (double x : a) {
        if (!std::isfinite(x)) {
            fail(ErrorKind::numeric, "householder_qr: non-finite entry");
        }
    }
    const std::size_t k = std::min(m, n);
    std::vector<double> r = a;                   // m x n working copy
    std::vector<std::vector<double>> reflectors;  // unit v per column, may be empty
    reflectors.reserve(k);

    for (std::size_t j = 0; j < k; ++j) {
        double below = 0.0;
        for (std::size_t i = j + 1; i < m; ++i) below += r[i * n + j] * r[i * n + j];
        if (below == 0.0) {
            reflectors.emplace_back();  // column already triangular
            continue;
        }
        const double x0 = r[j * n + j];
        const double norm = std::sqrt(x0 * x0 + below);
        const double alpha = (x0 >= 0.0 ? -norm : norm);
        std::vector<double> v(m - j, 0.0);
        v[0] = x0 - alpha;
        for (std::size_t i = j + 1; i < m; ++i) v[i - j] = r[i * n + j];
        const double vnorm = std::sqrt(
            std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        for (double& x : v) x /= vnorm;
        for (std::size_t c = j; c < n; ++c) {
            double w = 0.0;
            for (std::size_t i = j; i < m; ++i) w += v[i - j] * r[i * n + c];
            w *= 2.0;
            for (std::size_t i = j; i < m; ++i) r[i * n + c] -= w * v[i - j];
        }
        r[j * n + j] = alpha;
        reflectors.push_back(std::move(v));
    }
    // Zeros below the diagonal are exact by construction.
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t i = j + 1; i < m; ++i) r[i * n + j] = 0.0;
    }

    // Q = H_0 ... H_{k-1} applied to the first k columns of the identity.
    std::vector<double> q(m * k, 0.0);
    for (std::size_t i = 0; i < k; ++i) q[i * k + i] = 1.0;
    for (std::size_t jj = k; jj-- > 0;) {
        const auto& v = reflectors[jj];
        if (v.empty()) continue;
        for (std::size_t c = 0; c < k; ++c) {
            double w = 0.0;
            for (std::size_t i = jj; i < m; ++i) w += v[i - jj] * q[i * k + c];
            w *= 2.0;
            for (std::size_t i = jj; i < m; ++i) q[i * k + c] -= w * v[i - jj];
        }
    }

    QrResult out;
    out.m = m;
    out.n = n;
    out.k = k;
    out.q = std::move(q);
    out.r.assign(k * n, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t c = 0; c < n; ++c) out.r[i * n + c] = r[i * n + c];
    }
    return out;
}

}  // namespace loralab::linalg
