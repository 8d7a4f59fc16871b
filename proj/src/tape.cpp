#include "loralab/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "loralab/kernels.hpp"
#include "loralab/rng.hpp"

namespace loralab {

namespace {

using detail::TensorNode;

bool node_needs_grad(const TensorNode* n) {
    return n->requires_grad || n->tape_id >= 0;
}

void ensure_grad(TensorNode* n) {
    if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
}

void require_matrix(const Tensor& t, const char* op) {
    if (t.ndim() != 2) {
        fail(ErrorKind::input, std::string(op) + ": expected a matrix, got " +
                                   shape_str(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        fail(ErrorKind::input, std::string(op) + ": shape mismatch " +
                                   shape_str(a.shape()) + " vs " +
                                   shape_str(b.shape()));
    }
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Tensor Tape::make_output(Shape shape, std::vector<double> data) {
    Tensor out = Tensor::from_data(std::move(shape), std::move(data));
    if (recording_) {
        out.node()->tape_id = static_cast<std::int64_t>(entries_.size());
        out.node()->tape = this;
    }
    return out;
}

void Tape::record(std::function<void()> rule) {
    if (recording_) entries_.push_back(std::move(rule));
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    if (a.cols() != b.rows()) {
        fail(ErrorKind::input, "matmul: inner dimensions disagree: " +
                                   shape_str(a.shape()) + " vs " +
                                   shape_str(b.shape()));
    }
    const std::size_t p = a.rows(), q = a.cols(), s = b.cols();
    std::vector<double> out(p * s);
    kernels::gemm_nn(p, q, s, a.data().data(), b.data().data(), out.data(),
                     false);
    Tensor c = make_output({p, s}, std::move(out));
    auto an = a.handle(), bn = b.handle(), cn = c.handle();
    record([an, bn, cn, p, q, s] {
        if (cn->grad.empty()) return;
        const double* g = cn->grad.data();
        if (node_needs_grad(an.get())) {
            ensure_grad(an.get());
            kernels::gemm_nt(p, s, q, g, bn->data.data(), an->grad.data(), true);
        }
        if (node_needs_grad(bn.get())) {
            ensure_grad(bn.get());
            kernels::gemm_tn(p, q, s, an->data.data(), g, bn->grad.data(), true);
        }
    });
    return c;
}

Tensor Tape::matmul_nt(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_nt");
    require_matrix(b, "matmul_nt");
    if (a.cols() != b.cols()) {
        fail(ErrorKind::input, "matmul_nt: inner dimensions disagree: " +
                                   shape_str(a.shape()) + " vs " +
                                   shape_str(b.shape()) + " transposed");
    }
    const std::size_t p = a.rows(), q = a.cols(), s = b.rows();
    std::vector<double> out(p * s);
    kernels::gemm_nt(p, q, s, a.data().data(), b.data().data(), out.data(),
                     false);
    Tensor c = make_output({p, s}, std::move(out));
    auto an = a.handle(), bn = b.handle(), cn = c.handle();
    record([an, bn, cn, p, q, s] {
        if (cn->grad.empty()) return;
        const double* g = cn->grad.data();
        if (node_needs_grad(an.get())) {
            ensure_grad(an.get());
            kernels::gemm_nn(p, s, q, g, bn->data.data(), an->grad.data(), true);
        }
        if (node_needs_grad(bn.get())) {
            ensure_grad(bn.get());
            kernels::gemm_tn(p, s, q, g, an->data.data(), bn->grad.data(), true);
        }
    });
    return c;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    Tensor c = make_output(a.shape(), std::move(out));
    auto an = a.handle(), bn = b.handle(), cn = c.handle();
    record([an, bn, cn] {
        if (cn->grad.empty()) return;
        const auto& g = cn->grad;
        if (node_needs_grad(an.get())) {
            ensure_grad(an.get());
            for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
        }
        if (node_needs_grad(bn.get())) {
            ensure_grad(bn.get());
            for (std::size_t i = 0; i < g.size(); ++i) bn->grad[i] += g[i];
        }
    });
    return c;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    Tensor c = make_output(a.shape(), std::move(out));
    auto an = a.handle(), bn = b.handle(), cn = c.handle();
    record([an, bn, cn] {
        if (cn->grad.empty()) return;
        const auto& g = cn->grad;
        if (node_needs_grad(an.get())) {
            ensure_grad(an.get());
            for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
        }
        if (node_needs_grad(bn.get())) {
            ensure_grad(bn.get());
            for (std::size_t i = 0; i < g.size(); ++i) bn->grad[i] -= g[i];
        }
    });
    return c;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    Tensor c = make_output(a.shape(), std::move(out));
    auto an = a.handle(), bn = b.handle(), cn = c.handle();
    record([an, bn, cn] {
        if (cn->grad.empty()) return;
        const auto& g = cn->grad;
        if (node_needs_grad(an.get())) {
            ensure_grad(an.get());
            for (std::size_t i = 0; i < g.size(); ++i)
                an->grad[i] += g[i] * bn->data[i];
        }
        if (node_needs_grad(bn.get())) {
            ensure_grad(bn.get());
            for (std::size_t i = 0; i < g.size(); ++i)
                bn->grad[i] += g[i] * an->data[i];
        }
    });
    return c;
}

Tensor Tape::add_rowvec(const Tensor& a, const Tensor& v) {
    require_matrix(a, "add_rowvec");
    if (v.ndim() != 1 || v.numel() != a.cols()) {
        fail(ErrorKind::input, "add_rowvec: vector " + shape_str(v.shape()) +
                                   " does not match row width of " +
                                   shape_str(a.shape()));
    }
    const std::size_t rows = a.rows(), cols = a.cols();
    std::vector<double> out(a.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < cols; ++j) {
            out[r * cols + j] = a.data()[r * cols + j] + v.data()[j];
        }
    }
    Tensor c = make_output(a.shape(), std::move(out));
    auto an = a.handle(), vn = v.handle(), cn = c.handle();
    record([an, vn, cn, rows, cols] {
        if (cn->grad.empty()) return;
        const auto& g = cn->grad;
        if (node_needs_grad(an.get())) {
            ensure_grad(an.get());
            for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
        }
        if (node_needs_grad(vn.get())) {
            ensure_grad(vn.get());
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < cols; ++j) {
                    vn->grad[j] += g[r * cols + j];
                }
            }
        }
    });
    return c;
}

Tensor Tape::scale(const Tensor& a, double factor) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * a.data()[i];
    Tensor c = make_output(a.shape(), std::move(out));
    auto an = a.handle(), cn = c.handle();
    record([an, cn, factor] {
        if (cn->grad.empty() || !node_needs_grad(an.get())) return;
        ensure_grad(an.get());
        for (std::size_t i = 0; i < cn->grad.size(); ++i)
            an->grad[i] += factor * cn->grad[i];
    });
    return c;
}

Tensor Tape::relu(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
    Tensor c = make_output(a.shape(), std::move(out));
    auto an = a.handle(), cn = c.handle();
    record([an, cn] {
        if (cn->grad.empty() || !node_needs_grad(an.get())) return;
        ensure_grad(an.get());
        for (std::size_t i = 0; i < cn->grad.size(); ++i) {
            if (an->data[i] > 0.0) an->grad[i] += cn->grad[i];
        }
    });
    return c;
}

Tensor Tape::sigmoid(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(a.data()[i]);
    Tensor c = make_output(a.shape(), std::move(out));
    auto an = a.handle(), cn = c.handle();
    record([an, cn] {
        if (cn->grad.empty() || !node_needs_grad(an.get())) return;
        ensure_grad(an.get());
        for (std::size_t i = 0; i < cn->grad.size(); ++i) {
            const double y = cn->data[i];
            an->grad[i] += cn->grad[i] * y * (1.0 - y);
        }
    });
    return c;
}

Tensor Tape::log_(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.data()[i]);
    Tensor c = make_output(a.shape(), std::move(out));
    auto an = a.handle(), cn = c.handle();
    record([an, cn] {
        if (cn->grad.empty() || !node_needs_grad(an.get())) return;
        ensure_grad(an.get());
        for (std::size_t i = 0; i < cn->grad.size(); ++i)
            an->grad[i] += cn->grad[i] / an->data[i];
    });
    return c;
}

Tensor Tape::exp_(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.data()[i]);
    Tensor c = make_output(a.shape(), std::move(out));
    auto an = a.handle(), cn = c.handle();
    record([an, cn] {
        if (cn->grad.empty() || !node_needs_grad(an.get())) return;
        ensure_grad(an.get());
        for (std::size_t i = 0; i < cn->grad.size(); ++i)
            an->grad[i] += cn->grad[i] * cn->data[i];
    });
    return c;
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
    require_matrix(x, "layer_norm");
    const std::size_t rows = x.rows(), cols = x.cols();
    if (gain.numel() != cols || bias.numel() != cols) {
        fail(ErrorKind::input, "layer_norm: gain/bias width must be " +
                                   std::to_string(cols));
    }
    std::vector<double> out(x.numel());
    auto mean = std::make_shared<std::vector<double>>(rows);
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    kernels::layer_norm_forward(rows, cols, x.data().data(), gain.data().data(),
                                bias.data().data(), kLayerNormEps, out.data(),
                                mean->data(), inv_std->data());
    Tensor y = make_output(x.shape(), std::move(out));
    auto xn = x.handle(), gn = gain.handle(), bn = bias.handle(), yn = y.handle();
    record([xn, gn, bn, yn, mean, inv_std, rows, cols] {
        if (yn->grad.empty()) return;
        const bool want_x = node_needs_grad(xn.get());
        const bool want_g = node_needs_grad(gn.get());
        const bool want_b = node_needs_grad(bn.get());
        if (!want_x && !want_g && !want_b) return;
        std::vector<double> scratch;
        double* gx = nullptr;
        if (want_x) {
            ensure_grad(xn.get());
            gx = xn->grad.data();
        } else {
            scratch.assign(rows * cols, 0.0);
            gx = scratch.data();
        }
        if (want_g) ensure_grad(gn.get());
        if (want_b) ensure_grad(bn.get());
        kernels::layer_norm_backward(rows, cols, xn->data.data(),
                                     gn->data.data(), mean->data(),
                                     inv_std->data(), yn->grad.data(), gx,
                                     want_g ? gn->grad.data() : nullptr,
                                     want_b ? bn->grad.data() : nullptr);
    });
    return y;
}

Tensor Tape::embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    require_matrix(table, "embedding_lookup");
    const std::size_t v = table.rows(), d = table.cols();
    for (std::size_t t = 0; t < ids.size(); ++t) {
        if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= v) {
            fail(ErrorKind::input, "embedding_lookup: id " +
                                       std::to_string(ids[t]) + " at position " +
                                       std::to_string(t) + " outside vocab " +
                                       std::to_string(v));
        }
    }
    std::vector<double> out(ids.size() * d);
    for (std::size_t t = 0; t < ids.size(); ++t) {
        std::memcpy(out.data() + t * d,
                    table.data().data() + static_cast<std::size_t>(ids[t]) * d,
                    d * sizeof(double));
    }
    Tensor y = make_output({ids.size(), d}, std::move(out));
    auto tn = table.handle(), yn = y.handle();
    record([tn, yn, ids, d] {
        if (yn->grad.empty() || !node_needs_grad(tn.get())) return;
        ensure_grad(tn.get());
        for (std::size_t t = 0; t < ids.size(); ++t) {
            double* dst = tn->grad.data() + static_cast<std::size_t>(ids[t]) * d;
            const double* src = yn->grad.data() + t * d;
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
    return y;
}

Tensor Tape::row_slice(const Tensor& x, std::size_t r0, std::size_t r1) {
    require_matrix(x, "row_slice");
    if (r0 > r1 || r1 > x.rows()) {
        fail(ErrorKind::contract, "row_slice: range [" + std::to_string(r0) +
                                      ", " + std::to_string(r1) +
                                      ") outside " + shape_str(x.shape()));
    }
    const std::size_t cols = x.cols(), n = r1 - r0;
    std::vector<double> out(n * cols);
    std::memcpy(out.data(), x.data().data() + r0 * cols,
                n * cols * sizeof(double));
    Tensor y = make_output({n, cols}, std::move(out));
    auto xn = x.handle(), yn = y.handle();
    record([xn, yn, r0, n, cols] {
        if (yn->grad.empty() || !node_needs_grad(xn.get())) return;
        ensure_grad(xn.get());
        for (std::size_t i = 0; i < n * cols; ++i)
            xn->grad[r0 * cols + i] += yn->grad[i];
    });
    return y;
}

Tensor Tape::col_slice(const Tensor& x, std::size_t c0, std::size_t c1) {
    require_matrix(x, "col_slice");
    if (c0 > c1 || c1 > x.cols()) {
        fail(ErrorKind::contract, "col_slice: range [" + std::to_string(c0) +
                                      ", " + std::to_string(c1) +
                                      ") outside " + shape_str(x.shape()));
    }
    const std::size_t rows = x.rows(), cols = x.cols(), n = c1 - c0;
    std::vector<double> out(rows * n);
    for (std::size_t r = 0; r < rows; ++r) {
        std::memcpy(out.data() + r * n, x.data().data() + r * cols + c0,
                    n * sizeof(double));
    }
    Tensor y = make_output({rows, n}, std::move(out));
    auto xn = x.handle(), yn = y.handle();
    record([xn, yn, c0, rows, cols, n] {
        if (yn->grad.empty() || !node_needs_grad(xn.get())) return;
        ensure_grad(xn.get());
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < n; ++j) {
                xn->grad[r * cols + c0 + j] += yn->grad[r * n + j];
            }
        }
    });
    return y;
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        fail(ErrorKind::contract, "concat_cols: no parts");
    }
    const std::size_t rows = parts[0].rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_matrix(p, "concat_cols");
        if (p.rows() != rows) {
            fail(ErrorKind::input, "concat_cols: row mismatch " +
                                       shape_str(p.shape()));
        }
        total += p.cols();
    }
    std::vector<double> out(rows * total);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t c = p.cols();
        for (std::size_t r = 0; r < rows; ++r) {
            std::memcpy(out.data() + r * total + offset,
                        p.data().data() + r * c, c * sizeof(double));
        }
        offset += c;
    }
    Tensor y = make_output({rows, total}, std::move(out));
    std::vector<std::shared_ptr<detail::TensorNode>> handles;
    handles.reserve(parts.size());
    for (const auto& p : parts) handles.push_back(p.handle());
    auto yn = y.handle();
    record([handles, yn, rows, total] {
        if (yn->grad.empty()) return;
        std::size_t offset = 0;
        for (const auto& h : handles) {
            const std::size_t c = h->shape[1];
            if (node_needs_grad(h.get())) {
                ensure_grad(h.get());
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < c; ++j) {
                        h->grad[r * c + j] += yn->grad[r * total + offset + j];
                    }
                }
            }
            offset += c;
        }
    });
    return y;
}

Tensor Tape::causal_softmax(const Tensor& scores) {
    require_matrix(scores, "causal_softmax");
    if (scores.rows() != scores.cols()) {
        fail(ErrorKind::input, "causal_softmax: scores must be square, got " +
                                   shape_str(scores.shape()));
    }
    const std::size_t t = scores.rows();
    std::vector<double> out(t * t);
    kernels::causal_softmax_forward(t, scores.data().data(), out.data());
    Tensor y = make_output(scores.shape(), std::move(out));
    auto sn = scores.handle(), yn = y.handle();
    record([sn, yn, t] {
        if (yn->grad.empty() || !node_needs_grad(sn.get())) return;
        ensure_grad(sn.get());
        kernels::causal_softmax_backward(t, yn->data.data(), yn->grad.data(),
                                         sn->grad.data());
    });
    return y;
}

Tensor Tape::log_softmax(const Tensor& x) {
    require_matrix(x, "log_softmax");
    const std::size_t rows = x.rows(), cols = x.cols();
    std::vector<double> out(x.numel());
    kernels::log_softmax_forward(rows, cols, x.data().data(), out.data());
    Tensor y = make_output(x.shape(), std::move(out));
    auto xn = x.handle(), yn = y.handle();
    record([xn, yn, rows, cols] {
        if (yn->grad.empty() || !node_needs_grad(xn.get())) return;
        ensure_grad(xn.get());
        kernels::log_softmax_backward(rows, cols, yn->data.data(),
                                      yn->grad.data(), xn->grad.data());
    });
    return y;
}

Tensor Tape::softmax_cross_entropy(const Tensor& logits,
                                   const std::vector<int>& targets,
                                   const std::vector<int>& mask) {
    require_matrix(logits, "softmax_cross_entropy");
    const std::size_t t = logits.rows(), v = logits.cols();
    if (targets.size() != t || mask.size() != t) {
        fail(ErrorKind::input,
             "softmax_cross_entropy: targets/mask length must equal " +
                 std::to_string(t));
    }
    std::size_t active = 0;
    for (std::size_t i = 0; i < t; ++i) {
        if (mask[i] != 0 && mask[i] != 1) {
            fail(ErrorKind::input, "softmax_cross_entropy: mask must be 0/1");
        }
        if (mask[i] == 1) {
            ++active;
            if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
                fail(ErrorKind::input, "softmax_cross_entropy: target " +
                                           std::to_string(targets[i]) +
                                           " outside vocab " + std::to_string(v));
            }
        }
    }
    if (active == 0) {
        fail(ErrorKind::data,
             "softmax_cross_entropy: degenerate batch, loss mask is all zeros");
    }
    for (double x : logits.data()) {
        if (!std::isfinite(x)) {
            fail(ErrorKind::numeric, "softmax_cross_entropy: non-finite logit");
        }
    }
    auto ls = std::make_shared<std::vector<double>>(t * v);
    kernels::log_softmax_forward(t, v, logits.data().data(), ls->data());
    double total = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
        if (mask[i] == 1) {
            total -= (*ls)[i * v + static_cast<std::size_t>(targets[i])];
        }
    }
    const double inv_count = 1.0 / static_cast<double>(active);
    Tensor loss = make_output({1}, {total * inv_count});
    auto ln = logits.handle(), on = loss.handle();
    record([ln, on, ls, targets, mask, t, v, inv_count] {
        if (on->grad.empty() || !node_needs_grad(ln.get())) return;
        ensure_grad(ln.get());
        const double g = on->grad[0] * inv_count;
        for (std::size_t i = 0; i < t; ++i) {
            if (mask[i] != 1) continue;
            double* row = ln->grad.data() + i * v;
            const double* ls_row = ls->data() + i * v;
            for (std::size_t j = 0; j < v; ++j) {
                row[j] += g * std::exp(ls_row[j]);
            }
            row[static_cast<std::size_t>(targets[i])] -= g;
        }
    });
    return loss;
}

Tensor Tape::gather_pairs(const Tensor& x, const std::vector<std::size_t>& rows,
                          const std::vector<std::size_t>& cols) {
    require_matrix(x, "gather_pairs");
    if (rows.size() != cols.size()) {
        fail(ErrorKind::input, "gather_pairs: rows/cols length mismatch");
    }
    const std::size_t r = x.rows(), c = x.cols(), k = rows.size();
    std::vector<double> out(k);
    for (std::size_t i = 0; i < k; ++i) {
        if (rows[i] >= r || cols[i] >= c) {
            fail(ErrorKind::input, "gather_pairs: index (" +
                                       std::to_string(rows[i]) + ", " +
                                       std::to_string(cols[i]) + ") outside " +
                                       shape_str(x.shape()));
        }
        out[i] = x.data()[rows[i] * c + cols[i]];
    }
    Tensor y = make_output({k}, std::move(out));
    auto xn = x.handle(), yn = y.handle();
    record([xn, yn, rows, cols, c] {
        if (yn->grad.empty() || !node_needs_grad(xn.get())) return;
        ensure_grad(xn.get());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            xn->grad[rows[i] * c + cols[i]] += yn->grad[i];
        }
    });
    return y;
}

Tensor Tape::sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) total += v;
    Tensor y = make_output({1}, {total});
    auto xn = x.handle(), yn = y.handle();
    record([xn, yn] {
        if (yn->grad.empty() || !node_needs_grad(xn.get())) return;
        ensure_grad(xn.get());
        const double g = yn->grad[0];
        for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += g;
    });
    return y;
}

Tensor Tape::log_odds(const Tensor& mean_log_prob) {
    if (!mean_log_prob.is_scalar()) {
        fail(ErrorKind::contract, "log_odds: expected a scalar, got " +
                                      shape_str(mean_log_prob.shape()));
    }
    const double lo = std::log(kProbClamp);
    const double hi = std::log1p(-kProbClamp);
    const double lp_raw = mean_log_prob.data()[0];
    const double lp = std::min(std::max(lp_raw, lo), hi);
    const bool clamped = lp != lp_raw;
    const double p = std::exp(lp);
    const double z = lp - std::log1p(-p);
    Tensor y = make_output({1}, {z});
    auto xn = mean_log_prob.handle(), yn = y.handle();
    record([xn, yn, p, clamped] {
        if (yn->grad.empty() || !node_needs_grad(xn.get()) || clamped) return;
        ensure_grad(xn.get());
        xn->grad[0] += yn->grad[0] / (1.0 - p);
    });
    return y;
}

void Tape::backward(const Tensor& loss) {
    if (!recording_) {
        fail(ErrorKind::contract, "backward: tape is not recording");
    }
    if (!loss.is_scalar()) {
        fail(ErrorKind::contract,
             "backward: loss must be a scalar, got " + shape_str(loss.shape()));
    }
    if (loss.node()->tape != this) {
        fail(ErrorKind::contract, "backward: loss was not recorded on this tape");
    }
    if (backward_done_) {
        fail(ErrorKind::contract,
             "backward: called twice without reset; double-backward is "
             "unsupported");
    }
    backward_done_ = true;
    loss.node()->grad.assign(1, 1.0);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

void Tape::reset() {
    entries_.clear();
    backward_done_ = false;
}

double grad_check(const std::function<Tensor(Tape&, std::vector<Tensor>&)>& f,
                  const std::vector<Tensor>& inputs, double eps,
                  std::size_t coord_cap, std::uint64_t sample_seed) {
    if (!(eps >= 1e-7 && eps <= 1e-4)) {
        fail(ErrorKind::contract, "grad_check: eps must lie in [1e-7, 1e-4]");
    }

    std::vector<Tensor> work;
    work.reserve(inputs.size());
    for (const auto& in : inputs) {
        Tensor t = in.detach();
        t.set_requires_grad(true);
        work.push_back(t);
    }
    Tape tape;
    Tensor loss = f(tape, work);
    if (!loss.is_scalar()) {
        fail(ErrorKind::contract, "grad_check: f must return a scalar");
    }
    if (loss.tape_id() >= 0) {
        tape.backward(loss);
    }
    std::vector<std::vector<double>> analytic;
    for (auto& t : work) {
        analytic.push_back(t.has_grad() ? t.grad()
                                        : std::vector<double>(t.numel(), 0.0));
    }

    const auto eval = [&](std::size_t which, std::size_t coord, double delta) {
        std::vector<Tensor> probe;
        probe.reserve(inputs.size());
        for (const auto& in : inputs) probe.push_back(in.detach());
        probe[which].mutable_data()[coord] += delta;
        Tape fwd(false);
        return f(fwd, probe).item();
    };

    double max_rel = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const std::size_t n = inputs[i].numel();
        std::vector<std::size_t> coords;
        if (coord_cap == 0 || coord_cap >= n) {
            coords.resize(n);
            for (std::size_t k = 0; k < n; ++k) coords[k] = k;
        } else {
            std::vector<std::size_t> all(n);
            for (std::size_t k = 0; k < n; ++k) all[k] = k;
            Rng rng(Rng::mix(sample_seed, i + 1));
            rng.shuffle(all);
            coords.assign(all.begin(),
                          all.begin() + static_cast<std::ptrdiff_t>(coord_cap));
        }
        for (std::size_t k : coords) {
            const double fp = eval(i, k, eps);
            const double fm = eval(i, k, -eps);
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[i][k];
            double rel;
            if (!std::isfinite(numeric) || !std::isfinite(a)) {
                rel = std::numeric_limits<double>::infinity();
            } else {
                rel = std::abs(a - numeric) /
                      std::max({std::abs(a), std::abs(numeric), 1e-12});
            }
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace loralab
