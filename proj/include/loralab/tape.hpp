#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "loralab/tensor.hpp"

namespace loralab {

// Reverse-mode tape. Ops compute the forward value immediately and, when the
// tape is recording, append a backward rule. backward() walks the rules once
// in reverse recording order; gradients accumulate additively across fan-out.
//
// Shape contracts (R = rows, C = cols, T = sequence length, V = vocab):
//   matmul      a[p x q], b[q x s]            -> [p x s]
//   matmul_nt   a[p x q], b[s x q]            -> [p x s]   (a * b^T)
//   add/sub/mul same shape                    -> same
//   add_rowvec  a[R x C], v[C]                -> [R x C]
//   scale/relu/sigmoid/log_/exp_  any shape   -> same
//   layer_norm  x[R x C], gain[C], bias[C]    -> [R x C]   (eps = 1e-5)
//   embedding_lookup  table[V x d], ids[T]    -> [T x d]
//   row_slice   x[R x C], r0 <= r1 <= R       -> [(r1-r0) x C]
//   col_slice   x[R x C], c0 <= c1 <= C       -> [R x (c1-c0)]
//   concat_cols parts each [R x Ci]           -> [R x sum(Ci)]
//   causal_softmax  scores[T x T]             -> [T x T]
//   log_softmax x[R x C]                      -> [R x C]
//   softmax_cross_entropy logits[T x V], targets[T], mask[T] -> scalar
//   gather_pairs x[R x C], rows[K], cols[K]   -> [K]
//   sum         any                           -> scalar
//   log_odds    scalar mean log-prob          -> scalar log(p/(1-p))
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return recording_; }
    std::size_t size() const { return entries_.size(); }

    Tensor matmul(const Tensor& a, const Tensor& b);
    Tensor matmul_nt(const Tensor& a, const Tensor& b);
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor add_rowvec(const Tensor& a, const Tensor& v);
    Tensor scale(const Tensor& a, double factor);
    Tensor relu(const Tensor& a);
    Tensor sigmoid(const Tensor& a);
    Tensor log_(const Tensor& a);
    Tensor exp_(const Tensor& a);
    Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);
    Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
    Tensor row_slice(const Tensor& x, std::size_t r0, std::size_t r1);
    Tensor col_slice(const Tensor& x, std::size_t c0, std::size_t c1);
    Tensor concat_cols(const std::vector<Tensor>& parts);
    Tensor causal_softmax(const Tensor& scores);
    Tensor log_softmax(const Tensor& x);
    Tensor softmax_cross_entropy(const Tensor& logits,
                                 const std::vector<int>& targets,
                                 const std::vector<int>& mask);
    Tensor gather_pairs(const Tensor& x, const std::vector<std::size_t>& rows,
                        const std::vector<std::size_t>& cols);
    Tensor sum(const Tensor& x);
    Tensor log_odds(const Tensor& mean_log_prob);

    // Seeds d loss / d loss = 1 and runs every recorded rule once, newest
    // first. A second call without reset() is a contract error.
    void backward(const Tensor& loss);

    void reset();

    static constexpr double kLayerNormEps = 1e-5;
    static constexpr double kProbClamp = 1e-12;

private:
    friend class TapeOpBuilder;

    Tensor make_output(Shape shape, std::vector<double> data);
    void record(std::function<void()> rule);

    static bool needs_grad(const Tensor& t) {
        return t.requires_grad() || t.tape_id() >= 0;
    }

    std::vector<std::function<void()>> entries_;
    bool recording_ = true;
    bool backward_done_ = false;
};

// Compares the tape's analytic gradients of a deterministic scalar function
// against central finite differences. Returns the maximum relative error with
// denominator max(|analytic|, |numeric|, 1e-12); non-finite comparisons come
// back as +infinity. eps must lie in [1e-7, 1e-4].
//
// coord_cap limits how many coordinates per input are probed (sampled
// deterministically from sample_seed); 0 means all coordinates.
double grad_check(
    const std::function<Tensor(Tape&, std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& inputs, double eps, std::size_t coord_cap = 0,
    std::uint64_t sample_seed = 0);

}  // namespace loralab
