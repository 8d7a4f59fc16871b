#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "loralab/adapter_io.hpp"
#include "loralab/init.hpp"
#include "loralab/kernels.hpp"
#include "loralab/linalg.hpp"
#include "loralab/model.hpp"
#include "loralab/rng.hpp"

using namespace loralab;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.vocab_size = 64;
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_ff = 24;
    cfg.max_seq = 32;
    cfg.adapter_rank = 2;
    cfg.adapter_alpha = 2.0;
    return cfg;
}

std::vector<int> probe_tokens() { return {3, 1, 4, 1, 5, 9, 2, 6}; }

double max_abs_logit_diff(const Model& a, const Model& b,
                          const std::vector<int>& tokens) {
    Tape ta(false), tb(false);
    const Tensor la = model_forward(ta, a, tokens);
    const Tensor lb = model_forward(tb, b, tokens);
    double worst = 0.0;
    for (std::size_t i = 0; i < la.numel(); ++i) {
        worst = std::max(worst, std::abs(la.data()[i] - lb.data()[i]));
    }
    return worst;
}

// (alpha/r) A B as a dense matrix.
std::vector<double> scaled_update(const LoraAdapter& ad) {
    std::vector<double> delta(ad.d_out() * ad.d_in(), 0.0);
    kernels::gemm_nn(ad.d_out(), ad.rank, ad.d_in(), ad.a.data().data(),
                     ad.b.data().data(), delta.data(), false);
    for (auto& x : delta) x *= ad.scaling();
    return delta;
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name)
        : path("/tmp/loralab_init_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("init spec validation ties checkpoints to d2lora") {
    InitSpec missing{InitScheme::d2lora, 0, ""};
    CHECK_THROWS_AS(missing.validate(), Error);
    InitSpec extra{InitScheme::vanilla, 0, "some.ckpt"};
    CHECK_THROWS_AS(extra.validate(), Error);
}

TEST_CASE("vanilla init: zero update, seeded, std near 0.02") {
    LoraAdapter ad;
    ad.rank = 4;
    ad.alpha = 4.0;
    ad.a = Tensor::zeros({64, 4});
    ad.b = Tensor::zeros({4, 2500});  // 10^4 draws for the std check

    init_vanilla_adapter(ad, 9);
    for (double x : ad.a.data()) CHECK(x == 0.0);
    for (double x : scaled_update(ad)) CHECK(x == 0.0);

    LoraAdapter again = ad.clone();
    init_vanilla_adapter(again, 9);
    CHECK(again.b.data() == ad.b.data());

    double sumsq = 0.0;
    for (double x : ad.b.data()) sumsq += x * x;
    const double std = std::sqrt(sumsq / static_cast<double>(ad.b.numel()));
    CHECK(std > 0.02 * 0.8);
    CHECK(std < 0.02 * 1.2);
}

TEST_CASE("kaiming init: zero update and fan_in bound") {
    LoraAdapter ad;
    ad.rank = 3;
    ad.alpha = 3.0;
    ad.a = Tensor::zeros({24, 3});
    ad.b = Tensor::zeros({3, 50});  // fan_in = d_in = 50

    init_kaiming_adapter(ad, 4);
    for (double x : ad.a.data()) CHECK(x == 0.0);
    const double bound = std::sqrt(6.0 / 50.0);
    bool any_above_dout_bound = false;
    const double dout_bound = std::sqrt(6.0 / 24.0);
    for (double x : ad.b.data()) {
        CHECK(std::abs(x) <= bound);
        any_above_dout_bound = any_above_dout_bound || std::abs(x) > dout_bound;
    }
    // values past sqrt(6/d_out) prove fan_in is the input width, not d_out
    CHECK(any_above_dout_bound);
}

TEST_CASE("rank bounds raise config errors") {
    LoraAdapter ad;
    ad.rank = 0;
    ad.alpha = 1.0;
    ad.a = Tensor::zeros({8, 0});
    ad.b = Tensor::zeros({0, 8});
    CHECK_THROWS_AS(init_vanilla_adapter(ad, 1), Error);

    Rng rng(5);
    std::vector<double> w(8 * 8);
    for (auto& x : w) x = rng.gaussian(0.0, 1.0);
    const Tensor wt = Tensor::from_data({8, 8}, w);
    CHECK_THROWS_AS(olora_factors(wt, 0, 1.0), Error);
    CHECK_THROWS_AS(pissa_factors(wt, 9, 1.0), Error);
}

TEST_CASE("pissa factors: truncation identity, residual, full-rank case") {
    Rng rng(12);
    std::vector<double> w_data(12 * 10);
    for (auto& x : w_data) x = rng.gaussian(0.0, 1.0);
    const Tensor w = Tensor::from_data({12, 10}, w_data);
    const std::size_t r = 3;
    const double alpha = 6.0;

    const FactoredInit f = pissa_factors(w, r, alpha);
    LoraAdapter ad;
    ad.rank = r;
    ad.alpha = alpha;
    ad.a = Tensor::from_data({12, r}, f.a);
    ad.b = Tensor::from_data({r, 10}, f.b);
    const auto update = scaled_update(ad);

    // Singular values of the scaled update equal the top-r of w.
    const auto svd_w = linalg::jacobi_svd(12, 10, w_data);
    const auto svd_u = linalg::jacobi_svd(12, 10, update);
    for (std::size_t i = 0; i < r; ++i) {
        CHECK(std::abs(svd_u.s[i] - svd_w.s[i]) < 1e-10);
    }
    for (std::size_t i = r; i < svd_u.k; ++i) {
        CHECK(svd_u.s[i] < 1e-10);
    }

    // Residual plus update reconstructs w within 1e-10 relative Frobenius.
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < w_data.size(); ++i) {
        const double d = f.residual[i] + update[i] - w_data[i];
        diff += d * d;
        norm += w_data[i] * w_data[i];
    }
    CHECK(std::sqrt(diff / norm) < 1e-10);

    // Full-rank truncation leaves a near-zero residual.
    const FactoredInit full = pissa_factors(w, 10, alpha);
    double res_norm = 0.0;
    for (double x : full.residual) res_norm += x * x;
    CHECK(std::sqrt(res_norm) / std::sqrt(norm) < 1e-10);
}

TEST_CASE("olora factors: orthogonal A columns scaled by r/alpha") {
    Rng rng(13);
    std::vector<double> w_data(16 * 16);
    for (auto& x : w_data) x = rng.gaussian(0.0, 1.0);
    const Tensor w = Tensor::from_data({16, 16}, w_data);
    const std::size_t r = 4;
    const double alpha = 8.0;

    const FactoredInit f = olora_factors(w, r, alpha);
    const double want_diag = static_cast<double>(r) / alpha;
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < r; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < 16; ++k) {
                dot += f.a[k * r + i] * f.a[k * r + j];
            }
            CHECK(std::abs(dot - (i == j ? want_diag : 0.0)) < 1e-10);
        }
    }
}

TEST_CASE("every scheme preserves the initial forward pass") {
    const ModelConfig cfg = tiny_config();
    const auto tokens = probe_tokens();

    for (InitScheme scheme : {InitScheme::vanilla, InitScheme::kaiming,
                              InitScheme::pissa, InitScheme::olora}) {
        Model reference = build_model(cfg, 77);
        Model model = reference.clone();
        apply_init(model, {scheme, 123, ""});
        const double diff = max_abs_logit_diff(reference, model, tokens);
        INFO(init_scheme_name(scheme));
        if (scheme == InitScheme::vanilla || scheme == InitScheme::kaiming) {
            CHECK(diff == 0.0);
        } else {
            CHECK(diff < 1e-9);
        }
    }
}

TEST_CASE("d2lora init: zero-step warm-up checkpoint equals vanilla init") {
    const ModelConfig cfg = tiny_config();
    Model source = build_model(cfg, 7);
    apply_init(source, {InitScheme::vanilla, 55, ""});
    TempFile ckpt("warm0.ckpt");
    save_adapters(source, ckpt.path, "zero-step warmup");

    Model direct = build_model(cfg, 7);
    apply_init(direct, {InitScheme::vanilla, 55, ""});

    Model loaded = build_model(cfg, 7);
    apply_init(loaded, {InitScheme::d2lora, 0, ckpt.path});

    for (std::size_t i = 0; i < direct.adapters.adapters.size(); ++i) {
        CHECK(loaded.adapters.adapters[i].a.data() ==
              direct.adapters.adapters[i].a.data());
        CHECK(loaded.adapters.adapters[i].b.data() ==
              direct.adapters.adapters[i].b.data());
    }
    CHECK(max_abs_logit_diff(loaded, source, probe_tokens()) == 0.0);
}

TEST_CASE("d2lora init: mismatched rank is a compat error naming the field") {
    const ModelConfig cfg = tiny_config();
    Model source = build_model(cfg, 7);
    TempFile ckpt("rank2.ckpt");
    save_adapters(source, ckpt.path);

    ModelConfig other = cfg;
    other.adapter_rank = 4;
    other.adapter_alpha = 4.0;
    Model target = build_model(other, 7);
    try {
        apply_init(target, {InitScheme::d2lora, 0, ckpt.path});
        FAIL("expected compat error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::compat);
        CHECK(std::string(e.what()).find("adapter_rank") != std::string::npos);
    }
}
