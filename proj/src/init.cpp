#include "loralab/init.hpp"

#include <cmath>

#include "loralab/adapter_io.hpp"
#include "loralab/kernels.hpp"
#include "loralab/linalg.hpp"
#include "loralab/rng.hpp"

namespace loralab {

namespace {

constexpr double kVanillaStd = 0.02;

void require_rank(const LoraAdapter& ad) {
    if (ad.rank < 1 || ad.rank > std::min(ad.d_out(), ad.d_in())) {
        fail(ErrorKind::config,
             "adapter rank " + std::to_string(ad.rank) + " outside [1, " +
                 std::to_string(std::min(ad.d_out(), ad.d_in())) + "] for " +
                 ad.tag());
    }
}

std::vector<double> scaled_product_residual(const Tensor& w,
                                            const std::vector<double>& a,
                                            const std::vector<double>& b,
                                            std::size_t d_out, std::size_t r,
                                            std::size_t d_in, double alpha) {
    std::vector<double> delta(d_out * d_in, 0.0);
    kernels::gemm_nn(d_out, r, d_in, a.data(), b.data(), delta.data(), false);
    const double s = alpha / static_cast<double>(r);
    std::vector<double> residual = w.data();
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i] -= s * delta[i];
    return residual;
}

}  // namespace

const char* init_scheme_name(InitScheme scheme) {
    switch (scheme) {
        case InitScheme::vanilla: return "vanilla";
        case InitScheme::kaiming: return "kaiming";
        case InitScheme::pissa: return "pissa";
        case InitScheme::olora: return "olora";
        case InitScheme::d2lora: return "d2lora";
    }
    return "unknown";
}

InitScheme init_scheme_from_name(const std::string& name) {
    if (name == "vanilla") return InitScheme::vanilla;
    if (name == "kaiming") return InitScheme::kaiming;
    if (name == "pissa") return InitScheme::pissa;
    if (name == "olora") return InitScheme::olora;
    if (name == "d2lora") return InitScheme::d2lora;
    fail(ErrorKind::config, "unknown init scheme '" + name + "'");
}

void InitSpec::validate() const {
    if (scheme == InitScheme::d2lora && source_checkpoint.empty()) {
        fail(ErrorKind::config, "d2lora init requires a source checkpoint");
    }
    if (scheme != InitScheme::d2lora && !source_checkpoint.empty()) {
        fail(ErrorKind::config,
             std::string(init_scheme_name(scheme)) +
                 " init does not take a source checkpoint");
    }
}

void init_vanilla_adapter(LoraAdapter& adapter, std::uint64_t seed) {
    require_rank(adapter);
    Rng rng(Rng::mix(seed, 0x0A11));
    auto& a = adapter.a.mutable_data();
    std::fill(a.begin(), a.end(), 0.0);
    for (double& x : adapter.b.mutable_data()) {
        x = rng.gaussian(0.0, kVanillaStd);
    }
}

void init_kaiming_adapter(LoraAdapter& adapter, std::uint64_t seed) {
    require_rank(adapter);
    Rng rng(Rng::mix(seed, 0x4A13));
    auto& a = adapter.a.mutable_data();
    std::fill(a.begin(), a.end(), 0.0);
    const double bound = std::sqrt(6.0 / static_cast<double>(adapter.d_in()));
    for (double& x : adapter.b.mutable_data()) {
        x = rng.uniform_range(-bound, bound);
    }
}

FactoredInit pissa_factors(const Tensor& w, std::size_t r, double alpha) {
    const std::size_t d_out = w.rows(), d_in = w.cols();
    if (r < 1 || r > std::min(d_out, d_in)) {
        fail(ErrorKind::config, "pissa: rank " + std::to_string(r) +
                                    " outside [1, " +
                                    std::to_string(std::min(d_out, d_in)) + "]");
    }
    const auto svd = linalg::jacobi_svd(d_out, d_in, w.data());
    const double scale = std::sqrt(static_cast<double>(r) / alpha);

    FactoredInit out;
    out.a.assign(d_out * r, 0.0);
    out.b.assign(r * d_in, 0.0);
    for (std::size_t j = 0; j < r; ++j) {
        const double root = std::sqrt(svd.s[j]);
        for (std::size_t i = 0; i < d_out; ++i) {
            out.a[i * r + j] = svd.u[i * svd.k + j] * root * scale;
        }
        for (std::size_t c = 0; c < d_in; ++c) {
            out.b[j * d_in + c] = root * svd.v[c * svd.k + j] * scale;
        }
    }
    out.residual = scaled_product_residual(w, out.a, out.b, d_out, r, d_in, alpha);
    return out;
}

FactoredInit olora_factors(const Tensor& w, std::size_t r, double alpha) {
    const std::size_t d_out = w.rows(), d_in = w.cols();
    if (r < 1 || r > std::min(d_out, d_in)) {
        fail(ErrorKind::config, "olora: rank " + std::to_string(r) +
                                    " outside [1, " +
                                    std::to_string(std::min(d_out, d_in)) + "]");
    }
    const auto qr = linalg::householder_qr(d_out, d_in, w.data());
    const double scale = std::sqrt(static_cast<double>(r) / alpha);

    FactoredInit out;
    out.a.assign(d_out * r, 0.0);
    out.b.assign(r * d_in, 0.0);
    for (std::size_t i = 0; i < d_out; ++i) {
        for (std::size_t j = 0; j < r; ++j) {
            out.a[i * r + j] = qr.q[i * qr.k + j] * scale;
        }
    }
    for (std::size_t j = 0; j < r; ++j) {
        for (std::size_t c = 0; c < d_in; ++c) {
            out.b[j * d_in + c] = qr.r[j * d_in + c] * scale;
        }
    }
    out.residual = scaled_product_residual(w, out.a, out.b, d_out, r, d_in, alpha);
    return out;
}

void apply_init(Model& model, const InitSpec& spec) {
    spec.validate();
    if (spec.scheme == InitScheme::d2lora) {
        const AdapterCheckpoint ckpt = load_adapters(spec.source_checkpoint);
        attach_adapters(model, ckpt);
        return;
    }
    std::size_t idx = 0;
    for (auto& ad : model.adapters.adapters) {
        const std::uint64_t adapter_seed = Rng::mix(spec.seed, idx++);
        switch (spec.scheme) {
            case InitScheme::vanilla:
                init_vanilla_adapter(ad, adapter_seed);
                break;
            case InitScheme::kaiming:
                init_kaiming_adapter(ad, adapter_seed);
                break;
            case InitScheme::pissa: {
                Tensor& w = model.base.layers[ad.layer].linear(ad.role).w;
                FactoredInit f = pissa_factors(w, ad.rank, ad.alpha);
                ad.a.mutable_data() = std::move(f.a);
                ad.b.mutable_data() = std::move(f.b);
                w.mutable_data() = std::move(f.residual);
                break;
            }
            case InitScheme::olora: {
                Tensor& w = model.base.layers[ad.layer].linear(ad.role).w;
                FactoredInit f = olora_factors(w, ad.rank, ad.alpha);
                ad.a.mutable_data() = std::move(f.a);
                ad.b.mutable_data() = std::move(f.b);
                w.mutable_data() = std::move(f.residual);
                break;
            }
            case InitScheme::d2lora:
                break;  // handled above
        }
    }
}

}  // namespace loralab
