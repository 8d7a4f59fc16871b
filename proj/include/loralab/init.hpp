#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loralab/model.hpp"

namespace loralab {

enum class InitScheme { vanilla, kaiming, pissa, olora, d2lora };

const char* init_scheme_name(InitScheme scheme);
InitScheme init_scheme_from_name(const std::string& name);

struct InitSpec {
    InitScheme scheme = InitScheme::vanilla;
    std::uint64_t seed = 0;
    std::string source_checkpoint;  // required iff scheme == d2lora

    void validate() const;
};

// B ~ Gaussian(0, 0.02^2), A = 0, so the initial update is exactly zero.
void init_vanilla_adapter(LoraAdapter& adapter, std::uint64_t seed);

// B ~ Uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)) with fan_in = d_in, A = 0.
void init_kaiming_adapter(LoraAdapter& adapter, std::uint64_t seed);

// Factor pairs plus the residual that replaces the base weight so the layer
// function is unchanged at init.
struct FactoredInit {
    std::vector<double> a;         // d_out x r
    std::vector<double> b;         // r x d_in
    std::vector<double> residual;  // d_out x d_in
};

// A = U_r sqrt(S_r) sqrt(r/alpha), B = sqrt(S_r) V_r^T sqrt(r/alpha);
// (alpha/r) A B is the top-r SVD truncation of w.
FactoredInit pissa_factors(const Tensor& w, std::size_t r, double alpha);

// A = Q_r sqrt(r/alpha), B = R_r sqrt(r/alpha) from the Householder QR of w.
FactoredInit olora_factors(const Tensor& w, std::size_t r, double alpha);

// Applies the scheme to every adapter in the model. PiSSA/OLoRA also replace
// the adapted base weights with their residuals; d2lora loads the checkpoint
// named by the spec.
void apply_init(Model& model, const InitSpec& spec);

}  // namespace loralab
