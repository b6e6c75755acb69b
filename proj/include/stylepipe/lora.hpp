#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stylepipe/rng.hpp"
#include "stylepipe/tensor.hpp"

namespace stylepipe {

// Low-rank update attached to one projection: delta(z) = scale * (z A^T) B^T.
// A is [r,d] drawn from N(0, 1/r); B is [d,r] and starts at zero so a fresh
// adapter is an exact no-op.
struct LoraMats {
    Tensor a;  // [r, d]
    Tensor b;  // [d, r]
};

struct LoraBlock {
    LoraMats q, k, v;
};

// Adapters exist only for the self-attention Q/K/V projections of context
// blocks; main blocks and cross-attention never carry them.
struct LoraSet {
    int rank = 0;
    real scale = real(1);
    std::vector<LoraBlock> blocks;  // one per context block

    static LoraSet init(int context_blocks, int d_model, int rank, Rng& rng, real scale = real(1));

    std::vector<std::pair<std::string, Tensor>> named_params() const;
    void set_requires_grad(bool on);
};

Tensor apply_delta(const Tensor& z, const Tensor& a, const Tensor& b, real scale);

// Returns W + scale * (B A) folded into the row-vector convention used by
// the network (activations are rows, y = z W), so forward passes with the
// merged matrix match the dynamic-delta path.
Tensor merge_weights(const Tensor& base, const Tensor& a, const Tensor& b, real scale);

}  // namespace stylepipe
