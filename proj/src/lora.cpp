#include "stylepipe/lora.hpp"

#include <cmath>

namespace stylepipe {

LoraSet LoraSet::init(int context_blocks, int d_model, int rank, Rng& rng, real scale) {
    if (rank >= d_model)
        throw ConfigError("lora rank " + std::to_string(rank) + " must be < d_model " +
                          std::to_string(d_model));
    if (rank < 1) throw ConfigError("lora rank must be >= 1");
    LoraSet set;
    set.rank = rank;
    set.scale = scale;
    const real a_std = real(1) / std::sqrt(static_cast<real>(rank));
    for (int i = 0; i < context_blocks; ++i) {
        LoraBlock blk;
        for (LoraMats* m : {&blk.q, &blk.k, &blk.v}) {
            m->a = Tensor::randn({rank, d_model}, rng, a_std);
            m->b = Tensor::zeros({d_model, rank});
        }
        set.blocks.push_back(std::move(blk));
    }
    return set;
}

std::vector<std::pair<std::string, Tensor>> LoraSet::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (size_t i = 0; i < blocks.size(); ++i) {
        const std::string base = "lora.ctx" + std::to_string(i) + ".";
        const char* proj[3] = {"q", "k", "v"};
        const LoraMats* mats[3] = {&blocks[i].q, &blocks[i].k, &blocks[i].v};
        for (int p = 0; p < 3; ++p) {
            out.emplace_back(base + proj[p] + ".a", mats[p]->a);
            out.emplace_back(base + proj[p] + ".b", mats[p]->b);
        }
    }
    return out;
}

void LoraSet::set_requires_grad(bool on) {
    for (auto& [name, t] : named_params()) {
        (void)name;
        Tensor(t).set_requires_grad(on);
    }
}

Tensor apply_delta(const Tensor& z, const Tensor& a, const Tensor& b, real scale) {
    if (a.rank() != 2 || b.rank() != 2 || a.extent(0) != b.extent(1) ||
        a.extent(1) != b.extent(0))
        throw DimensionError("apply_delta: A " + shape_str(a.shape()) + " and B " +
                             shape_str(b.shape()) + " are not [r,d]/[d,r]");
    if (a.extent(0) >= a.extent(1)) throw ConfigError("apply_delta: rank must be < d");
    Tensor za = matmul(z, permute(a, {1, 0}));      // [tokens, r]
    Tensor delta = matmul(za, permute(b, {1, 0}));  // [tokens, d]
    return scale == real(1) ? delta : stylepipe::scale(delta, scale);
}

Tensor merge_weights(const Tensor& base, const Tensor& a, const Tensor& b, real scale) {
    // base is [d_in, d_out] for y = z W; the update in that convention is
    // A^T B^T, the transpose of B A.
    Tensor update = matmul(permute(a, {1, 0}), permute(b, {1, 0}));
    return add(base, stylepipe::scale(update, scale));
}

}  // namespace stylepipe
