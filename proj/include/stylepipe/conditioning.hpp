#pragma once

#include <vector>

#include "stylepipe/rng.hpp"
#include "stylepipe/tensor.hpp"

namespace stylepipe {

// reserved style id for the classifier-free null condition
constexpr int kNullStyleId = 0;

// Conditioning triple: a style label in place of a text prompt, frames in
// [-1,1], and a binary reactive mask. concat stacks the reactive half
// (F * M) and the inactive half (F * (1-M)) along the channel axis.
struct ConditionUnit {
    int style_id = kNullStyleId;
    Tensor frames;  // [T,H,W,C]
    Tensor mask;    // [T,H,W] of {0,1}
    Tensor concat;  // [T,H,W,2C]
};

enum class MaskMode { all_reactive, custom };

ConditionUnit build_vcu(const Tensor& frames, int style_id,
                        MaskMode mode = MaskMode::all_reactive, const Tensor* custom_mask = nullptr);

// independent uniform permutations of the frame/row/column axes
struct PermTriple {
    std::vector<int64_t> t, h, w;
};

PermTriple draw_permutation(int64_t T, int64_t H, int64_t W, Rng& rng);
PermTriple identity_permutation(int64_t T, int64_t H, int64_t W);
PermTriple inverse_permutation(const PermTriple& p);

// re-indexes frames and mask by the triple, rebuilds concat, forces the
// null style id
ConditionUnit apply_permutation(const ConditionUnit& cond, const PermTriple& perm);
ConditionUnit permute_null_context(const ConditionUnit& cond, Rng& rng);

ConditionUnit with_style(const ConditionUnit& cond, int style_id);

}  // namespace stylepipe
