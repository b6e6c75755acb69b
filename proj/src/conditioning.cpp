#include "stylepipe/conditioning.hpp"

#include <cmath>

namespace stylepipe {

namespace {

Tensor build_concat(const Tensor& frames, const Tensor& mask) {
    const int64_t T = frames.extent(0), H = frames.extent(1), W = frames.extent(2),
                  C = frames.extent(3);
    Tensor concat = Tensor::zeros({T, H, W, 2 * C});
    const real* f = frames.data();
    const real* m = mask.data();
    real* out = concat.data();
    const int64_t npix = T * H * W;
    for (int64_t p = 0; p < npix; ++p) {
        const real mv = m[p];
        for (int64_t c = 0; c < C; ++c) {
            out[p * 2 * C + c] = f[p * C + c] * mv;
            out[p * 2 * C + C + c] = f[p * C + c] * (real(1) - mv);
        }
    }
    return concat;
}

}  // namespace

ConditionUnit build_vcu(const Tensor& frames, int style_id, MaskMode mode,
                        const Tensor* custom_mask) {
    if (frames.rank() != 4)
        throw DimensionError("build_vcu: frames must be [T,H,W,C], got " +
                             shape_str(frames.shape()));
    const real tol = real(1e-6);
    for (int64_t i = 0; i < frames.numel(); ++i) {
        const real v = frames.data()[i];
        if (v < real(-1) - tol || v > real(1) + tol)
            throw NormalizationError("build_vcu: frame value " + std::to_string(v) +
                                     " outside [-1,1]");
    }
    ConditionUnit cond;
    cond.style_id = style_id;
    cond.frames = frames.clone();
    const int64_t T = frames.extent(0), H = frames.extent(1), W = frames.extent(2);
    if (mode == MaskMode::all_reactive) {
        cond.mask = Tensor::full({T, H, W}, real(1));
    } else {
        if (!custom_mask) throw ConfigError("build_vcu: custom mask mode without a mask");
        if (custom_mask->shape() != Shape{T, H, W})
            throw DimensionError("build_vcu: mask shape " + shape_str(custom_mask->shape()) +
                                 " does not match frames");
        for (int64_t i = 0; i < custom_mask->numel(); ++i) {
            const real v = custom_mask->data()[i];
            if (v != real(0) && v != real(1))
                throw ContractError("build_vcu: mask entries must be 0 or 1");
        }
        cond.mask = custom_mask->clone();
    }
    cond.concat = build_concat(cond.frames, cond.mask);
    return cond;
}

PermTriple draw_permutation(int64_t T, int64_t H, int64_t W, Rng& rng) {
    auto shuffle = [&rng](int64_t n) {
        std::vector<int64_t> p(n);
        for (int64_t i = 0; i < n; ++i) p[i] = i;
        for (int64_t i = n - 1; i > 0; --i) {
            const int64_t j = rng.uniform_int(i + 1);
            std::swap(p[i], p[j]);
        }
        return p;
    };
    return {shuffle(T), shuffle(H), shuffle(W)};
}

PermTriple identity_permutation(int64_t T, int64_t H, int64_t W) {
    PermTriple p;
    p.t.resize(T);
    p.h.resize(H);
    p.w.resize(W);
    for (int64_t i = 0; i < T; ++i) p.t[i] = i;
    for (int64_t i = 0; i < H; ++i) p.h[i] = i;
    for (int64_t i = 0; i < W; ++i) p.w[i] = i;
    return p;
}

PermTriple inverse_permutation(const PermTriple& p) {
    auto inv = [](const std::vector<int64_t>& v) {
        std::vector<int64_t> r(v.size());
        for (size_t i = 0; i < v.size(); ++i) r[static_cast<size_t>(v[i])] = static_cast<int64_t>(i);
        return r;
    };
    return {inv(p.t), inv(p.h), inv(p.w)};
}

ConditionUnit apply_permutation(const ConditionUnit& cond, const PermTriple& perm) {
    const int64_t T = cond.frames.extent(0), H = cond.frames.extent(1), W = cond.frames.extent(2),
                  C = cond.frames.extent(3);
    if (static_cast<int64_t>(perm.t.size()) != T || static_cast<int64_t>(perm.h.size()) != H ||
        static_cast<int64_t>(perm.w.size()) != W)
        throw DimensionError("apply_permutation: permutation sizes do not match frames");
    ConditionUnit out;
    out.style_id = kNullStyleId;
    out.frames = Tensor::zeros(cond.frames.shape());
    out.mask = Tensor::zeros(cond.mask.shape());
    const real* f = cond.frames.data();
    const real* m = cond.mask.data();
    real* fo = out.frames.data();
    real* mo = out.mask.data();
    for (int64_t t = 0; t < T; ++t)
        for (int64_t h = 0; h < H; ++h)
            for (int64_t w = 0; w < W; ++w) {
                const int64_t src = (perm.t[t] * H + perm.h[h]) * W + perm.w[w];
                const int64_t dst = (t * H + h) * W + w;
                mo[dst] = m[src];
                for (int64_t c = 0; c < C; ++c) fo[dst * C + c] = f[src * C + c];
            }
    out.concat = build_concat(out.frames, out.mask);
    return out;
}

ConditionUnit permute_null_context(const ConditionUnit& cond, Rng& rng) {
    const PermTriple perm = draw_permutation(cond.frames.extent(0), cond.frames.extent(1),
                                             cond.frames.extent(2), rng);
    return apply_permutation(cond, perm);
}

ConditionUnit with_style(const ConditionUnit& cond, int style_id) {
    ConditionUnit out;
    out.style_id = style_id;
    out.frames = cond.frames;
    out.mask = cond.mask;
    out.concat = cond.concat;
    return out;
}

}  // namespace stylepipe
