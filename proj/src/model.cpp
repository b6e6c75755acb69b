#include "stylepipe/model.hpp"

#include <cmath>

namespace stylepipe {

void NetConfig::validate() const {
    if (m_ctx >= n_main) throw ConfigError("NetConfig: m_ctx must be < n_main");
    if (m_ctx < 1 || n_main < 1) throw ConfigError("NetConfig: block counts must be positive");
    if (d_model % heads != 0) throw ConfigError("NetConfig: d_model must be divisible by heads");
    if (h % patch != 0 || w % patch != 0)
        throw ConfigError("NetConfig: H and W must be divisible by patch");
    if (sigma_embed % 2 != 0) throw ConfigError("NetConfig: sigma_embed must be even");
    if (styles < 1) throw ConfigError("NetConfig: styles must be >= 1");
}

namespace {

Tensor linear(const Tensor& z, const Tensor& w, const Tensor& b) {
    return add(matmul(z, w), b);
}

AttentionWeights init_attention(int d, Rng& rng) {
    const real std = real(1) / std::sqrt(static_cast<real>(d));
    AttentionWeights w;
    w.wq = Tensor::randn({d, d}, rng, std);
    w.wk = Tensor::randn({d, d}, rng, std);
    w.wv = Tensor::randn({d, d}, rng, std);
    w.wo = Tensor::randn({d, d}, rng, std);
    w.bq = Tensor::zeros({d});
    w.bk = Tensor::zeros({d});
    w.bv = Tensor::zeros({d});
    w.bo = Tensor::zeros({d});
    return w;
}

BlockWeights init_block(int d, bool cross, Rng& rng) {
    BlockWeights b;
    b.ln1_g = Tensor::full({d}, real(1));
    b.ln1_b = Tensor::zeros({d});
    b.attn = init_attention(d, rng);
    b.has_cross = cross;
    if (cross) {
        b.lnc_g = Tensor::full({d}, real(1));
        b.lnc_b = Tensor::zeros({d});
        b.cross = init_attention(d, rng);
    }
    b.ln2_g = Tensor::full({d}, real(1));
    b.ln2_b = Tensor::zeros({d});
    const real s1 = real(1) / std::sqrt(static_cast<real>(d));
    const real s2 = real(1) / std::sqrt(static_cast<real>(4 * d));
    b.mlp.w1 = Tensor::randn({d, 4 * d}, rng, s1);
    b.mlp.b1 = Tensor::zeros({4 * d});
    b.mlp.w2 = Tensor::randn({4 * d, d}, rng, s2);
    b.mlp.b2 = Tensor::zeros({d});
    return b;
}

void collect_attention(std::vector<std::pair<std::string, Tensor>>& out, const std::string& base,
                       const AttentionWeights& w) {
    out.emplace_back(base + ".wq", w.wq);
    out.emplace_back(base + ".bq", w.bq);
    out.emplace_back(base + ".wk", w.wk);
    out.emplace_back(base + ".bk", w.bk);
    out.emplace_back(base + ".wv", w.wv);
    out.emplace_back(base + ".bv", w.bv);
    out.emplace_back(base + ".wo", w.wo);
    out.emplace_back(base + ".bo", w.bo);
}

void collect_block(std::vector<std::pair<std::string, Tensor>>& out, const std::string& base,
                   const BlockWeights& b) {
    out.emplace_back(base + ".ln1.g", b.ln1_g);
    out.emplace_back(base + ".ln1.b", b.ln1_b);
    collect_attention(out, base + ".attn", b.attn);
    if (b.has_cross) {
        out.emplace_back(base + ".lnc.g", b.lnc_g);
        out.emplace_back(base + ".lnc.b", b.lnc_b);
        collect_attention(out, base + ".cross", b.cross);
    }
    out.emplace_back(base + ".ln2.g", b.ln2_g);
    out.emplace_back(base + ".ln2.b", b.ln2_b);
    out.emplace_back(base + ".mlp.w1", b.mlp.w1);
    out.emplace_back(base + ".mlp.b1", b.mlp.b1);
    out.emplace_back(base + ".mlp.w2", b.mlp.w2);
    out.emplace_back(base + ".mlp.b2", b.mlp.b2);
}

}  // namespace

Tensor self_attention(const Tensor& z, const AttentionWeights& w, int heads,
                      const LoraBlock* lora, real lora_scale) {
    const int64_t n = z.extent(0), d = z.extent(1);
    if (n < 1) throw DimensionError("self_attention: need at least one token");
    const int64_t dk = d / heads;
    Tensor q = linear(z, w.wq, w.bq);
    Tensor k = linear(z, w.wk, w.bk);
    Tensor v = linear(z, w.wv, w.bv);
    if (lora) {
        q = add(q, apply_delta(z, lora->q.a, lora->q.b, lora_scale));
        k = add(k, apply_delta(z, lora->k.a, lora->k.b, lora_scale));
        v = add(v, apply_delta(z, lora->v.a, lora->v.b, lora_scale));
    }
    auto split = [&](const Tensor& x) {
        return permute(reshape(x, {n, heads, dk}), {1, 0, 2});  // [heads, n, dk]
    };
    Tensor qh = split(q), kh = split(k), vh = split(v);
    Tensor scores = scale(matmul(qh, permute(kh, {0, 2, 1})),
                          real(1) / std::sqrt(static_cast<real>(dk)));
    Tensor attn = softmax_lastdim(scores);
    Tensor y = permute(matmul(attn, vh), {1, 0, 2});  // [n, heads, dk]
    return linear(reshape(y, {n, d}), w.wo, w.bo);
}

Tensor cross_attention(const Tensor& z, const Tensor& kv, const AttentionWeights& w, int heads) {
    const int64_t n = z.extent(0), d = z.extent(1), m = kv.extent(0);
    const int64_t dk = d / heads;
    Tensor q = linear(z, w.wq, w.bq);
    Tensor k = linear(kv, w.wk, w.bk);
    Tensor v = linear(kv, w.wv, w.bv);
    auto split = [&](const Tensor& x, int64_t rows) {
        return permute(reshape(x, {rows, heads, dk}), {1, 0, 2});
    };
    Tensor qh = split(q, n), kh = split(k, m), vh = split(v, m);
    Tensor scores = scale(matmul(qh, permute(kh, {0, 2, 1})),
                          real(1) / std::sqrt(static_cast<real>(dk)));
    Tensor attn = softmax_lastdim(scores);
    Tensor y = permute(matmul(attn, vh), {1, 0, 2});
    return linear(reshape(y, {n, d}), w.wo, w.bo);
}

DenoiserNet DenoiserNet::init(const NetConfig& cfg, Rng& rng) {
    cfg.validate();
    DenoiserNet net;
    net.cfg_ = cfg;
    const int d = cfg.d_model;
    const real in_std_main = real(1) / std::sqrt(static_cast<real>(cfg.main_patch_dim()));
    const real in_std_ctx = real(1) / std::sqrt(static_cast<real>(cfg.ctx_patch_dim()));
    net.main_embed_w_ = Tensor::randn({cfg.main_patch_dim(), d}, rng, in_std_main);
    net.main_embed_b_ = Tensor::zeros({d});
    net.ctx_embed_w_ = Tensor::randn({cfg.ctx_patch_dim(), d}, rng, in_std_ctx);
    net.ctx_embed_b_ = Tensor::zeros({d});
    net.main_pos_ = Tensor::randn({cfg.tokens(), d}, rng, real(0.02));
    net.ctx_pos_ = Tensor::randn({cfg.tokens(), d}, rng, real(0.02));
    const real se_std = real(1) / std::sqrt(static_cast<real>(cfg.sigma_embed));
    const real d_std = real(1) / std::sqrt(static_cast<real>(d));
    net.temb_w1_ = Tensor::randn({cfg.sigma_embed, d}, rng, se_std);
    net.temb_b1_ = Tensor::zeros({d});
    net.temb_w2_ = Tensor::randn({d, d}, rng, d_std);
    net.temb_b2_ = Tensor::zeros({d});
    net.style_table_ = Tensor::randn({cfg.styles + 1, d}, rng, real(1));
    for (int i = 0; i < cfg.n_main; ++i) net.main_blocks_.push_back(init_block(d, false, rng));
    for (int i = 0; i < cfg.m_ctx; ++i) net.ctx_blocks_.push_back(init_block(d, true, rng));
    net.head_ln_g_ = Tensor::full({d}, real(1));
    net.head_ln_b_ = Tensor::zeros({d});
    net.head_w_ = Tensor::randn({d, cfg.main_patch_dim()}, rng, d_std);
    net.head_b_ = Tensor::zeros({cfg.main_patch_dim()});
    return net;
}

Tensor DenoiserNet::patchify(const Tensor& clip, int64_t channels) const {
    const int64_t T = cfg_.t, H = cfg_.h, W = cfg_.w, P = cfg_.patch;
    Tensor x = reshape(clip, {T, H / P, P, W / P, P, channels});
    x = permute(x, {0, 1, 3, 2, 4, 5});
    return reshape(x, {cfg_.tokens(), P * P * channels});
}

Tensor DenoiserNet::unpatchify(const Tensor& tokens) const {
    const int64_t T = cfg_.t, H = cfg_.h, W = cfg_.w, P = cfg_.patch, C = cfg_.c;
    Tensor x = reshape(tokens, {T, H / P, W / P, P, P, C});
    x = permute(x, {0, 1, 3, 2, 4, 5});
    return reshape(x, {T, H, W, C});
}

Tensor DenoiserNet::timestep_features(int t) const {
    const int half = cfg_.sigma_embed / 2;
    Tensor f = Tensor::zeros({1, cfg_.sigma_embed});
    for (int i = 0; i < half; ++i) {
        const real freq = std::exp(-std::log(real(10000)) * static_cast<real>(i) /
                                   static_cast<real>(half));
        f.data()[i] = std::sin(static_cast<real>(t) * freq);
        f.data()[half + i] = std::cos(static_cast<real>(t) * freq);
    }
    return f;
}

Tensor DenoiserNet::block_forward(const BlockWeights& bw, Tensor z, const Tensor* style_tok,
                                  const LoraBlock* lora, real lora_scale) const {
    z = add(z, self_attention(layer_norm(z, bw.ln1_g, bw.ln1_b), bw.attn, cfg_.heads, lora,
                              lora_scale));
    if (bw.has_cross) {
        z = add(z, cross_attention(layer_norm(z, bw.lnc_g, bw.lnc_b), *style_tok, bw.cross,
                                   cfg_.heads));
    }
    Tensor m = layer_norm(z, bw.ln2_g, bw.ln2_b);
    m = gelu(linear(m, bw.mlp.w1, bw.mlp.b1));
    m = linear(m, bw.mlp.w2, bw.mlp.b2);
    return add(z, m);
}

Tensor DenoiserNet::forward(const Tensor& x_t, int t, const ConditionUnit& cond,
                            const LoraSet* adapters) const {
    const Shape want{cfg_.t, cfg_.h, cfg_.w, cfg_.c};
    if (x_t.shape() != want)
        throw DimensionError("forward: x_t shape " + shape_str(x_t.shape()) + ", expected " +
                             shape_str(want));
    if (cond.concat.shape() != Shape{cfg_.t, cfg_.h, cfg_.w, 2 * cfg_.c})
        throw DimensionError("forward: conditioning shape " + shape_str(cond.concat.shape()));
    if (t < 0 || t > cfg_.t_diff)
        throw IndexError("forward: t=" + std::to_string(t) + " outside schedule range");
    if (cond.style_id < 0 || cond.style_id > cfg_.styles)
        throw ConfigError("forward: unknown style id " + std::to_string(cond.style_id));
    if (adapters && static_cast<int>(adapters->blocks.size()) != cfg_.m_ctx)
        throw ConfigError("forward: adapter set has " + std::to_string(adapters->blocks.size()) +
                          " blocks, net has " + std::to_string(cfg_.m_ctx));

    Tensor te = linear(gelu(linear(timestep_features(t), temb_w1_, temb_b1_)), temb_w2_, temb_b2_);
    Tensor te_row = reshape(te, {cfg_.d_model});

    // context branch
    Tensor style_tok = embedding_row(style_table_, cond.style_id);
    Tensor zc = linear(patchify(cond.concat, 2 * cfg_.c), ctx_embed_w_, ctx_embed_b_);
    zc = add(add(zc, ctx_pos_), te_row);
    std::vector<Tensor> ctx_out;
    ctx_out.reserve(ctx_blocks_.size());
    for (size_t i = 0; i < ctx_blocks_.size(); ++i) {
        const LoraBlock* lb = adapters ? &adapters->blocks[i] : nullptr;
        zc = block_forward(ctx_blocks_[i], zc, &style_tok, lb, adapters ? adapters->scale : real(1));
        ctx_out.push_back(zc);
    }

    // main branch with context injections
    Tensor z = linear(patchify(x_t, cfg_.c), main_embed_w_, main_embed_b_);
    z = add(add(z, main_pos_), te_row);
    for (int j = 0; j < cfg_.n_main; ++j) {
        z = block_forward(main_blocks_[static_cast<size_t>(j)], z, nullptr, nullptr, real(1));
        for (int i = 0; i < cfg_.m_ctx; ++i)
            if (cfg_.injection_target(i) == j) z = add(z, ctx_out[static_cast<size_t>(i)]);
    }

    Tensor out = linear(layer_norm(z, head_ln_g_, head_ln_b_), head_w_, head_b_);
    return unpatchify(out);
}

std::vector<std::pair<std::string, Tensor>> DenoiserNet::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("embed.main.w", main_embed_w_);
    out.emplace_back("embed.main.b", main_embed_b_);
    out.emplace_back("embed.ctx.w", ctx_embed_w_);
    out.emplace_back("embed.ctx.b", ctx_embed_b_);
    out.emplace_back("pos.main", main_pos_);
    out.emplace_back("pos.ctx", ctx_pos_);
    out.emplace_back("temb.w1", temb_w1_);
    out.emplace_back("temb.b1", temb_b1_);
    out.emplace_back("temb.w2", temb_w2_);
    out.emplace_back("temb.b2", temb_b2_);
    out.emplace_back("style.table", style_table_);
    for (size_t i = 0; i < main_blocks_.size(); ++i)
        collect_block(out, "main." + std::to_string(i), main_blocks_[i]);
    for (size_t i = 0; i < ctx_blocks_.size(); ++i)
        collect_block(out, "ctx." + std::to_string(i), ctx_blocks_[i]);
    out.emplace_back("head.ln.g", head_ln_g_);
    out.emplace_back("head.ln.b", head_ln_b_);
    out.emplace_back("head.w", head_w_);
    out.emplace_back("head.b", head_b_);
    return out;
}

void DenoiserNet::set_requires_grad(bool on) {
    for (auto& [name, t] : named_params()) {
        (void)name;
        Tensor(t).set_requires_grad(on);
    }
}

}  // namespace stylepipe
