#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stylepipe/conditioning.hpp"
#include "stylepipe/lora.hpp"
#include "stylepipe/rng.hpp"
#include "stylepipe/tensor.hpp"

namespace stylepipe {

struct NetConfig {
    int n_main = 6;       // main transformer blocks
    int m_ctx = 3;        // context blocks, strictly fewer than n_main
    int d_model = 64;
    int heads = 4;
    int patch = 4;
    int t = 8, h = 16, w = 16, c = 3;  // clip extents
    int styles = 5;       // style vocabulary, excluding the null id
    int sigma_embed = 32; // sinusoidal timestep feature width
    int t_diff = 1000;    // schedule range the net was trained against

    void validate() const;
    int64_t tokens() const {
        return static_cast<int64_t>(t) * (h / patch) * (w / patch);
    }
    int64_t main_patch_dim() const { return static_cast<int64_t>(patch) * patch * c; }
    int64_t ctx_patch_dim() const { return static_cast<int64_t>(patch) * patch * 2 * c; }
    // context block i feeds main block floor(i * n_main / m_ctx)
    int injection_target(int ctx_block) const { return ctx_block * n_main / m_ctx; }

    bool operator==(const NetConfig&) const = default;
};

struct AttentionWeights {
    Tensor wq, wk, wv, wo;  // [d,d], row-vector convention y = z W
    Tensor bq, bk, bv, bo;  // [d]
};

struct MlpWeights {
    Tensor w1, b1;  // [d, 4d], [4d]
    Tensor w2, b2;  // [4d, d], [d]
};

struct BlockWeights {
    Tensor ln1_g, ln1_b;
    AttentionWeights attn;
    bool has_cross = false;  // context blocks attend to the style token
    Tensor lnc_g, lnc_b;
    AttentionWeights cross;
    Tensor ln2_g, ln2_b;
    MlpWeights mlp;
};

// multi-head attention over row-token matrices; lora deltas are added to
// the Q/K/V projections when supplied
Tensor self_attention(const Tensor& z, const AttentionWeights& w, int heads,
                      const LoraBlock* lora = nullptr, real lora_scale = real(1));
Tensor cross_attention(const Tensor& z, const Tensor& kv, const AttentionWeights& w, int heads);

// DiT-style epsilon predictor: a main branch over noised-clip patch tokens
// and a shorter context branch over conditioning tokens whose block outputs
// are added back into the main branch.
class DenoiserNet {
 public:
  static DenoiserNet init(const NetConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& x_t, int t, const ConditionUnit& cond,
                 const LoraSet* adapters = nullptr) const;

  const NetConfig& config() const { return cfg_; }
  std::vector<std::pair<std::string, Tensor>> named_params() const;
  void set_requires_grad(bool on);

  // direct access for tests and weight surgery
  std::vector<BlockWeights>& main_blocks() { return main_blocks_; }
  std::vector<BlockWeights>& ctx_blocks() { return ctx_blocks_; }
  Tensor& head_bias() { return head_b_; }
  Tensor& style_table() { return style_table_; }

  Tensor timestep_features(int t) const;  // [1, sigma_embed]

 private:
  NetConfig cfg_;
  Tensor main_embed_w_, main_embed_b_;
  Tensor ctx_embed_w_, ctx_embed_b_;
  Tensor main_pos_, ctx_pos_;
  Tensor temb_w1_, temb_b1_, temb_w2_, temb_b2_;
  Tensor style_table_;  // [styles + 1, d], row 0 is the null id
  std::vector<BlockWeights> main_blocks_;
  std::vector<BlockWeights> ctx_blocks_;
  Tensor head_ln_g_, head_ln_b_, head_w_, head_b_;

  Tensor patchify(const Tensor& clip, int64_t channels) const;
  Tensor unpatchify(const Tensor& tokens) const;
  Tensor block_forward(const BlockWeights& bw, Tensor z, const Tensor* style_tok,
                       const LoraBlock* lora, real lora_scale) const;
};

}  // namespace stylepipe
