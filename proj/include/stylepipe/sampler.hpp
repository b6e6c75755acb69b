#pragma once

#include <optional>
#include <vector>

#include "stylepipe/conditioning.hpp"
#include "stylepipe/diffusion.hpp"
#include "stylepipe/tensor.hpp"

namespace stylepipe {

enum class GuidanceMode { none, cfg, cs_cfg };
enum class SolverOrder { order1, order2_multistep };

struct GuidanceSpec {
    GuidanceMode mode = GuidanceMode::cs_cfg;
    real omega = real(5);     // cfg scale
    real t_guide = real(5);   // style direction scale
    real c_guide = real(4);   // context direction scale
    int n = 20;               // inference steps
    int k = 0;                // skip count, 0 <= k < n
    SolverOrder solver = SolverOrder::order2_multistep;
    uint64_t perm_seed = 0;
    bool fixed_permutation = false;  // one triple for the whole run instead of per step

    void validate() const;
};

// n timesteps from the training grid, uniformly spaced in log-SNR between
// t_diff and 1, strictly decreasing
std::vector<int> inference_grid(const NoiseSchedule& schedule, int n);

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, real omega);
Tensor cs_cfg_combine(const Tensor& eps_cond, const Tensor& eps_null_text,
                      const Tensor& eps_null, real t_guide, real c_guide);

struct ThreePass {
    Tensor eps_cond, eps_null_text, eps_null;
};
ThreePass three_pass(const DenoiseFn& model, const Tensor& x_t, int t, const ConditionUnit& cond,
                     Rng& perm_rng);

struct LatentInit {
    Tensor x_start;
    int t_start;
    int grid_index;  // position of t_start in the inference grid
};
// partially noised start: q_jump of the conditioning frames at grid point k
LatentInit init_latent(const Tensor& cond_frames, int k, int n, const NoiseSchedule& schedule,
                       Rng& rng);

struct SampleTrace {
    std::vector<int> grid;
    int model_evals = 0;
};

// full reverse process; deterministic given (rng seed, perm_seed, weights)
Tensor sample(const DenoiseFn& model, const ConditionUnit& cond, const GuidanceSpec& guidance,
              const NoiseSchedule& schedule, Rng& rng, SampleTrace* trace = nullptr);

}  // namespace stylepipe
