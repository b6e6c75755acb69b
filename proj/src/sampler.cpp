#include "stylepipe/sampler.hpp"

#include <cmath>

#include "stylepipe/kernels.hpp"

namespace stylepipe {

void GuidanceSpec::validate() const {
    if (n < 1) throw ConfigError("GuidanceSpec: n must be >= 1");
    if (k < 0 || k >= n) throw ConfigError("GuidanceSpec: k must satisfy 0 <= k < n");
    if (omega < 0 || t_guide < 0 || c_guide < 0)
        throw ConfigError("GuidanceSpec: guidance scales must be >= 0");
}

std::vector<int> inference_grid(const NoiseSchedule& schedule, int n) {
    if (n < 1) throw ConfigError("inference_grid: n must be >= 1");
    const int T = schedule.t_diff;
    std::vector<int> grid;
    grid.reserve(static_cast<size_t>(n));
    const real lo = schedule.log_snr_half(T);
    const real hi = schedule.log_snr_half(1);
    for (int i = 0; i < n; ++i) {
        const real target = n == 1 ? lo : lo + (hi - lo) * static_cast<real>(i) / real(n - 1);
        // log-SNR is increasing as t decreases; nearest table entry
        int best = 1;
        real bestd = std::abs(schedule.log_snr_half(1) - target);
        for (int t = 1; t <= T; ++t) {
            const real d = std::abs(schedule.log_snr_half(t) - target);
            if (d < bestd) {
                bestd = d;
                best = t;
            }
        }
        int t = best;
        if (!grid.empty() && t >= grid.back()) t = grid.back() - 1;
        if (t < 1) break;
        grid.push_back(t);
    }
    return grid;
}

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, real omega) {
    if (eps_cond.shape() != eps_uncond.shape())
        throw DimensionError("cfg_combine: shape mismatch " + shape_str(eps_cond.shape()) +
                             " vs " + shape_str(eps_uncond.shape()));
    Tensor out = Tensor::zeros(eps_cond.shape());
    const real* c = eps_cond.data();
    const real* u = eps_uncond.data();
    real* o = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) o[i] = u[i] + omega * (c[i] - u[i]);
    return out;
}

Tensor cs_cfg_combine(const Tensor& eps_cond, const Tensor& eps_null_text, const Tensor& eps_null,
                      real t_guide, real c_guide) {
    if (eps_cond.shape() != eps_null_text.shape() || eps_cond.shape() != eps_null.shape())
        throw DimensionError("cs_cfg_combine: shape mismatch");
    Tensor out = Tensor::zeros(eps_cond.shape());
    const real* c = eps_cond.data();
    const real* nt = eps_null_text.data();
    const real* nn = eps_null.data();
    real* o = out.data();
    for (int64_t i = 0; i < out.numel(); ++i)
        o[i] = nt[i] + t_guide * (c[i] - nt[i]) + c_guide * (nt[i] - nn[i]);
    return out;
}

ThreePass three_pass(const DenoiseFn& model, const Tensor& x_t, int t, const ConditionUnit& cond,
                     Rng& perm_rng) {
    if (cond.style_id == kNullStyleId)
        throw ContractError("three_pass: conditioning must carry a non-null style id");
    ThreePass out;
    out.eps_cond = model(x_t, t, cond);
    const ConditionUnit null_text = with_style(cond, kNullStyleId);
    out.eps_null_text = model(x_t, t, null_text);
    const ConditionUnit null_ctx = permute_null_context(null_text, perm_rng);
    out.eps_null = model(x_t, t, null_ctx);
    return out;
}

LatentInit init_latent(const Tensor& cond_frames, int k, int n, const NoiseSchedule& schedule,
                       Rng& rng) {
    if (k < 0 || k >= n) throw ConfigError("init_latent: k must satisfy 0 <= k < n");
    const std::vector<int> grid = inference_grid(schedule, n);
    if (k >= static_cast<int>(grid.size()))
        throw ConfigError("init_latent: grid collapsed below k entries");
    const int t_start = grid[static_cast<size_t>(k)];
    NoisedSample drawn = q_jump(cond_frames, t_start, schedule, rng);
    return LatentInit{std::move(drawn.x_t), t_start, k};
}

namespace {

// DPM-Solver++ style update in data-prediction space, from grid time s to
// grid time t (t == 0 means the clean endpoint). lambda is log(alpha/sigma).
Tensor solver_step(const Tensor& x, const Tensor& x0_pred, const Tensor* x0_prev, real lam_s,
                   real lam_prev, const NoiseSchedule& sched, int s, int t) {
    const real sigma_s = sched.sigma(s);
    if (t == 0) return x0_pred.clone();
    const real alpha_t = sched.sqrt_alpha_bar(t);
    const real sigma_t = sched.sigma(t);
    const real lam_t = sched.log_snr_half(t);
    const real h = lam_t - lam_s;
    Tensor out = Tensor::zeros(x.shape());
    const real a = sigma_t / sigma_s;
    const real b = alpha_t * (real(1) - std::exp(-h));
    const real* xp = x.data();
    const real* d1 = x0_pred.data();
    real* o = out.data();
    if (x0_prev) {
        const real r = (lam_s - lam_prev) / h;
        const real c1 = real(1) + real(1) / (2 * r);
        const real c0 = real(1) / (2 * r);
        const real* d0 = x0_prev->data();
        for (int64_t i = 0; i < out.numel(); ++i)
            o[i] = a * xp[i] + b * (c1 * d1[i] - c0 * d0[i]);
    } else {
        for (int64_t i = 0; i < out.numel(); ++i) o[i] = a * xp[i] + b * d1[i];
    }
    return out;
}

void clamp_unit(Tensor& t) {
    real* p = t.data();
    for (int64_t i = 0; i < t.numel(); ++i) p[i] = std::min(std::max(p[i], real(-1)), real(1));
}

}  // namespace

Tensor sample(const DenoiseFn& model, const ConditionUnit& cond, const GuidanceSpec& guidance,
              const NoiseSchedule& schedule, Rng& rng, SampleTrace* trace) {
    guidance.validate();
    const std::vector<int> grid = inference_grid(schedule, guidance.n);
    if (guidance.k >= static_cast<int>(grid.size()))
        throw ConfigError("sample: inference grid has fewer points than k");

    LatentInit init = init_latent(cond.frames, guidance.k, guidance.n, schedule, rng);
    Tensor x = std::move(init.x_start);

    Rng perm_rng(guidance.perm_seed);
    std::optional<PermTriple> fixed_perm;
    if (guidance.fixed_permutation && guidance.mode == GuidanceMode::cs_cfg)
        fixed_perm = draw_permutation(cond.frames.extent(0), cond.frames.extent(1),
                                      cond.frames.extent(2), perm_rng);

    const ConditionUnit null_text = with_style(cond, kNullStyleId);

    Tensor x0_prev;
    real lam_prev = 0;
    bool have_prev = false;
    int evals = 0;

    if (trace) trace->grid = grid;
    NoGradGuard inference_mode;

    for (size_t i = static_cast<size_t>(guidance.k); i < grid.size(); ++i) {
        const int s = grid[i];
        const int t_next = i + 1 < grid.size() ? grid[i + 1] : 0;

        Tensor eps_hat;
        switch (guidance.mode) {
            case GuidanceMode::none:
                eps_hat = model(x, s, cond);
                evals += 1;
                break;
            case GuidanceMode::cfg: {
                Tensor eps_cond = model(x, s, cond);
                Tensor eps_uncond = model(x, s, null_text);
                evals += 2;
                eps_hat = cfg_combine(eps_cond, eps_uncond, guidance.omega);
                break;
            }
            case GuidanceMode::cs_cfg: {
                Tensor eps_cond = model(x, s, cond);
                Tensor eps_null_text = model(x, s, null_text);
                const ConditionUnit null_ctx =
                    fixed_perm ? apply_permutation(null_text, *fixed_perm)
                               : permute_null_context(null_text, perm_rng);
                Tensor eps_null = model(x, s, null_ctx);
                evals += 3;
                eps_hat = cs_cfg_combine(eps_cond, eps_null_text, eps_null, guidance.t_guide,
                                         guidance.c_guide);
                break;
            }
        }

        // data prediction; kept in [-1,1] to bound guidance extrapolation
        const real alpha_s = schedule.sqrt_alpha_bar(s);
        const real sigma_s = schedule.sigma(s);
        Tensor x0_pred = Tensor::zeros(x.shape());
        for (int64_t j = 0; j < x.numel(); ++j)
            x0_pred.data()[j] = (x.data()[j] - sigma_s * eps_hat.data()[j]) / alpha_s;
        clamp_unit(x0_pred);

        const real lam_s = schedule.log_snr_half(s);
        const bool second_order =
            guidance.solver == SolverOrder::order2_multistep && have_prev;
        x = solver_step(x, x0_pred, second_order ? &x0_prev : nullptr, lam_s, lam_prev, schedule,
                        s, t_next);
        for (int64_t j = 0; j < x.numel(); ++j)
            if (!std::isfinite(x.data()[j]))
                throw NumericError("sample: non-finite latent after grid step " +
                                   std::to_string(i) + " (t=" + std::to_string(s) + ")");

        x0_prev = std::move(x0_pred);
        lam_prev = lam_s;
        have_prev = true;
    }

    clamp_unit(x);
    if (trace) trace->model_evals = evals;
    return x;
}

}  // namespace stylepipe
