#pragma once

#include <functional>
#include <string>

#include "stylepipe/conditioning.hpp"
#include "stylepipe/rng.hpp"
#include "stylepipe/tensor.hpp"

namespace stylepipe {

enum class ScheduleKind { linear_beta, cosine };

std::string schedule_kind_name(ScheduleKind k);
ScheduleKind schedule_kind_from_name(const std::string& name);

// Discrete forward-process tables. alphas is 1-based (alphas[t] for
// t = 1..T); alpha_bars[t] is the cumulative product with alpha_bars[0] = 1.
struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::linear_beta;
    int t_diff = 0;
    std::vector<real> alphas;      // size t_diff + 1, index 0 unused
    std::vector<real> alpha_bars;  // size t_diff + 1

    real alpha(int t) const;
    real alpha_bar(int t) const;
    real sqrt_alpha_bar(int t) const { return std::sqrt(alpha_bar(t)); }
    real sigma(int t) const { return std::sqrt(real(1) - alpha_bar(t)); }
    // log-SNR/2; grows as t decreases
    real log_snr_half(int t) const;
};

NoiseSchedule make_schedule(ScheduleKind kind, int t_diff);

// single forward step, Gaussian transition around sqrt(alpha_t) * x_prev
Tensor q_step(const Tensor& x_prev, int t, const NoiseSchedule& schedule, Rng& rng);

// closed-form jump from clean x0 to step t; also returns the drawn noise
struct NoisedSample {
    Tensor x_t;
    Tensor eps;
};
NoisedSample q_jump(const Tensor& x0, int t, const NoiseSchedule& schedule, Rng& rng);

// epsilon-prediction callable: (x_t, t, cond) -> eps_hat
using DenoiseFn = std::function<Tensor(const Tensor&, int, const ConditionUnit&)>;

// squared-error denoising objective at a single drawn (t, eps)
Tensor denoise_loss(const DenoiseFn& model, const Tensor& x0, const ConditionUnit& cond, int t,
                    const NoiseSchedule& schedule, Rng& rng);

}  // namespace stylepipe
