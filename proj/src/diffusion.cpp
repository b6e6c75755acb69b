#include "stylepipe/diffusion.hpp"

#include <cmath>

namespace stylepipe {

std::string schedule_kind_name(ScheduleKind k) {
    return k == ScheduleKind::linear_beta ? "linear-beta" : "cosine";
}

ScheduleKind schedule_kind_from_name(const std::string& name) {
    if (name == "linear-beta") return ScheduleKind::linear_beta;
    if (name == "cosine") return ScheduleKind::cosine;
    throw ConfigError("unknown schedule kind: " + name);
}

real NoiseSchedule::alpha(int t) const {
    if (t < 1 || t > t_diff) throw IndexError("alpha(t): t=" + std::to_string(t));
    return alphas[static_cast<size_t>(t)];
}

real NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > t_diff) throw IndexError("alpha_bar(t): t=" + std::to_string(t));
    return alpha_bars[static_cast<size_t>(t)];
}

real NoiseSchedule::log_snr_half(int t) const {
    const real ab = alpha_bar(t);
    return real(0.5) * std::log(ab / (real(1) - ab));
}

NoiseSchedule make_schedule(ScheduleKind kind, int t_diff) {
    if (t_diff < 1) throw ConfigError("make_schedule: t_diff must be >= 1");
    NoiseSchedule s;
    s.kind = kind;
    s.t_diff = t_diff;
    s.alphas.assign(static_cast<size_t>(t_diff) + 1, real(0));
    s.alpha_bars.assign(static_cast<size_t>(t_diff) + 1, real(0));
    s.alpha_bars[0] = real(1);
    if (kind == ScheduleKind::linear_beta) {
        const real beta0 = real(1e-4), beta1 = real(2e-2);
        for (int t = 1; t <= t_diff; ++t) {
            const real f = t_diff == 1 ? real(0) : real(t - 1) / real(t_diff - 1);
            const real beta = beta0 + f * (beta1 - beta0);
            s.alphas[t] = real(1) - beta;
            s.alpha_bars[t] = s.alpha_bars[t - 1] * s.alphas[t];
        }
    } else {
        // squared-cosine alpha_bar profile with the usual 0.008 offset
        const real off = real(0.008);
        auto f = [&](real u) {
            const real c = std::cos((u + off) / (real(1) + off) * real(M_PI) / real(2));
            return c * c;
        };
        const real f0 = f(real(0));
        real prev = real(1);
        for (int t = 1; t <= t_diff; ++t) {
            real ab = f(real(t) / real(t_diff)) / f0;
            real a = ab / prev;
            a = std::min(std::max(a, real(1e-3)), real(1) - real(1e-8));
            s.alphas[t] = a;
            s.alpha_bars[t] = prev * a;
            prev = s.alpha_bars[t];
        }
    }
    return s;
}

Tensor q_step(const Tensor& x_prev, int t, const NoiseSchedule& schedule, Rng& rng) {
    const real a = schedule.alpha(t);
    const real sa = std::sqrt(a), sn = std::sqrt(real(1) - a);
    Tensor out = Tensor::zeros(x_prev.shape());
    for (int64_t i = 0; i < out.numel(); ++i)
        out.data()[i] = sa * x_prev.data()[i] + sn * static_cast<real>(rng.normal());
    return out;
}

NoisedSample q_jump(const Tensor& x0, int t, const NoiseSchedule& schedule, Rng& rng) {
    const real ab = schedule.alpha_bar(t);
    const real sa = std::sqrt(ab), sn = std::sqrt(real(1) - ab);
    NoisedSample out{Tensor::zeros(x0.shape()), Tensor::zeros(x0.shape())};
    for (int64_t i = 0; i < x0.numel(); ++i) {
        const real e = static_cast<real>(rng.normal());
        out.eps.data()[i] = e;
        out.x_t.data()[i] = sa * x0.data()[i] + sn * e;
    }
    return out;
}

Tensor denoise_loss(const DenoiseFn& model, const Tensor& x0, const ConditionUnit& cond, int t,
                    const NoiseSchedule& schedule, Rng& rng) {
    NoisedSample drawn = q_jump(x0, t, schedule, rng);
    Tensor pred = model(drawn.x_t, t, cond);
    return mse_loss(pred, drawn.eps);
}

}  // namespace stylepipe
