#include "stylepipe/trainer.hpp"

#include <cmath>
#include <filesystem>

namespace stylepipe {

std::string train_phase_name(TrainPhase p) { return p == TrainPhase::base ? "base" : "adapter"; }

TrainPhase train_phase_from_name(const std::string& name) {
    if (name == "base") return TrainPhase::base;
    if (name == "adapter") return TrainPhase::adapter;
    throw ConfigError("unknown train phase: " + name);
}

void TrainConfig::validate() const {
    if (lr <= 0) throw ConfigError("TrainConfig: lr must be > 0");
    if (text_dropout_p < 0 || text_dropout_p >= 1)
        throw ConfigError("TrainConfig: text_dropout_p must be in [0,1)");
    if (steps < 0 || batch < 1) throw ConfigError("TrainConfig: bad steps/batch");
    if (t_low < 1) throw ConfigError("TrainConfig: t_low must be >= 1");
}

AdamState make_adam_state(const std::vector<std::pair<std::string, Tensor>>& params) {
    AdamState st;
    for (const auto& [name, p] : params) {
        (void)name;
        st.m.push_back(Tensor::zeros(p.shape()));
        st.v.push_back(Tensor::zeros(p.shape()));
    }
    return st;
}

void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state, real lr,
               real beta1, real beta2, real eps) {
    state.steps += 1;
    const real bc1 = real(1) - std::pow(beta1, static_cast<real>(state.steps));
    const real bc2 = real(1) - std::pow(beta2, static_cast<real>(state.steps));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i].second;
        if (!p.requires_grad()) continue;
        const real* g = p.grad();
        real* m = state.m[i].data();
        real* v = state.v[i].data();
        real* w = p.data();
        for (int64_t j = 0; j < p.numel(); ++j) {
            m[j] = beta1 * m[j] + (real(1) - beta1) * g[j];
            v[j] = beta2 * v[j] + (real(1) - beta2) * g[j] * g[j];
            const real mhat = m[j] / bc1;
            const real vhat = v[j] / bc2;
            w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

namespace {

void restore_adam(const Checkpoint& ckpt,
                  const std::vector<std::pair<std::string, Tensor>>& params, AdamState& st) {
    for (size_t i = 0; i < params.size(); ++i) {
        const Tensor* m = ckpt.find("adam.m." + params[i].first);
        const Tensor* v = ckpt.find("adam.v." + params[i].first);
        if (!m || !v) throw IoError("resume checkpoint missing Adam state for " + params[i].first);
        std::copy(m->data(), m->data() + m->numel(), st.m[i].data());
        std::copy(v->data(), v->data() + v->numel(), st.v[i].data());
    }
    st.steps = ckpt.header.at("extra").at("adam_steps").get<int64_t>();
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& dataset, const NetConfig& net_cfg,
                  const NoiseSchedule& schedule, const Checkpoint* base, const Checkpoint* resume,
                  const std::string& checkpoint_dir, const nlohmann::json& config_echo,
                  const StepCallback& on_step) {
    cfg.validate();
    const auto train_pairs = dataset.split(true);
    if (train_pairs.empty()) throw ConfigError("train: dataset has no training pairs");
    if (cfg.t_low > schedule.t_diff) throw ConfigError("train: t_low exceeds schedule range");

    // assemble model state for the phase
    DenoiserNet net = [&] {
        if (resume) return net_from_checkpoint(*resume);
        if (cfg.phase == TrainPhase::adapter) {
            if (!base) throw ConfigError("adapter phase requires a base checkpoint");
            return net_from_checkpoint(*base);
        }
        Rng init_rng(cfg.seed ^ 0x5eedf00dULL);
        return DenoiserNet::init(net_cfg, init_rng);
    }();
    std::optional<LoraSet> adapters;
    if (cfg.phase == TrainPhase::adapter) {
        if (resume) {
            adapters = adapters_from_checkpoint(*resume);
            if (!adapters) throw IoError("resume checkpoint has no adapter section");
        } else {
            Rng lora_rng(cfg.seed ^ 0x10a51deaULL);
            adapters = LoraSet::init(net.config().m_ctx, net.config().d_model, cfg.lora_rank,
                                     lora_rng, cfg.lora_scale);
        }
    }

    // trainable census: everything in base phase, adapters only afterwards
    net.set_requires_grad(cfg.phase == TrainPhase::base);
    if (adapters) adapters->set_requires_grad(true);
    auto trainable = cfg.phase == TrainPhase::base ? net.named_params() : adapters->named_params();

    AdamState adam = make_adam_state(trainable);
    Rng rng(cfg.seed);
    int start_step = 0;
    if (resume) {
        restore_adam(*resume, trainable, adam);
        rng.set_state(resume->header.at("rng_state").get<std::string>());
        start_step = resume->header.at("step").get<int>();
    }

    const LoraSet* lora_ptr = adapters ? &*adapters : nullptr;
    DenoiseFn model_fn = [&](const Tensor& x_t, int t, const ConditionUnit& cond) {
        return net.forward(x_t, t, cond, lora_ptr);
    };

    auto snapshot = [&](int step) {
        std::vector<std::pair<std::string, Tensor>> am, av;
        for (size_t i = 0; i < trainable.size(); ++i) {
            am.emplace_back(trainable[i].first, adam.m[i]);
            av.emplace_back(trainable[i].first, adam.v[i]);
        }
        nlohmann::json extra = {{"adam_steps", adam.steps},
                                {"train_config",
                                 {{"steps", cfg.steps},
                                  {"batch", cfg.batch},
                                  {"lr", cfg.lr},
                                  {"text_dropout_p", cfg.text_dropout_p},
                                  {"seed", cfg.seed},
                                  {"t_low", cfg.t_low}}},
                                {"config_echo", config_echo}};
        return make_checkpoint(net, lora_ptr, schedule, train_phase_name(cfg.phase), step,
                               rng.state(), am, av, extra);
    };

    std::vector<real> losses;
    losses.reserve(static_cast<size_t>(cfg.steps));
    const int span = schedule.t_diff - cfg.t_low + 1;
    for (int step = start_step; step < cfg.steps; ++step) {
        std::vector<int64_t> indices(static_cast<size_t>(cfg.batch));
        for (auto& ix : indices) ix = rng.uniform_int(static_cast<int64_t>(train_pairs.size()));

        Tensor total;
        for (int b = 0; b < cfg.batch; ++b) {
            const ClipPair& pair = *train_pairs[static_cast<size_t>(indices[static_cast<size_t>(b)])];
            const bool drop = rng.uniform() < cfg.text_dropout_p;
            const int style = drop ? kNullStyleId : style_label(pair.style);
            const int t = cfg.t_low + static_cast<int>(rng.uniform_int(span));
            ConditionUnit cond = build_vcu(pair.context, style);
            Tensor item = scale(denoise_loss(model_fn, pair.styled, cond, t, schedule, rng),
                                real(1) / real(cfg.batch));
            total = b == 0 ? item : add(total, item);
        }
        const real loss_value = total.item();
        if (!std::isfinite(loss_value))
            throw NumericError("train: non-finite loss at step " + std::to_string(step) +
                               " (phase " + train_phase_name(cfg.phase) + ")");
        for (auto& [name, p] : trainable) {
            (void)name;
            p.zero_grad();
        }
        total.backward();
        adam_step(trainable, adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
        losses.push_back(loss_value);
        if (on_step) on_step(step, loss_value);
        if (cfg.checkpoint_every > 0 && !checkpoint_dir.empty() &&
            (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.steps) {
            snapshot(step + 1).save((std::filesystem::path(checkpoint_dir) /
                                     ("ckpt_step" + std::to_string(step + 1) + ".spck"))
                                        .string());
        }
    }

    Checkpoint final_ckpt = snapshot(cfg.steps);
    return TrainResult{std::move(net), std::move(adapters), std::move(final_ckpt),
                       std::move(losses)};
}

}  // namespace stylepipe
