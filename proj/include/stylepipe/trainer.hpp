#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stylepipe/checkpoint.hpp"
#include "stylepipe/data.hpp"
#include "stylepipe/diffusion.hpp"
#include "stylepipe/model.hpp"

namespace stylepipe {

enum class TrainPhase { base, adapter };
std::string train_phase_name(TrainPhase p);
TrainPhase train_phase_from_name(const std::string& name);

struct TrainConfig {
    TrainPhase phase = TrainPhase::base;
    int steps = 2000;
    int batch = 8;
    real lr = real(1e-3);
    real text_dropout_p = real(0.1);
    uint64_t seed = 0;
    int checkpoint_every = 0;  // 0 disables periodic checkpoints
    int lora_rank = 8;
    real lora_scale = real(1);
    // Adam
    real beta1 = real(0.9), beta2 = real(0.999), adam_eps = real(1e-8);
    // training draws t uniformly from [t_low, t_diff]
    int t_low = 1;

    void validate() const;
};

// standard Adam with bias correction, updating params in place
struct AdamState {
    std::vector<Tensor> m, v;
    int64_t steps = 0;
};
AdamState make_adam_state(const std::vector<std::pair<std::string, Tensor>>& params);
void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state, real lr,
               real beta1, real beta2, real eps);

struct TrainResult {
    DenoiserNet net;
    std::optional<LoraSet> adapters;
    Checkpoint checkpoint;
    std::vector<real> losses;
};

using StepCallback = std::function<void(int step, real loss)>;

// Two-phase optimization. Base phase trains the whole network with no
// adapters attached; adapter phase loads a base checkpoint, freezes it and
// trains fresh (or resumed) LoRA matrices only. Passing the phase's own
// checkpoint as `resume` continues a run bit-exactly.
TrainResult train(const TrainConfig& cfg, const Dataset& dataset, const NetConfig& net_cfg,
                  const NoiseSchedule& schedule, const Checkpoint* base,
                  const Checkpoint* resume = nullptr, const std::string& checkpoint_dir = "",
                  const nlohmann::json& config_echo = nlohmann::json::object(),
                  const StepCallback& on_step = nullptr);

}  // namespace stylepipe
