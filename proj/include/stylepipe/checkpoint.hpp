#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stylepipe/diffusion.hpp"
#include "stylepipe/lora.hpp"
#include "stylepipe/model.hpp"

namespace stylepipe {

// Single-file checkpoint: "SPCK1" magic, u32 version, u64 header length,
// JSON header, u32 section count, then named TNSR1 sections in a fixed
// order. Identical state serializes to identical bytes.
struct Checkpoint {
    nlohmann::json header;
    std::vector<std::pair<std::string, Tensor>> sections;

    const Tensor* find(const std::string& name) const;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

nlohmann::json net_config_to_json(const NetConfig& cfg);
NetConfig net_config_from_json(const nlohmann::json& j);

// assembles header + sections from live training state
Checkpoint make_checkpoint(const DenoiserNet& net, const LoraSet* adapters,
                           const NoiseSchedule& schedule, const std::string& phase, int step,
                           const std::string& rng_state,
                           const std::vector<std::pair<std::string, Tensor>>& adam_m,
                           const std::vector<std::pair<std::string, Tensor>>& adam_v,
                           const nlohmann::json& extra);

DenoiserNet net_from_checkpoint(const Checkpoint& ckpt);
std::optional<LoraSet> adapters_from_checkpoint(const Checkpoint& ckpt);
NoiseSchedule schedule_from_checkpoint(const Checkpoint& ckpt);

}  // namespace stylepipe
