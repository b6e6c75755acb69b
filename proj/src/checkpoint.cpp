#include "stylepipe/checkpoint.hpp"

#include <fstream>

#include "stylepipe/tnsr_io.hpp"

namespace stylepipe {

using nlohmann::json;

namespace {
constexpr char kMagic[5] = {'S', 'P', 'C', 'K', '1'};
constexpr uint32_t kVersion = 1;
}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : sections)
        if (n == name) return &t;
    return nullptr;
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint for write: " + path);
    f.write(kMagic, 5);
    f.write(reinterpret_cast<const char*>(&kVersion), 4);
    const std::string hdr = header.dump();
    const uint64_t hlen = hdr.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
    const uint32_t count = static_cast<uint32_t>(sections.size());
    f.write(reinterpret_cast<const char*>(&count), 4);
    for (const auto& [name, tensor] : sections) {
        const uint32_t nlen = static_cast<uint32_t>(name.size());
        f.write(reinterpret_cast<const char*>(&nlen), 4);
        f.write(name.data(), nlen);
        write_tnsr(f, tensor);
    }
    if (!f) throw IoError("checkpoint write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    char magic[5];
    f.read(magic, 5);
    if (!f || std::memcmp(magic, kMagic, 5) != 0) throw IoError("bad checkpoint magic: " + path);
    uint32_t version = 0;
    f.read(reinterpret_cast<char*>(&version), 4);
    if (version != kVersion) throw IoError("unsupported checkpoint version");
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hdr(hlen, '\0');
    f.read(hdr.data(), static_cast<std::streamsize>(hlen));
    Checkpoint ckpt;
    ckpt.header = json::parse(hdr);
    uint32_t count = 0;
    f.read(reinterpret_cast<char*>(&count), 4);
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t nlen = 0;
        f.read(reinterpret_cast<char*>(&nlen), 4);
        std::string name(nlen, '\0');
        f.read(name.data(), nlen);
        ckpt.sections.emplace_back(name, read_tnsr(f));
    }
    if (!f) throw IoError("truncated checkpoint: " + path);
    return ckpt;
}

json net_config_to_json(const NetConfig& cfg) {
    return json{{"n_main", cfg.n_main},   {"m_ctx", cfg.m_ctx},
                {"d_model", cfg.d_model}, {"heads", cfg.heads},
                {"patch", cfg.patch},     {"t", cfg.t},
                {"h", cfg.h},             {"w", cfg.w},
                {"c", cfg.c},             {"styles", cfg.styles},
                {"sigma_embed", cfg.sigma_embed}, {"t_diff", cfg.t_diff}};
}

NetConfig net_config_from_json(const json& j) {
    NetConfig cfg;
    cfg.n_main = j.at("n_main").get<int>();
    cfg.m_ctx = j.at("m_ctx").get<int>();
    cfg.d_model = j.at("d_model").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.patch = j.at("patch").get<int>();
    cfg.t = j.at("t").get<int>();
    cfg.h = j.at("h").get<int>();
    cfg.w = j.at("w").get<int>();
    cfg.c = j.at("c").get<int>();
    cfg.styles = j.at("styles").get<int>();
    cfg.sigma_embed = j.at("sigma_embed").get<int>();
    cfg.t_diff = j.at("t_diff").get<int>();
    cfg.validate();
    return cfg;
}

Checkpoint make_checkpoint(const DenoiserNet& net, const LoraSet* adapters,
                           const NoiseSchedule& schedule, const std::string& phase, int step,
                           const std::string& rng_state,
                           const std::vector<std::pair<std::string, Tensor>>& adam_m,
                           const std::vector<std::pair<std::string, Tensor>>& adam_v,
                           const json& extra) {
    Checkpoint ckpt;
    ckpt.header["format"] = "stylepipe-checkpoint";
    ckpt.header["net"] = net_config_to_json(net.config());
    ckpt.header["schedule"] = {{"kind", schedule_kind_name(schedule.kind)},
                               {"t_diff", schedule.t_diff}};
    ckpt.header["phase"] = phase;
    ckpt.header["step"] = step;
    ckpt.header["rng_state"] = rng_state;
    if (adapters)
        ckpt.header["lora"] = {{"rank", adapters->rank}, {"scale", adapters->scale}};
    ckpt.header["extra"] = extra;
    for (const auto& [name, t] : net.named_params())
        ckpt.sections.emplace_back("param." + name, t);
    if (adapters)
        for (const auto& [name, t] : adapters->named_params())
            ckpt.sections.emplace_back(name, t);
    for (const auto& [name, t] : adam_m) ckpt.sections.emplace_back("adam.m." + name, t);
    for (const auto& [name, t] : adam_v) ckpt.sections.emplace_back("adam.v." + name, t);
    return ckpt;
}

DenoiserNet net_from_checkpoint(const Checkpoint& ckpt) {
    const NetConfig cfg = net_config_from_json(ckpt.header.at("net"));
    Rng rng(0);
    DenoiserNet net = DenoiserNet::init(cfg, rng);
    for (auto& [name, t] : net.named_params()) {
        const Tensor* stored = ckpt.find("param." + name);
        if (!stored) throw IoError("checkpoint missing parameter " + name);
        if (stored->shape() != t.shape())
            throw IoError("checkpoint parameter " + name + " has shape " +
                          shape_str(stored->shape()));
        std::copy(stored->data(), stored->data() + stored->numel(), Tensor(t).data());
    }
    return net;
}

std::optional<LoraSet> adapters_from_checkpoint(const Checkpoint& ckpt) {
    if (!ckpt.header.contains("lora")) return std::nullopt;
    const NetConfig cfg = net_config_from_json(ckpt.header.at("net"));
    const int rank = ckpt.header["lora"]["rank"].get<int>();
    const real scale = ckpt.header["lora"]["scale"].get<real>();
    Rng rng(0);
    LoraSet set = LoraSet::init(cfg.m_ctx, cfg.d_model, rank, rng, scale);
    for (auto& [name, t] : set.named_params()) {
        const Tensor* stored = ckpt.find(name);
        if (!stored) throw IoError("checkpoint missing adapter " + name);
        std::copy(stored->data(), stored->data() + stored->numel(), Tensor(t).data());
    }
    return set;
}

NoiseSchedule schedule_from_checkpoint(const Checkpoint& ckpt) {
    const auto& s = ckpt.header.at("schedule");
    return make_schedule(schedule_kind_from_name(s.at("kind").get<std::string>()),
                         s.at("t_diff").get<int>());
}

}  // namespace stylepipe
