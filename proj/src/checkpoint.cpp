#include "focalforge/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

using nlohmann::json;

namespace focalforge {

namespace {
constexpr char kMagic[4] = {'F', 'F', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_checkpoint(const std::string& path, const std::string& kind, const json& config,
                     long step, const std::string& rng_state, const nn::ParamMap& params) {
    json header;
    header["kind"] = kind;
    header["config"] = config;
    header["step"] = step;
    header["rng_state"] = rng_state;

    json dir = json::array();
    std::uint64_t offset = 0;
    for (size_t i = 0; i < params.names().size(); ++i) {
        const Tensor& t = params.vars()[i]->value;
        json e;
        e["name"] = params.names()[i];
        e["shape"] = t.shape();
        e["offset"] = offset;
        dir.push_back(e);
        offset += static_cast<std::uint64_t>(t.size()) * sizeof(double);
    }
    header["tensors"] = dir;
    const std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    f.write(kMagic, 4);
    std::uint32_t ver = kVersion;
    f.write(reinterpret_cast<const char*>(&ver), 4);
    std::uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& v : params.vars())
        f.write(reinterpret_cast<const char*>(v->value.data()),
                static_cast<std::streamsize>(v->value.size() * sizeof(double)));
    if (!f) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    f.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("bad checkpoint magic: " + path);
    std::uint32_t ver = 0;
    f.read(reinterpret_cast<char*>(&ver), 4);
    if (ver != kVersion) throw std::runtime_error("unsupported checkpoint version");
    std::uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    json header = json::parse(hs);

    Checkpoint ckpt;
    ckpt.kind = header.value("kind", "");
    ckpt.config = header.value("config", json::object());
    ckpt.step = header.value("step", 0L);
    ckpt.rng_state = header.value("rng_state", "");

    for (const auto& e : header["tensors"]) {
        const std::string name = e["name"];
        std::vector<int> shape = e["shape"].get<std::vector<int>>();
        Tensor t(shape);
        f.read(reinterpret_cast<char*>(t.data()),
               static_cast<std::streamsize>(t.size() * sizeof(double)));
        ckpt.tensors.emplace(name, std::move(t));
    }
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
    return ckpt;
}

void apply_checkpoint(const Checkpoint& ckpt, const nn::ParamMap& params) {
    for (size_t i = 0; i < params.names().size(); ++i) {
        const auto it = ckpt.tensors.find(params.names()[i]);
        if (it == ckpt.tensors.end())
            throw std::runtime_error("checkpoint missing tensor: " + params.names()[i]);
        Tensor& dst = params.vars()[i]->value;
        if (!dst.same_shape(it->second))
            throw std::runtime_error("checkpoint shape mismatch for " + params.names()[i]);
        std::memcpy(dst.data(), it->second.data(),
                    static_cast<size_t>(dst.size()) * sizeof(double));
    }
}

}  // namespace focalforge
