#include "amoe/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "amoe/errors.hpp"

namespace amoe {

namespace {

constexpr char kMagic[4] = {'A', 'M', 'O', 'E'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f, const char* what) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw ParseError(std::string("checkpoint truncated reading ") + what);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const TinyTransformer& model,
                     const std::string& config_echo) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(kMagic, 4);
    put<std::uint32_t>(f, kVersion);
    put<std::uint32_t>(f, static_cast<std::uint32_t>(config_echo.size()));
    f.write(config_echo.data(), static_cast<std::streamsize>(config_echo.size()));

    const auto params = model.params();
    put<std::uint32_t>(f, static_cast<std::uint32_t>(params.size()));
    for (const Param* p : params) {
        put<std::uint16_t>(f, static_cast<std::uint16_t>(p->name.size()));
        f.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put<std::uint8_t>(f, 2);
        put<std::uint64_t>(f, static_cast<std::uint64_t>(p->value.rows()));
        put<std::uint64_t>(f, static_cast<std::uint64_t>(p->value.cols()));
        f.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    }
    if (!f) throw IoError("write failure on '" + path + "'");
}

LoadedCheckpoint read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for reading");

    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw ParseError("'" + path + "': bad magic bytes (not an AMOE checkpoint)");
    const auto version = get<std::uint32_t>(f, "version");
    if (version != kVersion)
        throw ParseError("'" + path + "': unsupported checkpoint version " + std::to_string(version));

    LoadedCheckpoint ck;
    const auto cfg_len = get<std::uint32_t>(f, "config length");
    ck.config_echo.resize(cfg_len);
    f.read(ck.config_echo.data(), cfg_len);
    if (!f) throw ParseError("'" + path + "': truncated config blob");

    const auto count = get<std::uint32_t>(f, "tensor count");
    ck.tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = get<std::uint16_t>(f, "tensor name length");
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        if (!f) throw ParseError("'" + path + "': truncated tensor name");
        const auto ndim = get<std::uint8_t>(f, "ndim");
        if (ndim != 2) throw ParseError("'" + path + "': tensor '" + name + "' has ndim " + std::to_string(ndim));
        const auto rows = get<std::uint64_t>(f, "rows");
        const auto cols = get<std::uint64_t>(f, "cols");
        if (rows > (1u << 24) || cols > (1u << 24))
            throw ParseError("'" + path + "': implausible tensor shape for '" + name + "'");
        Tensor2 t(static_cast<int>(rows), static_cast<int>(cols));
        f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!f) throw ParseError("'" + path + "': truncated tensor data for '" + name + "'");
        ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ck;
}

void restore_into(TinyTransformer& model, const LoadedCheckpoint& ck, bool base_only) {
    std::map<std::string, const Tensor2*> by_name;
    for (const auto& [name, t] : ck.tensors) by_name[name] = &t;

    for (Param* p : model.params()) {
        if (base_only && p->name.rfind("base.", 0) != 0) continue;
        auto it = by_name.find(p->name);
        if (it == by_name.end())
            throw ParseError("checkpoint is missing tensor '" + p->name + "'");
        if (!it->second->same_shape(p->value))
            throw DimensionError("checkpoint tensor '" + p->name + "' has shape " + shape_str(*it->second) +
                                 " but model expects " + shape_str(p->value));
        p->value = *it->second;
    }
}

}  // namespace amoe
