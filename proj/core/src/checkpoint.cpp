#include "eigenformer/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "eigenformer/data_io.hpp"

namespace eigenformer {

namespace {

constexpr char kMagic[4] = {'E', 'I', 'G', 'F'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
void get_or_throw(std::istream& in, T& v, const char* what) {
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (in.gcount() != sizeof(v)) throw IoError(std::string("checkpoint truncated at ") + what);
}

struct Block {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;
};

void write_block(std::ostream& out, const std::string& name, const std::vector<int>& shape,
                 const std::vector<double>& data) {
    put(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(out, static_cast<uint32_t>(shape.size()));
    for (int d : shape) put(out, static_cast<uint32_t>(d));
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
}

/// Every persisted block: parameters plus BN running statistics.
std::vector<Block> collect_blocks(EigenformerModel& model) {
    std::vector<Block> blocks;
    for (auto& np : model.parameters())
        blocks.push_back({np.name, np.tensor.shape, *np.tensor.values});
    for (size_t l = 0; l < model.layers.size(); ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        auto& lay = model.layers[l];
        const int d = lay.dim;
        blocks.push_back({p + "bn1.running_mean", {d}, lay.bn1_state.running_mean});
        blocks.push_back({p + "bn1.running_var", {d}, lay.bn1_state.running_var});
        blocks.push_back({p + "bn2.running_mean", {d}, lay.bn2_state.running_mean});
        blocks.push_back({p + "bn2.running_var", {d}, lay.bn2_state.running_var});
    }
    return blocks;
}

} // namespace

void save_checkpoint(EigenformerModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);

    const std::string config_json = model.config.to_json();
    out.write(kMagic, 4);
    put(out, kVersion);
    put(out, model.config.digest());
    put(out, static_cast<uint32_t>(config_json.size()));
    out.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));

    auto blocks = collect_blocks(model);
    put(out, static_cast<uint32_t>(blocks.size()));
    for (const Block& b : blocks) write_block(out, b.name, b.shape, b.data);
    if (!out) throw IoError("checkpoint write failed: " + path);
}

EigenformerModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);

    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("not a checkpoint (bad magic): " + path);
    uint32_t version = 0;
    get_or_throw(in, version, "version");
    if (version != kVersion)
        throw IoError("checkpoint version " + std::to_string(version) + " unsupported");

    uint64_t digest = 0;
    get_or_throw(in, digest, "digest");
    uint32_t config_len = 0;
    get_or_throw(in, config_len, "config length");
    std::string config_json(config_len, '\0');
    in.read(config_json.data(), config_len);
    if (in.gcount() != static_cast<std::streamsize>(config_len))
        throw IoError("checkpoint truncated in config");

    TrainConfig cfg = TrainConfig::from_json(config_json);
    if (cfg.digest() != digest)
        throw IoError("checkpoint config digest mismatch (file corrupt or edited)");

    EigenformerModel model = build_model(cfg);

    uint32_t block_count = 0;
    get_or_throw(in, block_count, "block count");
    std::map<std::string, Block> loaded;
    for (uint32_t bi = 0; bi < block_count; ++bi) {
        uint32_t name_len = 0;
        get_or_throw(in, name_len, "block name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (in.gcount() != static_cast<std::streamsize>(name_len))
            throw IoError("checkpoint truncated in block name");
        uint32_t ndim = 0;
        get_or_throw(in, ndim, "block rank");
        Block b;
        b.name = name;
        size_t count = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            uint32_t dim = 0;
            get_or_throw(in, dim, "block shape");
            b.shape.push_back(static_cast<int>(dim));
            count *= dim;
        }
        b.data.resize(count);
        in.read(reinterpret_cast<char*>(b.data.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        if (in.gcount() != static_cast<std::streamsize>(count * sizeof(double)))
            throw IoError("checkpoint truncated in block data: " + name);
        loaded.emplace(b.name, std::move(b));
    }

    auto take = [&](const std::string& name) -> Block& {
        auto it = loaded.find(name);
        if (it == loaded.end()) throw IoError("checkpoint missing block: " + name);
        return it->second;
    };
    for (auto& np : model.parameters()) {
        Block& b = take(np.name);
        if (b.shape != np.tensor.shape)
            throw IoError("checkpoint block " + np.name + " has wrong shape");
        *np.tensor.values = b.data;
    }
    for (size_t l = 0; l < model.layers.size(); ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        auto& lay = model.layers[l];
        lay.bn1_state.running_mean = take(p + "bn1.running_mean").data;
        lay.bn1_state.running_var = take(p + "bn1.running_var").data;
        lay.bn2_state.running_mean = take(p + "bn2.running_mean").data;
        lay.bn2_state.running_var = take(p + "bn2.running_var").data;
    }
    return model;
}

} // namespace eigenformer
