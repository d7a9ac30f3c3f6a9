#include "synic/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "synic/errors.hpp"

namespace synic {

namespace {

constexpr char kMagic[4] = {'S', 'Y', 'N', 'C'};
constexpr uint32_t kFormatVersion = 1;

template <typename S>
constexpr const char* dtype_name() {
    if constexpr (std::is_same_v<S, float>) return "f32";
    else return "f64";
}

void write_exact(std::ofstream& out, const void* data, size_t len, const std::string& path) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
    if (!out) throw DataError("checkpoint: short write to " + path);
}

void read_exact(std::ifstream& in, void* data, size_t len, const std::string& path) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(len));
    if (in.gcount() != static_cast<std::streamsize>(len))
        throw DataError("checkpoint: truncated file " + path);
}

template <typename S>
ParamSet<S> read_params(std::ifstream& in, const nlohmann::json& tensors,
                        const std::string& path) {
    ParamSet<S> p;
    for (const auto& t : tensors) {
        auto& m = p.add(t.at("name").get<std::string>(), t.at("rows").get<Eigen::Index>(),
                        t.at("cols").get<Eigen::Index>());
        read_exact(in, m.data(), sizeof(S) * static_cast<size_t>(m.size()), path);
    }
    return p;
}

}  // namespace

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const Transformer<S>& model,
                     uint64_t vocab_fingerprint, uint64_t train_seed) {
    nlohmann::json tensors = nlohmann::json::array();
    const auto& params = model.params();
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& t = params.tensor(i);
        tensors.push_back({{"name", t.name}, {"rows", t.mat.rows()}, {"cols", t.mat.cols()}});
    }
    const nlohmann::json header{{"format_version", kFormatVersion},
                                {"dtype", dtype_name<S>()},
                                {"model", model.config().to_json()},
                                {"vocab_fingerprint", vocab_fingerprint},
                                {"train_seed", train_seed},
                                {"tensors", std::move(tensors)}};
    const std::string header_bytes = header.dump();

    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("checkpoint: cannot open " + tmp.string() + " for writing");
        write_exact(out, kMagic, 4, tmp.string());
        const uint32_t ver = kFormatVersion;
        write_exact(out, &ver, sizeof(ver), tmp.string());
        const uint64_t hlen = header_bytes.size();
        write_exact(out, &hlen, sizeof(hlen), tmp.string());
        write_exact(out, header_bytes.data(), header_bytes.size(), tmp.string());
        for (size_t i = 0; i < params.size(); ++i) {
            const auto& m = params.tensor(i).mat;
            write_exact(out, m.data(), sizeof(S) * static_cast<size_t>(m.size()), tmp.string());
        }
        out.flush();
        if (!out) throw DataError("checkpoint: failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open " + path.string());
    char magic[4];
    read_exact(in, magic, 4, path.string());
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("checkpoint: bad magic in " + path.string());
    uint32_t ver = 0;
    read_exact(in, &ver, sizeof(ver), path.string());
    if (ver != kFormatVersion)
        throw DataError("checkpoint: unsupported format version " + std::to_string(ver));
    uint64_t hlen = 0;
    read_exact(in, &hlen, sizeof(hlen), path.string());
    if (hlen > (1ull << 26)) throw DataError("checkpoint: implausible header size");
    std::string header_bytes(hlen, '\0');
    read_exact(in, header_bytes.data(), hlen, path.string());

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_bytes);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint: bad header in " + path.string() + ": " + e.what());
    }

    CheckpointMeta meta;
    try {
        meta.format_version = header.at("format_version").get<int>();
        meta.dtype = header.at("dtype").get<std::string>();
        meta.config = ModelConfig::from_json(header.at("model"));
        meta.vocab_fingerprint = header.at("vocab_fingerprint").get<uint64_t>();
        meta.train_seed = header.at("train_seed").get<uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint: incomplete header in " + path.string() + ": " + e.what());
    }

    const auto& tensors = header.at("tensors");
    if (meta.dtype == "f32") {
        Transformer<float> model(meta.config, read_params<float>(in, tensors, path.string()));
        return {meta, std::move(model)};
    }
    if (meta.dtype == "f64") {
        Transformer<double> model(meta.config, read_params<double>(in, tensors, path.string()));
        return {meta, std::move(model)};
    }
    throw DataError("checkpoint: unknown dtype '" + meta.dtype + "'");
}

template <typename S>
Transformer<S> load_checkpoint_as(const std::filesystem::path& path, CheckpointMeta* meta_out) {
    LoadedCheckpoint lc = load_checkpoint(path);
    if (meta_out) *meta_out = lc.meta;
    if (auto* same = std::get_if<Transformer<S>>(&lc.model)) return std::move(*same);
    return std::visit(
        [](auto& m) {
            return Transformer<S>(m.config(), m.params().template cast<S>());
        },
        lc.model);
}

template void save_checkpoint<float>(const std::filesystem::path&, const Transformer<float>&,
                                     uint64_t, uint64_t);
template void save_checkpoint<double>(const std::filesystem::path&, const Transformer<double>&,
                                      uint64_t, uint64_t);
template Transformer<float> load_checkpoint_as<float>(const std::filesystem::path&,
                                                      CheckpointMeta*);
template Transformer<double> load_checkpoint_as<double>(const std::filesystem::path&,
                                                        CheckpointMeta*);

}  // namespace synic
