#pragma once

#include <filesystem>
#include <string>
#include <variant>

#include "synic/model.hpp"

namespace synic {

struct CheckpointMeta {
    int format_version = 1;
    std::string dtype;  // "f32" or "f64"
    ModelConfig config;
    uint64_t vocab_fingerprint = 0;
    uint64_t train_seed = 0;
};

// Self-describing container: magic + version, a JSON header declaring the
// model config, vocabulary fingerprint, training seed, dtype and tensor
// shapes, then the raw little-endian tensor data in declared order. Writes
// go to a temp file first and are renamed into place.
template <typename S>
void save_checkpoint(const std::filesystem::path& path, const Transformer<S>& model,
                     uint64_t vocab_fingerprint, uint64_t train_seed);

struct LoadedCheckpoint {
    CheckpointMeta meta;
    std::variant<Transformer<float>, Transformer<double>> model;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Loads and converts to the requested scalar type if the file holds the
// other width.
template <typename S>
Transformer<S> load_checkpoint_as(const std::filesystem::path& path,
                                  CheckpointMeta* meta_out = nullptr);

}  // namespace synic
