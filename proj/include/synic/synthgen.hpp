#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "synic/rng.hpp"
#include "synic/types.hpp"
#include "synic/vocab.hpp"

namespace synic {

struct WorldParams {
    int num_drugs = 60;
    int num_cells = 6;
    int d_latent = 4;
    double noise_rate = 0.0;  // label flip probability, must stay < 0.5
    // Drug vectors are drawn around a shared mean direction; > 0 makes some
    // partners systematically more synergistic, which gives partner-only
    // (zero-context) prediction real signal.
    double mean_weight = 1.2;
    // Weight of the identity component shared by every cell matrix; > 0 makes
    // part of the score transfer across cell lines.
    double diag_weight = 0.5;
    // Score sample budget when picking the median threshold; exhaustive
    // enumeration is used whenever the triple space is smaller.
    int threshold_samples = 20000;

    void validate() const;
    nlohmann::json to_json() const;
    static WorldParams from_json(const nlohmann::json& j);
};

// Ground-truth synergy function: score(a, b, c) = v_a' * M_c * v_b with
// unit-norm drug vectors and symmetric per-cell matrices. The threshold is
// the empirical median score, so labels are approximately balanced.
struct LatentWorld {
    Eigen::MatrixXd drug_vecs;               // num_drugs x d_latent, unit rows
    std::vector<Eigen::MatrixXd> cell_mats;  // each d_latent x d_latent, symmetric
    double noise_rate = 0.0;
    double threshold = 0.0;

    int num_drugs() const { return static_cast<int>(drug_vecs.rows()); }
    int num_cells() const { return static_cast<int>(cell_mats.size()); }
    int d_latent() const { return static_cast<int>(drug_vecs.cols()); }

    nlohmann::json to_json() const;
    static LatentWorld from_json(const nlohmann::json& j);
};

LatentWorld sample_world(const WorldParams& params, uint64_t seed);

double synergy_score(const LatentWorld& world, int drug_a, int drug_b, int cell);

// Noise-free label: 1 iff score strictly exceeds the threshold.
int clean_label(const LatentWorld& world, int drug_a, int drug_b, int cell);

// Clean label flipped with probability noise_rate.
int noisy_label(const LatentWorld& world, int drug_a, int drug_b, int cell, RngStream& rng);

struct SynthData {
    EntityVocab vocab;  // drug index i <-> name "D###", cell j <-> "C##"
    std::vector<SynergyTuple> tuples;
};

// Uniform unordered drug pairs (a != b) and uniform cells; the group tag is
// the cell-line name so per-group evaluation breaks down by cell line.
SynthData sample_dataset(const LatentWorld& world, size_t count, uint64_t seed);

// Vocabulary with the naming scheme sample_dataset uses, covering every
// drug and cell of the world whether or not a tuple mentions it.
EntityVocab world_vocab(const LatentWorld& world);

// Maps vocab entity ids to world drug/cell indices by name; entities absent
// from the world map to -1.
std::vector<int> world_index_of(const LatentWorld& world, const EntityVocab& vocab);

void save_world(const std::filesystem::path& path, const LatentWorld& world);
LatentWorld load_world(const std::filesystem::path& path);

}  // namespace synic
