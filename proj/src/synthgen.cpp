#include "synic/synthgen.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "synic/errors.hpp"

namespace synic {

namespace {

std::string drug_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "D%03d", i);
    return buf;
}

std::string cell_name(int j) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "C%02d", j);
    return buf;
}

}  // namespace

void WorldParams::validate() const {
    if (num_drugs < 1 || num_cells < 1 || d_latent < 1)
        throw ConfigError("world params: counts must be >= 1");
    if (noise_rate < 0.0 || noise_rate >= 0.5)
        throw ConfigError("world params: noise_rate must be in [0, 0.5)");
    if (threshold_samples < 1) throw ConfigError("world params: threshold_samples must be >= 1");
}

nlohmann::json WorldParams::to_json() const {
    return {{"num_drugs", num_drugs},     {"num_cells", num_cells},
            {"d_latent", d_latent},       {"noise_rate", noise_rate},
            {"mean_weight", mean_weight}, {"diag_weight", diag_weight},
            {"threshold_samples", threshold_samples}};
}

WorldParams WorldParams::from_json(const nlohmann::json& j) {
    WorldParams p;
    p.num_drugs = j.value("num_drugs", p.num_drugs);
    p.num_cells = j.value("num_cells", p.num_cells);
    p.d_latent = j.value("d_latent", p.d_latent);
    p.noise_rate = j.value("noise_rate", p.noise_rate);
    p.mean_weight = j.value("mean_weight", p.mean_weight);
    p.diag_weight = j.value("diag_weight", p.diag_weight);
    p.threshold_samples = j.value("threshold_samples", p.threshold_samples);
    return p;
}

LatentWorld sample_world(const WorldParams& params, uint64_t seed) {
    params.validate();
    const int d = params.d_latent;

    Eigen::VectorXd mean_dir = Eigen::VectorXd::Zero(d);
    {
        RngStream rng(derive_seed(seed, "world.mean"));
        for (int k = 0; k < d; ++k) mean_dir[k] = rng.normal();
        const double norm = mean_dir.norm();
        if (norm > 0) mean_dir /= norm;
    }

    LatentWorld world;
    world.noise_rate = params.noise_rate;
    world.drug_vecs.resize(params.num_drugs, d);
    {
        RngStream rng(derive_seed(seed, "world.drugs"));
        for (int i = 0; i < params.num_drugs; ++i) {
            Eigen::VectorXd v = params.mean_weight * mean_dir;
            for (int k = 0; k < d; ++k) v[k] += rng.normal();
            const double norm = v.norm();
            if (norm < 1e-12) v = mean_dir.norm() > 0 ? mean_dir : Eigen::VectorXd::Unit(d, 0);
            else v /= norm;
            world.drug_vecs.row(i) = v.transpose();
        }
    }
    {
        RngStream rng(derive_seed(seed, "world.cells"));
        world.cell_mats.reserve(params.num_cells);
        for (int j = 0; j < params.num_cells; ++j) {
            Eigen::MatrixXd a(d, d);
            for (int r = 0; r < d; ++r)
                for (int c = 0; c < d; ++c) a(r, c) = rng.normal();
            Eigen::MatrixXd m = 0.5 * (a + a.transpose());
            m.diagonal().array() += params.diag_weight;
            world.cell_mats.push_back(std::move(m));
        }
    }

    // Threshold = lower median of the score distribution, computed over all
    // (a < b, c) triples when that fits the sample budget, else a sample.
    std::vector<double> scores;
    const long long all_triples =
        static_cast<long long>(params.num_drugs) * (params.num_drugs - 1) / 2 * params.num_cells;
    if (params.num_drugs >= 2 && all_triples <= params.threshold_samples) {
        scores.reserve(static_cast<size_t>(all_triples));
        for (int a = 0; a < params.num_drugs; ++a)
            for (int b = a + 1; b < params.num_drugs; ++b)
                for (int c = 0; c < params.num_cells; ++c)
                    scores.push_back(synergy_score(world, a, b, c));
    } else {
        RngStream rng(derive_seed(seed, "world.threshold"));
        scores.reserve(params.threshold_samples);
        while (scores.size() < static_cast<size_t>(params.threshold_samples)) {
            const int a = static_cast<int>(rng.below(params.num_drugs));
            int b = a;
            if (params.num_drugs > 1)
                while (b == a) b = static_cast<int>(rng.below(params.num_drugs));
            const int c = static_cast<int>(rng.below(params.num_cells));
            scores.push_back(synergy_score(world, a, b, c));
        }
    }
    if (scores.empty()) scores.push_back(0.0);
    const size_t mid = (scores.size() - 1) / 2;
    std::nth_element(scores.begin(), scores.begin() + mid, scores.end());
    world.threshold = scores[mid];
    return world;
}

double synergy_score(const LatentWorld& world, int drug_a, int drug_b, int cell) {
    if (drug_a < 0 || drug_a >= world.num_drugs() || drug_b < 0 || drug_b >= world.num_drugs())
        throw ContractError("synergy_score: drug index out of range");
    if (cell < 0 || cell >= world.num_cells())
        throw ContractError("synergy_score: cell index out of range");
    // Fixed-order scalar accumulation over a canonical drug order: the score
    // is symmetric in the pair and reproducible bit-for-bit across machines,
    // which matters because labels compare it against an exact threshold.
    const int lo = std::min(drug_a, drug_b), hi = std::max(drug_a, drug_b);
    const auto& m = world.cell_mats[cell];
    double s = 0.0;
    for (int i = 0; i < world.d_latent(); ++i)
        for (int j = 0; j < world.d_latent(); ++j)
            s += world.drug_vecs(lo, i) * m(i, j) * world.drug_vecs(hi, j);
    return s;
}

int clean_label(const LatentWorld& world, int drug_a, int drug_b, int cell) {
    return synergy_score(world, drug_a, drug_b, cell) > world.threshold ? 1 : 0;
}

int noisy_label(const LatentWorld& world, int drug_a, int drug_b, int cell, RngStream& rng) {
    const int y = clean_label(world, drug_a, drug_b, cell);
    if (world.noise_rate > 0.0 && rng.bernoulli(world.noise_rate)) return 1 - y;
    return y;
}

EntityVocab world_vocab(const LatentWorld& world) {
    EntityVocab vocab;
    for (int i = 0; i < world.num_drugs(); ++i)
        vocab.intern(EntityVocab::Kind::drug, drug_name(i));
    for (int j = 0; j < world.num_cells(); ++j)
        vocab.intern(EntityVocab::Kind::cell, cell_name(j));
    return vocab;
}

std::vector<int> world_index_of(const LatentWorld& world, const EntityVocab& vocab) {
    std::vector<int> map(vocab.num_entities(), -1);
    for (int i = 0; i < world.num_drugs(); ++i)
        if (auto id = vocab.find(EntityVocab::Kind::drug, drug_name(i))) map[*id] = i;
    for (int j = 0; j < world.num_cells(); ++j)
        if (auto id = vocab.find(EntityVocab::Kind::cell, cell_name(j))) map[*id] = j;
    return map;
}

SynthData sample_dataset(const LatentWorld& world, size_t count, uint64_t seed) {
    if (count < 1) throw ConfigError("sample_dataset: count must be >= 1");
    if (world.num_drugs() < 2) throw ConfigError("sample_dataset: need at least two drugs");
    SynthData data;
    data.vocab = world_vocab(world);
    data.tuples.reserve(count);
    RngStream rng(derive_seed(seed, "data.tuples"));
    for (size_t i = 0; i < count; ++i) {
        const int a = static_cast<int>(rng.below(world.num_drugs()));
        int b = a;
        while (b == a) b = static_cast<int>(rng.below(world.num_drugs()));
        const int c = static_cast<int>(rng.below(world.num_cells()));
        SynergyTuple t;
        t.drug_a = *data.vocab.find(EntityVocab::Kind::drug, drug_name(a));
        t.drug_b = *data.vocab.find(EntityVocab::Kind::drug, drug_name(b));
        t.cell = *data.vocab.find(EntityVocab::Kind::cell, cell_name(c));
        t.label = static_cast<uint8_t>(noisy_label(world, a, b, c, rng));
        t.group = cell_name(c);
        data.tuples.push_back(std::move(t));
    }
    return data;
}

nlohmann::json LatentWorld::to_json() const {
    nlohmann::json drugs = nlohmann::json::array();
    for (int i = 0; i < num_drugs(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int k = 0; k < d_latent(); ++k) row.push_back(drug_vecs(i, k));
        drugs.push_back(std::move(row));
    }
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& m : cell_mats) {
        nlohmann::json mat = nlohmann::json::array();
        for (int r = 0; r < m.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
            mat.push_back(std::move(row));
        }
        cells.push_back(std::move(mat));
    }
    return {{"drug_vecs", std::move(drugs)},
            {"cell_mats", std::move(cells)},
            {"noise_rate", noise_rate},
            {"threshold", threshold}};
}

LatentWorld LatentWorld::from_json(const nlohmann::json& j) {
    LatentWorld w;
    const auto& drugs = j.at("drug_vecs");
    if (drugs.empty()) throw DataError("world: no drug vectors");
    const size_t d = drugs.front().size();
    w.drug_vecs.resize(static_cast<Eigen::Index>(drugs.size()), static_cast<Eigen::Index>(d));
    for (size_t i = 0; i < drugs.size(); ++i) {
        if (drugs[i].size() != d) throw DataError("world: ragged drug vectors");
        for (size_t k = 0; k < d; ++k) w.drug_vecs(i, k) = drugs[i][k].get<double>();
    }
    for (const auto& mat : j.at("cell_mats")) {
        Eigen::MatrixXd m(d, d);
        if (mat.size() != d) throw DataError("world: cell matrix dimension mismatch");
        for (size_t r = 0; r < d; ++r) {
            if (mat[r].size() != d) throw DataError("world: cell matrix dimension mismatch");
            for (size_t c = 0; c < d; ++c) m(r, c) = mat[r][c].get<double>();
        }
        w.cell_mats.push_back(std::move(m));
    }
    w.noise_rate = j.at("noise_rate").get<double>();
    w.threshold = j.at("threshold").get<double>();
    return w;
}

void save_world(const std::filesystem::path& path, const LatentWorld& world) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open world file for writing: " + path.string());
    out << world.to_json().dump(2) << '\n';
}

LatentWorld load_world(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open world file: " + path.string());
    try {
        nlohmann::json j;
        in >> j;
        return LatentWorld::from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("bad world file " + path.string() + ": " + e.what());
    }
}

}  // namespace synic
