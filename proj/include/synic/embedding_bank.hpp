#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "synic/synthgen.hpp"
#include "synic/vocab.hpp"

namespace synic {

// Per-drug reference embeddings for the retrieval objective and inverse
// ranking. Each drug owns one or more unit-norm rows (several rows model
// augmented representations of the same molecule; similarity is then the max
// cosine over the drug's rows). Keyed by drug name so a bank file is
// independent of any particular vocabulary's id assignment.
class DrugEmbeddingBank {
  public:
    DrugEmbeddingBank() = default;

    // One row per drug taken from the world's latent vectors (already unit).
    static DrugEmbeddingBank from_world(const LatentWorld& world, const EntityVocab& vocab);

    // CSV with header `drug,dim_0,...,dim_{D-1}`; repeated drug names stack
    // extra rows. Rows are L2-normalized on load.
    static DrugEmbeddingBank from_csv(const std::filesystem::path& path);

    void add(const std::string& drug, const Eigen::VectorXd& vec);

    int dim() const { return dim_; }
    size_t num_drugs() const { return names_.size(); }
    const std::vector<std::string>& drug_names() const { return names_; }
    bool has(const std::string& drug) const;

    // The drug's first row: the training target vector.
    const Eigen::VectorXd& vector_for(const std::string& drug) const;
    const std::vector<Eigen::VectorXd>& rows_for(const std::string& drug) const;

    // Max cosine between the (not necessarily normalized) query and the
    // drug's rows; zero-norm queries score 0 against everything.
    double max_cosine(const std::string& drug, const Eigen::VectorXd& query) const;

    // Entity id -> bank drug index, -1 where the vocab entry has no vector
    // (including cells and reserved ids).
    std::vector<int> index_for_vocab(const EntityVocab& vocab) const;

    void write_csv(const std::filesystem::path& path) const;

  private:
    size_t index_of(const std::string& drug) const;

    int dim_ = 0;
    std::vector<std::string> names_;
    std::vector<std::vector<Eigen::VectorXd>> rows_;  // unit-norm, >=1 per drug
    std::unordered_map<std::string, size_t> by_name_;
};

}  // namespace synic
