#include "synic/embedding_bank.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "synic/errors.hpp"

namespace synic {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s, size_t line_no) {
    double v = 0;
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e)
        throw DataError("bank csv line " + std::to_string(line_no) + ": bad number '" + s + "'");
    return v;
}

}  // namespace

DrugEmbeddingBank DrugEmbeddingBank::from_world(const LatentWorld& world,
                                                const EntityVocab& vocab) {
    DrugEmbeddingBank bank;
    const std::vector<int> widx = world_index_of(world, vocab);
    for (EntityId id : vocab.drug_ids()) {
        const int w = widx[id];
        if (w < 0)
            throw DataError("embedding bank: drug " + vocab.name(id) + " missing from the world");
        bank.add(vocab.name(id), world.drug_vecs.row(w).transpose());
    }
    return bank;
}

DrugEmbeddingBank DrugEmbeddingBank::from_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("embedding bank: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("embedding bank: empty file " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "drug")
        throw DataError("embedding bank: header must be drug,dim_0,...");
    for (size_t i = 1; i < header.size(); ++i)
        if (header[i] != "dim_" + std::to_string(i - 1))
            throw DataError("embedding bank: unexpected header column '" + header[i] + "'");
    const int dim = static_cast<int>(header.size()) - 1;

    DrugEmbeddingBank bank;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw DataError("bank csv line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
        if (fields[0].empty())
            throw DataError("bank csv line " + std::to_string(line_no) + ": empty drug name");
        Eigen::VectorXd v(dim);
        for (int j = 0; j < dim; ++j) v[j] = parse_double(fields[j + 1], line_no);
        if (v.norm() <= 1e-12)
            throw DataError("bank csv line " + std::to_string(line_no) + ": zero vector");
        bank.add(fields[0], v);
    }
    if (bank.num_drugs() == 0) throw DataError("embedding bank: no rows in " + path.string());
    return bank;
}

void DrugEmbeddingBank::add(const std::string& drug, const Eigen::VectorXd& vec) {
    if (vec.size() == 0) throw DataError("embedding bank: empty vector for " + drug);
    if (dim_ == 0) dim_ = static_cast<int>(vec.size());
    if (vec.size() != dim_)
        throw DataError("embedding bank: dimension mismatch for " + drug + " (" +
                        std::to_string(vec.size()) + " vs " + std::to_string(dim_) + ")");
    const double n = vec.norm();
    if (n <= 1e-12) throw DataError("embedding bank: zero vector for " + drug);
    auto it = by_name_.find(drug);
    if (it == by_name_.end()) {
        by_name_.emplace(drug, names_.size());
        names_.push_back(drug);
        rows_.emplace_back();
        it = by_name_.find(drug);
    }
    rows_[it->second].push_back(vec / n);
}

bool DrugEmbeddingBank::has(const std::string& drug) const { return by_name_.count(drug) > 0; }

size_t DrugEmbeddingBank::index_of(const std::string& drug) const {
    auto it = by_name_.find(drug);
    if (it == by_name_.end()) throw DataError("embedding bank: no vector for drug " + drug);
    return it->second;
}

const Eigen::VectorXd& DrugEmbeddingBank::vector_for(const std::string& drug) const {
    return rows_[index_of(drug)].front();
}

const std::vector<Eigen::VectorXd>& DrugEmbeddingBank::rows_for(const std::string& drug) const {
    return rows_[index_of(drug)];
}

double DrugEmbeddingBank::max_cosine(const std::string& drug, const Eigen::VectorXd& query) const {
    if (query.size() != dim_)
        throw DataError("embedding bank: query dimension " + std::to_string(query.size()) +
                        " does not match bank dimension " + std::to_string(dim_));
    const double qn = query.norm();
    if (qn <= 1e-12) return 0.0;
    double best = -2.0;
    for (const auto& row : rows_[index_of(drug)]) best = std::max(best, row.dot(query) / qn);
    return best;
}

std::vector<int> DrugEmbeddingBank::index_for_vocab(const EntityVocab& vocab) const {
    std::vector<int> out(vocab.num_entities() + 2, -1);
    for (EntityId id : vocab.drug_ids()) {
        auto it = by_name_.find(vocab.name(id));
        if (it != by_name_.end()) out[id] = static_cast<int>(it->second);
    }
    return out;
}

void DrugEmbeddingBank::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("embedding bank: cannot open " + path.string() + " for writing");
    out << "drug";
    for (int j = 0; j < dim_; ++j) out << ",dim_" << j;
    out << "\n";
    out.precision(17);
    for (size_t i = 0; i < names_.size(); ++i)
        for (const auto& row : rows_[i]) {
            out << names_[i];
            for (int j = 0; j < dim_; ++j) out << ',' << row[j];
            out << "\n";
        }
    if (!out) throw DataError("embedding bank: failed writing " + path.string());
}

}  // namespace synic
