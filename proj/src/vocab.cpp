#include "synic/vocab.hpp"

#include "synic/errors.hpp"
#include "synic/rng.hpp"

namespace synic {

EntityId EntityVocab::intern(Kind kind, std::string name) {
    auto& by_name = (kind == Kind::drug) ? drug_by_name_ : cell_by_name_;
    if (auto it = by_name.find(name); it != by_name.end()) return it->second;
    const auto id = static_cast<EntityId>(entries_.size());
    by_name.emplace(name, id);
    entries_.push_back(Entry{std::move(name), kind});
    if (kind == Kind::drug)
        ++num_drugs_;
    else
        ++num_cells_;
    return id;
}

std::optional<EntityId> EntityVocab::find(Kind kind, std::string_view name) const {
    const auto& by_name = (kind == Kind::drug) ? drug_by_name_ : cell_by_name_;
    if (auto it = by_name.find(std::string(name)); it != by_name.end()) return it->second;
    return std::nullopt;
}

EntityVocab::Kind EntityVocab::kind(EntityId id) const {
    if (id >= entries_.size()) throw ContractError("EntityVocab::kind: reserved or invalid id");
    return entries_[id].kind;
}

const std::string& EntityVocab::name(EntityId id) const {
    if (id >= entries_.size()) throw ContractError("EntityVocab::name: reserved or invalid id");
    return entries_[id].name;
}

std::vector<EntityId> EntityVocab::drug_ids() const {
    std::vector<EntityId> out;
    out.reserve(num_drugs_);
    for (EntityId id = 0; id < entries_.size(); ++id)
        if (entries_[id].kind == Kind::drug) out.push_back(id);
    return out;
}

std::vector<EntityId> EntityVocab::cell_ids() const {
    std::vector<EntityId> out;
    out.reserve(num_cells_);
    for (EntityId id = 0; id < entries_.size(); ++id)
        if (entries_[id].kind == Kind::cell) out.push_back(id);
    return out;
}

uint64_t EntityVocab::fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& e : entries_) {
        const unsigned char k = (e.kind == Kind::drug) ? 0 : 1;
        h = fnv1a(&k, 1, h);
        h = fnv1a(e.name.data(), e.name.size(), h);
        const unsigned char sep = 0xff;
        h = fnv1a(&sep, 1, h);
    }
    return h;
}

nlohmann::json EntityVocab::to_json() const {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : entries_)
        entries.push_back({{"name", e.name}, {"kind", e.kind == Kind::drug ? "drug" : "cell"}});
    return {{"entities", std::move(entries)}};
}

EntityVocab EntityVocab::from_json(const nlohmann::json& j) {
    EntityVocab v;
    for (const auto& e : j.at("entities")) {
        const std::string kind = e.at("kind").get<std::string>();
        if (kind != "drug" && kind != "cell")
            throw DataError("EntityVocab::from_json: unknown kind '" + kind + "'");
        v.intern(kind == "drug" ? Kind::drug : Kind::cell, e.at("name").get<std::string>());
    }
    return v;
}

}  // namespace synic
