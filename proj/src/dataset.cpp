#include "synic/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include "synic/errors.hpp"
#include "synic/rng.hpp"

namespace synic {

namespace {

std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        const size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(trim(std::string_view(line).substr(start)));
            break;
        }
        out.push_back(trim(std::string_view(line).substr(start, comma - start)));
        start = comma + 1;
    }
    return out;
}

double parse_label(const std::string& field, size_t line_no) {
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last)
        throw DataError("csv line " + std::to_string(line_no) + ": bad label '" + field + "'");
    return value;
}

// Tuple counts per entity of the kind selected by `mode`; a tuple pairing a
// drug with itself counts once for that drug.
std::vector<size_t> mention_counts(const std::vector<SynergyTuple>& tuples,
                                   const EntityVocab& vocab, SplitMode mode) {
    std::vector<size_t> counts(vocab.num_entities(), 0);
    for (const auto& t : tuples) {
        if (mode == SplitMode::unknown_drug) {
            ++counts[t.drug_a];
            if (t.drug_b != t.drug_a) ++counts[t.drug_b];
        } else {
            ++counts[t.cell];
        }
    }
    return counts;
}

std::vector<EntityId> pick_held_out(const std::vector<SynergyTuple>& tuples,
                                    const EntityVocab& vocab, size_t m, size_t min_count,
                                    SplitMode mode, uint64_t seed) {
    const auto counts = mention_counts(tuples, vocab, mode);
    const auto wanted_kind =
        (mode == SplitMode::unknown_drug) ? EntityVocab::Kind::drug : EntityVocab::Kind::cell;
    std::vector<EntityId> eligible;
    for (EntityId id = 0; id < vocab.num_entities(); ++id)
        if (vocab.kind(id) == wanted_kind && counts[id] >= min_count) eligible.push_back(id);
    if (eligible.size() < m)
        throw DataError("split: only " + std::to_string(eligible.size()) + " entities have >= " +
                        std::to_string(min_count) + " tuples; need " + std::to_string(m));
    RngStream rng(derive_seed(seed, "split.heldout"));
    std::vector<EntityId> held;
    held.reserve(m);
    for (size_t idx : rng.sample_indices(eligible.size(), m)) held.push_back(eligible[idx]);
    std::sort(held.begin(), held.end());
    return held;
}

}  // namespace

Dataset ingest_csv(std::istream& in, const IngestOptions& opts) {
    Dataset ds;
    std::string line;
    if (!std::getline(in, line)) throw DataError("csv: empty input");
    auto header = split_fields(line);
    const bool has_group = header.size() == 5 && header[4] == "group";
    const bool header_ok =
        (header.size() == 4 || has_group) && header[0] == "drug_1" && header[1] == "drug_2" &&
        header[2] == "cell_line" && header[3] == "label";
    if (!header_ok)
        throw DataError("csv: expected header drug_1,drug_2,cell_line,label[,group], got '" +
                        line + "'");

    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_fields(line);
        const size_t expect = has_group ? 5 : 4;
        if (fields.size() != expect)
            throw DataError("csv line " + std::to_string(line_no) + ": expected " +
                            std::to_string(expect) + " fields, got " +
                            std::to_string(fields.size()));
        if (fields[0].empty() || fields[1].empty() || fields[2].empty())
            throw DataError("csv line " + std::to_string(line_no) + ": empty entity name");
        SynergyTuple t;
        t.drug_a = ds.vocab.intern(EntityVocab::Kind::drug, fields[0]);
        t.drug_b = ds.vocab.intern(EntityVocab::Kind::drug, fields[1]);
        t.cell = ds.vocab.intern(EntityVocab::Kind::cell, fields[2]);
        t.label = parse_label(fields[3], line_no) >= opts.label_threshold ? 1 : 0;
        if (has_group) t.group = fields[4];
        ds.tuples.push_back(std::move(t));
    }
    return ds;
}

Dataset ingest_csv(const std::filesystem::path& path, const IngestOptions& opts) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open csv file: " + path.string());
    return ingest_csv(in, opts);
}

void write_csv(std::ostream& out, const EntityVocab& vocab,
               const std::vector<SynergyTuple>& tuples) {
    bool any_group = false;
    for (const auto& t : tuples)
        if (!t.group.empty()) {
            any_group = true;
            break;
        }
    out << "drug_1,drug_2,cell_line,label" << (any_group ? ",group\n" : "\n");
    for (const auto& t : tuples) {
        out << vocab.name(t.drug_a) << ',' << vocab.name(t.drug_b) << ',' << vocab.name(t.cell)
            << ',' << int(t.label);
        if (any_group) out << ',' << t.group;
        out << '\n';
    }
}

void write_csv(const std::filesystem::path& path, const EntityVocab& vocab,
               const std::vector<SynergyTuple>& tuples) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open csv file for writing: " + path.string());
    write_csv(out, vocab, tuples);
}

std::string_view to_string(SplitMode mode) {
    return mode == SplitMode::unknown_drug ? "unknown-drug" : "unknown-cell";
}

SplitMode split_mode_from_string(std::string_view s) {
    if (s == "unknown-drug") return SplitMode::unknown_drug;
    if (s == "unknown-cell") return SplitMode::unknown_cell;
    throw ConfigError("unknown split mode '" + std::string(s) +
                      "' (expected unknown-drug or unknown-cell)");
}

SplitBundle make_fewshot_split(const std::vector<SynergyTuple>& tuples, const EntityVocab& vocab,
                               size_t m, size_t n, SplitMode mode, uint64_t seed) {
    if (m == 0 || n == 0) throw ConfigError("few-shot split: m and n must be positive");
    SplitBundle out;
    out.mode = mode;
    out.seed = seed;
    out.bank_per_entity = n;
    out.held_out = pick_held_out(tuples, vocab, m, n, mode, seed);
    const IdSet held(out.held_out);

    // Fill per-entity quotas in a seeded order; a tuple naming two held-out
    // drugs is consumed by whichever quota draws it first.
    RngStream rng(derive_seed(seed, "split.bank"));
    std::vector<EntityId> order = out.held_out;
    rng.shuffle(order);
    std::vector<char> banked(tuples.size(), 0);
    for (EntityId h : order) {
        std::vector<uint32_t> pool;
        for (uint32_t i = 0; i < tuples.size(); ++i)
            if (!banked[i] && tuples[i].mentions(h)) pool.push_back(i);
        if (pool.size() < n) {
            throw DataError("few-shot split: entity '" + vocab.name(h) + "' has only " +
                            std::to_string(pool.size()) + " unbanked tuples; need " +
                            std::to_string(n));
        }
        for (size_t idx : rng.sample_indices(pool.size(), n)) {
            banked[pool[idx]] = 1;
            out.context_bank.push_back(pool[idx]);
        }
    }
    std::sort(out.context_bank.begin(), out.context_bank.end());

    for (uint32_t i = 0; i < tuples.size(); ++i) {
        if (banked[i]) continue;
        const auto& t = tuples[i];
        const bool touches = held.contains(t.drug_a) || held.contains(t.drug_b) ||
                             held.contains(t.cell);
        (touches ? out.test : out.train).push_back(i);
    }
    return out;
}

SplitBundle make_optimization_split_for(const std::vector<SynergyTuple>& tuples,
                                        const EntityVocab& vocab, std::vector<EntityId> held_out,
                                        SplitMode mode, uint64_t seed) {
    if (held_out.empty()) throw ConfigError("optimization split: empty held-out set");
    std::sort(held_out.begin(), held_out.end());
    held_out.erase(std::unique(held_out.begin(), held_out.end()), held_out.end());
    const auto wanted_kind =
        (mode == SplitMode::unknown_drug) ? EntityVocab::Kind::drug : EntityVocab::Kind::cell;
    for (EntityId h : held_out) {
        if (h >= vocab.num_entities() || vocab.kind(h) != wanted_kind)
            throw ConfigError("optimization split: held-out id " + std::to_string(h) +
                              " is not a " +
                              std::string(mode == SplitMode::unknown_drug ? "drug" : "cell"));
    }

    SplitBundle out;
    out.mode = mode;
    out.seed = seed;
    out.held_out = std::move(held_out);
    const IdSet held(out.held_out);

    std::vector<uint32_t> touched;
    for (uint32_t i = 0; i < tuples.size(); ++i) {
        const auto& t = tuples[i];
        if (held.contains(t.drug_a) || held.contains(t.drug_b) || held.contains(t.cell))
            touched.push_back(i);
        else
            out.train.push_back(i);
    }

    // Near-equal thirds: the first (count mod 3) parts get one extra tuple.
    RngStream rng(derive_seed(seed, "split.thirds"));
    rng.shuffle(touched);
    const size_t base = touched.size() / 3, extra = touched.size() % 3;
    const size_t n_bank = base + (extra > 0 ? 1 : 0);
    const size_t n_val = base + (extra > 1 ? 1 : 0);
    out.context_bank.assign(touched.begin(), touched.begin() + n_bank);
    out.validation.assign(touched.begin() + n_bank, touched.begin() + n_bank + n_val);
    out.test.assign(touched.begin() + n_bank + n_val, touched.end());
    std::sort(out.context_bank.begin(), out.context_bank.end());
    std::sort(out.validation.begin(), out.validation.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

SplitBundle make_optimization_split(const std::vector<SynergyTuple>& tuples,
                                    const EntityVocab& vocab, size_t m, SplitMode mode,
                                    uint64_t seed) {
    if (m == 0) throw ConfigError("optimization split: m must be positive");
    auto held = pick_held_out(tuples, vocab, m, 1, mode, seed);
    return make_optimization_split_for(tuples, vocab, std::move(held), mode, seed);
}

std::vector<SynergyTuple> gather(const std::vector<SynergyTuple>& tuples,
                                 const std::vector<uint32_t>& indices) {
    std::vector<SynergyTuple> out;
    out.reserve(indices.size());
    for (uint32_t i : indices) {
        if (i >= tuples.size()) throw ContractError("gather: tuple index out of range");
        out.push_back(tuples[i]);
    }
    return out;
}

void validate_split(const std::vector<SynergyTuple>& tuples, const EntityVocab& vocab,
                    const SplitBundle& split) {
    const IdSet held = split.held_out_set();
    const auto wanted_kind = (split.mode == SplitMode::unknown_drug) ? EntityVocab::Kind::drug
                                                                     : EntityVocab::Kind::cell;
    for (EntityId h : held)
        if (h >= vocab.num_entities() || vocab.kind(h) != wanted_kind)
            throw ContractError("split: held-out id of wrong kind");

    std::vector<uint8_t> seen(tuples.size(), 0);
    auto scan = [&](const std::vector<uint32_t>& part, const char* label, bool expect_mention) {
        for (uint32_t i : part) {
            if (i >= tuples.size())
                throw ContractError(std::string("split: index out of range in ") + label);
            if (seen[i])
                throw ContractError(std::string("split: tuple in two parts (") + label + ")");
            seen[i] = 1;
            const auto& t = tuples[i];
            const bool touches = held.contains(t.drug_a) || held.contains(t.drug_b) ||
                                 held.contains(t.cell);
            if (touches != expect_mention)
                throw ContractError(std::string("split: held-out mention invariant broken in ") +
                                    label);
        }
    };
    scan(split.train, "train", false);
    scan(split.context_bank, "context_bank", true);
    scan(split.validation, "validation", true);
    scan(split.test, "test", true);
}

nlohmann::json SplitBundle::to_json() const {
    return {{"mode", std::string(synic::to_string(mode))},
            {"seed", seed},
            {"bank_per_entity", bank_per_entity},
            {"held_out", held_out},
            {"train", train},
            {"context_bank", context_bank},
            {"validation", validation},
            {"test", test}};
}

SplitBundle SplitBundle::from_json(const nlohmann::json& j) {
    SplitBundle s;
    s.mode = split_mode_from_string(j.at("mode").get<std::string>());
    s.seed = j.at("seed").get<uint64_t>();
    s.bank_per_entity = j.at("bank_per_entity").get<size_t>();
    s.held_out = j.at("held_out").get<std::vector<EntityId>>();
    s.train = j.at("train").get<std::vector<uint32_t>>();
    s.context_bank = j.at("context_bank").get<std::vector<uint32_t>>();
    s.validation = j.at("validation").get<std::vector<uint32_t>>();
    s.test = j.at("test").get<std::vector<uint32_t>>();
    return s;
}

void save_split(const std::filesystem::path& path, const SplitBundle& split) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open split file for writing: " + path.string());
    out << split.to_json().dump(2) << '\n';
}

SplitBundle load_split(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open split file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
        return SplitBundle::from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("bad split file " + path.string() + ": " + e.what());
    }
}

}  // namespace synic
