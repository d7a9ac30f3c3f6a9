#include <sstream>

#include "doctest.h"
#include "synic/dataset.hpp"
#include "synic/errors.hpp"
#include "synic/synthgen.hpp"

using namespace synic;

TEST_CASE("vocab assigns dense ids in first-appearance order") {
    EntityVocab v;
    const auto a = v.intern(EntityVocab::Kind::drug, "aspirin");
    const auto c1 = v.intern(EntityVocab::Kind::cell, "A549");
    const auto b = v.intern(EntityVocab::Kind::drug, "ibuprofen");
    CHECK(a == 0);
    CHECK(c1 == 1);
    CHECK(b == 2);
    CHECK(v.intern(EntityVocab::Kind::drug, "aspirin") == a);
    CHECK(v.num_drugs() == 2);
    CHECK(v.num_cells() == 1);
    CHECK(v.unknown_id() == 3);
    CHECK(v.unknown2_id() == 4);
    CHECK(v.is_drug(a));
    CHECK(v.is_cell(c1));
    CHECK(!v.find(EntityVocab::Kind::cell, "aspirin"));  // kinds have separate namespaces
    CHECK(v.drug_ids() == std::vector<EntityId>{0, 2});

    const auto fp = v.fingerprint();
    EntityVocab w = EntityVocab::from_json(v.to_json());
    CHECK(w.fingerprint() == fp);
    w.intern(EntityVocab::Kind::drug, "zzz");
    CHECK(w.fingerprint() != fp);
}

TEST_CASE("csv ingest parses labels, groups and duplicates") {
    std::istringstream in(
        "drug_1,drug_2,cell_line,label,group\n"
        "aspirin,ibuprofen,A549,1,study-a\n"
        "aspirin,ibuprofen,A549,1,study-a\n"
        "ibuprofen,warfarin,MCF7,0.72,study-b\n"
        "warfarin,aspirin,A549,0.3,study-a\n");
    const Dataset ds = ingest_csv(in);
    REQUIRE(ds.tuples.size() == 4);
    CHECK(ds.tuples[0] == ds.tuples[1]);  // duplicates preserved
    CHECK(ds.tuples[2].label == 1);       // 0.72 >= 0.5
    CHECK(ds.tuples[3].label == 0);       // 0.30 < 0.5
    CHECK(ds.tuples[2].group == "study-b");
    CHECK(ds.vocab.num_drugs() == 3);
    CHECK(ds.vocab.num_cells() == 2);
}

TEST_CASE("csv ingest rejects malformed input with line numbers") {
    std::istringstream bad_header("a,b,c,d\nx,y,z,1\n");
    CHECK_THROWS_AS(ingest_csv(bad_header), DataError);

    std::istringstream bad_label(
        "drug_1,drug_2,cell_line,label\n"
        "a,b,c,1\n"
        "a,b,c,synergy\n");
    try {
        ingest_csv(bad_label);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("csv ingest honours a custom binarisation threshold") {
    std::istringstream in(
        "drug_1,drug_2,cell_line,label\n"
        "a,b,c,0.6\n");
    CHECK(ingest_csv(in).tuples[0].label == 1);
    std::istringstream in2(
        "drug_1,drug_2,cell_line,label\n"
        "a,b,c,0.6\n");
    IngestOptions opts;
    opts.label_threshold = 0.7;
    CHECK(ingest_csv(in2, opts).tuples[0].label == 0);
}

TEST_CASE("csv writer round-trips through the ingester") {
    const LatentWorld world = sample_world(WorldParams{.num_drugs = 12, .num_cells = 3}, 3);
    const SynthData data = sample_dataset(world, 200, 4);
    std::stringstream buf;
    write_csv(buf, data.vocab, data.tuples);
    const Dataset back = ingest_csv(buf);
    REQUIRE(back.tuples.size() == data.tuples.size());
    for (size_t i = 0; i < back.tuples.size(); ++i) {
        CHECK(back.vocab.name(back.tuples[i].drug_a) == data.vocab.name(data.tuples[i].drug_a));
        CHECK(back.tuples[i].label == data.tuples[i].label);
        CHECK(back.tuples[i].group == data.tuples[i].group);
    }
}

namespace {

// Count how many tuples mention each held-out entity within a part.
size_t count_mentions(const std::vector<SynergyTuple>& tuples, const std::vector<uint32_t>& part,
                      EntityId h) {
    size_t c = 0;
    for (uint32_t i : part) c += tuples[i].mentions(h);
    return c;
}

}  // namespace

TEST_CASE("few-shot split banks exactly n per entity and quarantines the rest") {
    const LatentWorld world = sample_world(WorldParams{.num_drugs = 100, .num_cells = 8}, 11);
    const SynthData data = sample_dataset(world, 6000, 12);

    const SplitBundle split =
        make_fewshot_split(data.tuples, data.vocab, 50, 20, SplitMode::unknown_drug, 7);
    CHECK(split.held_out.size() == 50);
    CHECK(split.context_bank.size() == 50 * 20);  // one full quota per held-out drug
    CHECK(split.validation.empty());
    validate_split(data.tuples, data.vocab, split);

    // A tuple naming two held-out drugs is charged to one quota only, so the
    // bank stays at exactly m*n while every entity still has >= n mentions.
    for (EntityId h : split.held_out)
        CHECK(count_mentions(data.tuples, split.context_bank, h) >= 20);

    // Determinism and seed sensitivity.
    const SplitBundle again =
        make_fewshot_split(data.tuples, data.vocab, 50, 20, SplitMode::unknown_drug, 7);
    CHECK(again.to_json() == split.to_json());
    const SplitBundle other =
        make_fewshot_split(data.tuples, data.vocab, 50, 20, SplitMode::unknown_drug, 8);
    CHECK(other.to_json() != split.to_json());
}

TEST_CASE("few-shot split over cells reaches the documented bank size") {
    const LatentWorld world = sample_world(WorldParams{.num_drugs = 40, .num_cells = 25}, 21);
    const SynthData data = sample_dataset(world, 6000, 22);
    const SplitBundle split =
        make_fewshot_split(data.tuples, data.vocab, 20, 10, SplitMode::unknown_cell, 7);
    CHECK(split.context_bank.size() == 20 * 10);
    validate_split(data.tuples, data.vocab, split);
}

TEST_CASE("few-shot split fails loudly when an entity cannot fill its quota") {
    // Three drugs, one appears once: quota of 2 is unreachable for m=3.
    std::vector<SynergyTuple> tuples;
    EntityVocab vocab;
    const auto a = vocab.intern(EntityVocab::Kind::drug, "a");
    const auto b = vocab.intern(EntityVocab::Kind::drug, "b");
    const auto c = vocab.intern(EntityVocab::Kind::cell, "c");
    tuples.push_back({a, b, c, 1, ""});
    CHECK_THROWS_AS(make_fewshot_split(tuples, vocab, 2, 2, SplitMode::unknown_drug, 1),
                    DataError);
}

TEST_CASE("toy few-shot split: one held-out drug, one banked tuple") {
    EntityVocab vocab;
    const auto a = vocab.intern(EntityVocab::Kind::drug, "a");
    const auto b = vocab.intern(EntityVocab::Kind::drug, "b");
    const auto d = vocab.intern(EntityVocab::Kind::drug, "d");
    const auto e = vocab.intern(EntityVocab::Kind::drug, "e");
    const auto c = vocab.intern(EntityVocab::Kind::cell, "c");
    // Every drug appears in exactly two tuples.
    const std::vector<SynergyTuple> tuples{
        {a, b, c, 1, ""}, {a, d, c, 0, ""}, {b, e, c, 1, ""}, {d, e, c, 0, ""}};
    const SplitBundle split = make_fewshot_split(tuples, vocab, 1, 1, SplitMode::unknown_drug, 3);
    REQUIRE(split.held_out.size() == 1);
    const EntityId h = split.held_out[0];
    CHECK(split.context_bank.size() == 1);
    CHECK(count_mentions(tuples, split.test, h) == split.test.size());
    CHECK(split.context_bank.size() + split.test.size() == 2);  // h appears twice
    CHECK(split.train.size() == 2);
    CHECK(count_mentions(tuples, split.train, h) == 0);
    validate_split(tuples, vocab, split);
}

TEST_CASE("optimization split cuts held-out tuples into near-equal thirds") {
    EntityVocab vocab;
    const auto x = vocab.intern(EntityVocab::Kind::drug, "x");
    std::vector<EntityId> partners;
    for (int i = 0; i < 12; ++i)
        partners.push_back(vocab.intern(EntityVocab::Kind::drug, "p" + std::to_string(i)));
    const auto c = vocab.intern(EntityVocab::Kind::cell, "c");

    auto build = [&](size_t touched) {
        std::vector<SynergyTuple> tuples;
        for (size_t i = 0; i < touched; ++i)
            tuples.push_back({x, partners[i % partners.size()], c, uint8_t(i % 2), ""});
        tuples.push_back({partners[0], partners[1], c, 1, ""});  // train-side tuple
        return tuples;
    };

    const auto nine = build(9);
    const SplitBundle s9 = make_optimization_split_for(nine, vocab, {x}, SplitMode::unknown_drug, 5);
    CHECK(s9.context_bank.size() == 3);
    CHECK(s9.validation.size() == 3);
    CHECK(s9.test.size() == 3);
    CHECK(s9.train.size() == 1);
    validate_split(nine, vocab, s9);

    const auto ten = build(10);
    const SplitBundle s10 = make_optimization_split_for(ten, vocab, {x}, SplitMode::unknown_drug, 5);
    const size_t sizes[3] = {s10.context_bank.size(), s10.validation.size(), s10.test.size()};
    CHECK(sizes[0] + sizes[1] + sizes[2] == 10);
    CHECK(*std::max_element(sizes, sizes + 3) - *std::min_element(sizes, sizes + 3) <= 1);
}

TEST_CASE("optimization split by entity count matches the explicit-set variant") {
    const LatentWorld world = sample_world(WorldParams{.num_drugs = 30, .num_cells = 4}, 31);
    const SynthData data = sample_dataset(world, 1500, 32);
    const SplitBundle a = make_optimization_split(data.tuples, data.vocab, 6,
                                                  SplitMode::unknown_drug, 9);
    const SplitBundle b = make_optimization_split_for(data.tuples, data.vocab, a.held_out,
                                                      SplitMode::unknown_drug, 9);
    CHECK(a.to_json() == b.to_json());
    validate_split(data.tuples, data.vocab, a);
}

TEST_CASE("split bundles survive a save/load cycle") {
    const LatentWorld world = sample_world(WorldParams{.num_drugs = 20, .num_cells = 3}, 41);
    const SynthData data = sample_dataset(world, 600, 42);
    const SplitBundle split =
        make_fewshot_split(data.tuples, data.vocab, 4, 10, SplitMode::unknown_drug, 2);
    const auto path = std::filesystem::temp_directory_path() / "synic_split_test.json";
    save_split(path, split);
    const SplitBundle back = load_split(path);
    CHECK(back.to_json() == split.to_json());
    std::filesystem::remove(path);
}
