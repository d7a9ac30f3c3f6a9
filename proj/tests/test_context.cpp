#include <set>

#include "doctest.h"
#include "synic/errors.hpp"
#include "synic/graph.hpp"
#include "synic/prompt.hpp"
#include "synic/selection.hpp"
#include "synic/synthgen.hpp"

using namespace synic;

namespace {

struct Toy {
    EntityVocab vocab;
    EntityId A, B, D, E, F, C1, C2;
    Toy() {
        A = vocab.intern(EntityVocab::Kind::drug, "A");
        B = vocab.intern(EntityVocab::Kind::drug, "B");
        D = vocab.intern(EntityVocab::Kind::drug, "D");
        E = vocab.intern(EntityVocab::Kind::drug, "E");
        F = vocab.intern(EntityVocab::Kind::drug, "F");
        C1 = vocab.intern(EntityVocab::Kind::cell, "C1");
        C2 = vocab.intern(EntityVocab::Kind::cell, "C2");
    }
};

bool has(const std::vector<uint32_t>& v, uint32_t x) {
    return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

TEST_CASE("graph builds the documented typed edges") {
    Toy t;
    const std::vector<SynergyTuple> pool{
        {t.A, t.B, t.C1, 1, ""}, {t.A, t.D, t.C2, 0, ""}, {t.E, t.F, t.C1, 1, ""}};
    const ContextGraph g(pool);
    CHECK(has(g.drug_neighbors(0), 1));  // share drug A
    CHECK(has(g.cell_neighbors(0), 2));  // share cell C1
    CHECK(!has(g.drug_neighbors(1), 2));
    CHECK(!has(g.cell_neighbors(1), 2));
    CHECK(g.neighbors(1) == std::vector<uint32_t>{0});

    // Symmetry and no self-loops.
    for (uint32_t i = 0; i < g.size(); ++i) {
        CHECK(!has(g.drug_neighbors(i), i));
        CHECK(!has(g.cell_neighbors(i), i));
        for (uint32_t j : g.drug_neighbors(i)) CHECK(has(g.drug_neighbors(j), i));
        for (uint32_t j : g.cell_neighbors(i)) CHECK(has(g.cell_neighbors(j), i));
    }
}

TEST_CASE("graph edge cases: single node and identical tuples") {
    Toy t;
    const ContextGraph lone({{t.A, t.B, t.C1, 1, ""}});
    CHECK(lone.drug_neighbors(0).empty());
    CHECK(lone.cell_neighbors(0).empty());

    const ContextGraph twin({{t.A, t.B, t.C1, 1, ""}, {t.A, t.B, t.C1, 1, ""}});
    CHECK(has(twin.drug_neighbors(0), 1));
    CHECK(has(twin.cell_neighbors(0), 1));
}

TEST_CASE("graph adjacency equals a brute-force recomputation on random pools") {
    const LatentWorld world = sample_world(WorldParams{.num_drugs = 25, .num_cells = 4}, 51);
    const SynthData data = sample_dataset(world, 200, 52);
    const ContextGraph g(data.tuples);
    for (uint32_t i = 0; i < g.size(); ++i) {
        std::vector<uint32_t> drug_bf, cell_bf;
        for (uint32_t j = 0; j < g.size(); ++j) {
            if (i == j) continue;
            const auto& a = data.tuples[i];
            const auto& b = data.tuples[j];
            const bool share_drug = a.drug_a == b.drug_a || a.drug_a == b.drug_b ||
                                    a.drug_b == b.drug_a || a.drug_b == b.drug_b;
            if (share_drug) drug_bf.push_back(j);
            if (a.cell == b.cell) cell_bf.push_back(j);
        }
        CHECK(g.drug_neighbors(i) == drug_bf);
        CHECK(g.cell_neighbors(i) == cell_bf);
    }
}

TEST_CASE("unknown-first fills the whole context with h when it can") {
    Toy t;
    std::vector<SynergyTuple> pool;
    for (int i = 0; i < 25; ++i)
        pool.push_back({t.A, (i % 2) ? t.B : t.D, (i % 3) ? t.C1 : t.C2, uint8_t(i % 2), ""});
    for (int i = 0; i < 10; ++i) pool.push_back({t.E, t.F, t.C2, 0, ""});
    const ContextGraph g(pool);

    const SynergyTuple query{t.A, t.E, t.C1, 1, ""};
    RngStream rng(4);
    const auto picks = select_context_indices(g, query, t.A, 20, Strategy::unknown_first, rng);
    REQUIRE(picks.size() == 20);
    for (uint32_t i : picks) CHECK(g.node(i).mentions(t.A));
    CHECK(std::set<uint32_t>(picks.begin(), picks.end()).size() == 20);
}

TEST_CASE("unknown-first falls back tier by tier, fallback picks first") {
    Toy t;
    std::vector<SynergyTuple> pool;
    // 15 tuples with h = A.
    for (int i = 0; i < 15; ++i) pool.push_back({t.A, t.B, t.C1, 1, ""});
    // Graph-tier material: shares E or C1 with the query but not A.
    for (int i = 0; i < 10; ++i) pool.push_back({t.E, t.F, t.C2, 0, ""});
    // Unreachable by any shared entity.
    for (int i = 0; i < 5; ++i) pool.push_back({t.B, t.D, t.C2, 0, ""});
    const ContextGraph g(pool);

    const SynergyTuple query{t.A, t.E, t.C1, 1, ""};
    RngStream rng(4);
    const auto picks = select_context_indices(g, query, t.A, 20, Strategy::unknown_first, rng);
    REQUIRE(picks.size() == 20);
    // The 15 h-tuples occupy the last slots, nearest the query.
    for (size_t k = 5; k < 20; ++k) CHECK(g.node(picks[k]).mentions(t.A));
    for (size_t k = 0; k < 5; ++k) CHECK(!g.node(picks[k]).mentions(t.A));
}

TEST_CASE("random strategy returns a short pool in full") {
    Toy t;
    const std::vector<SynergyTuple> pool{
        {t.A, t.B, t.C1, 1, ""}, {t.D, t.E, t.C2, 0, ""}, {t.E, t.F, t.C1, 1, ""}};
    const ContextGraph g(pool);
    const SynergyTuple query{t.A, t.F, t.C2, 0, ""};
    RngStream rng(1);
    const auto picks = select_context_indices(g, query, t.A, 5, Strategy::random, rng);
    CHECK(picks.size() == 3);
}

TEST_CASE("selection never returns the query's own measurement") {
    Toy t;
    const std::vector<SynergyTuple> pool{
        {t.A, t.B, t.C1, 1, ""}, {t.B, t.A, t.C1, 1, ""}, {t.A, t.D, t.C1, 0, ""}};
    const ContextGraph g(pool);
    const SynergyTuple query{t.A, t.B, t.C1, 1, ""};  // matches nodes 0 and 1
    RngStream rng(2);
    const auto picks = select_context_indices(g, query, t.A, 3, Strategy::unknown_first, rng);
    REQUIRE(picks.size() == 1);
    CHECK(picks[0] == 2);
}

TEST_CASE("selection requires h to belong to the query") {
    Toy t;
    const ContextGraph g({{t.A, t.B, t.C1, 1, ""}});
    RngStream rng(3);
    const SynergyTuple query{t.A, t.B, t.C1, 1, ""};
    CHECK_THROWS_AS(select_context_indices(g, query, t.F, 1, Strategy::random, rng),
                    ContractError);
}

TEST_CASE("graph strategy prefers neighbors before random fill") {
    Toy t;
    std::vector<SynergyTuple> pool;
    for (int i = 0; i < 4; ++i) pool.push_back({t.B, t.D, t.C1, 1, ""});  // share C1
    for (int i = 0; i < 10; ++i) pool.push_back({t.D, t.E, t.C2, 0, ""});  // unrelated
    const ContextGraph g(pool);
    const SynergyTuple query{t.A, t.F, t.C1, 0, ""};
    RngStream rng(6);
    const auto picks = select_context_indices(g, query, t.A, 6, Strategy::graph, rng);
    REQUIRE(picks.size() == 6);
    // 4 neighbor tuples go last; 2 random fillers come first.
    for (size_t k = 0; k < 2; ++k) CHECK(g.node(picks[k]).cell == t.C2);
    for (size_t k = 2; k < 6; ++k) CHECK(g.node(picks[k]).cell == t.C1);
}

TEST_CASE("training mask choice follows the split mode") {
    Toy t;
    const SynergyTuple x{t.A, t.B, t.C1, 1, ""};
    RngStream rng(11);
    for (int i = 0; i < 20; ++i)
        CHECK(training_mask_choice(x, SplitMode::unknown_cell, rng) == t.C1);

    size_t a_count = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i)
        a_count += (training_mask_choice(x, SplitMode::unknown_drug, rng) == t.A);
    CHECK(a_count > trials * 0.48);
    CHECK(a_count < trials * 0.52);

    const SynergyTuple self_pair{t.A, t.A, t.C1, 1, ""};
    CHECK(training_mask_choice(self_pair, SplitMode::unknown_drug, rng) == t.A);
}

TEST_CASE("strategy interpolation anneals from random to unknown-first") {
    CHECK(random_strategy_probability(0, 10) == doctest::Approx(1.0));
    CHECK(random_strategy_probability(5, 10) == doctest::Approx(0.5));
    CHECK(random_strategy_probability(9, 10) == doctest::Approx(0.25));  // floor applies
    CHECK_THROWS_AS(random_strategy_probability(10, 10), ContractError);

    RngStream rng(13);
    int randoms = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i)
        randoms += (interpolate_strategy(5, 10, rng) == Strategy::random);
    CHECK(randoms > trials * 0.47);
    CHECK(randoms < trials * 0.53);
    for (int i = 0; i < 100; ++i) CHECK(interpolate_strategy(0, 10, rng) == Strategy::random);
}

TEST_CASE("prompts have the 4n+3 layout with labels only on context") {
    Toy t;
    std::vector<SynergyTuple> ctx;
    for (int i = 0; i < 20; ++i) ctx.push_back({t.B, t.D, t.C1, uint8_t(i % 2), ""});
    const SynergyTuple query{t.A, t.B, t.C2, 1, ""};
    const MaskSpec mask{t.A, IdSet({t.A})};
    const PromptSequence p = mask_and_assemble(ctx, query, mask, t.vocab);
    CHECK(p.length() == 83);
    CHECK(p.n_ctx() == 20);
    REQUIRE(p.query_positions.size() == 21);
    for (size_t i = 0; i <= 20; ++i) CHECK(p.query_positions[i] == int(4 * i + 2));
    for (int pos = 0; pos < p.length(); ++pos) {
        const Slot expect = static_cast<Slot>(pos % 4);
        CHECK(p.tokens[pos].slot == expect);
    }
    CHECK(p.tokens.back().slot == Slot::cell);  // query carries no label token

    const PromptSequence zero = mask_and_assemble({}, query, mask, t.vocab);
    CHECK(zero.length() == 3);
    CHECK(zero.n_ctx() == 0);
    CHECK(zero.query_positions == std::vector<int>{2});
}

TEST_CASE("masking replaces the designated entity and demotes other withheld ids") {
    Toy t;
    const std::vector<SynergyTuple> ctx{{t.A, t.B, t.C1, 1, ""}, {t.A, t.D, t.C1, 0, ""}};
    const SynergyTuple query{t.A, t.D, t.C2, 1, ""};
    const MaskSpec mask{t.A, IdSet({t.A, t.D})};  // D is withheld but not designated
    const PromptSequence p = mask_and_assemble(ctx, query, mask, t.vocab);
    const uint32_t U = t.vocab.unknown_id();
    const uint32_t U2 = t.vocab.unknown2_id();
    CHECK(p.tokens[0].value == U);    // A
    CHECK(p.tokens[1].value == t.B);  // untouched
    CHECK(p.tokens[5].value == U2);   // D in context
    CHECK(p.tokens[8].value == U);    // A in query
    CHECK(p.tokens[9].value == U2);   // D in query
    for (const auto& tok : p.tokens)
        if (tok.slot != Slot::label) {
            CHECK(tok.value != t.A);
            CHECK(tok.value != t.D);
        }
}

TEST_CASE("a query with two unknown drugs maps to distinct unknown tokens") {
    Toy t;
    const SynergyTuple query{t.A, t.B, t.C1, 1, ""};
    const MaskSpec mask{t.A, IdSet({t.A, t.B})};
    const PromptSequence p = mask_and_assemble({}, query, mask, t.vocab);
    CHECK(p.tokens[0].value == t.vocab.unknown_id());
    CHECK(p.tokens[1].value == t.vocab.unknown2_id());
    CHECK(p.tokens[2].value == t.C1);
    CHECK(p.first_unknown_in_group(0, t.vocab.unknown_id()) == 0);
    CHECK(p.positions_of(t.vocab.unknown2_id()) == std::vector<int>{1});
}

TEST_CASE("unknown position lookup scans groups correctly") {
    Toy t;
    const std::vector<SynergyTuple> ctx{{t.B, t.D, t.C1, 1, ""}, {t.A, t.B, t.C1, 0, ""}};
    const SynergyTuple query{t.E, t.A, t.C2, 0, ""};
    const MaskSpec mask{t.A, IdSet({t.A})};
    const PromptSequence p = mask_and_assemble(ctx, query, mask, t.vocab);
    const uint32_t U = t.vocab.unknown_id();
    CHECK(p.first_unknown_in_group(0, U) == -1);
    CHECK(p.first_unknown_in_group(1, U) == 4);
    CHECK(p.first_unknown_in_group(2, U) == 9);
    CHECK(p.positions_of(U) == std::vector<int>{4, 9});
    CHECK(PromptSequence::group_of(9) == 2);
}
