#include <algorithm>
#include <set>

#include "doctest.h"
#include "synic/rng.hpp"

using namespace synic;

TEST_CASE("rng streams reproduce per seed and differ across seeds") {
    RngStream a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        const double x = a.uniform();
        CHECK(x == b.uniform());
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
    bool any_diff = false;
    RngStream a2(42);
    for (int i = 0; i < 10; ++i) any_diff |= (a2.uniform() != c.uniform());
    CHECK(any_diff);
}

TEST_CASE("derive_seed separates streams by tag and coordinates") {
    const uint64_t m = 7;
    std::set<uint64_t> seeds{derive_seed(m, "a"), derive_seed(m, "b"), derive_seed(m, "a", 1),
                             derive_seed(m, "a", 0, 1), derive_seed(m + 1, "a")};
    CHECK(seeds.size() == 5);
    CHECK(derive_seed(m, "a", 2, 3) == derive_seed(m, "a", 2, 3));
}

TEST_CASE("bounded draws stay in range and hit every value") {
    RngStream rng(1);
    std::set<uint64_t> seen;
    for (int i = 0; i < 1000; ++i) {
        const uint64_t v = rng.below(7);
        CHECK(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
    CHECK_THROWS_AS(rng.below(0), ContractError);
}

TEST_CASE("normal draws have sane moments") {
    RngStream rng(5);
    double sum = 0, sq = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("shuffle permutes and sample_indices draws distinct values") {
    RngStream rng(9);
    std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
    auto sorted = v;
    rng.shuffle(v);
    CHECK(std::is_permutation(v.begin(), v.end(), sorted.begin()));

    const auto picks = rng.sample_indices(10, 4);
    CHECK(picks.size() == 4);
    CHECK(std::set<size_t>(picks.begin(), picks.end()).size() == 4);
    for (size_t p : picks) CHECK(p < 10);
    CHECK_THROWS_AS(rng.sample_indices(3, 4), ContractError);
}
