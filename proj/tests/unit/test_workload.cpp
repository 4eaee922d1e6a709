// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>

#include "../support/random_workloads.hpp"
#include "prefixpack/error.hpp"
#include "prefixpack/serialization.hpp"
#include "prefixpack/workload.hpp"

using namespace prefixpack;

namespace {

WorkloadSpec spec_of(std::vector<int> b, std::vector<std::int64_t> l) {
    WorkloadSpec s;
    s.level_counts = std::move(b);
    s.level_lengths = std::move(l);
    return s;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return ErrorCode::kIo;
}

}  // namespace

TEST(WorkloadSpec, RejectsMalformedSpecs) {
    EXPECT_EQ(code_of([] { spec_of({1, 4}, {16}).validate(); }), ErrorCode::kInvalidSpec);
    EXPECT_EQ(code_of([] { spec_of({2, 3}, {16, 16}).validate(); }), ErrorCode::kInvalidSpec);
    EXPECT_EQ(code_of([] { spec_of({1}, {20}).validate(); }), ErrorCode::kInvalidSpec);
    EXPECT_EQ(code_of([] { spec_of({1}, {0}).validate(); }), ErrorCode::kInvalidSpec);
    EXPECT_EQ(code_of([] { spec_of({0}, {16}).validate(); }), ErrorCode::kInvalidSpec);
    auto gqa = spec_of({1}, {16});
    gqa.num_heads = 12;
    gqa.num_kv_heads = 8;
    EXPECT_EQ(code_of([&] { gqa.validate(); }), ErrorCode::kInvalidSpec);
    EXPECT_NO_THROW(spec_of({1, 4, 16}, {128, 256, 1024}).validate());
}

TEST(GenerateWorkload, SingleQuery) {
    const auto t = generate_workload(spec_of({1}, {128}), 1);
    ASSERT_EQ(t.rows.size(), 1u);
    EXPECT_EQ(t.rows[0].size(), 8u);
    EXPECT_EQ(std::set<BlockId>(t.rows[0].begin(), t.rows[0].end()).size(), 8u);
    EXPECT_EQ(t.kv_len(0), 128);
}

TEST(GenerateWorkload, ThreeLevelTree) {
    const auto t = generate_workload(spec_of({1, 4, 16}, {128, 256, 1024}), 42);
    ASSERT_EQ(t.rows.size(), 16u);
    std::map<BlockId, int> uses;
    for (const auto& row : t.rows) {
        ASSERT_EQ(row.size(), 8u + 16u + 64u);
        for (BlockId b : row) ++uses[b];
    }
    for (const auto& row : t.rows) {
        EXPECT_TRUE(std::equal(row.begin(), row.begin() + 8, t.rows[0].begin()));
        for (int i = 0; i < 8; ++i) EXPECT_EQ(uses[row[i]], 16);
        for (int i = 8; i < 24; ++i) EXPECT_EQ(uses[row[i]], 4);
        for (int i = 24; i < 88; ++i) EXPECT_EQ(uses[row[i]], 1);
    }
    for (int g = 0; g < 4; ++g) {
        for (int r = 1; r < 4; ++r) {
            EXPECT_TRUE(std::equal(t.rows[g * 4 + r].begin() + 8, t.rows[g * 4 + r].begin() + 24,
                                   t.rows[g * 4].begin() + 8));
        }
    }
}

TEST(GenerateWorkload, DisjointRoots) {
    const auto t = generate_workload(spec_of({2, 4}, {64, 64}), 3);
    ASSERT_EQ(t.rows.size(), 4u);
    EXPECT_TRUE(std::equal(t.rows[0].begin(), t.rows[0].begin() + 4, t.rows[1].begin()));
    EXPECT_TRUE(std::equal(t.rows[2].begin(), t.rows[2].begin() + 4, t.rows[3].begin()));
    EXPECT_NE(t.rows[0][0], t.rows[2][0]);
    EXPECT_NE(t.rows[0][4], t.rows[1][4]);
    EXPECT_EQ(build_forest(t).roots.size(), 2u);
}

TEST(GenerateWorkload, DeterministicPerSeed) {
    const auto spec = spec_of({1, 4, 16}, {128, 256, 1024});
    const auto a = generate_workload(spec, 9);
    const auto b = generate_workload(spec, 9);
    const auto c = generate_workload(spec, 10);
    EXPECT_EQ(a.rows, b.rows);
    EXPECT_EQ(fingerprint(a), fingerprint(b));
    EXPECT_NE(a.rows, c.rows);
    EXPECT_EQ(distinct_block_count(a), distinct_block_count(c));
    // Ids stay dense.
    std::set<BlockId> ids;
    for (const auto& row : a.rows) ids.insert(row.begin(), row.end());
    EXPECT_EQ(*ids.begin(), 0);
    EXPECT_EQ(*ids.rbegin(), static_cast<BlockId>(ids.size()) - 1);
}

TEST(BlockTable, Validation) {
    BlockTable t;
    t.rows = {{1, 2, 1}};
    t.valid_tokens_last_block = {16};
    EXPECT_EQ(code_of([&] { t.validate(); }), ErrorCode::kInvalidTable);
    t.rows = {{1, 2}, {1, 2, 3}};
    t.valid_tokens_last_block = {8, 16};  // block 2 is partial in row 0 but full in row 1
    EXPECT_EQ(code_of([&] { t.validate(); }), ErrorCode::kInvalidTable);
    t.valid_tokens_last_block = {16, 5};
    EXPECT_NO_THROW(t.validate());
    EXPECT_EQ(t.kv_len(1), 37);
}

TEST(BuildForest, SingleRow) {
    BlockTable t;
    t.rows = {{5, 6, 7}};
    t.valid_tokens_last_block = {16};
    const auto f = build_forest(t);
    ASSERT_EQ(f.roots.size(), 1u);
    EXPECT_TRUE(f.roots[0].is_leaf());
    EXPECT_EQ(f.roots[0].block_ids, (std::vector<BlockId>{5, 6, 7}));
    EXPECT_EQ(f.roots[0].length, 48);
}

TEST(BuildForest, TotalSharing) {
    BlockTable t;
    t.rows = {{5, 6, 7}, {5, 6, 7}};
    t.valid_tokens_last_block = {16, 16};
    const auto f = build_forest(t);
    ASSERT_EQ(f.roots.size(), 1u);
    const auto& r = f.roots[0];
    EXPECT_EQ(r.sharers, 2);
    EXPECT_EQ(r.length, 48);
    ASSERT_EQ(r.children.size(), 2u);
    for (const auto& c : r.children) {
        EXPECT_TRUE(c.is_leaf());
        EXPECT_TRUE(c.block_ids.empty());
        EXPECT_EQ(c.sharers, 1);
    }
}

TEST(BuildForest, ThreeLevelShape) {
    const auto t = generate_workload(spec_of({1, 4, 16}, {128, 256, 1024}), 5);
    const auto f = build_forest(t);
    ASSERT_EQ(f.roots.size(), 1u);
    const auto& root = f.roots[0];
    EXPECT_EQ(root.length, 128);
    EXPECT_EQ(root.sharers, 16);
    ASSERT_EQ(root.children.size(), 4u);
    for (const auto& c : root.children) {
        EXPECT_EQ(c.length, 256);
        EXPECT_EQ(c.sharers, 4);
        ASSERT_EQ(c.children.size(), 4u);
        for (const auto& leaf : c.children) {
            EXPECT_TRUE(leaf.is_leaf());
            EXPECT_EQ(leaf.length, 1024);
            EXPECT_EQ(leaf.sharers, 1);
        }
    }
    EXPECT_EQ(f.node_count(), 21u);
}

namespace {

void check_node(const PrefixNode& n) {
    if (n.is_leaf()) {
        EXPECT_EQ(n.query_ids.size(), 1u);
        EXPECT_EQ(n.sharers, 1);
        return;
    }
    int sum = 0;
    std::set<BlockId> firsts;
    for (const auto& c : n.children) {
        sum += c.sharers;
        if (!c.block_ids.empty()) EXPECT_TRUE(firsts.insert(c.block_ids.front()).second);
        check_node(c);
    }
    EXPECT_EQ(n.sharers, sum);
}

}  // namespace

TEST(BuildForest, RandomRoundTripAndInvariants) {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 300; ++i) {
        const auto spec = testsupport::random_spec(rng);
        auto t = generate_workload(spec, rng());
        testsupport::randomize_tails(t, rng);
        const auto f = build_forest(t);
        const auto back = flatten_forest(f, t.block_size, t.num_queries());
        ASSERT_EQ(back.rows, t.rows) << "spec " << Json(spec).dump();
        ASSERT_EQ(back.valid_tokens_last_block, t.valid_tokens_last_block);
        for (const auto& r : f.roots) check_node(r);
        EXPECT_LE(f.node_count(), 2 * t.num_queries() * (spec.level_counts.size() + 1));
    }
}

TEST(Fingerprint, SensitiveToEveryField) {
    const auto t = generate_workload(spec_of({1, 4}, {64, 64}), 1);
    const auto base = fingerprint(t);
    auto t2 = t;
    t2.rows[2].push_back(999);
    EXPECT_NE(fingerprint(t2), base);
    auto t3 = t;
    t3.valid_tokens_last_block[0] = 3;
    EXPECT_NE(fingerprint(t3), base);
    auto t4 = t;
    std::swap(t4.rows[0], t4.rows[1]);
    EXPECT_NE(fingerprint(t4), base);
    EXPECT_EQ(fingerprint(t), base);
    EXPECT_EQ(base.size(), 16u);
}

TEST(Coverage, DetectsGapsAndOverlaps) {
    BlockTable t;
    t.rows = {{1, 2, 3}, {1, 2, 4}};
    t.valid_tokens_last_block = {16, 16};
    Partition p;
    p.packs.push_back({{0, 1}, {1, 2}, 32});
    p.packs.push_back({{0}, {3}, 16});
    p.packs.push_back({{1}, {4}, 16});
    EXPECT_FALSE(coverage_error(p, t).has_value());
    auto gap = p;
    gap.packs.pop_back();
    EXPECT_TRUE(coverage_error(gap, t).has_value());
    auto overlap = p;
    overlap.packs.push_back({{1}, {2, 4}, 32});
    EXPECT_TRUE(coverage_error(overlap, t).has_value());
    auto foreign = p;
    foreign.packs[1].query_ids = {0, 1};
    EXPECT_TRUE(coverage_error(foreign, t).has_value());
}

TEST(Serialization, SpecAndTableRoundTrip) {
    auto spec = spec_of({1, 4, 16}, {128, 256, 1024});
    spec.num_heads = 64;
    spec.num_kv_heads = 8;
    const Json js = spec;
    EXPECT_EQ(js.at("heads").at("q"), 64);
    const auto spec2 = js.get<WorkloadSpec>();
    EXPECT_EQ(spec2.level_counts, spec.level_counts);
    EXPECT_EQ(spec2.num_kv_heads, 8);
    auto t = generate_workload(spec, 4);
    t.valid_tokens_last_block[3] = 7;
    const auto t2 = Json(t).get<BlockTable>();
    EXPECT_EQ(fingerprint(t2), fingerprint(t));
}
