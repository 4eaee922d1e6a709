// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

// Exhaustive packing oracle. Works from block-table rows only: each query's row is cut at
// any subset of the positions where its set of sharers changes, and identical block runs
// from different queries share one CTA. Cost is in packer units (bytes): one d-vector of b
// bytes per loaded KV token, plus 2 * d * b' per (query, pack) pair for split queries.

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <vector>

#include "prefixpack/workload.hpp"

namespace prefixpack::oracle {

struct PackingCost {
    std::int64_t kv = 0;
    std::int64_t intermediate = 0;
    std::int64_t total() const { return kv + intermediate; }
};

struct BruteForceResult {
    PackingCost best;
    std::uint64_t evaluated = 0;
};

inline std::vector<std::vector<std::size_t>> sharing_boundaries(const BlockTable& table) {
    // Position p (0 < p < len) is a boundary when some other row agrees with this one on
    // block p-1 but not on block p, or vice versa.
    const std::size_t n = table.rows.size();
    std::vector<std::vector<std::size_t>> out(n);
    for (std::size_t q = 0; q < n; ++q) {
        const auto& row = table.rows[q];
        for (std::size_t p = 1; p < row.size(); ++p) {
            bool boundary = false;
            for (std::size_t o = 0; o < n && !boundary; ++o) {
                if (o == q) continue;
                const auto& other = table.rows[o];
                auto same_prefix = [&](std::size_t len) {
                    if (len > other.size()) return false;
                    for (std::size_t i = 0; i < len; ++i) {
                        if (row[i] != other[i]) return false;
                    }
                    return true;
                };
                const bool before = same_prefix(p);
                const bool after = same_prefix(p + 1);
                boundary = before != after;
            }
            if (boundary) out[q].push_back(p);
        }
    }
    return out;
}

inline BruteForceResult brute_force_packing(const BlockTable& table, int head_dim, int kv_bytes,
                                            int intermediate_bytes) {
    const std::size_t n = table.rows.size();
    const auto cuts = sharing_boundaries(table);
    std::vector<std::uint32_t> choice(n, 0);
    BruteForceResult result;
    result.best.kv = std::numeric_limits<std::int64_t>::max() / 4;

    auto tokens = [&](std::size_t q, std::size_t begin, std::size_t end) {
        std::int64_t t = 0;
        for (std::size_t p = begin; p < end; ++p) t += table.block_tokens(static_cast<QueryId>(q), p);
        return t;
    };

    std::function<void(std::size_t)> visit = [&](std::size_t q) {
        if (q == n) {
            // A pack is keyed by its exact block run; identical runs share one CTA.
            std::set<std::vector<BlockId>> runs;
            PackingCost cost;
            for (std::size_t r = 0; r < n; ++r) {
                const auto& row = table.rows[r];
                std::vector<std::size_t> points{0};
                for (std::size_t c = 0; c < cuts[r].size(); ++c) {
                    if (choice[r] & (1u << c)) points.push_back(cuts[r][c]);
                }
                points.push_back(row.size());
                const std::int64_t segments = static_cast<std::int64_t>(points.size()) - 1;
                for (std::size_t s = 0; s + 1 < points.size(); ++s) {
                    std::vector<BlockId> run(row.begin() + static_cast<std::ptrdiff_t>(points[s]),
                                             row.begin() + static_cast<std::ptrdiff_t>(points[s + 1]));
                    if (runs.insert(run).second) {
                        cost.kv += tokens(r, points[s], points[s + 1]) * head_dim * kv_bytes;
                    }
                }
                if (segments > 1) cost.intermediate += segments * 2LL * head_dim * intermediate_bytes;
            }
            ++result.evaluated;
            if (cost.total() < result.best.total()) result.best = cost;
            return;
        }
        for (std::uint32_t mask = 0; mask < (1u << cuts[q].size()); ++mask) {
            choice[q] = mask;
            visit(q + 1);
        }
    };
    visit(0);
    return result;
}

/// Cost of an explicit partition in the same units, computed from packs alone.
inline PackingCost partition_cost(const Partition& p, int head_dim, int kv_bytes, int intermediate_bytes) {
    std::map<QueryId, int> count;
    for (const auto& pack : p.packs) {
        for (QueryId q : pack.query_ids) ++count[q];
    }
    PackingCost cost;
    for (const auto& pack : p.packs) {
        cost.kv += pack.kv_len * head_dim * kv_bytes;
        for (QueryId q : pack.query_ids) {
            if (count[q] > 1) cost.intermediate += 2LL * head_dim * intermediate_bytes;
        }
    }
    return cost;
}

}  // namespace prefixpack::oracle
