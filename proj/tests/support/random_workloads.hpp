// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <unordered_map>

#include "prefixpack/workload.hpp"

namespace prefixpack::testsupport {

struct HeadConfig {
    int heads;
    int kv_heads;
};

/// (#heads, #kv_heads) pairs used by the synthetic kernel workloads.
inline const std::vector<HeadConfig>& head_configs() {
    static const std::vector<HeadConfig> configs{{64, 8}, {32, 8}, {16, 8}, {32, 32}};
    return configs;
}

struct SpecLimits {
    int max_levels = 3;
    int max_queries = 64;
    std::int64_t max_kv_len = 4096;
    int block_size = 16;
};

/// Random (B, L) spec within the limits; every level length is a block multiple.
inline WorkloadSpec random_spec(std::mt19937_64& rng, const SpecLimits& lim = {}) {
    auto uni = [&](std::int64_t lo, std::int64_t hi) {
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
    };
    WorkloadSpec spec;
    spec.block_size = lim.block_size;
    const int levels = static_cast<int>(uni(1, lim.max_levels));
    int count = 1;
    if (uni(0, 3) == 0) count = static_cast<int>(uni(1, 2));  // occasionally several roots
    for (int i = 0; i < levels; ++i) {
        if (i > 0 || levels == 1) {
            const int max_fan = std::max(1, lim.max_queries / count);
            count *= static_cast<int>(uni(levels == 1 ? 1 : 2, std::min(max_fan, 8)));
            count = std::min(count, lim.max_queries);
        }
        spec.level_counts.push_back(count);
    }
    // Fix divisibility after clamping.
    for (std::size_t i = 1; i < spec.level_counts.size(); ++i) {
        auto& c = spec.level_counts[i];
        const int parent = spec.level_counts[i - 1];
        c = std::max(parent, c / parent * parent);
    }
    const std::int64_t blocks_total = lim.max_kv_len / lim.block_size;
    std::int64_t remaining = blocks_total;
    for (int i = 0; i < levels; ++i) {
        const std::int64_t left_levels = levels - i - 1;
        const std::int64_t hi = std::max<std::int64_t>(1, std::min<std::int64_t>(remaining - left_levels, blocks_total / levels));
        const std::int64_t b = uni(i + 1 == levels ? 1 : 0, hi);
        spec.level_lengths.push_back(b * lim.block_size);
        remaining -= b;
    }
    return spec;
}

/// Marks the last block of rows whose final block is private as partially filled.
inline void randomize_tails(BlockTable& table, std::mt19937_64& rng) {
    std::unordered_map<BlockId, int> uses;
    for (const auto& row : table.rows) {
        for (BlockId b : row) ++uses[b];
    }
    for (std::size_t q = 0; q < table.rows.size(); ++q) {
        if (uses[table.rows[q].back()] == 1) {
            table.valid_tokens_last_block[q] =
                std::uniform_int_distribution<int>(1, table.block_size)(rng);
        }
    }
}

}  // namespace prefixpack::testsupport
