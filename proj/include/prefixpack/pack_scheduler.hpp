// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <future>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "prefixpack/workload.hpp"

namespace prefixpack {

// Profits are element counts; dtype weighting happens in traffic accounting.
struct IntraNodeProfit {
    std::int64_t profit_elems = 0;
    std::int64_t overhead_elems = 0;
    double ratio = 0.0;
};

IntraNodeProfit intra_node_profit(int sharers, std::int64_t length, int head_dim);

struct NodeSummary {
    std::int64_t length = 0;
    int sharers = 0;
};

struct SchemeProfits {
    std::int64_t scheme1 = 0;
    std::int64_t scheme2 = 0;
    std::int64_t delta = 0;  // scheme2 - scheme1 == (4 * s_i - l_u) * d
};

/// Profit of keeping every child in its own CTA (scheme 1) versus merging child
/// `merge_child` into the parent's span (scheme 2). Without a merge index scheme2 mirrors
/// scheme1 and delta is zero.
SchemeProfits scheme_profits(NodeSummary parent, std::span<const NodeSummary> children,
                             std::optional<std::size_t> merge_child, int head_dim);

/// A run of KV blocks handed down a merge chain.
struct KvSpan {
    std::vector<BlockId> blocks;
    std::int64_t tokens = 0;
};

/// Greedy top-down packer. Children are packed before their parent; a child is merged
/// into the parent's span when 4 * child.s >= span tokens.
std::vector<CtaPack> tree_heuristic(const PrefixNode& root, const KvSpan& inherited = {});

Partition heuristic_partition(const BlockTable& table);

/// One pack per forest node over that node's own blocks ({PAT}-naive).
Partition naive_partition(const BlockTable& table);

/// One pack per query over its full row.
Partition baseline_query_centric(const BlockTable& table);

/// Single-entry cache keyed by block-table fingerprint. Readers share, writers exclude.
class PackCache {
public:
    struct Stats {
        std::uint64_t hits = 0;
        std::uint64_t misses = 0;
    };

    std::shared_ptr<const Partition> lookup(const std::string& fp) const;
    void store(const std::string& fp, std::shared_ptr<const Partition> partition);
    void record_hit() { m_hits.fetch_add(1, std::memory_order_relaxed); }
    void record_miss() { m_misses.fetch_add(1, std::memory_order_relaxed); }
    Stats stats() const;
    void clear();

private:
    mutable std::shared_mutex m_mutex;
    std::string m_fingerprint;
    std::shared_ptr<const Partition> m_partition;
    std::atomic<std::uint64_t> m_hits{0};
    std::atomic<std::uint64_t> m_misses{0};
};

std::shared_ptr<const Partition> pack_batch(const BlockTable& table, PackCache& cache);

/// Runs pack_batch on a worker thread; the caller blocks only on the returned future.
std::future<std::shared_ptr<const Partition>> pack_batch_async(BlockTable table, PackCache& cache);

}  // namespace prefixpack
