// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefixpack/pack_scheduler.hpp"

#include <mutex>
#include <numeric>

#include "prefixpack/error.hpp"

namespace prefixpack {

IntraNodeProfit intra_node_profit(int sharers, std::int64_t length, int head_dim) {
    PREFIXPACK_CHECK(sharers >= 1 && length >= 0 && head_dim >= 1, ErrorCode::kInvalidArgument,
                     "intra_node_profit needs s >= 1, l >= 0, d >= 1");
    IntraNodeProfit p;
    p.profit_elems = static_cast<std::int64_t>(sharers - 1) * length * head_dim;
    p.overhead_elems = 8LL * sharers * head_dim;
    p.ratio = static_cast<double>(p.profit_elems) / static_cast<double>(p.overhead_elems);
    return p;
}

SchemeProfits scheme_profits(NodeSummary parent, std::span<const NodeSummary> children,
                             std::optional<std::size_t> merge_child, int head_dim) {
    std::int64_t total_sharers = 0;
    for (const auto& c : children) total_sharers += c.sharers;
    PREFIXPACK_CHECK(total_sharers == parent.sharers, ErrorCode::kInvalidArgument,
                     "parent sharer count must equal the sum over children");
    if (merge_child) {
        PREFIXPACK_CHECK(*merge_child < children.size(), ErrorCode::kInvalidChildIndex,
                         "merge child index " + std::to_string(*merge_child) + " out of range");
    }
    const std::int64_t d = head_dim;
    const std::int64_t s_u = parent.sharers;
    const std::int64_t l_u = parent.length;

    std::int64_t child_terms = 0;
    for (const auto& c : children) child_terms += (c.sharers - 1LL) * c.length * d;

    SchemeProfits out;
    out.scheme1 = (s_u - 1) * l_u * d - 4 * s_u * d + child_terms;
    if (!merge_child) {
        out.scheme2 = out.scheme1;
        return out;
    }
    const auto& v = children[*merge_child];
    const std::int64_t s_i = v.sharers;
    out.scheme2 = (s_u - s_i - 1) * l_u * d - 4 * (s_u - s_i) * d +
                  (child_terms - (s_i - 1) * v.length * d) + (s_i - 1) * (l_u + v.length) * d;
    out.delta = out.scheme2 - out.scheme1;
    return out;
}

namespace {

void append_span(KvSpan& span, const PrefixNode& node) {
    span.blocks.insert(span.blocks.end(), node.block_ids.begin(), node.block_ids.end());
    span.tokens += node.length;
}

void emit(std::vector<QueryId> queries, const KvSpan& span, std::vector<CtaPack>& out) {
    if (queries.empty() || span.tokens == 0) return;
    CtaPack pack;
    pack.query_ids = std::move(queries);
    pack.block_ids = span.blocks;
    pack.kv_len = span.tokens;
    out.push_back(std::move(pack));
}

void heuristic(const PrefixNode* node, KvSpan span, std::vector<CtaPack>& out) {
    append_span(span, *node);
    // A single-sharer chain carries no profit; fuse it down to the leaf.
    while (!node->is_leaf() && node->sharers == 1) {
        node = &node->children.front();
        append_span(span, *node);
    }
    if (node->is_leaf()) {
        emit(node->query_ids, span, out);
        return;
    }

    std::vector<QueryId> remaining;
    for (const auto& child : node->children) {
        if (4LL * child.sharers < span.tokens) {
            heuristic(&child, {}, out);
            auto q = subtree_queries(child);
            remaining.insert(remaining.end(), q.begin(), q.end());
        } else {
            heuristic(&child, span, out);
        }
    }
    emit(std::move(remaining), span, out);
}

void naive(const PrefixNode& node, std::vector<CtaPack>& out) {
    for (const auto& child : node.children) naive(child, out);
    KvSpan own;
    append_span(own, node);
    emit(subtree_queries(node), own, out);
}

}  // namespace

std::vector<CtaPack> tree_heuristic(const PrefixNode& root, const KvSpan& inherited) {
    std::vector<CtaPack> packs;
    heuristic(&root, inherited, packs);
    return packs;
}

Partition heuristic_partition(const BlockTable& table) {
    const PrefixForest forest = build_forest(table);
    Partition partition;
    partition.source_fingerprint = fingerprint(table);
    for (const auto& root : forest.roots) {
        auto packs = tree_heuristic(root);
        for (auto& p : packs) partition.packs.push_back(std::move(p));
    }
    mark_partials(partition);
    return partition;
}

Partition naive_partition(const BlockTable& table) {
    const PrefixForest forest = build_forest(table);
    Partition partition;
    partition.source_fingerprint = fingerprint(table);
    for (const auto& root : forest.roots) naive(root, partition.packs);
    mark_partials(partition);
    return partition;
}

Partition baseline_query_centric(const BlockTable& table) {
    table.validate();
    Partition partition;
    partition.source_fingerprint = fingerprint(table);
    for (std::size_t q = 0; q < table.num_queries(); ++q) {
        CtaPack pack;
        pack.query_ids = {static_cast<QueryId>(q)};
        pack.block_ids = table.rows[q];
        pack.kv_len = table.kv_len(static_cast<QueryId>(q));
        partition.packs.push_back(std::move(pack));
    }
    return partition;
}

std::shared_ptr<const Partition> PackCache::lookup(const std::string& fp) const {
    std::shared_lock lock(m_mutex);
    if (m_partition && m_fingerprint == fp) return m_partition;
    return nullptr;
}

void PackCache::store(const std::string& fp, std::shared_ptr<const Partition> partition) {
    std::unique_lock lock(m_mutex);
    m_fingerprint = fp;
    m_partition = std::move(partition);
}

PackCache::Stats PackCache::stats() const {
    return {m_hits.load(std::memory_order_relaxed), m_misses.load(std::memory_order_relaxed)};
}

void PackCache::clear() {
    std::unique_lock lock(m_mutex);
    m_fingerprint.clear();
    m_partition.reset();
    m_hits = 0;
    m_misses = 0;
}

std::shared_ptr<const Partition> pack_batch(const BlockTable& table, PackCache& cache) {
    const std::string fp = fingerprint(table);
    if (auto hit = cache.lookup(fp)) {
        cache.record_hit();
        return hit;
    }
    cache.record_miss();
    auto partition = std::make_shared<const Partition>(heuristic_partition(table));
    cache.store(fp, partition);
    return partition;
}

std::future<std::shared_ptr<const Partition>> pack_batch_async(BlockTable table, PackCache& cache) {
    return std::async(std::launch::async, [table = std::move(table), &cache] {
        return pack_batch(table, cache);
    });
}

}  // namespace prefixpack
