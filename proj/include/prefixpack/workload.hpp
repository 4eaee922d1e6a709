// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace prefixpack {

using BlockId = std::int32_t;
using QueryId = std::int32_t;

/**
 * Synthetic decode-batch description.
 *
 * level_counts[i] is the number of prefix-tree nodes at level i; the last entry is the
 * batch size. level_lengths[i] is the token length contributed by each level-i node; the
 * last entry is the per-request non-shared suffix. Each level-i node fans out into
 * level_counts[i+1] / level_counts[i] children.
 */
struct WorkloadSpec {
    std::vector<int> level_counts;
    std::vector<std::int64_t> level_lengths;
    int block_size = 16;
    int num_heads = 32;
    int num_kv_heads = 32;
    int head_dim = 128;
    int kv_dtype_bytes = 2;
    int intermediate_dtype_bytes = 4;

    /// Throws Error(kInvalidSpec) describing the first violated invariant.
    void validate() const;

    std::size_t num_queries() const { return level_counts.empty() ? 0 : level_counts.back(); }
    std::int64_t kv_len_per_query() const;
};

/// Per-query ordered lists of KV block IDs. Only the last block of a row may be partially
/// filled; its token count is valid_tokens_last_block[row].
struct BlockTable {
    int block_size = 16;
    std::vector<std::vector<BlockId>> rows;
    std::vector<int> valid_tokens_last_block;

    std::size_t num_queries() const { return rows.size(); }
    std::int64_t kv_len(QueryId q) const;
    int block_tokens(QueryId q, std::size_t pos) const;

    /// Throws Error(kInvalidTable).
    void validate() const;
};

/// Order-sensitive content hash (FNV-1a 64) of rows, valid-token counts and block size, as hex.
std::string fingerprint(const BlockTable& table);

BlockTable generate_workload(const WorkloadSpec& spec, std::uint64_t seed);

struct PrefixNode {
    std::vector<BlockId> block_ids;
    std::int64_t length = 0;         // l: tokens covered by block_ids
    int sharers = 0;                 // s: queries in this subtree
    std::vector<QueryId> query_ids;  // leaves only
    std::vector<PrefixNode> children;

    bool is_leaf() const { return children.empty(); }
};

struct PrefixForest {
    std::vector<PrefixNode> roots;

    std::size_t node_count() const;
};

PrefixForest build_forest(const BlockTable& table);

/// Inverse of build_forest: concatenates block runs along every root-to-leaf path.
BlockTable flatten_forest(const PrefixForest& forest, int block_size, std::size_t num_queries);

/// All queries in the subtree, in leaf order.
std::vector<QueryId> subtree_queries(const PrefixNode& node);

struct CtaPack {
    std::vector<QueryId> query_ids;
    std::vector<BlockId> block_ids;
    std::int64_t kv_len = 0;
    bool produces_partial = false;

    int q() const { return static_cast<int>(query_ids.size()); }
};

struct Partition {
    std::vector<CtaPack> packs;
    std::string source_fingerprint;
};

/// Sets produces_partial on every pack holding a query that appears in more than one pack.
void mark_partials(Partition& partition);

/// Number of packs each query appears in, indexed by query id.
std::vector<int> pack_counts(const Partition& partition, std::size_t num_queries);

/// Returns a description of the first coverage violation, or nullopt when every query's
/// row is tiled exactly once by the packs that contain it.
std::optional<std::string> coverage_error(const Partition& partition, const BlockTable& table);

/// Distinct KV tokens referenced by the table (each block counted once).
std::int64_t distinct_kv_tokens(const BlockTable& table);
std::size_t distinct_block_count(const BlockTable& table);

}  // namespace prefixpack
