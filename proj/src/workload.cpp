// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefixpack/workload.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "prefixpack/error.hpp"

namespace prefixpack {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::kInvalidSpec: return "InvalidSpec";
        case ErrorCode::kInvalidTable: return "InvalidTable";
        case ErrorCode::kInvalidArgument: return "InvalidArgument";
        case ErrorCode::kInvalidChildIndex: return "InvalidChildIndex";
        case ErrorCode::kMissingRegisterEntry: return "MissingRegisterEntry";
        case ErrorCode::kEmptyFeasibleSet: return "EmptyFeasibleSet";
        case ErrorCode::kNoFeasibleConfig: return "NoFeasibleConfig";
        case ErrorCode::kShapeMismatch: return "ShapeMismatch";
        case ErrorCode::kEmptySpan: return "EmptySpan";
        case ErrorCode::kEmptyList: return "EmptyList";
        case ErrorCode::kNonPositiveDenominator: return "NonPositiveDenominator";
        case ErrorCode::kCoverageGap: return "CoverageGap";
        case ErrorCode::kIo: return "Io";
        case ErrorCode::kParse: return "Parse";
    }
    return "Unknown";
}

void WorkloadSpec::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidSpec, msg); };
    if (level_counts.empty()) fail("B must have at least one level");
    if (level_counts.size() != level_lengths.size()) fail("len(B) must equal len(L)");
    if (block_size < 1) fail("block_size must be positive");
    for (std::size_t i = 0; i < level_counts.size(); ++i) {
        if (level_counts[i] < 1) fail("B entries must be positive");
        if (i + 1 < level_counts.size() && level_counts[i + 1] % level_counts[i] != 0) {
            fail("B[" + std::to_string(i) + "] must divide B[" + std::to_string(i + 1) + "]");
        }
        if (level_lengths[i] < 0) fail("L entries must be non-negative");
        if (level_lengths[i] % block_size != 0) fail("L entries must be multiples of block_size");
    }
    if (kv_len_per_query() == 0) fail("every query needs a non-empty KV cache (sum(L) == 0)");
    if (num_kv_heads < 1 || num_heads < 1 || num_heads % num_kv_heads != 0) {
        fail("num_heads must be a positive multiple of num_kv_heads");
    }
    if (head_dim < 1) fail("head_dim must be positive");
    if (kv_dtype_bytes < 1 || intermediate_dtype_bytes < 1) fail("dtype sizes must be positive");
}

std::int64_t WorkloadSpec::kv_len_per_query() const {
    return std::accumulate(level_lengths.begin(), level_lengths.end(), std::int64_t{0});
}

std::int64_t BlockTable::kv_len(QueryId q) const {
    const auto& row = rows.at(q);
    if (row.empty()) return 0;
    return static_cast<std::int64_t>(row.size() - 1) * block_size + valid_tokens_last_block.at(q);
}

int BlockTable::block_tokens(QueryId q, std::size_t pos) const {
    return pos + 1 == rows.at(q).size() ? valid_tokens_last_block.at(q) : block_size;
}

void BlockTable::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidTable, msg); };
    if (block_size < 1) fail("block_size must be positive");
    if (valid_tokens_last_block.size() != rows.size()) {
        fail("valid_tokens_last_block must have one entry per row");
    }
    std::unordered_map<BlockId, int> tokens_of;
    for (std::size_t q = 0; q < rows.size(); ++q) {
        const auto& row = rows[q];
        if (row.empty()) fail("row " + std::to_string(q) + " has no blocks");
        const int valid = valid_tokens_last_block[q];
        if (valid < 1 || valid > block_size) {
            fail("row " + std::to_string(q) + " has valid token count out of [1, block_size]");
        }
        std::unordered_set<BlockId> seen;
        for (std::size_t pos = 0; pos < row.size(); ++pos) {
            const BlockId id = row[pos];
            if (id < 0) fail("block ids must be non-negative");
            if (!seen.insert(id).second) {
                fail("block " + std::to_string(id) + " repeats within row " + std::to_string(q));
            }
            const int tokens = pos + 1 == row.size() ? valid : block_size;
            auto [it, inserted] = tokens_of.emplace(id, tokens);
            if (!inserted && it->second != tokens) {
                fail("block " + std::to_string(id) + " has inconsistent fill across rows");
            }
        }
    }
}

std::string fingerprint(const BlockTable& table) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::int64_t value) {
        auto v = static_cast<std::uint64_t>(value);
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xffu;
            h *= 1099511628211ull;
        }
    };
    mix(table.block_size);
    mix(static_cast<std::int64_t>(table.rows.size()));
    for (std::size_t q = 0; q < table.rows.size(); ++q) {
        mix(static_cast<std::int64_t>(table.rows[q].size()));
        for (BlockId id : table.rows[q]) mix(id);
        mix(q < table.valid_tokens_last_block.size() ? table.valid_tokens_last_block[q] : -1);
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

BlockTable generate_workload(const WorkloadSpec& spec, std::uint64_t seed) {
    spec.validate();
    const int num_rows = spec.level_counts.back();
    BlockTable table;
    table.block_size = spec.block_size;
    table.rows.assign(num_rows, {});
    table.valid_tokens_last_block.assign(num_rows, spec.block_size);

    // Dense ids in generation order (level by level, node by node).
    BlockId next_id = 0;
    for (std::size_t level = 0; level < spec.level_counts.size(); ++level) {
        const int nodes = spec.level_counts[level];
        const int rows_per_node = num_rows / nodes;
        const auto blocks = static_cast<int>(spec.level_lengths[level] / spec.block_size);
        for (int node = 0; node < nodes; ++node) {
            const BlockId first = next_id;
            next_id += blocks;
            for (int r = node * rows_per_node; r < (node + 1) * rows_per_node; ++r) {
                for (int b = 0; b < blocks; ++b) table.rows[r].push_back(first + b);
            }
        }
    }

    // The seed selects a permutation of the dense id range, as a paged allocator would.
    std::vector<BlockId> perm(static_cast<std::size_t>(next_id));
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    for (std::size_t i = perm.size(); i > 1; --i) {
        std::swap(perm[i - 1], perm[rng() % i]);
    }
    for (auto& row : table.rows) {
        for (auto& id : row) id = perm[id];
    }
    return table;
}

namespace {

struct ForestBuilder {
    const BlockTable& table;

    std::int64_t run_tokens(QueryId q, std::size_t begin, std::size_t end) const {
        std::int64_t tokens = 0;
        for (std::size_t pos = begin; pos < end; ++pos) tokens += table.block_tokens(q, pos);
        return tokens;
    }

    PrefixNode leaf(QueryId q, std::size_t pos) const {
        PrefixNode node;
        const auto& row = table.rows[q];
        node.block_ids.assign(row.begin() + static_cast<std::ptrdiff_t>(pos), row.end());
        node.length = run_tokens(q, pos, row.size());
        node.sharers = 1;
        node.query_ids = {q};
        return node;
    }

    // Members all agree on the block at `pos` (or, below the top level, share a parent).
    PrefixNode group(const std::vector<QueryId>& members, std::size_t pos) const {
        if (members.size() == 1) return leaf(members.front(), pos);

        const auto& first_row = table.rows[members.front()];
        std::size_t end = pos;
        for (;; ++end) {
            bool shared = end < first_row.size();
            for (std::size_t i = 1; shared && i < members.size(); ++i) {
                const auto& row = table.rows[members[i]];
                shared = end < row.size() && row[end] == first_row[end];
            }
            if (!shared) break;
        }

        PrefixNode node;
        node.block_ids.assign(first_row.begin() + static_cast<std::ptrdiff_t>(pos),
                              first_row.begin() + static_cast<std::ptrdiff_t>(end));
        node.length = run_tokens(members.front(), pos, end);
        node.sharers = static_cast<int>(members.size());
        append_children(node, members, end);
        return node;
    }

    void append_children(PrefixNode& parent, const std::vector<QueryId>& members,
                         std::size_t pos) const {
        // Children keep the order in which their first query appears.
        std::vector<std::vector<QueryId>> groups;
        std::map<BlockId, std::size_t> group_of;
        std::vector<std::pair<bool, std::size_t>> order;  // (is_empty_leaf, index)
        for (QueryId q : members) {
            const auto& row = table.rows[q];
            if (pos >= row.size()) {
                order.emplace_back(true, static_cast<std::size_t>(q));
                continue;
            }
            auto [it, inserted] = group_of.emplace(row[pos], groups.size());
            if (inserted) {
                groups.emplace_back();
                order.emplace_back(false, it->second);
            }
            groups[it->second].push_back(q);
        }
        for (const auto& [empty, index] : order) {
            if (empty) {
                parent.children.push_back(leaf(static_cast<QueryId>(index), pos));
            } else {
                parent.children.push_back(group(groups[index], pos));
            }
        }
    }
};

std::size_t count_nodes(const PrefixNode& node) {
    std::size_t n = 1;
    for (const auto& child : node.children) n += count_nodes(child);
    return n;
}

void collect_queries(const PrefixNode& node, std::vector<QueryId>& out) {
    if (node.is_leaf()) {
        out.insert(out.end(), node.query_ids.begin(), node.query_ids.end());
        return;
    }
    for (const auto& child : node.children) collect_queries(child, out);
}

}  // namespace

std::size_t PrefixForest::node_count() const {
    std::size_t n = 0;
    for (const auto& root : roots) n += count_nodes(root);
    return n;
}

PrefixForest build_forest(const BlockTable& table) {
    table.validate();
    PrefixForest forest;
    std::vector<QueryId> all(table.num_queries());
    std::iota(all.begin(), all.end(), 0);

    PrefixNode holder;
    ForestBuilder{table}.append_children(holder, all, 0);
    forest.roots = std::move(holder.children);
    return forest;
}

std::vector<QueryId> subtree_queries(const PrefixNode& node) {
    std::vector<QueryId> out;
    collect_queries(node, out);
    return out;
}

BlockTable flatten_forest(const PrefixForest& forest, int block_size, std::size_t num_queries) {
    BlockTable table;
    table.block_size = block_size;
    table.rows.assign(num_queries, {});
    table.valid_tokens_last_block.assign(num_queries, block_size);

    struct Walker {
        BlockTable& table;
        std::vector<BlockId> path;
        std::int64_t tokens = 0;

        void visit(const PrefixNode& node) {
            const std::size_t mark = path.size();
            path.insert(path.end(), node.block_ids.begin(), node.block_ids.end());
            tokens += node.length;
            if (node.is_leaf()) {
                for (QueryId q : node.query_ids) {
                    table.rows.at(q) = path;
                    const auto full = static_cast<std::int64_t>(path.size() - 1) * table.block_size;
                    table.valid_tokens_last_block.at(q) = static_cast<int>(tokens - full);
                }
            }
            for (const auto& child : node.children) visit(child);
            path.resize(mark);
            tokens -= node.length;
        }
    } walker{table, {}, 0};
    for (const auto& root : forest.roots) walker.visit(root);
    return table;
}

void mark_partials(Partition& partition) {
    std::unordered_map<QueryId, int> count;
    for (const auto& pack : partition.packs) {
        for (QueryId q : pack.query_ids) ++count[q];
    }
    for (auto& pack : partition.packs) {
        pack.produces_partial = std::any_of(pack.query_ids.begin(), pack.query_ids.end(),
                                            [&](QueryId q) { return count[q] > 1; });
    }
}

std::vector<int> pack_counts(const Partition& partition, std::size_t num_queries) {
    std::vector<int> count(num_queries, 0);
    for (const auto& pack : partition.packs) {
        for (QueryId q : pack.query_ids) ++count.at(q);
    }
    return count;
}

std::optional<std::string> coverage_error(const Partition& partition, const BlockTable& table) {
    const std::size_t n = table.num_queries();
    std::vector<std::unordered_map<BlockId, std::size_t>> position(n);
    for (std::size_t q = 0; q < n; ++q) {
        for (std::size_t pos = 0; pos < table.rows[q].size(); ++pos) {
            position[q].emplace(table.rows[q][pos], pos);
        }
    }

    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> runs(n);
    for (std::size_t p = 0; p < partition.packs.size(); ++p) {
        const auto& pack = partition.packs[p];
        const std::string where = "pack " + std::to_string(p);
        if (pack.query_ids.empty()) return where + " has no queries";
        if (pack.block_ids.empty()) return where + " has no blocks";
        for (QueryId q : pack.query_ids) {
            if (q < 0 || static_cast<std::size_t>(q) >= n) {
                return where + " references unknown query " + std::to_string(q);
            }
            const auto& row = table.rows[q];
            auto it = position[q].find(pack.block_ids.front());
            if (it == position[q].end()) {
                return where + " covers blocks outside query " + std::to_string(q) + "'s row";
            }
            const std::size_t start = it->second;
            if (start + pack.block_ids.size() > row.size() ||
                !std::equal(pack.block_ids.begin(), pack.block_ids.end(),
                            row.begin() + static_cast<std::ptrdiff_t>(start))) {
                return where + " is not a contiguous run of query " + std::to_string(q) + "'s row";
            }
            runs[q].emplace_back(start, start + pack.block_ids.size());
        }
    }
    for (std::size_t q = 0; q < n; ++q) {
        auto& r = runs[q];
        std::sort(r.begin(), r.end());
        std::size_t cursor = 0;
        for (const auto& [begin, end] : r) {
            if (begin != cursor) {
                return "query " + std::to_string(q) + (begin < cursor ? " has overlapping" : " has a gap in") +
                       " coverage at block position " + std::to_string(std::min(begin, cursor));
            }
            cursor = end;
        }
        if (cursor != table.rows[q].size()) {
            return "query " + std::to_string(q) + " is not covered to the end of its row";
        }
    }
    return std::nullopt;
}

std::int64_t distinct_kv_tokens(const BlockTable& table) {
    std::unordered_map<BlockId, int> tokens_of;
    for (std::size_t q = 0; q < table.rows.size(); ++q) {
        for (std::size_t pos = 0; pos < table.rows[q].size(); ++pos) {
            tokens_of.emplace(table.rows[q][pos], table.block_tokens(static_cast<QueryId>(q), pos));
        }
    }
    std::int64_t total = 0;
    for (const auto& [id, tokens] : tokens_of) total += tokens;
    return total;
}

std::size_t distinct_block_count(const BlockTable& table) {
    std::unordered_set<BlockId> ids;
    for (const auto& row : table.rows) ids.insert(row.begin(), row.end());
    return ids.size();
}

}  // namespace prefixpack
