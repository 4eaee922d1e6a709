// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

// Enumeration of small prefix-tree shapes and their block tables, built directly from the
// shape rather than through generate_workload.

#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "prefixpack/workload.hpp"

namespace prefixpack::oracle {

struct Shape {
    std::vector<Shape> children;

    int leaves() const {
        if (children.empty()) return 1;
        int n = 0;
        for (const auto& c : children) n += c.leaves();
        return n;
    }
    int depth() const {
        int d = 0;
        for (const auto& c : children) d = std::max(d, c.depth());
        return d + 1;
    }
    std::string str() const {
        if (children.empty()) return "*";
        std::string s = "(";
        for (const auto& c : children) s += c.str();
        return s + ")";
    }
};

/// Every tree with at most max_leaves leaves and at most 3 node levels in which each
/// internal node has at least two children. Children are listed as multisets.
inline std::vector<Shape> enumerate_shapes(int max_leaves) {
    std::vector<Shape> out;
    out.push_back(Shape{});
    auto fan = [](int k) {
        Shape s;
        s.children.assign(static_cast<std::size_t>(k), Shape{});
        return s;
    };
    for (int k = 2; k <= max_leaves; ++k) out.push_back(fan(k));
    // Depth 3: root children are leaves (count a) or fans of size k_j >= 2 (non-increasing).
    std::vector<int> fans;
    auto rec = [&](auto&& self, int max_k, int used) -> void {
        if (!fans.empty()) {
            for (int a = 0; used + a <= max_leaves; ++a) {
                if (a + static_cast<int>(fans.size()) < 2) continue;
                Shape root;
                for (int k : fans) root.children.push_back(fan(k));
                for (int i = 0; i < a; ++i) root.children.push_back(Shape{});
                out.push_back(root);
            }
        }
        for (int k = std::min(max_k, max_leaves - used); k >= 2; --k) {
            fans.push_back(k);
            self(self, k, used + k);
            fans.pop_back();
        }
    };
    rec(rec, max_leaves, 0);
    return out;
}

/// Builds the block table: a node at depth i owns level_tokens[i] / block_size fresh blocks.
inline BlockTable table_from_shape(const Shape& shape, const std::vector<std::int64_t>& level_tokens,
                                   int block_size) {
    BlockTable table;
    table.block_size = block_size;
    BlockId next = 0;
    std::vector<BlockId> path;
    auto walk = [&](auto&& self, const Shape& node, std::size_t depth) -> void {
        const std::size_t mark = path.size();
        const auto blocks = level_tokens.at(depth) / block_size;
        for (std::int64_t b = 0; b < blocks; ++b) path.push_back(next++);
        if (node.children.empty()) {
            table.rows.push_back(path);
            table.valid_tokens_last_block.push_back(block_size);
        }
        for (const auto& c : node.children) self(self, c, depth + 1);
        path.resize(mark);
    };
    walk(walk, shape, 0);
    return table;
}

}  // namespace prefixpack::oracle
