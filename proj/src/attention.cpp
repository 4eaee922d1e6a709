// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefixpack/attention.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace prefixpack {

namespace {

// Zero-mean, unit-variance uniform entries on a 2^16-level grid; each 64-bit draw
// supplies four entries.
template <typename Scalar>
Matrix<Scalar> random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    const double half_width = std::sqrt(3.0);
    const double step = 2.0 * half_width / 65536.0;
    Matrix<Scalar> m(rows, cols);
    std::uint64_t bits = 0;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        if (i % 4 == 0) bits = rng();
        const auto lane = static_cast<double>((bits >> (16 * (i % 4))) & 0xffffu);
        m.data()[i] = static_cast<Scalar>((lane + 0.5) * step - half_width);
    }
    return m;
}

}  // namespace

Matrix<double> full_attention(const Matrix<double>& q, const std::vector<Matrix<double>>& k,
                              const std::vector<Matrix<double>>& v, const AttentionShape& shape) {
    const int d = shape.head_dim;
    PREFIXPACK_CHECK(shape.num_kv_heads >= 1 && shape.num_heads % shape.num_kv_heads == 0,
                     ErrorCode::kShapeMismatch, "heads must be a multiple of kv heads");
    PREFIXPACK_CHECK(q.cols() == static_cast<Eigen::Index>(shape.num_heads) * d, ErrorCode::kShapeMismatch,
                     "Q must have heads * d columns");
    PREFIXPACK_CHECK(k.size() == static_cast<std::size_t>(q.rows()) && v.size() == k.size(),
                     ErrorCode::kShapeMismatch, "need one K/V per query");
    Matrix<double> out(q.rows(), q.cols());
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        const auto& ki = k[static_cast<std::size_t>(i)];
        const auto& vi = v[static_cast<std::size_t>(i)];
        PREFIXPACK_CHECK(ki.rows() == vi.rows() && ki.cols() == static_cast<Eigen::Index>(shape.num_kv_heads) * d &&
                             vi.cols() == ki.cols(),
                         ErrorCode::kShapeMismatch, "K/V must be [kv_len x kv_heads * d]");
        // The query heads of one group are contiguous, so they form a [group x d] matrix.
        const int g = shape.group();
        for (int kvh = 0; kvh < shape.num_kv_heads; ++kvh) {
            const Eigen::Map<const Matrix<double>> qg(q.row(i).data() + static_cast<Eigen::Index>(kvh) * g * d, g, d);
            Eigen::Map<Matrix<double>> og(out.row(i).data() + static_cast<Eigen::Index>(kvh) * g * d, g, d);
            og = attend<double>(qg, ki.middleCols(kvh * d, d), vi.middleCols(kvh * d, d), shape.scale());
        }
    }
    return out;
}

KvStore::KvStore(const BlockTable& table, const AttentionShape& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Eigen::Index cols = static_cast<Eigen::Index>(shape.num_kv_heads) * shape.head_dim;
    // Visit blocks in first-appearance order so contents depend only on the table and seed.
    for (std::size_t q = 0; q < table.num_queries(); ++q) {
        const auto& row = table.rows[q];
        for (std::size_t pos = 0; pos < row.size(); ++pos) {
            if (m_blocks.count(row[pos]) != 0) continue;
            const int tokens = table.block_tokens(static_cast<QueryId>(q), pos);
            Block b{random_matrix<float>(tokens, cols, rng), random_matrix<float>(tokens, cols, rng)};
            m_blocks.emplace(row[pos], std::move(b));
        }
    }
}

void KvStore::gather(std::span<const BlockId> blocks, std::int64_t token_begin, std::int64_t len,
                     Matrix<double>& k, Matrix<double>& v) const {
    PREFIXPACK_CHECK(len > 0, ErrorCode::kEmptySpan, "gather of an empty KV range");
    Eigen::Index cols = 0;
    std::int64_t cursor = 0;
    for (BlockId id : blocks) {
        auto it = m_blocks.find(id);
        PREFIXPACK_CHECK(it != m_blocks.end(), ErrorCode::kCoverageGap,
                         "block " + std::to_string(id) + " has no stored K/V");
        cols = it->second.k.cols();
        if (k.rows() != len || k.cols() != cols) {
            k.resize(len, cols);
            v.resize(len, cols);
        }
        const std::int64_t rows = it->second.k.rows();
        const std::int64_t lo = std::max(cursor, token_begin);
        const std::int64_t hi = std::min(cursor + rows, token_begin + len);
        if (lo < hi) {
            k.middleRows(lo - token_begin, hi - lo) = it->second.k.middleRows(lo - cursor, hi - lo).cast<double>();
            v.middleRows(lo - token_begin, hi - lo) = it->second.v.middleRows(lo - cursor, hi - lo).cast<double>();
        }
        cursor += rows;
    }
    PREFIXPACK_CHECK(cursor >= token_begin + len, ErrorCode::kCoverageGap,
                     "KV range extends past the unit's blocks");
}

void KvStore::gather_row(const BlockTable& table, QueryId q, Matrix<double>& k, Matrix<double>& v) const {
    gather(table.rows.at(q), 0, table.kv_len(q), k, v);
}

Matrix<double> random_queries(std::size_t num_queries, const AttentionShape& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    return random_matrix<double>(static_cast<Eigen::Index>(num_queries),
                         static_cast<Eigen::Index>(shape.num_heads) * shape.head_dim, rng);
}

std::vector<AttentionUnit> units_of(const Partition& partition) {
    std::vector<AttentionUnit> units;
    units.reserve(partition.packs.size());
    for (const auto& p : partition.packs) units.push_back({p.query_ids, p.block_ids, 0, p.kv_len});
    return units;
}

namespace {

// Checks that each query's token range is tiled exactly once by the units containing it.
void check_token_coverage(const BlockTable& table, const std::vector<AttentionUnit>& units) {
    const std::size_t n = table.num_queries();
    std::vector<std::unordered_map<BlockId, std::size_t>> position(n);
    for (std::size_t q = 0; q < n; ++q) {
        for (std::size_t pos = 0; pos < table.rows[q].size(); ++pos) position[q].emplace(table.rows[q][pos], pos);
    }
    std::vector<std::vector<std::pair<std::int64_t, std::int64_t>>> spans(n);
    for (std::size_t u = 0; u < units.size(); ++u) {
        const auto& unit = units[u];
        PREFIXPACK_CHECK(!unit.block_ids.empty() && unit.kv_len > 0, ErrorCode::kEmptySpan,
                         "unit " + std::to_string(u) + " covers no tokens");
        for (QueryId q : unit.query_ids) {
            PREFIXPACK_CHECK(q >= 0 && static_cast<std::size_t>(q) < n, ErrorCode::kCoverageGap,
                             "unit " + std::to_string(u) + " references unknown query");
            auto it = position[q].find(unit.block_ids.front());
            PREFIXPACK_CHECK(it != position[q].end(), ErrorCode::kCoverageGap,
                             "unit " + std::to_string(u) + " is outside query " + std::to_string(q) + "'s row");
            const std::int64_t base = static_cast<std::int64_t>(it->second) * table.block_size;
            spans[q].emplace_back(base + unit.token_begin, base + unit.token_begin + unit.kv_len);
        }
    }
    for (std::size_t q = 0; q < n; ++q) {
        auto& s = spans[q];
        std::sort(s.begin(), s.end());
        std::int64_t cursor = 0;
        for (const auto& [lo, hi] : s) {
            PREFIXPACK_CHECK(lo == cursor, ErrorCode::kCoverageGap,
                             "query " + std::to_string(q) + " has a gap or overlap at token " +
                                 std::to_string(std::min(lo, cursor)));
            cursor = hi;
        }
        PREFIXPACK_CHECK(cursor == table.kv_len(static_cast<QueryId>(q)), ErrorCode::kCoverageGap,
                         "query " + std::to_string(q) + " is not covered to the end of its KV");
    }
}

}  // namespace

Matrix<double> run_packed_attention(const BlockTable& table, const std::vector<AttentionUnit>& units,
                                    const KvStore& store, const Matrix<double>& q,
                                    const AttentionShape& shape, IntermediatePrecision precision) {
    const int d = shape.head_dim;
    PREFIXPACK_CHECK(q.rows() == static_cast<Eigen::Index>(table.num_queries()) &&
                         q.cols() == static_cast<Eigen::Index>(shape.num_heads) * d,
                     ErrorCode::kShapeMismatch, "Q must be [queries x heads * d]");
    check_token_coverage(table, units);

    std::vector<int> appearances(table.num_queries(), 0);
    for (const auto& u : units) {
        for (QueryId id : u.query_ids) ++appearances[static_cast<std::size_t>(id)];
    }

    const std::size_t heads = static_cast<std::size_t>(shape.num_heads);
    const int g = shape.group();
    std::vector<std::vector<PartialResult<double>>> partials(table.num_queries() * heads);
    Matrix<double> k, v, qgroup;
    for (const auto& u : units) {
        store.gather(u.block_ids, u.token_begin, u.kv_len, k, v);
        const auto rows = static_cast<Eigen::Index>(u.query_ids.size());
        // Rows of qgroup are (query, head within the group) pairs sharing one kv head.
        qgroup.resize(rows * g, d);
        for (int kvh = 0; kvh < shape.num_kv_heads; ++kvh) {
            for (Eigen::Index r = 0; r < rows; ++r) {
                qgroup.middleRows(r * g, g) = Eigen::Map<const Matrix<double>>(
                    q.row(u.query_ids[static_cast<std::size_t>(r)]).data() + static_cast<Eigen::Index>(kvh) * g * d, g, d);
            }
            auto parts = cta_partial<double>(qgroup, k.middleCols(kvh * d, d), v.middleCols(kvh * d, d), shape.scale());
            for (std::size_t i = 0; i < parts.size(); ++i) {
                const QueryId id = u.query_ids[i / static_cast<std::size_t>(g)];
                const std::size_t h = static_cast<std::size_t>(kvh * g) + i % static_cast<std::size_t>(g);
                auto& p = parts[i];
                if (precision == IntermediatePrecision::kFloat32 && appearances[static_cast<std::size_t>(id)] > 1) {
                    p = p.cast<float>().cast<double>();
                }
                partials[static_cast<std::size_t>(id) * heads + h].push_back(std::move(p));
            }
        }
    }

    Matrix<double> out(q.rows(), q.cols());
    for (std::size_t id = 0; id < table.num_queries(); ++id) {
        for (std::size_t h = 0; h < heads; ++h) {
            const auto& parts = partials[id * heads + h];
            out.block(static_cast<Eigen::Index>(id), static_cast<Eigen::Index>(h) * d, 1, d) =
                merge_partials<double>(parts).transpose();
        }
    }
    return out;
}

Matrix<double> reference_attention(const BlockTable& table, const KvStore& store,
                                   const Matrix<double>& q, const AttentionShape& shape) {
    std::vector<Matrix<double>> ks(table.num_queries()), vs(table.num_queries());
    for (std::size_t i = 0; i < table.num_queries(); ++i) {
        store.gather_row(table, static_cast<QueryId>(i), ks[i], vs[i]);
    }
    return full_attention(q, ks, vs, shape);
}

double max_relative_error(const Matrix<double>& a, const Matrix<double>& b, const AttentionShape& shape) {
    PREFIXPACK_CHECK(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCode::kShapeMismatch,
                     "outputs differ in shape");
    const int d = shape.head_dim;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (int h = 0; h < shape.num_heads; ++h) {
            const auto ref = b.block(i, h * d, 1, d);
            const double diff = (a.block(i, h * d, 1, d) - ref).cwiseAbs().maxCoeff();
            const double scale = std::max(ref.cwiseAbs().maxCoeff(), 1e-300);
            worst = std::max(worst, diff / scale);
        }
    }
    return worst;
}

}  // namespace prefixpack
