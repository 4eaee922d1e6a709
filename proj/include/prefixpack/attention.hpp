// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "prefixpack/error.hpp"
#include "prefixpack/workload.hpp"

namespace prefixpack {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Online-softmax state for one (query, head) over part of its KV.
template <typename Scalar>
struct PartialResult {
    Scalar max_score = Scalar(0);
    Scalar exp_sum = Scalar(0);
    Vector<Scalar> weighted_sum;

    template <typename Other>
    PartialResult<Other> cast() const {
        return {static_cast<Other>(max_score), static_cast<Other>(exp_sum),
                weighted_sum.template cast<Other>()};
    }
};

/// Per-row partials of q queries (rows of `q`) against one KV span for a single head.
template <typename Scalar>
std::vector<PartialResult<Scalar>> cta_partial(const Eigen::Ref<const Matrix<Scalar>>& q,
                                               const Eigen::Ref<const Matrix<Scalar>>& k,
                                               const Eigen::Ref<const Matrix<Scalar>>& v,
                                               Scalar scale) {
    PREFIXPACK_CHECK(k.rows() > 0, ErrorCode::kEmptySpan, "partial over an empty KV span");
    PREFIXPACK_CHECK(k.rows() == v.rows() && k.cols() == q.cols(), ErrorCode::kShapeMismatch,
                     "query, key and value shapes disagree");
    Matrix<Scalar> scores = (q * k.transpose()) * scale;
    std::vector<PartialResult<Scalar>> out(static_cast<std::size_t>(q.rows()));
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        auto& p = out[static_cast<std::size_t>(r)];
        p.max_score = scores.row(r).maxCoeff();
        scores.row(r) = (scores.row(r).array() - p.max_score).exp().matrix();
        p.exp_sum = scores.row(r).sum();
    }
    const Matrix<Scalar> weighted = scores * v;
    for (Eigen::Index r = 0; r < weighted.rows(); ++r) {
        out[static_cast<std::size_t>(r)].weighted_sum = weighted.row(r).transpose();
    }
    return out;
}

/// Rescales every partial to the common maximum and normalizes.
template <typename Scalar>
Vector<Scalar> merge_partials(std::span<const PartialResult<Scalar>> parts) {
    PREFIXPACK_CHECK(!parts.empty(), ErrorCode::kEmptyList, "no partials to merge");
    Scalar m = parts.front().max_score;
    for (const auto& p : parts) m = std::max(m, p.max_score);
    Scalar denom = Scalar(0);
    Vector<Scalar> numer = Vector<Scalar>::Zero(parts.front().weighted_sum.size());
    for (const auto& p : parts) {
        PREFIXPACK_CHECK(p.weighted_sum.size() == numer.size(), ErrorCode::kShapeMismatch,
                         "partials disagree on head dimension");
        const Scalar w = std::exp(p.max_score - m);
        denom += p.exp_sum * w;
        numer += w * p.weighted_sum;
    }
    PREFIXPACK_CHECK(denom > Scalar(0) && std::isfinite(denom), ErrorCode::kNonPositiveDenominator,
                     "merged exp-sum is not positive");
    return numer / denom;
}

/// Stable softmax attention of every row of `q` over one head's K and V.
template <typename Scalar>
Matrix<Scalar> attend(const Eigen::Ref<const Matrix<Scalar>>& q, const Eigen::Ref<const Matrix<Scalar>>& k,
                      const Eigen::Ref<const Matrix<Scalar>>& v, Scalar scale) {
    const auto parts = cta_partial<Scalar>(q, k, v, scale);
    Matrix<Scalar> out(q.rows(), v.cols());
    for (Eigen::Index r = 0; r < q.rows(); ++r) {
        const auto& p = parts[static_cast<std::size_t>(r)];
        out.row(r) = (p.weighted_sum / p.exp_sum).transpose();
    }
    return out;
}

struct AttentionShape {
    int num_heads = 32;
    int num_kv_heads = 32;
    int head_dim = 128;

    int group() const { return num_heads / num_kv_heads; }
    int kv_head_of(int head) const { return head / group(); }
    double scale() const { return 1.0 / std::sqrt(static_cast<double>(head_dim)); }

    static AttentionShape from(const WorkloadSpec& spec) {
        return {spec.num_heads, spec.num_kv_heads, spec.head_dim};
    }
};

/// Q is [queries x (heads * d)]; k[i], v[i] are query i's [kv_len x (kv_heads * d)].
Matrix<double> full_attention(const Matrix<double>& q, const std::vector<Matrix<double>>& k,
                              const std::vector<Matrix<double>>& v, const AttentionShape& shape);

/// Random K/V contents per block id, drawn from a seeded generator. Entries are stored
/// as float and widen exactly to double on gather.
class KvStore {
public:
    KvStore(const BlockTable& table, const AttentionShape& shape, std::uint64_t seed);

    /// Rows [token_begin, token_begin + len) of the concatenation of `blocks`.
    void gather(std::span<const BlockId> blocks, std::int64_t token_begin, std::int64_t len,
                Matrix<double>& k, Matrix<double>& v) const;
    /// Full K/V of a query's row.
    void gather_row(const BlockTable& table, QueryId q, Matrix<double>& k, Matrix<double>& v) const;

private:
    struct Block {
        Matrix<float> k;
        Matrix<float> v;
    };
    std::unordered_map<BlockId, Block> m_blocks;
};

Matrix<double> random_queries(std::size_t num_queries, const AttentionShape& shape, std::uint64_t seed);

/// A (queries x KV token range) unit of work; token_begin is relative to the first block.
struct AttentionUnit {
    std::vector<QueryId> query_ids;
    std::vector<BlockId> block_ids;
    std::int64_t token_begin = 0;
    std::int64_t kv_len = 0;
};

std::vector<AttentionUnit> units_of(const Partition& partition);

enum class IntermediatePrecision { kDouble, kFloat32 };

/// Computes every unit's partials and merges them per (query, head). Partials of queries
/// covered by several units are stored at the requested intermediate precision.
Matrix<double> run_packed_attention(const BlockTable& table, const std::vector<AttentionUnit>& units,
                                    const KvStore& store, const Matrix<double>& q,
                                    const AttentionShape& shape,
                                    IntermediatePrecision precision = IntermediatePrecision::kDouble);

/// Reference: full attention of every query over its own row.
Matrix<double> reference_attention(const BlockTable& table, const KvStore& store,
                                   const Matrix<double>& q, const AttentionShape& shape);

/// Maximum over (query, head) of |a - b|_inf / |b|_inf.
double max_relative_error(const Matrix<double>& a, const Matrix<double>& b, const AttentionShape& shape);

}  // namespace prefixpack
