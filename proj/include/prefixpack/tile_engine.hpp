// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "prefixpack/workload.hpp"

namespace prefixpack {

/// Analytical GPU description. Bandwidth in bytes/ns, latency in ns, tensor throughput in
/// multiply-add element operations per ns per SM.
struct HardwareModel {
    std::string name = "a100";
    int num_sms = 108;
    std::int64_t smem_per_sm = 196608;
    std::int64_t smem_per_cta = 166912;
    int reg_per_thread_limit = 255;
    std::int64_t reg_file_per_sm = 65536;
    double bandwidth = 2000.0;
    double inherent_latency = 500.0;
    double tensor_throughput = 1444.0;
    std::int64_t l2_bytes = 40LL << 20;

    /// Throws Error(kInvalidArgument).
    void validate() const;
};

struct RegisterUsage {
    int regs_per_thread = 0;
    std::int64_t regs_per_cta = 0;
    int threads_per_cta = 0;
};

class RegisterUsageTable {
public:
    bool synthetic = false;

    void set(int m, int n, RegisterUsage usage) { m_entries[{m, n}] = usage; }
    bool contains(int m, int n) const { return m_entries.count({m, n}) != 0; }
    /// Throws Error(kMissingRegisterEntry).
    const RegisterUsage& at(int m, int n) const;
    const std::map<std::pair<int, int>, RegisterUsage>& entries() const { return m_entries; }

private:
    std::map<std::pair<int, int>, RegisterUsage> m_entries;
};

/// Plausible stand-in for compiler-reported register usage, covering powers of two 16..256.
RegisterUsageTable synthetic_register_table(int head_dim);

struct TileDims {
    int head_dim = 128;
    int kv_bytes = 2;
    int intermediate_bytes = 4;

    static TileDims from(const WorkloadSpec& spec) {
        return {spec.head_dim, spec.kv_dtype_bytes, spec.intermediate_dtype_bytes};
    }
};

struct TileConfig {
    int m = 0;
    int n = 0;
    int concurrency = 0;

    friend bool operator==(const TileConfig&, const TileConfig&) = default;
};

enum class Constraint { kNone = 0, kResources = 1, kBandwidth = 2, kTileShape = 3 };

/// Circled-digit label used in reports: "①", "②", "③".
std::string_view constraint_label(Constraint c);

std::int64_t tile_smem_bytes(int m, int n, const TileDims& dims);

bool is_tile_dim(int v);

/// Largest C with C * smem <= smem_per_sm and C * R_CTA <= reg_file; 0 if a single CTA
/// exceeds the per-CTA shared-memory limit.
int derive_concurrency(int m, int n, const HardwareModel& hw, const RegisterUsageTable& regs,
                       const TileDims& dims);

/// Minimum n keeping L * B bytes in flight across S * C resident CTAs.
std::int64_t min_inflight_n(const HardwareModel& hw, int concurrency, const TileDims& dims);

struct RejectedTile {
    int m = 0;
    int n = 0;
    Constraint violated = Constraint::kNone;
};

struct FeasibleSet {
    std::vector<TileConfig> accepted;
    std::vector<RejectedTile> rejected;

    bool empty() const { return accepted.empty(); }
    std::vector<int> m_values() const;
    std::vector<int> n_values(int m) const;
    const TileConfig* find(int m, int n) const;
};

/// First violated constraint for a candidate, checked in the order shape, resources, bandwidth.
Constraint check_tile(int m, int n, const HardwareModel& hw, const RegisterUsageTable& regs,
                      const TileDims& dims);

std::vector<int> default_tile_candidates();

FeasibleSet solve_feasible(const HardwareModel& hw, const RegisterUsageTable& regs,
                           const TileDims& dims, const std::vector<int>& m_candidates,
                           const std::vector<int>& n_candidates);
FeasibleSet solve_feasible(const HardwareModel& hw, const RegisterUsageTable& regs,
                           const TileDims& dims);

/// Smallest feasible m >= q, or the largest feasible m when q exceeds it.
int select_q_tile(int q, const FeasibleSet& fs);

/// Number of groups a pack of q queries is cut into when q exceeds m_max.
int split_query_count(int q, int m_max);

/// Step function kv_len -> n. breakpoints[i] = (max_kv_len, n); lengths above the last
/// breakpoint use the last n.
struct KvTileTree {
    int m = 0;
    std::vector<std::pair<std::int64_t, int>> breakpoints;
};

int select_kv_tile(std::int64_t kv_len, const KvTileTree& tree);

struct CalibrationOptions {
    std::vector<std::int64_t> sweep;  // kv lengths; empty -> default grid
    double tie_tolerance = 0.02;
    int batch_ctas = 0;               // CTAs per simulated batch; 0 -> one wave (num_sms)
    int queries_per_cta = 0;          // 0 -> m
};

std::vector<std::int64_t> default_kv_sweep();

/// Simulated latency of `ctas` identical CTAs (each one kv head) using one tile config.
double simulate_uniform_batch(const TileConfig& cfg, std::int64_t kv_len, int ctas, int queries,
                              const HardwareModel& hw, const WorkloadSpec& spec);

KvTileTree calibrate_n_tree(const FeasibleSet& fs, const HardwareModel& hw,
                            const WorkloadSpec& spec, int m, const CalibrationOptions& options = {});

/// Feasible set plus one calibrated n-tree per feasible m.
class TileSelector {
public:
    TileSelector() = default;
    TileSelector(FeasibleSet fs, std::map<int, KvTileTree> trees);

    static TileSelector calibrate(const FeasibleSet& fs, const HardwareModel& hw,
                                  const WorkloadSpec& spec, const CalibrationOptions& options = {});

    int m_max() const;
    TileConfig select(int q, std::int64_t kv_len) const;
    const FeasibleSet& feasible() const { return m_fs; }
    const std::map<int, KvTileTree>& trees() const { return m_trees; }

private:
    FeasibleSet m_fs;
    std::map<int, KvTileTree> m_trees;
};

}  // namespace prefixpack
