// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefixpack/tile_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prefixpack/error.hpp"
#include "prefixpack/exec_simulator.hpp"

namespace prefixpack {

void HardwareModel::validate() const {
    auto require = [](bool ok, const char* what) {
        PREFIXPACK_CHECK(ok, ErrorCode::kInvalidArgument, std::string("hardware model: ") + what);
    };
    require(num_sms > 0, "num_sms must be positive");
    require(smem_per_sm > 0 && smem_per_cta > 0, "shared-memory capacities must be positive");
    require(reg_per_thread_limit > 0 && reg_file_per_sm > 0, "register capacities must be positive");
    require(bandwidth > 0.0, "bandwidth must be positive");
    require(inherent_latency > 0.0, "inherent latency must be positive");
    require(tensor_throughput > 0.0, "tensor throughput must be positive");
    require(l2_bytes >= 0, "l2_bytes must be non-negative");
}

const RegisterUsage& RegisterUsageTable::at(int m, int n) const {
    auto it = m_entries.find({m, n});
    if (it == m_entries.end()) {
        throw Error(ErrorCode::kMissingRegisterEntry,
                    "no register usage for (m=" + std::to_string(m) + ", n=" + std::to_string(n) + ")");
    }
    return it->second;
}

RegisterUsageTable synthetic_register_table(int head_dim) {
    RegisterUsageTable table;
    table.synthetic = true;
    for (int m : default_tile_candidates()) {
        for (int n : default_tile_candidates()) {
            RegisterUsage u;
            u.threads_per_cta = m <= 64 ? 128 : 256;
            // Query fragment plus score accumulator per thread, on top of fixed overhead.
            u.regs_per_thread = 32 + m * head_dim / u.threads_per_cta + m * n / u.threads_per_cta;
            u.regs_per_cta = static_cast<std::int64_t>(u.regs_per_thread) * u.threads_per_cta;
            table.set(m, n, u);
        }
    }
    return table;
}

std::string_view constraint_label(Constraint c) {
    switch (c) {
        case Constraint::kResources: return "①";
        case Constraint::kBandwidth: return "②";
        case Constraint::kTileShape: return "③";
        case Constraint::kNone: break;
    }
    return "";
}

std::int64_t tile_smem_bytes(int m, int n, const TileDims& dims) {
    const std::int64_t d = dims.head_dim;
    return static_cast<std::int64_t>(m) * d * dims.kv_bytes + static_cast<std::int64_t>(n) * d * dims.kv_bytes +
           static_cast<std::int64_t>(m) * d * dims.intermediate_bytes;
}

bool is_tile_dim(int v) { return v >= 16 && (v & (v - 1)) == 0; }

int derive_concurrency(int m, int n, const HardwareModel& hw, const RegisterUsageTable& regs,
                       const TileDims& dims) {
    const RegisterUsage& u = regs.at(m, n);
    const std::int64_t smem = tile_smem_bytes(m, n, dims);
    if (smem > hw.smem_per_cta || u.regs_per_cta <= 0) return 0;
    const std::int64_t by_smem = hw.smem_per_sm / smem;
    const std::int64_t by_regs = hw.reg_file_per_sm / u.regs_per_cta;
    return static_cast<int>(std::min(by_smem, by_regs));
}

std::int64_t min_inflight_n(const HardwareModel& hw, int concurrency, const TileDims& dims) {
    const double denom = static_cast<double>(hw.num_sms) * concurrency * dims.head_dim * dims.kv_bytes;
    return static_cast<std::int64_t>(std::ceil(hw.inherent_latency * hw.bandwidth / denom));
}

std::vector<int> FeasibleSet::m_values() const {
    std::vector<int> out;
    for (const auto& c : accepted) out.push_back(c.m);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<int> FeasibleSet::n_values(int m) const {
    std::vector<int> out;
    for (const auto& c : accepted) {
        if (c.m == m) out.push_back(c.n);
    }
    std::sort(out.begin(), out.end());
    return out;
}

const TileConfig* FeasibleSet::find(int m, int n) const {
    for (const auto& c : accepted) {
        if (c.m == m && c.n == n) return &c;
    }
    return nullptr;
}

Constraint check_tile(int m, int n, const HardwareModel& hw, const RegisterUsageTable& regs,
                      const TileDims& dims) {
    if (!is_tile_dim(m) || !is_tile_dim(n)) return Constraint::kTileShape;
    if (!regs.contains(m, n)) return Constraint::kResources;
    const RegisterUsage& u = regs.at(m, n);
    if (tile_smem_bytes(m, n, dims) > hw.smem_per_cta) return Constraint::kResources;
    if (u.regs_per_thread > hw.reg_per_thread_limit) return Constraint::kResources;
    const int c = derive_concurrency(m, n, hw, regs, dims);
    if (c < 1 || c * u.regs_per_cta > hw.reg_file_per_sm) return Constraint::kResources;
    if (n < min_inflight_n(hw, c, dims)) return Constraint::kBandwidth;
    return Constraint::kNone;
}

std::vector<int> default_tile_candidates() { return {16, 32, 64, 128, 256}; }

FeasibleSet solve_feasible(const HardwareModel& hw, const RegisterUsageTable& regs,
                           const TileDims& dims, const std::vector<int>& m_candidates,
                           const std::vector<int>& n_candidates) {
    hw.validate();
    FeasibleSet fs;
    for (int m : m_candidates) {
        for (int n : n_candidates) {
            const Constraint c = check_tile(m, n, hw, regs, dims);
            if (c == Constraint::kNone) {
                fs.accepted.push_back({m, n, derive_concurrency(m, n, hw, regs, dims)});
            } else {
                fs.rejected.push_back({m, n, c});
            }
        }
    }
    return fs;
}

FeasibleSet solve_feasible(const HardwareModel& hw, const RegisterUsageTable& regs,
                           const TileDims& dims) {
    return solve_feasible(hw, regs, dims, default_tile_candidates(), default_tile_candidates());
}

int select_q_tile(int q, const FeasibleSet& fs) {
    PREFIXPACK_CHECK(!fs.empty(), ErrorCode::kEmptyFeasibleSet, "no feasible tile configuration");
    PREFIXPACK_CHECK(q >= 1, ErrorCode::kInvalidArgument, "query count must be positive");
    const std::vector<int> ms = fs.m_values();
    auto it = std::lower_bound(ms.begin(), ms.end(), q);
    return it == ms.end() ? ms.back() : *it;
}

int split_query_count(int q, int m_max) {
    PREFIXPACK_CHECK(m_max >= 1, ErrorCode::kInvalidArgument, "m_max must be positive");
    return (q + m_max - 1) / m_max;
}

int select_kv_tile(std::int64_t kv_len, const KvTileTree& tree) {
    PREFIXPACK_CHECK(!tree.breakpoints.empty(), ErrorCode::kInvalidArgument, "empty n decision tree");
    auto it = std::lower_bound(tree.breakpoints.begin(), tree.breakpoints.end(), kv_len,
                               [](const auto& bp, std::int64_t v) { return bp.first < v; });
    return it == tree.breakpoints.end() ? tree.breakpoints.back().second : it->second;
}

std::vector<std::int64_t> default_kv_sweep() {
    return {16, 32, 48, 64, 96, 128, 192, 256, 384, 512, 768, 1024, 1536, 2048, 4096, 8192};
}

double simulate_uniform_batch(const TileConfig& cfg, std::int64_t kv_len, int ctas, int queries,
                              const HardwareModel& hw, const WorkloadSpec& spec) {
    auto pack = std::make_shared<CtaPack>();
    pack->kv_len = kv_len;
    pack->query_ids.resize(static_cast<std::size_t>(std::clamp(queries, 1, cfg.m)));
    std::vector<CtaTask> tasks;
    tasks.reserve(static_cast<std::size_t>(ctas));
    for (int i = 0; i < ctas; ++i) {
        CtaTask t;
        t.pack = pack;
        t.pack_index = static_cast<std::size_t>(i);
        t.cfg = cfg;
        t.kv_len = kv_len;
        t.q = pack->q();
        tasks.push_back(t);
    }
    assign_streams(tasks);
    // One kv head per task so that `ctas` counts CTAs.
    WorkloadSpec single = spec;
    single.num_heads = spec.num_heads / spec.num_kv_heads;
    single.num_kv_heads = 1;
    return simulate(tasks, hw, single).makespan;
}

KvTileTree calibrate_n_tree(const FeasibleSet& fs, const HardwareModel& hw,
                            const WorkloadSpec& spec, int m, const CalibrationOptions& options) {
    const std::vector<int> ns = fs.n_values(m);
    PREFIXPACK_CHECK(!ns.empty(), ErrorCode::kEmptyFeasibleSet,
                     "no feasible n for m=" + std::to_string(m));
    std::vector<std::int64_t> sweep = options.sweep.empty() ? default_kv_sweep() : options.sweep;
    std::sort(sweep.begin(), sweep.end());
    sweep.erase(std::unique(sweep.begin(), sweep.end()), sweep.end());
    const int ctas = options.batch_ctas > 0 ? options.batch_ctas : hw.num_sms;
    const int queries = options.queries_per_cta > 0 ? options.queries_per_cta : m;

    KvTileTree tree;
    tree.m = m;
    for (std::int64_t kv : sweep) {
        std::vector<double> latency;
        double best = std::numeric_limits<double>::infinity();
        for (int n : ns) {
            latency.push_back(simulate_uniform_batch(*fs.find(m, n), kv, ctas, queries, hw, spec));
            best = std::min(best, latency.back());
        }
        int choice = ns.front();
        for (std::size_t i = 0; i < ns.size(); ++i) {
            if (latency[i] <= best * (1.0 + options.tie_tolerance)) choice = ns[i];
        }
        if (!tree.breakpoints.empty() && tree.breakpoints.back().second == choice) {
            tree.breakpoints.back().first = kv;
        } else {
            tree.breakpoints.emplace_back(kv, choice);
        }
    }
    return tree;
}

TileSelector::TileSelector(FeasibleSet fs, std::map<int, KvTileTree> trees)
    : m_fs(std::move(fs)), m_trees(std::move(trees)) {}

TileSelector TileSelector::calibrate(const FeasibleSet& fs, const HardwareModel& hw,
                                     const WorkloadSpec& spec, const CalibrationOptions& options) {
    PREFIXPACK_CHECK(!fs.empty(), ErrorCode::kEmptyFeasibleSet, "no feasible tile configuration");
    std::map<int, KvTileTree> trees;
    for (int m : fs.m_values()) trees[m] = calibrate_n_tree(fs, hw, spec, m, options);
    return TileSelector(fs, std::move(trees));
}

int TileSelector::m_max() const {
    PREFIXPACK_CHECK(!m_fs.empty(), ErrorCode::kEmptyFeasibleSet, "no feasible tile configuration");
    return m_fs.m_values().back();
}

TileConfig TileSelector::select(int q, std::int64_t kv_len) const {
    const int m = select_q_tile(q, m_fs);
    auto it = m_trees.find(m);
    PREFIXPACK_CHECK(it != m_trees.end(), ErrorCode::kEmptyFeasibleSet,
                     "no n decision tree for m=" + std::to_string(m));
    const int n = select_kv_tile(kv_len, it->second);
    const TileConfig* cfg = m_fs.find(m, n);
    PREFIXPACK_CHECK(cfg != nullptr, ErrorCode::kNoFeasibleConfig,
                     "decision tree chose an infeasible (m, n)");
    return *cfg;
}

}  // namespace prefixpack
