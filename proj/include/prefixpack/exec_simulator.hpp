// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <vector>

#include "prefixpack/tile_engine.hpp"
#include "prefixpack/workload.hpp"

namespace prefixpack {

/// Global-memory traffic of a partition.
///
/// kv_bytes counts K and V for every kv head; intermediate_bytes counts, for each query split
/// across several packs, one partial write and one merge read of (d + 2) values per query
/// head per pack. The model_* fields use the packer's profit units instead: one d-vector of
/// b bytes per KV token, and 2 * d * b' per (split query, pack) pair.
struct TrafficReport {
    std::int64_t kv_bytes = 0;
    std::int64_t intermediate_bytes = 0;
    std::int64_t total_bytes = 0;
    std::int64_t model_kv_bytes = 0;
    std::int64_t model_intermediate_bytes = 0;
    std::int64_t model_total_bytes = 0;
};

TrafficReport account_traffic(const Partition& partition, const WorkloadSpec& spec);

/// Each distinct block loaded exactly once, K and V, all kv heads.
std::int64_t theoretical_min_kv_bytes(const BlockTable& table, const WorkloadSpec& spec);
/// Same census in profit-model units (d * b per token).
std::int64_t theoretical_min_model_bytes(const BlockTable& table, const WorkloadSpec& spec);

/// Cuts packs holding more than max_queries queries into near-equal query groups; each
/// group re-reads the pack's blocks.
Partition split_oversized_packs(const Partition& partition, int max_queries);

struct CtaTask {
    std::shared_ptr<const CtaPack> pack;
    std::size_t pack_index = 0;
    TileConfig cfg;
    std::int64_t token_begin = 0;  // offset into the pack's KV span
    std::int64_t kv_len = 0;
    int q = 0;
    int stream_id = 0;
    int split_index = 0;
    int split_of = 1;
};

/// One task per pack, tiles chosen per pack. Packs must not exceed the selector's m_max.
std::vector<CtaTask> make_tasks(const Partition& partition, const TileSelector& selector);
/// One task per pack with a fixed configuration.
std::vector<CtaTask> make_tasks(const Partition& partition, const TileConfig& fixed);

/// Splits every task longer than the mean kv_len into ceil(kv_len / mean) block-aligned,
/// near-equal parts.
std::vector<CtaTask> split_long_kv(const std::vector<CtaTask>& tasks, int block_size);

/// Sets stream_id by (m, n) group (ids follow sorted configuration order) and returns the
/// per-stream task lists in enqueue order.
std::map<int, std::vector<CtaTask>> assign_streams(std::vector<CtaTask>& tasks);

/// Traffic of a task list: one partial per task for queries covered by several tasks.
TrafficReport account_task_traffic(const std::vector<CtaTask>& tasks, const WorkloadSpec& spec);

struct SimOptions {
    bool serial_streams = false;
};

/// One CTA: a task's work for a single kv head.
struct TaskTrace {
    std::size_t task = 0;
    int head = 0;
    int stream_id = 0;
    int sm = 0;
    double start = 0.0;
    double end = 0.0;
};

struct StreamSpan {
    double start = 0.0;
    double end = 0.0;
};

struct SimReport {
    double makespan = 0.0;
    std::map<int, StreamSpan> stream_spans;
    std::vector<TaskTrace> traces;  // index task * num_kv_heads + head
    std::int64_t kv_bytes_loaded = 0;
    std::int64_t intermediate_bytes = 0;
    double mem_waste = 0.0;
    double exec_bubble = 0.0;
    double busy_slot_time = 0.0;  // sum over tasks of duration / C, in SM-time

    /// Traces that ran on one SM, ordered by start time.
    std::vector<TaskTrace> sm_timeline(int sm) const;
};

/// Latency of one of the task's CTAs running alone under uncontended bandwidth.
double isolated_latency(const CtaTask& task, const HardwareModel& hw, const WorkloadSpec& spec);

/// Discrete-event execution of the tasks on the SM pool.
///
/// Every task launches one CTA per kv head. Each SM hosts up to C resident CTAs of a
/// configuration. A CTA pays the inherent latency once, then streams ceil(kv_len / n)
/// tiles; a tile takes max(memory, compute), with memory bandwidth shared equally among
/// CTAs currently loading.
SimReport simulate(const std::vector<CtaTask>& tasks, const HardwareModel& hw,
                   const WorkloadSpec& spec, const SimOptions& options = {});

}  // namespace prefixpack
