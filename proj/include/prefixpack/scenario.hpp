// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prefixpack/attention.hpp"
#include "prefixpack/exec_simulator.hpp"
#include "prefixpack/serialization.hpp"
#include "prefixpack/tile_engine.hpp"
#include "prefixpack/workload.hpp"

namespace prefixpack {

enum class Strategy { kPat, kQueryCentric, kNaive, kPatFixedTile, kPatSerialStreams, kPatNoSplit };

std::string_view strategy_name(Strategy s);
/// Throws Error(kInvalidArgument) for unknown names.
Strategy parse_strategy(std::string_view name);

/// The FlashAttention-style configuration used by the fixed-tile baselines.
inline constexpr int kFixedTileM = 64;
inline constexpr int kFixedTileN = 128;

struct ScenarioConfig {
    WorkloadSpec workload;
    std::optional<BlockTable> table;  // explicit block table instead of generating one
    HardwareModel hardware;
    RegisterUsageTable registers;
    std::vector<Strategy> strategies;
    std::uint64_t seed = 0;
    bool verify = false;
    double tolerance = 1e-10;
    std::string report_path;
    std::string timeline_dir;  // per-strategy task CSVs; empty disables
};

/// Loads a scenario file. Relative paths resolve against the file's directory; the
/// PREFIXPACK_HW_PROFILE environment variable replaces the hardware profile path.
ScenarioConfig load_scenario(const std::string& path);

std::string default_profile_path(const std::string& name);
HardwareModel load_hardware(const std::string& path);

/// Hardware-dependent state shared by every strategy of a scenario.
struct TileContext {
    FeasibleSet feasible;
    TileSelector selector;

    static TileContext build(const HardwareModel& hw, const RegisterUsageTable& regs, const WorkloadSpec& spec);
    TileConfig fixed_config() const;
};

struct StrategyPlan {
    Partition partition;
    std::vector<CtaTask> tasks;
    bool serial_streams = false;
};

/// Pack, tile-select, split and stream-assign one strategy.
StrategyPlan plan_strategy(Strategy s, const BlockTable& table, const TileContext& tiles);

std::vector<AttentionUnit> units_of(const std::vector<CtaTask>& tasks);

struct StrategyResult {
    Strategy strategy = Strategy::kPat;
    TrafficReport traffic;
    SimReport sim;
    std::vector<CtaTask> tasks;
    std::size_t pack_count = 0;
    std::optional<bool> verified;
    double max_rel_error = 0.0;
};

struct ScenarioResult {
    std::string fingerprint;
    std::size_t num_queries = 0;
    std::size_t distinct_blocks = 0;
    std::int64_t theoretical_min_kv_bytes = 0;
    std::int64_t query_centric_kv_bytes = 0;
    std::vector<StrategyResult> results;

    bool all_verified() const;
};

ScenarioResult run_scenario(const ScenarioConfig& config, const TileContext& tiles);
ScenarioResult run_scenario(const ScenarioConfig& config);

/// Report body; contains no wall-clock data so identical inputs give identical bytes.
Json scenario_report(const ScenarioConfig& config, const ScenarioResult& result);

/// Writes the report atomically plus a `<report>.meta.json` sidecar holding the timestamp.
void write_scenario_outputs(const ScenarioConfig& config, const ScenarioResult& result);

enum class SweepAxis { kBatch, kPrefixLen, kKvLen, kFanout };

SweepAxis parse_sweep_axis(std::string_view name);
std::string_view sweep_axis_name(SweepAxis axis);

/// Workload spec at one sweep point.
WorkloadSpec apply_sweep_point(const WorkloadSpec& base, SweepAxis axis, std::int64_t value);

std::string sweep_csv_header();

struct SweepResult {
    std::string csv;
    bool all_verified = true;
};

/// One CSV row per (point, strategy). An empty value list yields the header only.
SweepResult run_sweep(const ScenarioConfig& config, SweepAxis axis, const std::vector<std::int64_t>& values);

}  // namespace prefixpack
