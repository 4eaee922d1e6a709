// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefixpack/scenario.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <future>
#include <sstream>

#include "prefixpack/error.hpp"
#include "prefixpack/pack_scheduler.hpp"

namespace prefixpack {

namespace fs = std::filesystem;

std::string_view strategy_name(Strategy s) {
    switch (s) {
        case Strategy::kPat: return "pat";
        case Strategy::kQueryCentric: return "query_centric";
        case Strategy::kNaive: return "naive";
        case Strategy::kPatFixedTile: return "pat_fixed_tile";
        case Strategy::kPatSerialStreams: return "pat_serial_streams";
        case Strategy::kPatNoSplit: return "pat_no_split";
    }
    return "unknown";
}

Strategy parse_strategy(std::string_view name) {
    for (Strategy s : {Strategy::kPat, Strategy::kQueryCentric, Strategy::kNaive, Strategy::kPatFixedTile,
                       Strategy::kPatSerialStreams, Strategy::kPatNoSplit}) {
        if (strategy_name(s) == name) return s;
    }
    throw Error(ErrorCode::kInvalidArgument, "unknown strategy '" + std::string(name) + "'");
}

std::string default_profile_path(const std::string& name) {
    return (fs::path(PREFIXPACK_PROFILE_DIR) / name).string();
}

HardwareModel load_hardware(const std::string& path) {
    HardwareModel hw = load_json<HardwareModel>(path);
    hw.validate();
    return hw;
}

namespace {

std::string resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path.string() : (base / path).lexically_normal().string();
}

}  // namespace

ScenarioConfig load_scenario(const std::string& path) {
    const Json j = read_json_file(path);
    const fs::path base = fs::path(path).parent_path();
    ScenarioConfig cfg;
    try {
        const Json& w = j.at("workload");
        cfg.workload = w.is_string() ? load_json<WorkloadSpec>(resolve(base, w.get<std::string>()))
                                     : w.get<WorkloadSpec>();
        if (j.contains("block_table")) {
            cfg.table = load_json<BlockTable>(resolve(base, j.at("block_table").get<std::string>()));
        }

        std::string hw_path = j.contains("hardware") ? resolve(base, j.at("hardware").get<std::string>())
                                                     : default_profile_path("a100.json");
        if (const char* env = std::getenv("PREFIXPACK_HW_PROFILE"); env != nullptr && *env != '\0') {
            hw_path = env;
        }
        cfg.hardware = load_hardware(hw_path);
        cfg.registers = j.contains("registers")
                            ? load_json<RegisterUsageTable>(resolve(base, j.at("registers").get<std::string>()))
                            : synthetic_register_table(cfg.workload.head_dim);

        for (const auto& s : j.at("strategies")) cfg.strategies.push_back(parse_strategy(s.get<std::string>()));
        cfg.seed = j.value("seed", std::uint64_t{0});
        cfg.verify = j.value("verify", false);
        cfg.tolerance = j.value("tolerance", cfg.tolerance);
        if (j.contains("outputs")) {
            const Json& o = j.at("outputs");
            if (o.contains("report")) cfg.report_path = resolve(base, o.at("report").get<std::string>());
            if (o.contains("timeline_dir")) cfg.timeline_dir = resolve(base, o.at("timeline_dir").get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParse, path + ": " + e.what());
    }
    PREFIXPACK_CHECK(!cfg.strategies.empty(), ErrorCode::kInvalidArgument, "scenario lists no strategies");
    return cfg;
}

TileContext TileContext::build(const HardwareModel& hw, const RegisterUsageTable& regs, const WorkloadSpec& spec) {
    TileContext ctx;
    ctx.feasible = solve_feasible(hw, regs, TileDims::from(spec));
    PREFIXPACK_CHECK(!ctx.feasible.empty(), ErrorCode::kEmptyFeasibleSet,
                     "no tile configuration satisfies the hardware constraints");
    ctx.selector = TileSelector::calibrate(ctx.feasible, hw, spec);
    return ctx;
}

TileConfig TileContext::fixed_config() const {
    const TileConfig* cfg = feasible.find(kFixedTileM, kFixedTileN);
    PREFIXPACK_CHECK(cfg != nullptr, ErrorCode::kNoFeasibleConfig,
                     "fixed tile (64, 128) is infeasible on this hardware");
    return *cfg;
}

StrategyPlan plan_strategy(Strategy s, const BlockTable& table, const TileContext& tiles) {
    StrategyPlan plan;
    switch (s) {
        case Strategy::kQueryCentric:
            plan.partition = baseline_query_centric(table);
            plan.tasks = make_tasks(plan.partition, tiles.fixed_config());
            assign_streams(plan.tasks);
            return plan;
        case Strategy::kPatFixedTile:
            plan.partition = split_oversized_packs(heuristic_partition(table), kFixedTileM);
            plan.tasks = split_long_kv(make_tasks(plan.partition, tiles.fixed_config()), table.block_size);
            assign_streams(plan.tasks);
            return plan;
        case Strategy::kNaive:
            plan.partition = split_oversized_packs(naive_partition(table), tiles.selector.m_max());
            break;
        case Strategy::kPat:
        case Strategy::kPatSerialStreams:
        case Strategy::kPatNoSplit:
            plan.partition = split_oversized_packs(heuristic_partition(table), tiles.selector.m_max());
            break;
    }
    plan.tasks = make_tasks(plan.partition, tiles.selector);
    if (s != Strategy::kPatNoSplit) plan.tasks = split_long_kv(plan.tasks, table.block_size);
    assign_streams(plan.tasks);
    plan.serial_streams = s == Strategy::kPatSerialStreams;
    return plan;
}

std::vector<AttentionUnit> units_of(const std::vector<CtaTask>& tasks) {
    std::vector<AttentionUnit> units;
    units.reserve(tasks.size());
    for (const auto& t : tasks) units.push_back({t.pack->query_ids, t.pack->block_ids, t.token_begin, t.kv_len});
    return units;
}

bool ScenarioResult::all_verified() const {
    for (const auto& r : results) {
        if (r.verified && !*r.verified) return false;
    }
    return true;
}

ScenarioResult run_scenario(const ScenarioConfig& config, const TileContext& tiles) {
    config.workload.validate();
    const BlockTable table = config.table ? *config.table : generate_workload(config.workload, config.seed);
    table.validate();

    ScenarioResult result;
    result.fingerprint = fingerprint(table);
    result.num_queries = table.num_queries();
    result.distinct_blocks = distinct_block_count(table);
    result.theoretical_min_kv_bytes = theoretical_min_kv_bytes(table, config.workload);
    result.query_centric_kv_bytes = account_traffic(baseline_query_centric(table), config.workload).kv_bytes;

    const AttentionShape shape = AttentionShape::from(config.workload);
    std::optional<KvStore> store;
    Matrix<double> queries, reference;
    if (config.verify) {
        store.emplace(table, shape, config.seed);
        queries = random_queries(table.num_queries(), shape, config.seed);
        reference = reference_attention(table, *store, queries, shape);
    }

    for (Strategy s : config.strategies) {
        StrategyPlan plan = plan_strategy(s, table, tiles);
        StrategyResult r;
        r.strategy = s;
        r.pack_count = plan.partition.packs.size();
        r.traffic = account_task_traffic(plan.tasks, config.workload);
        r.sim = simulate(plan.tasks, config.hardware, config.workload, SimOptions{plan.serial_streams});
        if (config.verify) {
            const Matrix<double> out = run_packed_attention(table, units_of(plan.tasks), *store, queries, shape);
            r.max_rel_error = max_relative_error(out, reference, shape);
            r.verified = r.max_rel_error <= config.tolerance;
        }
        r.tasks = std::move(plan.tasks);
        result.results.push_back(std::move(r));
    }
    return result;
}

ScenarioResult run_scenario(const ScenarioConfig& config) {
    return run_scenario(config, TileContext::build(config.hardware, config.registers, config.workload));
}

Json scenario_report(const ScenarioConfig& config, const ScenarioResult& result) {
    Json rows = Json::array();
    for (const auto& r : result.results) {
        Json row{{"strategy", strategy_name(r.strategy)},
                 {"kv_bytes", r.traffic.kv_bytes},
                 {"intermediate_bytes", r.traffic.intermediate_bytes},
                 {"makespan_ns", r.sim.makespan},
                 {"mem_waste", r.sim.mem_waste},
                 {"exec_bubble", r.sim.exec_bubble},
                 {"pack_count", r.pack_count},
                 {"task_count", r.tasks.size()}};
        if (r.verified) {
            row["verified"] = *r.verified;
            row["max_rel_error"] = r.max_rel_error;
        } else {
            row["verified"] = nullptr;
        }
        rows.push_back(std::move(row));
    }
    return Json{{"workload", config.workload},
                {"hardware", config.hardware.name},
                {"seed", config.seed},
                {"fingerprint", result.fingerprint},
                {"queries", result.num_queries},
                {"distinct_blocks", result.distinct_blocks},
                {"theoretical_min_kv_bytes", result.theoretical_min_kv_bytes},
                {"query_centric_kv_bytes", result.query_centric_kv_bytes},
                {"rows", std::move(rows)}};
}

void write_scenario_outputs(const ScenarioConfig& config, const ScenarioResult& result) {
    if (!config.timeline_dir.empty()) {
        for (const auto& r : result.results) {
            const fs::path csv = fs::path(config.timeline_dir) / (std::string(strategy_name(r.strategy)) + "_tasks.csv");
            write_file_atomic(csv.string(), sim_report_csv(r.sim, r.tasks));
        }
    }
    if (config.report_path.empty()) return;
    write_file_atomic(config.report_path, scenario_report(config, result).dump(2) + "\n");

    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    const Json meta{{"report", fs::path(config.report_path).filename().string()}, {"generated_at", stamp}};
    write_file_atomic(config.report_path + ".meta.json", meta.dump(2) + "\n");
}

SweepAxis parse_sweep_axis(std::string_view name) {
    for (SweepAxis a : {SweepAxis::kBatch, SweepAxis::kPrefixLen, SweepAxis::kKvLen, SweepAxis::kFanout}) {
        if (sweep_axis_name(a) == name) return a;
    }
    throw Error(ErrorCode::kInvalidArgument, "unknown sweep axis '" + std::string(name) + "'");
}

std::string_view sweep_axis_name(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::kBatch: return "batch";
        case SweepAxis::kPrefixLen: return "prefix_len";
        case SweepAxis::kKvLen: return "kv_len";
        case SweepAxis::kFanout: return "fanout";
    }
    return "unknown";
}

WorkloadSpec apply_sweep_point(const WorkloadSpec& base, SweepAxis axis, std::int64_t value) {
    WorkloadSpec spec = base;
    PREFIXPACK_CHECK(!spec.level_counts.empty(), ErrorCode::kInvalidSpec, "sweep base has no levels");
    const std::size_t last = spec.level_counts.size() - 1;
    switch (axis) {
        case SweepAxis::kBatch:
            spec.level_counts[last] = static_cast<int>(value);
            break;
        case SweepAxis::kPrefixLen:
            spec.level_lengths[0] = value;
            break;
        case SweepAxis::kKvLen:
            spec.level_lengths[last] = value;
            break;
        case SweepAxis::kFanout:
            spec.level_counts[last] = static_cast<int>(value) * (last > 0 ? spec.level_counts[last - 1] : 1);
            break;
    }
    spec.validate();
    return spec;
}

std::string sweep_csv_header() {
    return "axis,value,strategy,kv_bytes,intermediate_bytes,total_bytes,theoretical_min_kv_bytes,"
           "query_centric_kv_bytes,redundancy_ratio,makespan_ns,mem_waste,exec_bubble,pack_count,verified\n";
}

SweepResult run_sweep(const ScenarioConfig& config, SweepAxis axis, const std::vector<std::int64_t>& values) {
    SweepResult out{sweep_csv_header(), true};
    if (values.empty()) return out;
    const TileContext tiles = TileContext::build(config.hardware, config.registers, config.workload);

    // Points are independent; each produces its own text block and assembly stays ordered.
    std::vector<std::future<std::pair<std::string, bool>>> points;
    for (std::int64_t value : values) {
        points.push_back(std::async(std::launch::async, [&config, &tiles, axis, value] {
            ScenarioConfig point = config;
            point.workload = apply_sweep_point(config.workload, axis, value);
            point.table.reset();
            const ScenarioResult res = run_scenario(point, tiles);
            const double ratio = static_cast<double>(res.query_centric_kv_bytes) /
                                 static_cast<double>(res.theoretical_min_kv_bytes);
            std::ostringstream os;
            os.precision(12);
            for (const auto& r : res.results) {
                os << sweep_axis_name(axis) << ',' << value << ',' << strategy_name(r.strategy) << ','
                   << r.traffic.kv_bytes << ',' << r.traffic.intermediate_bytes << ',' << r.traffic.total_bytes
                   << ',' << res.theoretical_min_kv_bytes << ',' << res.query_centric_kv_bytes << ',' << ratio
                   << ',' << r.sim.makespan << ',' << r.sim.mem_waste << ',' << r.sim.exec_bubble << ','
                   << r.pack_count << ',' << (r.verified ? (*r.verified ? "true" : "false") : "") << '\n';
            }
            return std::make_pair(os.str(), res.all_verified());
        }));
    }
    for (auto& p : points) {
        auto [rows, verified] = p.get();
        out.csv += rows;
        out.all_verified = out.all_verified && verified;
    }
    return out;
}

}  // namespace prefixpack
