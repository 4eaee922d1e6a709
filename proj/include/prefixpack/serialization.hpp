// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include <json.hpp>

#include "prefixpack/error.hpp"
#include "prefixpack/exec_simulator.hpp"
#include "prefixpack/tile_engine.hpp"
#include "prefixpack/workload.hpp"

namespace prefixpack {

using Json = nlohmann::ordered_json;

void to_json(Json& j, const WorkloadSpec& spec);
void from_json(const Json& j, WorkloadSpec& spec);

void to_json(Json& j, const BlockTable& table);
void from_json(const Json& j, BlockTable& table);

void to_json(Json& j, const Partition& partition);
void from_json(const Json& j, Partition& partition);

void to_json(Json& j, const HardwareModel& hw);
void from_json(const Json& j, HardwareModel& hw);

void to_json(Json& j, const RegisterUsageTable& regs);
void from_json(const Json& j, RegisterUsageTable& regs);

void to_json(Json& j, const FeasibleSet& fs);
void from_json(const Json& j, FeasibleSet& fs);

void to_json(Json& j, const KvTileTree& tree);
void from_json(const Json& j, KvTileTree& tree);

void to_json(Json& j, const SimReport& report);

/// One row per task: task,stream,sm,start,end,m,n,q,kv_len,split_index,split_of.
std::string sim_report_csv(const SimReport& report, const std::vector<CtaTask>& tasks);

/// Parses a JSON file; Error(kIo) when unreadable, Error(kParse) on syntax or schema errors.
Json read_json_file(const std::string& path);

template <typename T>
T load_json(const std::string& path) {
    const Json j = read_json_file(path);
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParse, path + ": " + e.what());
    }
}

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace prefixpack
