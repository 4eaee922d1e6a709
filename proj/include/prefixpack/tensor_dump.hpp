// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "prefixpack/attention.hpp"

namespace prefixpack {

struct NamedTensor {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::vector<double> data;  // row-major
};

NamedTensor named_tensor(std::string name, const Matrix<double>& m);

/// Little-endian dump: "PPKDUMP1", u32 tensor count, then per tensor u32 name length, name
/// bytes, u32 rank, u64 dims, f64 data.
void write_tensor_dump(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensor_dump(const std::string& path);

}  // namespace prefixpack
