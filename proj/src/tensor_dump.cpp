// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefixpack/tensor_dump.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace prefixpack {

namespace {

constexpr char kMagic[8] = {'P', 'P', 'K', 'D', 'U', 'M', 'P', '1'};

template <typename T>
void put(std::ostream& os, T value) {
    static_assert(std::endian::native == std::endian::little, "dump format assumes a little-endian host");
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    PREFIXPACK_CHECK(is.good(), ErrorCode::kParse, "truncated tensor dump");
    return value;
}

}  // namespace

NamedTensor named_tensor(std::string name, const Matrix<double>& m) {
    NamedTensor t;
    t.name = std::move(name);
    t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
    t.data.assign(m.data(), m.data() + m.size());
    return t;
}

void write_tensor_dump(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    PREFIXPACK_CHECK(os.good(), ErrorCode::kIo, "cannot open " + path);
    os.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
        os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(t.dims.size()));
        for (auto d : t.dims) put<std::uint64_t>(os, d);
        for (double x : t.data) put<double>(os, x);
    }
    PREFIXPACK_CHECK(os.good(), ErrorCode::kIo, "failed writing " + path);
}

std::vector<NamedTensor> read_tensor_dump(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    PREFIXPACK_CHECK(is.good(), ErrorCode::kIo, "cannot open " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    PREFIXPACK_CHECK(is.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, ErrorCode::kParse,
                     "not a tensor dump: " + path);
    std::vector<NamedTensor> out(get<std::uint32_t>(is));
    for (auto& t : out) {
        t.name.resize(get<std::uint32_t>(is));
        is.read(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        t.dims.resize(get<std::uint32_t>(is));
        std::uint64_t count = 1;
        for (auto& d : t.dims) {
            d = get<std::uint64_t>(is);
            count *= d;
        }
        t.data.resize(count);
        for (auto& x : t.data) x = get<double>(is);
    }
    return out;
}

}  // namespace prefixpack
