// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prefixpack {

enum class ErrorCode {
    kInvalidSpec,
    kInvalidTable,
    kInvalidArgument,
    kInvalidChildIndex,
    kMissingRegisterEntry,
    kEmptyFeasibleSet,
    kNoFeasibleConfig,
    kShapeMismatch,
    kEmptySpan,
    kEmptyList,
    kNonPositiveDenominator,
    kCoverageGap,
    kIo,
    kParse,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + what), m_code(code) {}

    ErrorCode code() const { return m_code; }

private:
    ErrorCode m_code;
};

#define PREFIXPACK_CHECK(cond, code, msg)                 \
    do {                                                  \
        if (!(cond)) {                                    \
            throw ::prefixpack::Error((code), (msg));     \
        }                                                 \
    } while (0)

}  // namespace prefixpack
