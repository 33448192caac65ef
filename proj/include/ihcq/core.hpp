// Copyright 2026 The ihcq Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef IHCQ_CORE_HPP
#define IHCQ_CORE_HPP

/**
 * @file core.hpp
 *
 * @brief Shared vocabulary: errors, resolution, cell classes and points.
 */

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ihcq {

/**
 * Broad failure category, used by the CLI to emit machine-readable error records.
 */
enum class ErrorKind {
    InvalidArgument,
    Io,
    Format,
    Degenerate,
    Infeasible,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid_argument";
        case ErrorKind::Io: return "io";
        case ErrorKind::Format: return "format";
        case ErrorKind::Degenerate: return "degenerate";
        case ErrorKind::Infeasible: return "infeasible";
    }
    return "unknown";
}

/**
 * Single exception type thrown by the library.
 * `details()` carries itemized problems, e.g. every invalid key of a config file.
 */
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, std::vector<std::string> details = {})
        : std::runtime_error(message), kind_(kind), details_(std::move(details)) {}

    ErrorKind kind() const { return kind_; }
    const std::vector<std::string>& details() const { return details_; }

private:
    ErrorKind kind_;
    std::vector<std::string> details_;
};

/**
 * Scan resolution in microns per pixel.
 */
class Mpp {
public:
    explicit Mpp(double value) : value_(value) {
        if (!(value > 0.0)) {
            throw Error(ErrorKind::InvalidArgument, "MPP must be positive, got " + std::to_string(value));
        }
    }
    double value() const { return value_; }
    friend bool operator==(const Mpp&, const Mpp&) = default;

private:
    double value_;
};

/// Resolution that every patch and coordinate is normalized to.
inline constexpr double kReferenceMpp = 0.19;

inline Mpp reference_mpp() { return Mpp(kReferenceMpp); }

/**
 * Tumor cell class. The numeric values are the label-map codes; 0 is background.
 */
enum class CellClass : std::uint8_t {
    TcNeg = 1,
    TcPos = 2,
};

inline constexpr CellClass kCellClasses[] = {CellClass::TcNeg, CellClass::TcPos};

inline std::size_t class_index(CellClass c) { return c == CellClass::TcNeg ? 0 : 1; }

inline std::string_view to_string(CellClass c) { return c == CellClass::TcNeg ? "TC_NEG" : "TC_POS"; }

inline CellClass parse_cell_class(std::string_view s) {
    if (s == "TC_NEG") {
        return CellClass::TcNeg;
    }
    if (s == "TC_POS") {
        return CellClass::TcPos;
    }
    throw Error(ErrorKind::Format, "unknown cell class '" + std::string(s) + "'");
}

/**
 * Point annotation of a single tumor cell, in reference-MPP pixels with origin top-left.
 */
struct CellAnnotation {
    int x = 0;
    int y = 0;
    CellClass cls = CellClass::TcNeg;

    friend bool operator==(const CellAnnotation&, const CellAnnotation&) = default;
};

/**
 * Classified cell detection with a confidence score in [0, 1].
 */
struct Detection {
    int x = 0;
    int y = 0;
    CellClass cls = CellClass::TcNeg;
    double confidence = 0.0;

    friend bool operator==(const Detection&, const Detection&) = default;
};

} // namespace ihcq

#endif
