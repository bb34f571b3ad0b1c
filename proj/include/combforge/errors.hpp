// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef COMBFORGE_ERRORS_HPP
#define COMBFORGE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace combforge {

// Raised when a file cannot be opened, read, or written.
struct IoFailure : std::runtime_error {
    explicit IoFailure(const std::string& what) : std::runtime_error(what) {}
};

// Raised when two vectors that must be element-aligned have different lengths.
struct LengthMismatch : std::runtime_error {
    explicit LengthMismatch(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace combforge

#endif  // COMBFORGE_ERRORS_HPP
