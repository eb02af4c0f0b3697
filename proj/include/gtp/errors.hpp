// Copyright (C) 2026 The GTP Engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gtp {

// Operand dimensions do not line up.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Zero-norm vectors, too few tokens, ...
class DegenerateInputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// kept/propagated sets overlap or do not cover the live tokens.
class PartitionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class StrategyError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Missing or misshapen weight tensor.
class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed weight file; carries the byte offset where decoding stopped.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

}  // namespace gtp
