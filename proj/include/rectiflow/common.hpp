#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rectiflow {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shape mismatch between a vector/matrix and what an operation expects.
struct dimension_error : error {
    std::size_t expected;
    std::size_t actual;
    dimension_error(const std::string& what_arg, std::size_t expected_dim, std::size_t actual_dim)
        : error(what_arg + " (expected " + std::to_string(expected_dim) + ", got " +
                std::to_string(actual_dim) + ")"),
          expected(expected_dim),
          actual(actual_dim) {}
};

/// A stated precondition of an operation does not hold for the given inputs.
struct precondition_error : error {
    using error::error;
};

/// Input data lies outside the domain an operation is defined on.
struct domain_error : error {
    using error::error;
};

/// Malformed serialized input; offset is a byte position when known.
struct parse_error : error {
    std::size_t offset;
    parse_error(const std::string& what_arg, std::size_t at = 0)
        : error(what_arg + (at ? " at offset " + std::to_string(at) : std::string())), offset(at) {}
};

/// Exact integer arithmetic left the representable range.
struct arithmetic_overflow : error {
    using error::error;
};

}  // namespace rectiflow
