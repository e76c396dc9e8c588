// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace afmi {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor dimensions that do not compose for the requested kernel.
class ShapeError : public Error {
public:
    using Error::Error;
};

enum class FormatErrc {
    bad_magic,
    version_mismatch,
    truncated,
    shape_mismatch,
    missing_last_conv,
    invalid_spec,
    count_mismatch,
};

const char* to_string(FormatErrc code) noexcept;

/// Malformed AFW1 container, IDX file, PGM image or CSV.
class FormatError : public Error {
public:
    FormatError(FormatErrc code, const std::string& what)
        : Error(std::string(to_string(code)) + ": " + what), code_(code) {}

    FormatErrc code() const noexcept { return code_; }

private:
    FormatErrc code_;
};

}  // namespace afmi
