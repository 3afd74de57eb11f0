#pragma once

#include <stdexcept>
#include <string>

namespace xrgen {

// I/O and file-format problems: missing files, bad magic, truncation, parse errors.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite losses and other numeric breakdowns detected at runtime.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace xrgen
