#pragma once

#include <stdexcept>
#include <string>

namespace pemsbench {

// Error taxonomy shared by the library and the CLI. The CLI maps these to
// stable process exit codes: ConfigError -> 1, DataError -> 2,
// NumericError -> 3.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace pemsbench
