#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace stylepipe {

#ifdef STYLEPIPE_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

using Shape = std::vector<int64_t>;

// Error taxonomy; the CLI maps these onto exit codes.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};
struct DimensionError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct IndexError : Error {
    using Error::Error;
};
struct ContractError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};
struct NormalizationError : Error {
    using Error::Error;
};
struct TrajectoryError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

inline int64_t numel_of(const Shape& shape) {
    int64_t n = 1;
    for (int64_t e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape);

}  // namespace stylepipe
