#ifndef SPLITKIT_ERROR_HPP
#define SPLITKIT_ERROR_HPP

#include <stdexcept>
#include <string>

namespace splitkit {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible tensor shapes, bad layer wiring, out-of-range indices.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Model / dataset / image file problems (missing, truncated, checksum).
struct LoadError : Error {
    explicit LoadError(const std::string& msg) : Error(msg) {}
};

// Invalid StabConfig or flag combinations.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// A network cannot be converted to split form (unsupported layer, ...).
struct ConversionError : Error {
    explicit ConversionError(const std::string& msg) : Error(msg) {}
};

// Non-finite activations with stabilization disabled.
struct OverflowError : Error {
    explicit OverflowError(const std::string& msg) : Error(msg) {}
};

// Metric preconditions violated (zero attribution mass, constant map, ...).
struct MetricError : Error {
    explicit MetricError(const std::string& msg) : Error(msg) {}
};

// Symbolic or structural expansion would exceed a configured bound.
struct CapacityError : Error {
    explicit CapacityError(const std::string& msg) : Error(msg) {}
};

}  // namespace splitkit

#endif
