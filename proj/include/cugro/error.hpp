#pragma once

#include <stdexcept>
#include <string>

namespace cugro {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tensor/layer dimension mismatch.
struct ShapeError : Error {
    using Error::Error;
};

/// Non-finite value where a finite one is required, or divergence.
struct NumericError : Error {
    using Error::Error;
};

/// Malformed dataset or checkpoint file.
struct FormatError : Error {
    using Error::Error;
};

/// Invalid experiment configuration.
struct ConfigError : Error {
    using Error::Error;
};

/// Missing or inaccessible data (paths, datasets, checkpoints).
struct DataError : Error {
    using Error::Error;
};

}  // namespace cugro
