#pragma once

#include <stdexcept>
#include <string>

namespace nsnp {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor extents that do not fit an operation. The message names the dimension.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Malformed user input: configs, manifests, scenarios, command-line values.
class ValidationError : public Error {
public:
    using Error::Error;
};

// NaN/Inf divergence or a failed gradient check.
class NumericalError : public Error {
public:
    using Error::Error;
};

// Misuse of the differentiation graph (non-scalar root, double backward, ...).
class GraphError : public Error {
public:
    using Error::Error;
};

}  // namespace nsnp
