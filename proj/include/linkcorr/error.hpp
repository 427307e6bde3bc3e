#pragma once

#include <stdexcept>
#include <string>

namespace linkcorr {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input that violates a documented precondition (schema, shapes, ranges).
class ValidationError : public Error {
public:
    using Error::Error;
};

// An estimator could not be evaluated on a dataset (singular design, separation, ...).
// Bootstrap replicates that raise this are redrawn.
class EstimationError : public Error {
public:
    using Error::Error;
};

} // namespace linkcorr
