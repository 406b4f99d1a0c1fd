#pragma once

#include <stdexcept>
#include <string>

namespace threshsplit {

// Base class for all library errors so callers can catch one type.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct SchemaError : Error {
    using Error::Error;
};
struct ParseError : Error {
    using Error::Error;
};
struct EmptyDataError : Error {
    using Error::Error;
};
struct ShapeError : Error {
    using Error::Error;
};
struct SizeError : Error {
    using Error::Error;
};
struct EmptyWindowError : Error {
    using Error::Error;
};
struct SingularDesignError : Error {
    using Error::Error;
};
struct NoCandidateError : Error {
    using Error::Error;
};
struct CurveEstimationError : Error {
    using Error::Error;
};
struct InsufficientRegimeError : Error {
    using Error::Error;
};
struct DegenerateFitError : Error {
    using Error::Error;
};
struct EmptyNeighborhoodError : Error {
    using Error::Error;
};
struct SingularMomentError : Error {
    using Error::Error;
};
struct CvInfeasibleError : Error {
    using Error::Error;
};
struct ContourError : Error {
    using Error::Error;
};

}  // namespace threshsplit
