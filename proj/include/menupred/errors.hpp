#pragma once

#include <stdexcept>
#include <string>

namespace menupred {

// Error taxonomy shared by all modules. Everything derives from Error so
// callers (the CLI in particular) can catch one type and map it to a
// nonzero exit code.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct DomainError : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

struct ValidationError : Error {
    using Error::Error;
};

struct InsufficientDataError : Error {
    using Error::Error;
};

struct SplitError : Error {
    using Error::Error;
};

struct DegenerateSequenceError : Error {
    using Error::Error;
};

struct UndefinedR2Error : Error {
    using Error::Error;
};

struct CausalityError : Error {
    using Error::Error;
};

struct CheckpointError : Error {
    using Error::Error;
};

struct ConsistencyError : Error {
    using Error::Error;
};

struct TrainingError : Error {
    using Error::Error;
};

}  // namespace menupred
