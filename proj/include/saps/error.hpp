#pragma once

#include <stdexcept>
#include <string>

namespace saps {

/// Root of every error the toolkit throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Violated precondition: bad dimensions, out-of-range arguments.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// An iterative routine failed or a problem was numerically degenerate.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// A file or document could not be parsed or failed validation.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Two components cannot be connected (latent or action dimensions disagree).
class IncompatibleError : public Error {
public:
    using Error::Error;
};

namespace detail {
[[noreturn]] inline void fail_precondition(const std::string& what) { throw PreconditionError(what); }

inline void require(bool cond, const std::string& what) {
    if (!cond) {
        fail_precondition(what);
    }
}
} // namespace detail

} // namespace saps
