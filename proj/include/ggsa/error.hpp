#pragma once

#include <stdexcept>
#include <string>

namespace ggsa {

enum class ErrorKind {
    Dimension,      // shape or extent mismatch
    UnsupportedOp,  // unknown primitive kind
    Contract,       // precondition violated by the caller
    StaleTape,      // tensor does not belong to the tape it is used with
    Numeric,        // non-finite or degenerate numeric input
    EmptyInput,     // empty collection where at least one element is required
    PoolExhausted,  // not enough unannotated samples to satisfy a request
    MissingSample,  // unknown sample or patient id
    Format,         // corrupt or truncated on-disk data
    DegenerateInput,// input with no usable signal (e.g. constant image)
    Config,         // invalid experiment configuration
    Filesystem,     // I/O failure
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

} // namespace ggsa
