#pragma once

#include <stdexcept>
#include <string>

namespace kpnw {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GridError : Error {
    using Error::Error;
};

// Out-of-domain exponents, masses or constants.
struct DomainError : Error {
    using Error::Error;
};

struct FiberError : Error {
    using Error::Error;
};

struct FormatError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace kpnw
