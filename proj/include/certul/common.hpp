#pragma once

#include <stdexcept>
#include <string>

namespace certul {

inline constexpr const char* kToolVersion = "0.1.0";

// Bad inputs, malformed files, broken preconditions. CLI exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// The mechanism cannot certify the request (non-PD estimated Hessian,
// sample-size precondition of the bound, failed factorization). CLI exit code 2.
class CertificationError : public std::runtime_error {
public:
    explicit CertificationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace certul
