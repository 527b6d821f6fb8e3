// Error types shared across the library. Domain/data problems throw
// DomainError (CLI exit code 1); bad configuration throws ConfigError
// (CLI exit code 2).
#pragma once

#include <stdexcept>
#include <string>

namespace lowvol {

class DomainError : public std::runtime_error {
public:
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace lowvol
