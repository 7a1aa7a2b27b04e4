#pragma once

#include <stdexcept>
#include <string>

namespace fedcap {

/// Invalid configuration or mismatched dimensions.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values produced by training or arithmetic.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Server/client exchange violated (e.g. blacklisted client, missing probe).
class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fedcap
