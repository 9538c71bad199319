#pragma once

#include <stdexcept>
#include <string>

namespace dmfteb {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class QuadratureError : public NumericError {
public:
    using NumericError::NumericError;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dmfteb
