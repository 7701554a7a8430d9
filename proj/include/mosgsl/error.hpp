#pragma once

#include <stdexcept>
#include <string>

namespace mosgsl {

// Caller broke a documented precondition (shape mismatch, empty input, ...).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// A configuration value is out of range or inconsistent.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed dataset or structure file; message carries file and line.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mosgsl
