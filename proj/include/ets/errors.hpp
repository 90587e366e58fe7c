#pragma once

#include <stdexcept>
#include <string>

namespace ets {

// Invalid parameters or configuration. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Argument outside the domain of a coefficient function.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// A denominator or normalisation vanished. Maps to exit code 3.
class SingularityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A structural check (clearing, identity, MC consistency) failed. Exit code 4.
class DiagnosticError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input the solver cannot handle, e.g. a price with no known conditional law.
class UnsupportedInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class UnsupportedConfiguration : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class NonMartingalePrice : public UnsupportedInput {
public:
    using UnsupportedInput::UnsupportedInput;
};

class InfeasibleObservation : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

}  // namespace ets
