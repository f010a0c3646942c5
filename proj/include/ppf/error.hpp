#pragma once

#include <stdexcept>
#include <string>

namespace ppf {

// Argument outside an operation's domain (empty measure, bad shape, T <= 0, ...).
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class UnsupportedError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised by recombination when the moment matrix has no usable kernel.
class ConditioningError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Every likelihood value underflowed. max_log_likelihood lets the caller
// retry in log domain or report how far off the observation was.
class DegenerateWeightsError : public std::runtime_error {
public:
    DegenerateWeightsError(const std::string& what, double max_log_lik)
        : std::runtime_error(what), max_log_likelihood(max_log_lik) {}
    double max_log_likelihood;
};

}  // namespace ppf
