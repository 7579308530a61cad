#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mbp {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// A nonlinearity was evaluated outside its open domain of validity.
class DomainViolation : public Error {
public:
    DomainViolation(std::size_t node, double value, const std::string& what)
        : Error(what), node_(node), value_(value) {}

    std::size_t node() const { return node_; }
    double value() const { return value_; }

private:
    std::size_t node_;
    double value_;
};

class KrylovError : public Error {
public:
    KrylovError(double estimate, const std::string& what) : Error(what), estimate_(estimate) {}

    double residual_estimate() const { return estimate_; }

private:
    double estimate_;
};

}  // namespace mbp
