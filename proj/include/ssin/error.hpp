#ifndef SSIN_ERROR_HPP
#define SSIN_ERROR_HPP

#include <stdexcept>
#include <string>

namespace ssin {

// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition (shape mismatch, empty set, ...).
class ContractViolation : public Error {
public:
    using Error::Error;
};

// A NaN or Inf appeared; `op` names the operation that produced it.
class NumericFault : public Error {
public:
    explicit NumericFault(const std::string& op)
        : Error("non-finite value produced by " + op), op_(op) {}
    const std::string& op() const noexcept { return op_; }

private:
    std::string op_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IngestError : public Error {
public:
    using Error::Error;
};

class ChecksumError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class VersionError : public Error {
public:
    using Error::Error;
};

#define SSIN_EXPECTS(cond, msg)                                   \
    do {                                                          \
        if (!(cond)) throw ::ssin::ContractViolation(msg);        \
    } while (0)

}  // namespace ssin

#endif  // SSIN_ERROR_HPP
