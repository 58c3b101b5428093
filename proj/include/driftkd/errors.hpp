#pragma once

#include <stdexcept>
#include <string>

namespace driftkd {

/// Malformed or inconsistent input data (batch files, CSV bundles).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Precondition violations on numeric routines, factorization or convergence failures.
class NumericsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss or parameters.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace driftkd
