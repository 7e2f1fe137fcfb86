#pragma once

#include <stdexcept>
#include <string>

namespace forge {

// Base class for all pipeline errors. Subclasses map to the failure
// categories the stages distinguish: caller bugs (ContractViolation),
// bad configuration, transport problems against a live backend, and
// corrupt or missing data artifacts.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A precondition the caller was responsible for does not hold.
class ContractViolation : public Error {
public:
    using Error::Error;
};

// Invalid configuration: out-of-range threshold, dimension mismatch,
// unknown config key, domain mismatch between artifacts.
class ConfigError : public Error {
public:
    using Error::Error;
};

// A live backend could not be reached or answered abnormally after the
// configured retries.
class TransportError : public Error {
public:
    using Error::Error;
};

// Corrupt, truncated, or missing data files; schema version mismatches;
// dangling provenance references.
class DataError : public Error {
public:
    using Error::Error;
};

// Not enough records to compute a statistic.
class InsufficientData : public Error {
public:
    using Error::Error;
};

// Lookup of an id that does not exist in the queried store.
class NotFoundError : public Error {
public:
    using Error::Error;
};

} // namespace forge
