#pragma once

#include <stdexcept>
#include <string>

namespace envkit {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Matrix shape does not match what the operation requires.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Invalid density family, parameters, sampler or job configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Numerical linear algebra failed (e.g. SVD did not converge).
class LinAlgError : public Error {
public:
    using Error::Error;
};

/// Operation called outside its documented domain.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Problem size beyond the supported budget.
class ResourceError : public Error {
public:
    using Error::Error;
};

/// A constructive certificate could not be verified against the density.
class CertificateFailure : public Error {
public:
    using Error::Error;
};

} // namespace envkit
