#pragma once

#include <stdexcept>
#include <string>

namespace refcheck {

// CLI exit codes.
enum ExitCode {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitBackend = 3,
    kExitIntegrity = 4,
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration or invalid arguments supplied by the caller.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Completion-backend failures. Carries the request digest so interrupted
// runs can be resumed against the cache.
class BackendError : public Error {
public:
    BackendError(const std::string& what, std::string request_digest)
        : Error(what), request_digest(std::move(request_digest)) {}
    std::string request_digest;
};

class BackendUnavailable : public BackendError {
public:
    using BackendError::BackendError;
};

class Timeout : public BackendError {
public:
    using BackendError::BackendError;
};

// Provider returned a payload we cannot decode (or the wrong completion count).
class MalformedResponse : public BackendError {
public:
    using BackendError::BackendError;
};

class SearchBackendUnavailable : public Error {
public:
    using Error::Error;
};

// Run-directory integrity failures.
class IntegrityError : public Error {
public:
    using Error::Error;
};

class ManifestCorrupt : public IntegrityError {
public:
    using IntegrityError::IntegrityError;
};

class DigestMismatch : public IntegrityError {
public:
    using IntegrityError::IntegrityError;
};

class RunIncomplete : public Error {
public:
    using Error::Error;
};

// Metric preconditions.
class DegenerateLabels : public Error {
public:
    using Error::Error;
};

class LengthMismatch : public Error {
public:
    using Error::Error;
};

class NOutOfRange : public Error {
public:
    using Error::Error;
};

class MissingContext : public Error {
public:
    using Error::Error;
};

class EmptyGeneration : public Error {
public:
    using Error::Error;
};

class JudgeUnparseable : public Error {
public:
    using Error::Error;
};

}  // namespace refcheck
