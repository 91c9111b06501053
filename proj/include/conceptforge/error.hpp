#pragma once

#include <stdexcept>
#include <string>

namespace conceptforge {

// Failure classes. The CLI maps each one onto its own exit code.

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BackendError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnknownTokenError : public BackendError {
public:
    explicit UnknownTokenError(const std::string& word)
        : BackendError("unknown token '" + word + "' (not in stub vocabulary, hash fallback disabled)"),
          word_(word) {}
    const std::string& word() const noexcept { return word_; }

private:
    std::string word_;
};

class DimensionError : public BackendError {
public:
    using BackendError::BackendError;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class StoreError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace conceptforge
