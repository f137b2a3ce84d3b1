#pragma once

#include <stdexcept>
#include <string>

namespace gradmesh {

// Invalid user-supplied configuration (bad dims, unknown strategy, ...).
// Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A caller violated an operation precondition (dimension mismatch,
// negative duration, unequal payload lengths).
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Lookup of a key that was never written. Kept distinct from ProtocolError
// so substrate tests can tell a missing-key bug from a protocol ordering bug.
class KeyNotFound : public std::runtime_error {
public:
    explicit KeyNotFound(const std::string& key)
        : std::runtime_error("key not found: " + key), key_(key) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

// A strategy round went wrong (barrier timeout, announced-but-missing key).
// Carries enough context to name the strategy, round, and worker.
class ProtocolError : public std::runtime_error {
public:
    explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace gradmesh
