#pragma once

#include <stdexcept>
#include <string>

namespace brp {

// Base class for all library errors.
class error : public std::runtime_error {
public:
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or dimension mismatch between operands.
class dim_error : public error {
public:
    explicit dim_error(const std::string& msg) : error(msg) {}
};

// Invalid configuration value (negative bandwidth, zero classes, ...).
class config_error : public error {
public:
    explicit config_error(const std::string& msg) : error(msg) {}
};

// File / stream level failures, with a machine-checkable kind.
class io_error : public error {
public:
    enum class kind { open_failed, bad_magic, bad_version, truncated, malformed };

    io_error(kind k, const std::string& msg) : error(msg), kind_(k) {}
    [[nodiscard]] kind which() const noexcept { return kind_; }

private:
    kind kind_;
};

// Numerical failure during training (NaN/Inf loss).
class train_error : public error {
public:
    explicit train_error(const std::string& msg) : error(msg) {}
};

} // namespace brp
