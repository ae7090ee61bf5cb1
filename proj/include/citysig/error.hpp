#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace citysig {

// Maps to the CLI exit code: config -> 1, data -> 2, internal -> 3.
enum class ErrorKind { config, data, internal };

// Runtime failure carrying a stable machine-readable code such as
// "k_exceeds_points" or "singular_design" next to the human message.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string code, std::string message)
        : std::runtime_error(code + ": " + message), kind_(kind), code_(std::move(code)),
          message_(std::move(message)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& code() const noexcept { return code_; }
    const std::string& message() const noexcept { return message_; }

private:
    ErrorKind kind_;
    std::string code_;
    std::string message_;
};

[[noreturn]] inline void throw_config(std::string code, const std::string& message) {
    throw Error(ErrorKind::config, std::move(code), message);
}

[[noreturn]] inline void throw_data(std::string code, const std::string& message) {
    throw Error(ErrorKind::data, std::move(code), message);
}

[[noreturn]] inline void throw_internal(std::string code, const std::string& message) {
    throw Error(ErrorKind::internal, std::move(code), message);
}

} // namespace citysig
