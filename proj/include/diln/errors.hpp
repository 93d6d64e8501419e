#pragma once

#include <stdexcept>
#include <string>

namespace diln {

// Error categories map one-to-one onto the CLI's machine-parseable
// failure lines ("error: <category>: <message>").
enum class ErrorCategory {
    parse,     // malformed input file
    validate,  // structurally valid input violating an invariant
    domain,    // numeric argument outside the supported domain
    config,    // bad configuration value
    io,        // file system failure
    mode       // operation unavailable in the current model mode
};

inline const char* to_string(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::parse: return "parse";
        case ErrorCategory::validate: return "validate";
        case ErrorCategory::domain: return "domain";
        case ErrorCategory::config: return "config";
        case ErrorCategory::io: return "io";
        case ErrorCategory::mode: return "mode";
    }
    return "unknown";
}

class Error : public std::runtime_error {
  public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const { return category_; }

  private:
    ErrorCategory category_;
};

inline Error parse_error(const std::string& msg) { return Error(ErrorCategory::parse, msg); }
inline Error validate_error(const std::string& msg) { return Error(ErrorCategory::validate, msg); }
inline Error domain_error(const std::string& msg) { return Error(ErrorCategory::domain, msg); }
inline Error config_error(const std::string& msg) { return Error(ErrorCategory::config, msg); }
inline Error io_error(const std::string& msg) { return Error(ErrorCategory::io, msg); }
inline Error mode_error(const std::string& msg) { return Error(ErrorCategory::mode, msg); }

}  // namespace diln
