#ifndef SENA_ERROR_HPP
#define SENA_ERROR_HPP

#include <stdexcept>
#include <string>

/**
 * @file error.hpp
 * @brief Exception type shared by all modules.
 */

namespace sena {

/**
 * Category of a failure. The CLI maps each category onto an exit code.
 */
enum class ErrorKind {
    dimension,
    domain,
    contract,
    parse,
    conflict,
    selection_empty,
    construction,
    validation,
    lookup,
    diverged,
    version,
    checksum,
    insufficient_sample,
    undefined_correlation,
    io
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::dimension: return "dimension";
        case ErrorKind::domain: return "domain";
        case ErrorKind::contract: return "contract";
        case ErrorKind::parse: return "parse";
        case ErrorKind::conflict: return "conflict";
        case ErrorKind::selection_empty: return "selection-empty";
        case ErrorKind::construction: return "construction";
        case ErrorKind::validation: return "validation";
        case ErrorKind::lookup: return "lookup";
        case ErrorKind::diverged: return "diverged";
        case ErrorKind::version: return "version";
        case ErrorKind::checksum: return "checksum";
        case ErrorKind::insufficient_sample: return "insufficient-sample";
        case ErrorKind::undefined_correlation: return "undefined-correlation";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

}

#endif
