#pragma once

#include <stdexcept>
#include <string>

namespace dsagen {

/// Broad failure categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
    Parse,
    Config,
    Numerical,
    InsufficientData,
    Invalid,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Process exit status for a failure category.
inline int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Parse:
        case ErrorKind::Config:
        case ErrorKind::Invalid: return 2;
        case ErrorKind::Numerical: return 3;
        case ErrorKind::InsufficientData: return 4;
    }
    return 1;
}

inline Error parse_error(const std::string& what) { return Error(ErrorKind::Parse, what); }
inline Error config_error(const std::string& what) { return Error(ErrorKind::Config, what); }
inline Error numerical_error(const std::string& what) { return Error(ErrorKind::Numerical, what); }
inline Error data_error(const std::string& what) { return Error(ErrorKind::InsufficientData, what); }
inline Error invalid_error(const std::string& what) { return Error(ErrorKind::Invalid, what); }

}  // namespace dsagen
