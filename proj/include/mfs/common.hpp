#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace mfs {

class SimError : public std::runtime_error {
public:
    explicit SimError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad scenario/model configuration (caller's input is at fault).
class ConfigError : public SimError {
public:
    explicit ConfigError(const std::string& msg) : SimError(msg) {}
};

/// Bad argument to a numerical kernel (window mismatch, empty range, ...).
class ArgumentError : public SimError {
public:
    explicit ArgumentError(const std::string& msg) : SimError(msg) {}
};

/// Numerical failure: divergence, singular pivot, non-convergence.
class NumericalError : public SimError {
public:
    explicit NumericalError(const std::string& msg) : SimError(msg) {}
};

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Level parsed once from MULTIFID_LOG (error|warn|info|debug), default warn.
LogLevel log_level();

void log(LogLevel level, const std::string& msg);

inline void log_warn(const std::string& msg) { log(LogLevel::Warn, msg); }
inline void log_info(const std::string& msg) { log(LogLevel::Info, msg); }
inline void log_debug(const std::string& msg) { log(LogLevel::Debug, msg); }

}  // namespace mfs
