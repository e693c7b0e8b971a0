#pragma once

#include <complex>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace gss {

using cfloat = std::complex<float>;
using cdouble = std::complex<double>;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched or inconsistent tensor/matrix dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed manifest / RTTM / spec content. Message carries the line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// File system or audio I/O failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Matrix not positive definite even after regularization.
class SingularMatrixError : public Error {
 public:
  explicit SingularMatrixError(const std::string& msg, long frequency = -1)
      : Error(msg), frequency_(frequency) {}
  long frequency() const { return frequency_; }

 private:
  long frequency_ = -1;
};

/// Signal shorter than one analysis frame.
class InputTooShortError : public Error {
 public:
  using Error::Error;
};

/// Target speaker has no active frame in the processing window.
class EmptyTargetError : public Error {
 public:
  using Error::Error;
};

/// Target mask is identically zero; no beamformer statistics available.
class DegenerateStatsError : public Error {
 public:
  using Error::Error;
};

/// Invalid synthetic MixtureSpec contents.
class SpecError : public Error {
 public:
  using Error::Error;
};

inline std::string strformat(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  char buf[1024];
  vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return std::string(buf);
}

namespace log {

enum class Level { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Verbosity comes from the GSS_LOG environment variable
// (error|warn|info|debug), default warn.
inline Level threshold() {
  static Level level = [] {
    const char* env = std::getenv("GSS_LOG");
    if (!env) return Level::kWarn;
    std::string v(env);
    if (v == "error") return Level::kError;
    if (v == "info") return Level::kInfo;
    if (v == "debug") return Level::kDebug;
    return Level::kWarn;
  }();
  return level;
}

inline void emit(Level level, const std::string& msg) {
  if (level > threshold()) return;
  static const char* names[] = {"ERROR", "WARN", "INFO", "DEBUG"};
  fprintf(stderr, "[gss %s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

inline void error(const std::string& msg) { emit(Level::kError, msg); }
inline void warn(const std::string& msg) { emit(Level::kWarn, msg); }
inline void info(const std::string& msg) { emit(Level::kInfo, msg); }
inline void debug(const std::string& msg) { emit(Level::kDebug, msg); }

template <typename... Args>
void error(const char* fmt, Args... args) {
  emit(Level::kError, strformat(fmt, args...));
}
template <typename... Args>
void warn(const char* fmt, Args... args) {
  emit(Level::kWarn, strformat(fmt, args...));
}
template <typename... Args>
void info(const char* fmt, Args... args) {
  emit(Level::kInfo, strformat(fmt, args...));
}
template <typename... Args>
void debug(const char* fmt, Args... args) {
  emit(Level::kDebug, strformat(fmt, args...));
}

}  // namespace log

}  // namespace gss
