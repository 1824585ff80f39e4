#pragma once

#include <stdexcept>
#include <string>

namespace tabfids {

// Each error category maps to a process exit code used by the CLI.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 1,
  kData = 2,
  kRuntime = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ExitCode::kConfig, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::kData, what) {}
};

class RuntimeError : public Error {
 public:
  explicit RuntimeError(const std::string& what)
      : Error(ExitCode::kRuntime, what) {}
};

// Shape or argument contract violated by a caller of the library.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace tabfids
