#pragma once

#include <stdexcept>
#include <string>

namespace smalljump {

enum class ExitCode : int { ok = 0, config = 2, hypothesis = 3, numerical = 4 };

class Error : public std::runtime_error {
public:
    Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    [[nodiscard]] ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ExitCode::config, what) {}
};

class HypothesisError : public Error {
public:
    explicit HypothesisError(const std::string& what) : Error(ExitCode::hypothesis, what) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ExitCode::numerical, what) {}
};

}  // namespace smalljump
