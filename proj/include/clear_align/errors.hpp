#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace clear_align {

// Every error carries the CLI exit code it maps to: 1 for problems the user
// can fix (bad shapes, configs, files), 2 for numerical trouble at runtime.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what, int exit_code = 1)
        : std::runtime_error(what), exit_code_(exit_code) {}
    int exit_code() const noexcept { return exit_code_; }

private:
    int exit_code_;
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error("shape error: " + what, 1) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("configuration error: " + what, 1) {}
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error("format error: " + what, 1) {}
};

class CorruptionError : public Error {
public:
    CorruptionError(const std::string& what, std::uint64_t offset)
        : Error("corruption error at byte " + std::to_string(offset) + ": " + what, 1),
          offset_(offset) {}
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

class PathError : public Error {
public:
    explicit PathError(const std::string& what) : Error("path error: " + what, 1) {}
};

class EvaluationError : public Error {
public:
    EvaluationError(const std::string& what, std::size_t coordinate)
        : Error("evaluation error at coordinate " + std::to_string(coordinate) + ": " + what, 2),
          coordinate_(coordinate) {}
    std::size_t coordinate() const noexcept { return coordinate_; }

private:
    std::size_t coordinate_;
};

class DivergenceError : public Error {
public:
    DivergenceError(std::size_t iteration, double l_sae, double l_con)
        : Error("divergence at iteration " + std::to_string(iteration) +
                    " (L_SAE=" + std::to_string(l_sae) + ", L_con=" + std::to_string(l_con) + ")",
                2),
          iteration_(iteration), l_sae_(l_sae), l_con_(l_con) {}
    std::size_t iteration() const noexcept { return iteration_; }
    double l_sae() const noexcept { return l_sae_; }
    double l_con() const noexcept { return l_con_; }

private:
    std::size_t iteration_;
    double l_sae_;
    double l_con_;
};

} // namespace clear_align
