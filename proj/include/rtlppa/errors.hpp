#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rtlppa {

// Broad failure classes, used by the CLI to pick exit codes:
// config -> 1, data -> 2, numeric -> 3.
enum class ErrorClass { config, data, numeric };

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, std::string msg)
        : std::runtime_error(std::move(msg)), cls_(cls) {}
    ErrorClass error_class() const noexcept { return cls_; }

private:
    ErrorClass cls_;
};

struct ConfigError : Error {
    explicit ConfigError(std::string msg) : Error(ErrorClass::config, std::move(msg)) {}
};

struct LexError : Error {
    LexError(std::string msg, std::size_t offset)
        : Error(ErrorClass::data, msg + " (byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
    std::size_t byte_offset;
};

struct EmptyInput : Error {
    explicit EmptyInput(std::string msg = "empty input") : Error(ErrorClass::data, std::move(msg)) {}
};

struct ShapeError : Error {
    explicit ShapeError(std::string msg) : Error(ErrorClass::data, std::move(msg)) {}
};

struct DomainError : Error {
    explicit DomainError(std::string msg) : Error(ErrorClass::data, std::move(msg)) {}
};

struct InsufficientData : Error {
    explicit InsufficientData(std::string msg) : Error(ErrorClass::data, std::move(msg)) {}
};

struct DegenerateVariance : Error {
    explicit DegenerateVariance(std::string msg) : Error(ErrorClass::data, std::move(msg)) {}
};

struct EmptyDataset : Error {
    explicit EmptyDataset(std::string msg) : Error(ErrorClass::data, std::move(msg)) {}
};

struct NumericError : Error {
    explicit NumericError(std::string msg) : Error(ErrorClass::numeric, std::move(msg)) {}
};

struct TrainingDiverged : Error {
    TrainingDiverged(std::string msg, std::size_t step)
        : Error(ErrorClass::numeric, msg + " (step " + std::to_string(step) + ")"), step_index(step) {}
    std::size_t step_index;
};

struct BackwardBeforeForward : Error {
    explicit BackwardBeforeForward(std::string msg = "backward called without a recorded forward pass")
        : Error(ErrorClass::numeric, std::move(msg)) {}
};

struct RetryableClientError : Error {
    explicit RetryableClientError(std::string msg) : Error(ErrorClass::data, std::move(msg)) {}
};

}  // namespace rtlppa
