#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace whvi {

// Base of every error raised by the library. Callers that only care about
// "something in whvi failed" can catch this one type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes are incompatible. The message names both shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

// A value left the finite reals (NaN or +-Inf).
class NonFiniteError : public Error {
public:
    NonFiniteError(std::string op, const std::string& what)
        : Error(what), op_(std::move(op)) {}

    const std::string& op() const noexcept { return op_; }

private:
    std::string op_;
};

// A dimension argument violates a precondition (e.g. not a power of two).
class DimensionError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// Stored tensors do not match the architecture they are loaded into.
class CheckpointError : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite objective. Carries where it happened
// (1-based epoch and batch) and which term went bad.
class TrainingDiverged : public Error {
public:
    TrainingDiverged(std::size_t epoch, std::size_t batch, std::string term,
                     const std::string& what)
        : Error(what), epoch_(epoch), batch_(batch), term_(std::move(term)) {}

    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t batch() const noexcept { return batch_; }
    const std::string& term() const noexcept { return term_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
    std::string term_;
};

}  // namespace whvi
