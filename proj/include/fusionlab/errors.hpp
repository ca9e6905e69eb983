#pragma once

#include <stdexcept>
#include <string>

namespace fusionlab {

// Error taxonomy shared across the library. The CLI maps these onto its
// exit-code contract (usage/data errors -> 2, failed checks -> 1).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension or shape mismatch between operands.
struct ShapeError : Error {
    using Error::Error;
};

// Malformed file contents (corpus CSV, model binary).
struct FormatError : Error {
    using Error::Error;
};

// Invalid configuration value (e.g. hidden dim not divisible by head count).
struct ConfigError : Error {
    using Error::Error;
};

// Bad or insufficient input data.
struct DataError : Error {
    using Error::Error;
};

// A class is missing or too small for a stratified split.
struct StratificationError : DataError {
    using DataError::DataError;
};

// A required modality is absent from the corpus.
struct ModalityError : DataError {
    using DataError::DataError;
};

// Unlabeled pool overlaps evaluation ids.
struct LeakageError : DataError {
    using DataError::DataError;
};

// API misuse: stale forward cache, unfitted model, empty loss.
struct ContractError : Error {
    using Error::Error;
};

// Filesystem failure while reading or writing artifacts.
struct IoError : Error {
    using Error::Error;
};

// An objective evaluated to a non-finite value.
struct EvaluationError : Error {
    using Error::Error;
};

}  // namespace fusionlab
