#pragma once

#include <stdexcept>
#include <string>

namespace ldmx {

/// Base for every error raised by the library. Callers that only care about
/// "something went wrong" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed shapes, mismatched extents, out-of-range indices.
class ShapeError : public Error {
  public:
    using Error::Error;
};

/// Invalid hyper-parameters or plans (schedule bounds, sampler kind vs timeline, ...).
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// A value left the finite range or an operation hit a singularity.
class NumericError : public Error {
  public:
    using Error::Error;
};

/// Loss became non-finite during optimization.
class TrainingDiverged : public Error {
  public:
    using Error::Error;
};

/// Malformed file contents (checkpoints, corpora, metadata tables).
class FormatError : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

}  // namespace ldmx
