#pragma once

#include <stdexcept>
#include <string>

namespace jeffreys {

// Base class for every error raised by the library. Subclasses map one-to-one
// onto failure modes that callers (mostly the CLI) need to tell apart.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The target probability is so close to one that the non-target mass
// 1 - p_k cannot be used as a denominator.
class DegenerateTarget : public Error {
 public:
  using Error::Error;
};

// Input values violate an operation's domain (e.g. cosines outside [-1, 1]).
class DomainError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// A loss or gradient evaluated to NaN/inf during training.
class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class ZeroVector : public Error {
 public:
  using Error::Error;
};

class EmptyScores : public Error {
 public:
  using Error::Error;
};

class MissingEmbedding : public Error {
 public:
  using Error::Error;
};

class EmptyDataset : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UnknownRun : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace jeffreys
