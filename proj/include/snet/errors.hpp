#pragma once

#include <stdexcept>
#include <string>

namespace snet {

// Base of every error the library throws on bad input or bad state.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes do not satisfy an operation's precondition.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A configuration value or combination of values is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Reading or writing a file failed at the OS level.
class IoError : public Error {
 public:
  using Error::Error;
};

// A file exists but its contents cannot be parsed.
class MalformedFileError : public Error {
 public:
  using Error::Error;
};

class UnsupportedFormatError : public Error {
 public:
  using Error::Error;
};

class CheckpointVersionError : public Error {
 public:
  using Error::Error;
};

class CheckpointConfigMismatch : public Error {
 public:
  using Error::Error;
};

class CheckpointCorruptError : public Error {
 public:
  using Error::Error;
};

class MissingDirectoryError : public Error {
 public:
  using Error::Error;
};

class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

}  // namespace snet
