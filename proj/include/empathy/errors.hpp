#pragma once

#include <stdexcept>
#include <string>

namespace empathy {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files, bad field values, unknown labels.
class DataError : public Error {
 public:
  using Error::Error;
};

class CacheMissError : public Error {
 public:
  CacheMissError(std::string text, std::string relation)
      : Error("commonsense cache miss for (\"" + text + "\", " + relation + ")"),
        text_(std::move(text)),
        relation_(std::move(relation)) {}
  const std::string& text() const { return text_; }
  const std::string& relation() const { return relation_; }

 private:
  std::string text_;
  std::string relation_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// A train-only path was requested while running in inference mode.
class ModeError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace empathy
