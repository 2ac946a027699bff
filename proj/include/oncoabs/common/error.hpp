#pragma once

#include <stdexcept>
#include <string>

namespace oncoabs {

/// Invalid configuration; `field()` names the offending setting.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument("invalid config field '" + field + "': " + message),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A metric is mathematically undefined for the given labels.
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Assembly produced nothing to classify.
class EmptyInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An input file expected from an earlier pipeline step is absent.
/// `producer()` names the step that creates it.
class MissingArtifactError : public std::runtime_error {
 public:
  MissingArtifactError(const std::string& path, std::string producer)
      : std::runtime_error(path + " not found; run '" + producer + "' first"), producer_(std::move(producer)) {}

  const std::string& producer() const noexcept { return producer_; }

 private:
  std::string producer_;
};

class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace oncoabs
