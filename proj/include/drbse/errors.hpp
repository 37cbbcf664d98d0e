#pragma once

#include <stdexcept>
#include <string>

namespace drbse {

// Base class for everything thrown by this library on bad input or bad state.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

struct ParseError : Error {
  explicit ParseError(const std::string& w) : Error("parse", w) {}
};
struct SchemaError : Error {
  explicit SchemaError(const std::string& w) : Error("schema", w) {}
};
struct ValidationError : Error {
  explicit ValidationError(const std::string& w) : Error("validation", w) {}
};
struct UnsupportedFeatureError : Error {
  explicit UnsupportedFeatureError(const std::string& w) : Error("unsupported-feature", w) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error("domain", w) {}
};
struct ObservabilityError : Error {
  explicit ObservabilityError(const std::string& w) : Error("observability", w) {}
};
struct NumericalError : Error {
  explicit NumericalError(const std::string& w) : Error("numerical", w) {}
};
struct ProtocolError : Error {
  explicit ProtocolError(const std::string& w) : Error("protocol", w) {}
};

}  // namespace drbse
