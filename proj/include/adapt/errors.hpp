#pragma once

#include <stdexcept>
#include <string>

namespace adapt {

// Malformed magic, version or header fields in a binary file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Payload shorter than its headers promise.
class CorruptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Well-formed input that violates a semantic rule (labels, configs, manifests).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a precondition (shapes, empty masks).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace adapt
