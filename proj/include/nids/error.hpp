#pragma once

#include <stdexcept>
#include <string>

namespace nids {

enum class ErrorKind {
  Config,      // invalid configuration or unknown option value
  Parse,       // malformed input file
  EmptyData,   // every row was filtered out
  Mapping,     // unknown category or label
  Shape,       // dimension mismatch
  Balancing,   // SMOTE preconditions violated
  Argument,    // out-of-range argument
  DegenerateLeaf,
  Divergence,  // non-finite training loss
  UndefinedAuc,
  Ordering,    // upstream stage artifact missing
  Stage,       // generic stage failure
  Internal,
};

const char* to_string(ErrorKind kind);

/// Process exit code for an error kind: 2 config, 3 data, 4 stage failure.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace nids
