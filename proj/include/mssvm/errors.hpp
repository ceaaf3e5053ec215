#pragma once

#include <stdexcept>
#include <string>

namespace mssvm {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "error"; }
};

#define MSSVM_DEFINE_ERROR(Name, tag)                          \
  class Name : public Error {                                  \
   public:                                                     \
    explicit Name(const std::string& what) : Error(what) {}    \
    const char* kind() const noexcept override { return tag; } \
  };

MSSVM_DEFINE_ERROR(InvalidGraph, "invalid_graph")
MSSVM_DEFINE_ERROR(InvalidAssignment, "invalid_assignment")
MSSVM_DEFINE_ERROR(DimensionError, "dimension")
MSSVM_DEFINE_ERROR(InferenceRefused, "inference_refused")
MSSVM_DEFINE_ERROR(ConfigError, "config")
MSSVM_DEFINE_ERROR(IoError, "io")
MSSVM_DEFINE_ERROR(NumericalError, "numerical")

#undef MSSVM_DEFINE_ERROR

}  // namespace mssvm
