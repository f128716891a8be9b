#pragma once

#include <stdexcept>
#include <string>

namespace odx {

// Every failure raised by the library carries a stable machine-readable code
// so the CLI can emit a single parseable error line.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define ODX_DEFINE_ERROR(Name, Code)                                  \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& message) : Error(Code, message) {} \
  };

ODX_DEFINE_ERROR(ShapeError, "E_SHAPE")
ODX_DEFINE_ERROR(IoError, "E_IO")
ODX_DEFINE_ERROR(FormatError, "E_FORMAT")
ODX_DEFINE_ERROR(GeometryError, "E_GEOMETRY")
ODX_DEFINE_ERROR(SizingError, "E_SIZING")
ODX_DEFINE_ERROR(DomainError, "E_DOMAIN")
ODX_DEFINE_ERROR(EvaluationError, "E_EVALUATION")
ODX_DEFINE_ERROR(DivergenceError, "E_DIVERGENCE")
ODX_DEFINE_ERROR(CompatibilityError, "E_COMPATIBILITY")
ODX_DEFINE_ERROR(ConfigError, "E_CONFIG")

#undef ODX_DEFINE_ERROR

}  // namespace odx
