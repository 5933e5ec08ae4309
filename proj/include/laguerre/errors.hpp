#pragma once

#include <stdexcept>
#include <string>

namespace laguerre {

// Base class for every error raised by the library. `kind()` is a stable
// machine-readable identifier used in CLI error records.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define LAGUERRE_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(#Name, what) {}     \
  };

LAGUERRE_DEFINE_ERROR(MalformedPolytope)
LAGUERRE_DEFINE_ERROR(EmptyCell)
LAGUERRE_DEFINE_ERROR(CoincidentSeeds)
LAGUERRE_DEFINE_ERROR(DegenerateDomain)
LAGUERRE_DEFINE_ERROR(CellExceedsMinimalImage)
LAGUERRE_DEFINE_ERROR(InvalidTargets)
LAGUERRE_DEFINE_ERROR(LineSearchFailure)
LAGUERRE_DEFINE_ERROR(EnergyIncrease)
LAGUERRE_DEFINE_ERROR(InfeasibleSpec)
LAGUERRE_DEFINE_ERROR(IdMismatch)
LAGUERRE_DEFINE_ERROR(ConfigError)
LAGUERRE_DEFINE_ERROR(IoError)

#undef LAGUERRE_DEFINE_ERROR

}  // namespace laguerre
