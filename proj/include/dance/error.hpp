#pragma once

#include <stdexcept>
#include <string>

namespace dance {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DANCE_DEFINE_ERROR(Name)              \
  class Name : public Error {                 \
   public:                                    \
    using Error::Error;                       \
  }

DANCE_DEFINE_ERROR(InvalidInputError);
DANCE_DEFINE_ERROR(DomainError);
DANCE_DEFINE_ERROR(FitError);
DANCE_DEFINE_ERROR(StateError);
DANCE_DEFINE_ERROR(ShapeError);
DANCE_DEFINE_ERROR(ConfigError);
DANCE_DEFINE_ERROR(IoError);
DANCE_DEFINE_ERROR(NumericError);
DANCE_DEFINE_ERROR(DegenerateBatchError);

#undef DANCE_DEFINE_ERROR

}  // namespace dance
