#pragma once

#include <stdexcept>
#include <string>

namespace flanet {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define FLANET_DEFINE_ERROR(Name)         \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

FLANET_DEFINE_ERROR(ShapeError);
FLANET_DEFINE_ERROR(IndexError);
FLANET_DEFINE_ERROR(EmptyDatasetError);
FLANET_DEFINE_ERROR(SplitError);
FLANET_DEFINE_ERROR(EmptyMaskError);
FLANET_DEFINE_ERROR(NegativeSamplingError);
FLANET_DEFINE_ERROR(ParamError);
FLANET_DEFINE_ERROR(ValidationError);
FLANET_DEFINE_ERROR(EmptyError);
FLANET_DEFINE_ERROR(ConfigError);
FLANET_DEFINE_ERROR(IoError);

#undef FLANET_DEFINE_ERROR

}  // namespace flanet
