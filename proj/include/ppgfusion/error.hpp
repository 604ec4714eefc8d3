#pragma once

#include <stdexcept>
#include <string>

namespace ppgfusion {

// Base of every library error. Catch this to handle any pipeline failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PPGFUSION_DEFINE_ERROR(Name)   \
  class Name : public Error {          \
   public:                             \
    using Error::Error;                \
  }

PPGFUSION_DEFINE_ERROR(InvalidInput);
PPGFUSION_DEFINE_ERROR(InvalidConfig);
PPGFUSION_DEFINE_ERROR(DegenerateSignal);
PPGFUSION_DEFINE_ERROR(InsufficientBeats);
PPGFUSION_DEFINE_ERROR(NoUsableSignal);
PPGFUSION_DEFINE_ERROR(NoPeaksFound);
PPGFUSION_DEFINE_ERROR(NoHrAvailable);
PPGFUSION_DEFINE_ERROR(NoDataError);
PPGFUSION_DEFINE_ERROR(FormatError);

#undef PPGFUSION_DEFINE_ERROR

}  // namespace ppgfusion
