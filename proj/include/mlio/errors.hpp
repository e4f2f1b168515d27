#pragma once

#include <stdexcept>
#include <string>

namespace mlio {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MLIO_DEFINE_ERROR(Name)        \
  class Name : public Error {          \
   public:                             \
    using Error::Error;                \
  }

MLIO_DEFINE_ERROR(SingularSystem);
MLIO_DEFINE_ERROR(DimensionMismatch);
MLIO_DEFINE_ERROR(InvalidProbability);
MLIO_DEFINE_ERROR(InternalConsistency);
MLIO_DEFINE_ERROR(TooFewPoints);
MLIO_DEFINE_ERROR(FitFailure);
MLIO_DEFINE_ERROR(NotTrained);
MLIO_DEFINE_ERROR(CapReached);
MLIO_DEFINE_ERROR(EmptyValidation);
MLIO_DEFINE_ERROR(EmptySubset);
MLIO_DEFINE_ERROR(EmptyPool);
MLIO_DEFINE_ERROR(UnknownId);
MLIO_DEFINE_ERROR(OutOfDomain);
MLIO_DEFINE_ERROR(InsufficientInit);
MLIO_DEFINE_ERROR(NoCandidates);
MLIO_DEFINE_ERROR(DegenerateNormalizer);
MLIO_DEFINE_ERROR(InvalidConfig);
MLIO_DEFINE_ERROR(FormatError);

#undef MLIO_DEFINE_ERROR

/// Raised when the black-box evaluator throws or returns a non-finite value.
class BlackBoxFailure : public Error {
 public:
  BlackBoxFailure(const std::string& what, std::string location)
      : Error(what + " at " + location), location_(std::move(location)) {}
  const std::string& location() const noexcept { return location_; }

 private:
  std::string location_;
};

}  // namespace mlio
