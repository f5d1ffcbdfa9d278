#pragma once

#include <stdexcept>
#include <string>

namespace latfeti {

//! Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define LATFETI_DEFINE_ERROR(Name)          \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  };

LATFETI_DEFINE_ERROR(NotPositiveDefinite)
LATFETI_DEFINE_ERROR(Breakdown)
LATFETI_DEFINE_ERROR(UnknownPattern)
LATFETI_DEFINE_ERROR(DegenerateJacobian)
LATFETI_DEFINE_ERROR(DimensionMismatch)
LATFETI_DEFINE_ERROR(FaceNotOnBoundary)
LATFETI_DEFINE_ERROR(EmptyPrimalSet)
LATFETI_DEFINE_ERROR(RankDeficient)
LATFETI_DEFINE_ERROR(SingularBasisChange)
LATFETI_DEFINE_ERROR(SingularGram)
LATFETI_DEFINE_ERROR(ParseError)
LATFETI_DEFINE_ERROR(IoError)

#undef LATFETI_DEFINE_ERROR

//! Configuration error tagged with the offending field path (e.g. "bcs.dirichlet[0].face").
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace latfeti
