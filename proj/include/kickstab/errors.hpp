// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace kickstab {

/// Base of every domain error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define KICKSTAB_DEFINE_ERROR(Name)        \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  };

// model_builder
KICKSTAB_DEFINE_ERROR(ConstructionFailed)
KICKSTAB_DEFINE_ERROR(SingularA0)
// spectral_dichotomy
KICKSTAB_DEFINE_ERROR(GapViolation)
KICKSTAB_DEFINE_ERROR(ContourTouchesSpectrum)
KICKSTAB_DEFINE_ERROR(InvalidContour)
KICKSTAB_DEFINE_ERROR(EmptyGap)
// feedback_ops
KICKSTAB_DEFINE_ERROR(SingularGram)
// kick_measure
KICKSTAB_DEFINE_ERROR(RejectionCap)
KICKSTAB_DEFINE_ERROR(DegenerateCovariance)
// density_geometry
KICKSTAB_DEFINE_ERROR(QuadratureUnsupported)
KICKSTAB_DEFINE_ERROR(BracketFailure)
KICKSTAB_DEFINE_ERROR(ProbeOffBoundary)
KICKSTAB_DEFINE_ERROR(NotInterior)
// rds_engine
KICKSTAB_DEFINE_ERROR(NotUnstable)
// experiment
KICKSTAB_DEFINE_ERROR(ParseError)
KICKSTAB_DEFINE_ERROR(ValidationError)
KICKSTAB_DEFINE_ERROR(MissingPrerequisite)
KICKSTAB_DEFINE_ERROR(IoError)

#undef KICKSTAB_DEFINE_ERROR

}  // namespace kickstab
