#pragma once

#include <stdexcept>
#include <string>

namespace singevo {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define SINGEVO_DEFINE_ERROR(Name)              \
    class Name : public Error {                 \
    public:                                     \
        using Error::Error;                     \
    };

// linops
SINGEVO_DEFINE_ERROR(NearSingular)
SINGEVO_DEFINE_ERROR(EigenFailure)
// semigroup
SINGEVO_DEFINE_ERROR(QuadratureDivergence)
SINGEVO_DEFINE_ERROR(DivergentTail)
// family
SINGEVO_DEFINE_ERROR(DomainError)
SINGEVO_DEFINE_ERROR(EmptyGrid)
// evolution
SINGEVO_DEFINE_ERROR(StepperStall)
SINGEVO_DEFINE_ERROR(KernelBlowup)
SINGEVO_DEFINE_ERROR(NoContraction)
// cauchy
SINGEVO_DEFINE_ERROR(DegenerateMesh)
SINGEVO_DEFINE_ERROR(MissingBlock)
// wedge
SINGEVO_DEFINE_ERROR(InterpolationOutOfRange)
// cli
SINGEVO_DEFINE_ERROR(ConfigError)
SINGEVO_DEFINE_ERROR(MissingArtifacts)

#undef SINGEVO_DEFINE_ERROR

}  // namespace singevo
