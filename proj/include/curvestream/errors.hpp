#pragma once

#include <stdexcept>
#include <string>

namespace curvestream {

// Two families so callers (the CLI in particular) can map failures to exit codes.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define CURVESTREAM_ERROR(Name, Base)        \
    class Name : public Base {              \
    public:                                 \
        using Base::Base;                   \
    };

CURVESTREAM_ERROR(DimensionMismatch, ValidationError)
CURVESTREAM_ERROR(OutOfRange, ValidationError)
CURVESTREAM_ERROR(TooFewDistinctValues, ValidationError)
CURVESTREAM_ERROR(UnknownGroup, ValidationError)
CURVESTREAM_ERROR(GridMismatch, ValidationError)
CURVESTREAM_ERROR(NotNormalized, ValidationError)
CURVESTREAM_ERROR(SingleCategory, ValidationError)
CURVESTREAM_ERROR(DimensionCapExceeded, ValidationError)
CURVESTREAM_ERROR(RankDeficient, NumericalError)
CURVESTREAM_ERROR(NonPositiveDefinite, NumericalError)
CURVESTREAM_ERROR(Singular, NumericalError)
CURVESTREAM_ERROR(NonFiniteUpdate, NumericalError)

#undef CURVESTREAM_ERROR

} // namespace curvestream
