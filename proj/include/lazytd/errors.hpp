#pragma once

#include <stdexcept>
#include <string>

namespace lazytd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define LAZYTD_DEFINE_ERROR(Name)                                   \
    class Name : public Error {                                     \
    public:                                                         \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
    }

LAZYTD_DEFINE_ERROR(DimensionMismatch);
LAZYTD_DEFINE_ERROR(DomainError);
LAZYTD_DEFINE_ERROR(InvalidMrp);
LAZYTD_DEFINE_ERROR(NonErgodic);
LAZYTD_DEFINE_ERROR(FullSupportViolation);
LAZYTD_DEFINE_ERROR(SolveFailure);
LAZYTD_DEFINE_ERROR(OddWidth);
LAZYTD_DEFINE_ERROR(Diverged);
LAZYTD_DEFINE_ERROR(NonFiniteState);
LAZYTD_DEFINE_ERROR(NotOverParametrized);
LAZYTD_DEFINE_ERROR(NotUnderParametrized);
LAZYTD_DEFINE_ERROR(InitNotZero);
LAZYTD_DEFINE_ERROR(RankCollapse);
LAZYTD_DEFINE_ERROR(ConfigError);

#undef LAZYTD_DEFINE_ERROR

}  // namespace lazytd
