#pragma once

#include <stdexcept>
#include <string>

namespace thermloc {

// Base class for all recoverable failures raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// geometry
struct BehindCamera : Error { using Error::Error; };
struct OutOfRange : Error { using Error::Error; };

// dictionary / marker export
struct DimensionMismatch : Error { using Error::Error; };
struct InfeasibleDictionary : Error { using Error::Error; };
struct NotManufacturable : Error { using Error::Error; };
struct CorrectionBudgetTooLarge : Error { using Error::Error; };

// pose estimation
struct DegenerateConfiguration : Error { using Error::Error; };
struct EmptyCorrespondences : Error { using Error::Error; };
struct NonPositiveSide : Error { using Error::Error; };
struct NoKnownMarkers : Error { using Error::Error; };
struct ConvergenceFailure : Error { using Error::Error; };

// filtering
struct NonMonotonicTimestamp : Error { using Error::Error; };
struct ExcessiveDt : Error { using Error::Error; };
struct SingularInnovationCovariance : Error { using Error::Error; };

// file I/O and configuration
struct MalformedMapFile : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

}  // namespace thermloc
