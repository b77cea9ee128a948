#pragma once

#include <stdexcept>
#include <string>

namespace jape {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Latitude too close to a pole for the curvature matrix to be invertible.
struct PolarSingularity : Error { using Error::Error; };

/// A quaternion argument was required to be unit norm and was not.
struct NotUnit : Error { using Error::Error; };

/// A matrix argument was required to be a rotation and was not.
struct NotRotation : Error { using Error::Error; };

/// An input contained NaN or infinity.
struct NonFinite : Error { using Error::Error; };

/// Samples arrived out of order or with mismatched timestamps.
struct EpochOrder : Error { using Error::Error; };

/// A gap was detected in the sensor streams.
struct GapDetected : Error { using Error::Error; };

/// A differenced observation was requested before the window filled.
struct InsufficientHistory : Error { using Error::Error; };

/// The Newton-Lagrange KKT system is numerically singular.
struct SingularKKT : Error { using Error::Error; };

/// The attitude eigenproblem has an (almost) repeated smallest eigenvalue.
struct DegenerateSpectrum : Error { using Error::Error; };

/// A GNSS innovation failed the configured consistency gate.
struct InnovationOutlier : Error { using Error::Error; };

/// Malformed or unknown configuration input.
struct ConfigError : Error { using Error::Error; };

/// Filesystem or stream failure while writing reports.
struct IoError : Error { using Error::Error; };

}  // namespace jape
