#pragma once

#include <stdexcept>
#include <string>

namespace vsd {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// geometry
struct FarRayAboveHorizon : Error { using Error::Error; };
struct InvalidPose : Error { using Error::Error; };
struct BehindCamera : Error { using Error::Error; };
struct RayAboveHorizon : Error { using Error::Error; };
struct OutOfSection : Error { using Error::Error; };

// logs / ingest
struct SchemaViolation : Error { using Error::Error; };
struct InconsistentVelocity : Error { using Error::Error; };
struct EmptySequence : Error { using Error::Error; };
struct IoFailure : Error { using Error::Error; };

// model / training
struct ShapeMismatch : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };
struct DataMissing : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };

// evaluation
struct LeakageDetected : Error { using Error::Error; };
struct EmptyTestSet : Error { using Error::Error; };

// carla bridge
struct ConnectionFailed : Error { using Error::Error; };

// cli
struct UsageError : Error { using Error::Error; };

}  // namespace vsd
