#pragma once

#include <stdexcept>
#include <string>

namespace neumat {

/// Base class for every error thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Container header does not describe a 90x90x180 grid.
struct HeaderMismatch : Error { using Error::Error; };

/// Byte stream ended before the declared payload was complete.
struct Truncated : Error { using Error::Error; };

/// wi + wo is too short to define a half vector.
struct DegenerateHalfVector : Error { using Error::Error; };

/// A reconstructed direction fell below the surface horizon.
struct BelowHorizon : Error { using Error::Error; };

/// Data has no variance to decompose (or fewer effective
/// dimensions than the requested component count).
struct RankDeficient : Error { using Error::Error; };

struct DimensionMismatch : Error { using Error::Error; };

/// A loss or parameter left the finite range during optimization.
struct NonFinite : Error { using Error::Error; };

/// Guidance scale below -1.
struct GuidanceOutOfRange : Error { using Error::Error; };

/// A set operation received an empty set.
struct EmptySet : Error { using Error::Error; };

/// Noise schedule failed validation.
struct InvalidSchedule : Error { using Error::Error; };

/// Peak reflectance is zero, so a relative lobe threshold is undefined.
struct ZeroPeak : Error { using Error::Error; };

/// Bad configuration value; the message names the offending field.
struct ConfigError : Error { using Error::Error; };

/// Rejection sampling hit its attempt budget.
struct Exhausted : Error {
    explicit Exhausted(int n)
        : Error("constrained sampling exhausted after " + std::to_string(n) +
                " attempts"),
          attempts(n) {}
    int attempts;
};

} // namespace neumat
