#pragma once

#include <stdexcept>
#include <string>

namespace fsstab {

// Base class for all recoverable failures raised by the toolkit.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// geometry
struct GapViolation : Error { using Error::Error; };
struct CentroidError : Error { using Error::Error; };
struct MeshingFailure : Error { using Error::Error; };

// discretization
struct InfSupFailure : Error { using Error::Error; };

// linear solves
struct SolverDivergence : Error { using Error::Error; };
struct FluxViolation : Error { using Error::Error; };

// spectral
struct ShiftOnSpectrum : Error { using Error::Error; };
struct NonConvergence : Error { using Error::Error; };
struct LambdaOnSpectrum : Error { using Error::Error; };
struct InsufficientSpectrum : Error { using Error::Error; };

// stabilization
struct RiccatiNoSolution : Error { using Error::Error; };

// simulation
struct CompatibilityError : Error { using Error::Error; };
struct DegenerateFit : Error { using Error::Error; };

// deformation
struct FixedPointDivergence : Error { using Error::Error; };
struct GridMismatch : Error { using Error::Error; };

// cli / config
struct ConfigError : Error { using Error::Error; };

}  // namespace fsstab
