#pragma once

#include <stdexcept>
#include <string>

namespace morsenb {

// Base class for everything this library throws on purpose. Callers that
// want a single catch site can use this; the subclasses give the reason.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad constructor input: dimension < 2, nonpositive mass, alpha outside (0,2),
// malformed grids, out-of-range parameters.
struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& what) : Error(what) {}
};

// A configuration with two bodies closer than the hard distance floor was
// passed to a potential/gradient evaluation.
struct CollisionConfiguration : Error {
  explicit CollisionConfiguration(const std::string& what) : Error(what) {}
};

// A path whose quadrature hits the distance floor has no finite action value.
struct InfiniteAction : Error {
  explicit InfiniteAction(const std::string& what) : Error(what) {}
};

// Endpoint or seeded node violates the center-of-mass constraint.
struct NotCentered : Error {
  explicit NotCentered(const std::string& what) : Error(what) {}
};

// Iterative solver ran out of iterations without meeting its tolerance.
struct NoConvergence : Error {
  explicit NoConvergence(const std::string& what) : Error(what) {}
};

// Mountain-pass string degenerated (coincident anchors or vanishing length).
struct StringCollapse : Error {
  explicit StringCollapse(const std::string& what) : Error(what) {}
};

// Continuation schedule reached the epsilon floor.
struct EpsilonBelowFloor : Error {
  explicit EpsilonBelowFloor(const std::string& what) : Error(what) {}
};

// A continuation stage failed to converge (throwing variant; the default is
// a partial sequence with the broke flag set).
struct ContinuationBroke : Error {
  explicit ContinuationBroke(const std::string& what) : Error(what) {}
};

// A record's action exceeded the caller-supplied uniform bound.
struct BoundViolated : Error {
  explicit BoundViolated(const std::string& what) : Error(what) {}
};

// Dense spectral solve requested above the supported dimension.
struct DimensionTooLarge : Error {
  explicit DimensionTooLarge(const std::string& what) : Error(what) {}
};

// Limit-orbit integration did not reach the radius needed by the caller.
struct OrbitTooShort : Error {
  explicit OrbitTooShort(const std::string& what) : Error(what) {}
};

// Transverse eigenvalue count still changes between L and 2L (finite lambda).
struct TruncationTooSmall : Error {
  explicit TruncationTooSmall(const std::string& what) : Error(what) {}
};

// Too few continuation records to classify sequence behavior.
struct InsufficientData : Error {
  explicit InsufficientData(const std::string& what) : Error(what) {}
};

// A requested time window reaches outside the open interval (T1, T2).
struct WindowOutOfDomain : Error {
  explicit WindowOutOfDomain(const std::string& what) : Error(what) {}
};

// Caller forced the finite-lambda case on infinite-lambda data or vice versa.
struct CaseMismatch : Error {
  explicit CaseMismatch(const std::string& what) : Error(what) {}
};

// Annulus window for direction estimation contains no path nodes.
struct WindowEmpty : Error {
  explicit WindowEmpty(const std::string& what) : Error(what) {}
};

// Rescaled variation support exceeds the blow-up window.
struct SupportTooWide : Error {
  explicit SupportTooWide(const std::string& what) : Error(what) {}
};

// Malformed input file or JSON document.
struct ParseError : Error {
  explicit ParseError(const std::string& what) : Error(what) {}
};

// Filesystem failure while reading or writing an artifact.
struct IoError : Error {
  explicit IoError(const std::string& what) : Error(what) {}
};

}  // namespace morsenb
