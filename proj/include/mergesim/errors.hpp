#pragma once

#include <stdexcept>
#include <string>

namespace mergesim {

/// Base class for every error raised by the simulator.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MERGESIM_DEFINE_ERROR(Name)  \
  class Name : public Error {        \
   public:                           \
    using Error::Error;              \
  }

// geometry
MERGESIM_DEFINE_ERROR(DegeneratePath);
MERGESIM_DEFINE_ERROR(MergePointOffPath);
MERGESIM_DEFINE_ERROR(OffPath);
MERGESIM_DEFINE_ERROR(OutOfRange);

// dynamics / control
MERGESIM_DEFINE_ERROR(NonFiniteCommand);
MERGESIM_DEFINE_ERROR(NonFiniteInput);
MERGESIM_DEFINE_ERROR(ZeroGap);
MERGESIM_DEFINE_ERROR(MissingPredecessor);

// v2x / sequencing
MERGESIM_DEFINE_ERROR(DuplicateRegistration);
MERGESIM_DEFINE_ERROR(UnknownVehicle);
MERGESIM_DEFINE_ERROR(InvalidSpeeds);
MERGESIM_DEFINE_ERROR(NonPositiveSpeed);

// engine / metrics
MERGESIM_DEFINE_ERROR(InfeasibleSpawn);
MERGESIM_DEFINE_ERROR(IncompleteTraversal);
MERGESIM_DEFINE_ERROR(RosterMismatch);

// files and sockets
MERGESIM_DEFINE_ERROR(IoError);

#undef MERGESIM_DEFINE_ERROR

/// Malformed scenario/path document.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed document whose values violate a constraint; carries the
/// dotted path of the offending field.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Two vehicles on the same path with bumper gap <= 0.
class SafetyViolation : public Error {
 public:
  SafetyViolation(double t, int follower, int leader, double gap)
      : Error("safety violation at t=" + std::to_string(t) + ": vehicle " +
              std::to_string(follower) + " reached gap " + std::to_string(gap) +
              " m behind vehicle " + std::to_string(leader)),
        t_(t), follower_(follower), leader_(leader), gap_(gap) {}
  double time() const noexcept { return t_; }
  int follower() const noexcept { return follower_; }
  int leader() const noexcept { return leader_; }
  double gap() const noexcept { return gap_; }

 private:
  double t_;
  int follower_;
  int leader_;
  double gap_;
};

/// A controller produced a non-finite command.
class ControllerPanic : public Error {
 public:
  ControllerPanic(int vehicle, long tick, const std::string& what)
      : Error("controller panic on vehicle " + std::to_string(vehicle) + " at tick " +
              std::to_string(tick) + ": " + what),
        vehicle_(vehicle), tick_(tick) {}
  int vehicle() const noexcept { return vehicle_; }
  long tick() const noexcept { return tick_; }

 private:
  int vehicle_;
  long tick_;
};

}  // namespace mergesim
