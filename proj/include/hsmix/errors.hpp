#pragma once

#include <stdexcept>
#include <string>

namespace hsmix {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments or configuration values.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Overlapping spheres and similar states outside the phase space.
class InvalidState : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ScalingInfeasible : public Error {
 public:
  using Error::Error;
};

class ExhaustedReservoir : public Error {
 public:
  using Error::Error;
};

class EmptyDomain : public Error {
 public:
  using Error::Error;
};

class InfeasibleDensity : public Error {
 public:
  using Error::Error;
};

// Picard iterates growing: horizon too long for the data.
class NonContraction : public Error {
 public:
  using Error::Error;
};

}  // namespace hsmix
