#pragma once

#include <stdexcept>
#include <string>

namespace retrofit {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A dense numerical kernel (eigen solver, factorization) did not converge.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// The Lyapunov operator is singular: some eigenvalue pair sums to zero.
class SingularEquationError : public Error {
 public:
  using Error::Error;
};

/// The Hamiltonian has imaginary-axis eigenvalues, so no stabilizing
/// Riccati solution exists.
class NoStabilizingSolutionError : public Error {
 public:
  using Error::Error;
};

/// The L-infinity norm is undefined because of an imaginary-axis pole.
class NormUndefinedError : public Error {
 public:
  using Error::Error;
};

/// Frequency response requested at a pole.
class PoleAtFrequencyError : public Error {
 public:
  using Error::Error;
};

/// An interconnection has a singular algebraic loop.
class IllPosedLoopError : public Error {
 public:
  using Error::Error;
};

/// Unknown channel group name.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Operation requires a strictly stable system.
class StabilityPreconditionError : public Error {
 public:
  using Error::Error;
};

/// H-infinity synthesis failed at every probed performance level.
class SynthesisInfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Module controller failed its stability gate.
class UnverifiedModuleError : public Error {
 public:
  using Error::Error;
};

/// Malformed experiment configuration or network specification.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace retrofit
