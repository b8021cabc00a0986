#pragma once

#include <stdexcept>
#include <string>

namespace vgpmp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DerivativeUnsupported : public Error {
public:
  using Error::Error;
};

class FactorizationFailure : public Error {
public:
  using Error::Error;
};

class OutOfLimits : public Error {
public:
  using Error::Error;
};

class GridTooLarge : public Error {
public:
  using Error::Error;
};

class NonFiniteGradient : public Error {
public:
  using Error::Error;
};

class NonFiniteLoss : public Error {
public:
  using Error::Error;
};

class InfeasibleEndpoint : public Error {
public:
  using Error::Error;
};

/// Malformed input file or configuration value.
class ParseError : public Error {
public:
  using Error::Error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

} // namespace vgpmp
