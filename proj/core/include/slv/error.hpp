#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace slv {

// Base for every failure raised by the slv library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

class AntipodalPoints : public Error {
public:
  using Error::Error;
};

class DegenerateTriangle : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  ParseError(std::size_t line, const std::string &what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class InsufficientVerifiers : public Error {
public:
  using Error::Error;
};

// locate() found no assertion for the address.
class UnknownAddress : public Error {
public:
  using Error::Error;
};

// The location provider could not be reached or answered garbage.
class ProviderUnavailable : public Error {
public:
  using Error::Error;
};

class CorruptStore : public Error {
public:
  using Error::Error;
};

class ScenarioError : public Error {
public:
  using Error::Error;
};

// Malformed message on the manager/verifier wire.
class ProtocolError : public Error {
public:
  using Error::Error;
};

} // namespace slv
