#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lpm {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One of the standing model assumptions (A1), (A2), (A3) does not hold.
class AssumptionViolated : public Error {
 public:
  AssumptionViolated(std::string assumption, const std::string& detail)
      : Error("assumption " + assumption + " violated: " + detail),
        assumption_(std::move(assumption)) {}

  const std::string& assumption() const noexcept { return assumption_; }

 private:
  std::string assumption_;
};

class OutOfDomain : public Error {
 public:
  using Error::Error;
};

class NumericFailure : public Error {
 public:
  using Error::Error;
};

class RequiresFiniteTheta0 : public Error {
 public:
  RequiresFiniteTheta0()
      : Error("operation requires a finite theta0 (model has none within the search range)") {}
  explicit RequiresFiniteTheta0(const std::string& what) : Error(what) {}
};

class InvalidMu : public Error {
 public:
  using Error::Error;
};

class InvalidRegime : public Error {
 public:
  using Error::Error;
};

class TooFewSamples : public Error {
 public:
  TooFewSamples(std::size_t got, std::size_t need)
      : Error("too few samples: got " + std::to_string(got) + ", need at least " +
              std::to_string(need)) {}
};

class TooFewPoints : public Error {
 public:
  TooFewPoints(std::size_t got, std::size_t need)
      : Error("too few distinct points: got " + std::to_string(got) + ", need at least " +
              std::to_string(need)) {}
};

class PopulationCapExceeded : public Error {
 public:
  PopulationCapExceeded(int generation, double size, std::size_t cap)
      : Error("population cap exceeded at generation " + std::to_string(generation) +
              ": size " + std::to_string(static_cast<long double>(size)) + " > cap " +
              std::to_string(cap)),
        generation_(generation),
        size_(size) {}

  int generation() const noexcept { return generation_; }
  // Expected size when the cap is checked before simulating.
  double size() const noexcept { return size_; }

 private:
  int generation_;
  double size_;
};

/// Malformed experiment configuration or model description.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace lpm
