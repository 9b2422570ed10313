#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace kmf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// gamma + delta is not below the smallness threshold eta0.
class InadmissibleError : public Error {
 public:
  InadmissibleError(const std::string& what, double eta, double eta0)
      : Error(what), eta_(eta), eta0_(eta0) {}
  double eta() const { return eta_; }
  double eta0() const { return eta0_; }

 private:
  double eta_;
  double eta0_;
};

// A non-finite entry appeared in a simulated state.
class BlowUpError : public Error {
 public:
  BlowUpError(const std::string& what, std::uint64_t step) : Error(what), step_(step) {}
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

}  // namespace kmf
