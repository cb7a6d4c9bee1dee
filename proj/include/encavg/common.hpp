// Shared types and the error idiom used across the library.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <gmpxx.h>

namespace encavg {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IntMatrix = Eigen::MatrixXi;
using Int64Matrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;
using Int64Vector = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

/// Arbitrary-precision signed integer.
using BigInt = mpz_class;
using BigVector = std::vector<BigInt>;

enum class Errc {
  InvalidGraph,
  InvalidConfig,
  NearSingularBeyondNullspace,
  ConnectivityRetriesExhausted,
  StepSizeOutOfRange,
  NoIterationsPossible,
  BoundViolation,
  PrimeGenerationFailure,
  MessageOutOfRange,
  MissingSecretKey,
  ContextMismatch,
  TreeInconsistency,
  NegativeWeight,
  OverflowBudgetViolation,
  InsufficientSamples,
  FixtureMismatch,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Nearest integer, ties away from zero. Used for every quantization in the project.
BigInt round_to_int(double x);

/// Conversions to double; GMP truncates toward zero, so the error is below one ulp.
double to_double(const BigInt& x);
double ratio_to_double(const BigInt& num, const BigInt& den);

BigInt pow_int(std::int64_t base, unsigned exponent);

/// Independent 64-bit seed for sub-stream `stream` of `base` (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Shortest round-trip decimal text for a double ("%.17g").
std::string format_double(double x);

}  // namespace encavg
