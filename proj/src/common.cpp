#include "encavg/common.hpp"

#include <cmath>
#include <cstdio>

namespace encavg {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::InvalidGraph: return "InvalidGraph";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::NearSingularBeyondNullspace: return "NearSingularBeyondNullspace";
    case Errc::ConnectivityRetriesExhausted: return "ConnectivityRetriesExhausted";
    case Errc::StepSizeOutOfRange: return "StepSizeOutOfRange";
    case Errc::NoIterationsPossible: return "NoIterationsPossible";
    case Errc::BoundViolation: return "BoundViolation";
    case Errc::PrimeGenerationFailure: return "PrimeGenerationFailure";
    case Errc::MessageOutOfRange: return "MessageOutOfRange";
    case Errc::MissingSecretKey: return "MissingSecretKey";
    case Errc::ContextMismatch: return "ContextMismatch";
    case Errc::TreeInconsistency: return "TreeInconsistency";
    case Errc::NegativeWeight: return "NegativeWeight";
    case Errc::OverflowBudgetViolation: return "OverflowBudgetViolation";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::FixtureMismatch: return "FixtureMismatch";
  }
  return "Unknown";
}

BigInt round_to_int(double x) {
  if (!std::isfinite(x)) throw Error(Errc::InvalidConfig, "cannot round a non-finite value");
  // std::round rounds half away from zero; the result is an exact integer-valued double.
  BigInt r;
  mpz_set_d(r.get_mpz_t(), std::round(x));
  return r;
}

double to_double(const BigInt& x) { return mpq_class(x).get_d(); }

double ratio_to_double(const BigInt& num, const BigInt& den) {
  mpq_class q(num, den);
  q.canonicalize();
  return q.get_d();
}

BigInt pow_int(std::int64_t base, unsigned exponent) {
  BigInt b(static_cast<long>(base));
  BigInt r;
  mpz_pow_ui(r.get_mpz_t(), b.get_mpz_t(), exponent);
  return r;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x == 0.0 ? 0.0 : x);
  return buf;
}

}  // namespace encavg
