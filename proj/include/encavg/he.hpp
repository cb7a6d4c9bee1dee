// Additively homomorphic encryption over Z_q.
//
// Two backends share one interface:
//   paillier  Paillier with g = N + 1; the message space is Z_N.
//   mock      identity "encryption" with an exact, configurable modulus q. It
//             reproduces the modular arithmetic of the protocol bit for bit
//             (e.g. q = 2^2048) without the cost of real ciphertexts.
//
// A context created by keygen carries the secret key. public_context() strips
// it; every agent other than the leader only ever sees a public context, so a
// follower-side dec() fails with MissingSecretKey.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "encavg/common.hpp"

namespace encavg {

enum class Backend { mock, paillier };

std::string_view to_string(Backend b);
Backend parse_backend(std::string_view text);

/// Seeded source of arbitrary-precision randomness (GMP Mersenne Twister).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Uniform in [0, bound).
  BigInt below(const BigInt& bound);
  /// Uniform with exactly `bits` random bits.
  BigInt bits(unsigned bits);

 private:
  std::unique_ptr<gmp_randclass> state_;
};

struct PaillierSecret {
  BigInt p;
  BigInt q;
  BigInt lambda;  // lcm(p-1, q-1)
  BigInt mu;      // lambda^{-1} mod N
};

class HEContext {
 public:
  /// Mock context with message modulus q (any q >= 2), holding the (trivial) secret key.
  static HEContext mock(BigInt q);
  /// Paillier context from its primes; holds the secret key.
  static HEContext paillier(const BigInt& p, const BigInt& q);
  /// Paillier public context from the modulus only.
  static HEContext paillier_public(const BigInt& n);

  Backend backend() const noexcept { return backend_; }
  /// Message-space modulus q.
  const BigInt& modulus() const noexcept { return q_; }
  /// Modulus of ciphertext arithmetic (N^2 for Paillier, q for mock).
  const BigInt& ciphertext_modulus() const noexcept { return cipher_mod_; }
  std::uint64_t id() const noexcept { return id_; }
  bool has_secret_key() const noexcept { return has_secret_; }
  HEContext public_context() const;
  /// Throws Error(MissingSecretKey).
  const PaillierSecret& paillier_secret() const;

 private:
  HEContext(Backend backend, BigInt q);

  Backend backend_;
  BigInt q_;
  BigInt cipher_mod_;
  std::uint64_t id_ = 0;
  bool has_secret_ = false;
  std::optional<PaillierSecret> secret_;
};

struct Ciphertext {
  BigInt payload;
  std::uint64_t context_id = 0;
};

/// paillier: N = p q with p, q primes of bits/2 bits each (bits >= 64, even).
/// mock: q = 2^bits.
HEContext keygen(Backend backend, unsigned bits, std::uint64_t seed);

/// Throws Error(MessageOutOfRange) unless 0 <= m < q.
Ciphertext enc(const HEContext& ctx, const BigInt& m, Rng& rng);
/// Throws Error(MissingSecretKey) or Error(ContextMismatch).
BigInt dec(const HEContext& ctx, const Ciphertext& c);
/// Dec(add_ct(c1, c2)) = m1 + m2 mod q.
Ciphertext add_ct(const HEContext& ctx, const Ciphertext& c1, const Ciphertext& c2);
/// Dec(mul_plain(k, c)) = k m mod q, for 0 <= k < q.
Ciphertext mul_plain(const HEContext& ctx, const BigInt& k, const Ciphertext& c);

/// z mod q in [0, q); pairs with mod_reconstruct for |z| < q/2.
BigInt encode_signed(const BigInt& z, const BigInt& q);

/// Decimal-text JSON. Public: backend + n (and g for Paillier). Secret adds p and q.
std::string serialize_public_key(const HEContext& ctx);
std::string serialize_secret_key(const HEContext& ctx);
HEContext parse_key(std::string_view text);

std::string serialize_ciphertext(const Ciphertext& c);
Ciphertext parse_ciphertext(std::string_view text);

}  // namespace encavg
