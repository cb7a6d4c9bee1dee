#include "encavg/he.hpp"

#include "json.hpp"

namespace encavg {

namespace {

constexpr int kMillerRabinRounds = 64;

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void check_context(const HEContext& ctx, const Ciphertext& c) {
  if (c.context_id != ctx.id()) throw Error(Errc::ContextMismatch, "ciphertext belongs to a different key");
}

void check_message(const HEContext& ctx, const BigInt& m) {
  if (m < 0 || m >= ctx.modulus()) throw Error(Errc::MessageOutOfRange, "message outside Z_q");
}

BigInt powm(const BigInt& base, const BigInt& exp, const BigInt& mod) {
  BigInt r;
  mpz_powm(r.get_mpz_t(), base.get_mpz_t(), exp.get_mpz_t(), mod.get_mpz_t());
  return r;
}

BigInt invert(const BigInt& a, const BigInt& mod) {
  BigInt r;
  if (mpz_invert(r.get_mpz_t(), a.get_mpz_t(), mod.get_mpz_t()) == 0)
    throw Error(Errc::PrimeGenerationFailure, "value is not invertible");
  return r;
}

BigInt random_prime(Rng& rng, unsigned bits) {
  const unsigned budget = 64 * bits;
  for (unsigned attempt = 0; attempt < budget; ++attempt) {
    BigInt candidate = rng.bits(bits);
    // top two bits set so that the product of two such primes has exactly 2*bits bits
    mpz_setbit(candidate.get_mpz_t(), bits - 1);
    mpz_setbit(candidate.get_mpz_t(), bits - 2);
    mpz_setbit(candidate.get_mpz_t(), 0);
    if (mpz_probab_prime_p(candidate.get_mpz_t(), kMillerRabinRounds) > 0) return candidate;
  }
  throw Error(Errc::PrimeGenerationFailure, "no prime found within " + std::to_string(budget) + " candidates");
}

BigInt parse_decimal(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw Error(Errc::InvalidConfig, std::string("missing key field ") + key);
  BigInt v;
  if (v.set_str(j.at(key).get<std::string>(), 10) != 0)
    throw Error(Errc::InvalidConfig, std::string("malformed decimal in field ") + key);
  return v;
}

}  // namespace

std::string_view to_string(Backend b) { return b == Backend::mock ? "mock" : "paillier"; }

Backend parse_backend(std::string_view text) {
  if (text == "mock") return Backend::mock;
  if (text == "paillier") return Backend::paillier;
  throw Error(Errc::InvalidConfig, "unknown backend '" + std::string(text) + "' (expected mock or paillier)");
}

Rng::Rng(std::uint64_t seed) : state_(std::make_unique<gmp_randclass>(gmp_randinit_mt)) {
  state_->seed(BigInt(std::to_string(seed)));
}

BigInt Rng::below(const BigInt& bound) { return state_->get_z_range(bound); }

BigInt Rng::bits(unsigned bits) { return state_->get_z_bits(bits); }

HEContext::HEContext(Backend backend, BigInt q) : backend_(backend), q_(std::move(q)) {
  cipher_mod_ = backend_ == Backend::paillier ? BigInt(q_ * q_) : q_;
  id_ = fnv1a(std::string(to_string(backend_)) + ":" + q_.get_str());
}

HEContext HEContext::mock(BigInt q) {
  if (q < 2) throw Error(Errc::InvalidConfig, "mock modulus must be >= 2");
  HEContext ctx(Backend::mock, std::move(q));
  ctx.has_secret_ = true;
  return ctx;
}

HEContext HEContext::paillier(const BigInt& p, const BigInt& q) {
  if (p == q) throw Error(Errc::PrimeGenerationFailure, "Paillier primes must differ");
  HEContext ctx(Backend::paillier, BigInt(p * q));
  PaillierSecret s;
  s.p = p;
  s.q = q;
  const BigInt pm1 = p - 1;
  const BigInt qm1 = q - 1;
  mpz_lcm(s.lambda.get_mpz_t(), pm1.get_mpz_t(), qm1.get_mpz_t());
  s.mu = invert(s.lambda, ctx.q_);  // with g = N + 1, L(g^lambda mod N^2) = lambda mod N
  ctx.secret_ = std::move(s);
  ctx.has_secret_ = true;
  return ctx;
}

HEContext HEContext::paillier_public(const BigInt& n) {
  if (n < 2) throw Error(Errc::InvalidConfig, "Paillier modulus must be >= 2");
  return HEContext(Backend::paillier, n);
}

HEContext HEContext::public_context() const {
  HEContext pub = *this;
  pub.has_secret_ = false;
  pub.secret_.reset();
  return pub;
}

const PaillierSecret& HEContext::paillier_secret() const {
  if (!has_secret_ || !secret_) throw Error(Errc::MissingSecretKey, "context has no Paillier secret key");
  return *secret_;
}

HEContext keygen(Backend backend, unsigned bits, std::uint64_t seed) {
  if (backend == Backend::mock) {
    if (bits < 1) throw Error(Errc::InvalidConfig, "mock modulus needs at least one bit");
    BigInt q;
    mpz_setbit(q.get_mpz_t(), bits);
    return HEContext::mock(std::move(q));
  }
  if (bits < 64 || bits % 2 != 0) throw Error(Errc::InvalidConfig, "Paillier keys need an even bit length >= 64");
  Rng rng(seed);
  const BigInt p = random_prime(rng, bits / 2);
  BigInt q = random_prime(rng, bits / 2);
  for (int retry = 0; q == p; ++retry) {
    if (retry > 16) throw Error(Errc::PrimeGenerationFailure, "could not draw two distinct primes");
    q = random_prime(rng, bits / 2);
  }
  return HEContext::paillier(p, q);
}

Ciphertext enc(const HEContext& ctx, const BigInt& m, Rng& rng) {
  check_message(ctx, m);
  Ciphertext c;
  c.context_id = ctx.id();
  if (ctx.backend() == Backend::mock) {
    c.payload = m;
    return c;
  }
  const BigInt& n = ctx.modulus();
  const BigInt& n2 = ctx.ciphertext_modulus();
  BigInt r;
  BigInt g;
  do {
    r = rng.below(n);
    mpz_gcd(g.get_mpz_t(), r.get_mpz_t(), n.get_mpz_t());
  } while (r == 0 || g != 1);
  // (1 + N)^m = 1 + m N mod N^2
  BigInt gm = (1 + m * n) % n2;
  c.payload = (gm * powm(r, n, n2)) % n2;
  return c;
}

BigInt dec(const HEContext& ctx, const Ciphertext& c) {
  if (!ctx.has_secret_key()) throw Error(Errc::MissingSecretKey, "decryption requires the leader's secret key");
  check_context(ctx, c);
  if (ctx.backend() == Backend::mock) return c.payload;
  const PaillierSecret& s = ctx.paillier_secret();
  const BigInt& n = ctx.modulus();
  const BigInt u = powm(c.payload, s.lambda, ctx.ciphertext_modulus());
  const BigInt l = (u - 1) / n;
  return (l * s.mu) % n;
}

Ciphertext add_ct(const HEContext& ctx, const Ciphertext& c1, const Ciphertext& c2) {
  check_context(ctx, c1);
  check_context(ctx, c2);
  Ciphertext out;
  out.context_id = ctx.id();
  if (ctx.backend() == Backend::mock) {
    out.payload = c1.payload + c2.payload;
    if (out.payload >= ctx.modulus()) out.payload -= ctx.modulus();
  } else {
    out.payload = (c1.payload * c2.payload) % ctx.ciphertext_modulus();
  }
  return out;
}

Ciphertext mul_plain(const HEContext& ctx, const BigInt& k, const Ciphertext& c) {
  check_context(ctx, c);
  check_message(ctx, k);
  const BigInt& q = ctx.modulus();
  // k > q/2 is applied as -(q - k); both give k m mod q, the latter with a short scalar.
  const bool negate = 2 * k > q;
  const BigInt magnitude = negate ? BigInt(q - k) : k;
  Ciphertext out;
  out.context_id = ctx.id();
  if (ctx.backend() == Backend::mock) {
    BigInt prod = magnitude * c.payload;
    if (negate) prod = -prod;
    mpz_fdiv_r(out.payload.get_mpz_t(), prod.get_mpz_t(), q.get_mpz_t());
  } else {
    const BigInt& n2 = ctx.ciphertext_modulus();
    const BigInt base = negate ? invert(c.payload, n2) : c.payload;
    out.payload = powm(base, magnitude, n2);
  }
  return out;
}

BigInt encode_signed(const BigInt& z, const BigInt& q) {
  BigInt r;
  mpz_fdiv_r(r.get_mpz_t(), z.get_mpz_t(), q.get_mpz_t());
  return r;
}

std::string serialize_public_key(const HEContext& ctx) {
  nlohmann::ordered_json j;
  j["backend"] = std::string(to_string(ctx.backend()));
  j["n"] = ctx.modulus().get_str();
  if (ctx.backend() == Backend::paillier) j["g"] = BigInt(ctx.modulus() + 1).get_str();
  j["context_id"] = ctx.id();
  return j.dump(2) + "\n";
}

std::string serialize_secret_key(const HEContext& ctx) {
  if (!ctx.has_secret_key()) throw Error(Errc::MissingSecretKey, "context has no secret key");
  nlohmann::ordered_json j;
  j["backend"] = std::string(to_string(ctx.backend()));
  j["n"] = ctx.modulus().get_str();
  if (ctx.backend() == Backend::paillier) {
    j["g"] = BigInt(ctx.modulus() + 1).get_str();
    j["p"] = ctx.paillier_secret().p.get_str();
    j["q"] = ctx.paillier_secret().q.get_str();
  } else {
    j["secret"] = true;
  }
  j["context_id"] = ctx.id();
  return j.dump(2) + "\n";
}

HEContext parse_key(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::InvalidConfig, std::string("malformed key text: ") + ex.what());
  }
  const Backend backend = parse_backend(j.at("backend").get<std::string>());
  const BigInt n = parse_decimal(j, "n");
  if (backend == Backend::mock) {
    HEContext ctx = HEContext::mock(n);
    return j.value("secret", false) ? ctx : ctx.public_context();
  }
  if (j.contains("p")) {
    HEContext ctx = HEContext::paillier(parse_decimal(j, "p"), parse_decimal(j, "q"));
    if (ctx.modulus() != n) throw Error(Errc::InvalidConfig, "p * q does not match n");
    return ctx;
  }
  return HEContext::paillier_public(n);
}

std::string serialize_ciphertext(const Ciphertext& c) {
  nlohmann::ordered_json j;
  j["context_id"] = c.context_id;
  j["payload"] = c.payload.get_str();
  return j.dump();
}

Ciphertext parse_ciphertext(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::InvalidConfig, std::string("malformed ciphertext text: ") + ex.what());
  }
  Ciphertext c;
  c.context_id = j.at("context_id").get<std::uint64_t>();
  c.payload = parse_decimal(j, "payload");
  return c;
}

}  // namespace encavg
