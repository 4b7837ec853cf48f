// Copyright 2026 The agetoken Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "agetoken/blindsig.hpp"

#include <algorithm>
#include <string>

namespace agetoken::blindsig {

namespace {

constexpr unsigned long kDefaultPublicExponent = 65537;

BigInt invert_or_zero(const BigInt& a, const BigInt& mod) {
  BigInt out;
  if (mpz_invert(out.get_mpz_t(), a.get_mpz_t(), mod.get_mpz_t()) == 0) return 0;
  return out;
}

BigInt powm(const BigInt& base, const BigInt& exp, const BigInt& mod) {
  BigInt out;
  mpz_powm(out.get_mpz_t(), base.get_mpz_t(), exp.get_mpz_t(), mod.get_mpz_t());
  return out;
}

BigInt gcd(const BigInt& a, const BigInt& b) {
  BigInt out;
  mpz_gcd(out.get_mpz_t(), a.get_mpz_t(), b.get_mpz_t());
  return out;
}

std::size_t bit_length(const BigInt& v) {
  return v == 0 ? 0 : mpz_sizeinbase(v.get_mpz_t(), 2);
}

// Uniform value with exactly `bits` bits whose two top bits are set.
BigInt random_prime(std::size_t bits, Entropy& rng) {
  const std::size_t nbytes = (bits + 7) / 8;
  for (;;) {
    Bytes raw = rng.bytes(nbytes);
    const std::size_t excess = nbytes * 8 - bits;
    raw[0] &= static_cast<std::uint8_t>(0xff >> excess);
    BigInt candidate = os2ip(raw);
    mpz_setbit(candidate.get_mpz_t(), bits - 1);
    mpz_setbit(candidate.get_mpz_t(), bits - 2);
    mpz_setbit(candidate.get_mpz_t(), 0);
    BigInt prime;
    mpz_nextprime(prime.get_mpz_t(), candidate.get_mpz_t());
    if (bit_length(prime) == bits) return prime;
  }
}

// Uniform in [1, n) and coprime to n.
BigInt random_unit(const BigInt& n, Entropy& rng) {
  const std::size_t bits = bit_length(n);
  const std::size_t nbytes = (bits + 7) / 8;
  for (;;) {
    Bytes raw = rng.bytes(nbytes);
    raw[0] &= static_cast<std::uint8_t>(0xff >> (nbytes * 8 - bits));
    BigInt r = os2ip(raw);
    if (r == 0 || r >= n) continue;
    if (gcd(r, n) == 1) return r;
  }
}

BigInt encode_to_integer(const PublicKey& pk, ByteView prepared, ByteView salt,
                         const Params& params) {
  switch (params.encoding) {
    case Encoding::kPss:
      return os2ip(emsa_pss_encode(prepared, pk.modulus_bits() - 1, salt));
    case Encoding::kToyFullDomain: {
      BigInt v = os2ip(mgf1_sha384(prepared, pk.modulus_bytes() + 16));
      return v % pk.modulus;
    }
  }
  throw Error(ErrorCode::kInternal, "unknown encoding");
}

void check_public_key(const PublicKey& pk) {
  if (pk.modulus < 3 || bit_length(pk.modulus) < kMinToyBits) {
    throw Error(ErrorCode::kInvalidArgument, "public key modulus too small");
  }
  if (pk.exponent < 3 || mpz_even_p(pk.exponent.get_mpz_t())) {
    throw Error(ErrorCode::kInvalidArgument, "public exponent must be odd and >= 3");
  }
}

}  // namespace

std::size_t PublicKey::modulus_bits() const { return bit_length(modulus); }
std::size_t PublicKey::modulus_bytes() const { return (modulus_bits() + 7) / 8; }

KeyPair generate_keypair(unsigned bits, Entropy& rng, KeyMode mode) {
  const unsigned minimum = mode == KeyMode::kProduction ? kMinProductionBits : kMinToyBits;
  if (bits < minimum) {
    throw Error(ErrorCode::kInvalidArgument,
                "modulus of " + std::to_string(bits) + " bits is below the minimum of " +
                    std::to_string(minimum) + " for this key mode");
  }
  const BigInt e = kDefaultPublicExponent;
  for (;;) {
    BigInt p = random_prime((bits + 1) / 2, rng);
    BigInt q = random_prime(bits / 2, rng);
    if (p == q) continue;
    if (gcd(e, (p - 1) * (q - 1)) != 1) continue;
    KeyPair key = keypair_from_primes(p, q, e);
    if (bit_length(key.modulus) == bits) return key;
  }
}

KeyPair keypair_from_primes(const BigInt& p, const BigInt& q, const BigInt& e) {
  if (p < 2 || q < 2 || p == q) {
    throw Error(ErrorCode::kInvalidArgument, "primes must be distinct and >= 2");
  }
  const BigInt phi = (p - 1) * (q - 1);
  BigInt d = invert_or_zero(e, phi);
  if (d == 0) {
    throw Error(ErrorCode::kInvalidArgument, "public exponent not invertible mod phi(n)");
  }
  return KeyPair{p * q, e, d, p, q};
}

bool satisfies_invariants(const KeyPair& key) {
  if (key.prime_p * key.prime_q != key.modulus) return false;
  BigInt lambda;
  const BigInt p1 = key.prime_p - 1;
  const BigInt q1 = key.prime_q - 1;
  mpz_lcm(lambda.get_mpz_t(), p1.get_mpz_t(), q1.get_mpz_t());
  BigInt check = (key.public_exponent * key.private_exponent) % lambda;
  return check == 1;
}

Bytes prepare(ByteView message, Variant variant, Entropy& rng) {
  if (message.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "cannot prepare an empty message");
  }
  Bytes out;
  if (variant == Variant::kRandomized) {
    out = rng.bytes(kPrepareRandomBytes);
  }
  out.insert(out.end(), message.begin(), message.end());
  return out;
}

BlindOutput blind(const PublicKey& pk, ByteView prepared, Entropy& rng, const Params& params) {
  check_public_key(pk);
  Bytes salt = rng.bytes(params.encoding == Encoding::kPss ? params.salt_length : 0);
  BigInt r = random_unit(pk.modulus, rng);
  return blind_with(pk, prepared, r, salt, params);
}

BlindOutput blind_with(const PublicKey& pk, ByteView prepared, const BigInt& blind_factor,
                       ByteView salt, const Params& params) {
  check_public_key(pk);
  if (params.encoding == Encoding::kPss && salt.size() != params.salt_length) {
    throw Error(ErrorCode::kInvalidArgument, "salt length does not match parameters");
  }
  const BigInt m = encode_to_integer(pk, prepared, salt, params);
  if (m == 0 || gcd(m, pk.modulus) != 1) {
    throw Error(ErrorCode::kEncoding, "encoded message is not invertible mod n");
  }
  if (blind_factor <= 0 || blind_factor >= pk.modulus) {
    throw Error(ErrorCode::kInvalidArgument, "blinding factor out of range");
  }
  BigInt inverse = invert_or_zero(blind_factor, pk.modulus);
  if (inverse == 0) {
    throw Error(ErrorCode::kInvalidArgument, "blinding factor not invertible mod n");
  }
  const BigInt z = blind_integer(pk, m, blind_factor);
  return BlindOutput{i2osp(z, pk.modulus_bytes()),
                     BlindingState{std::move(inverse), Bytes(prepared.begin(), prepared.end())}};
}

Bytes blind_sign(const KeyPair& sk, ByteView blinded_message) {
  const PublicKey pk = sk.public_key();
  if (blinded_message.size() != pk.modulus_bytes()) {
    throw Error(ErrorCode::kMalformed, "blinded message has wrong length");
  }
  const BigInt m = os2ip(blinded_message);
  if (m >= sk.modulus) {
    throw Error(ErrorCode::kMalformed, "blinded message not below modulus");
  }
  const BigInt s = sign_integer(sk, m);
  // Guards against CRT faults leaking the factorisation.
  if (powm(s, sk.public_exponent, sk.modulus) != m) {
    throw Error(ErrorCode::kInternal, "signing self-check failed");
  }
  return i2osp(s, pk.modulus_bytes());
}

Bytes finalize(const PublicKey& pk, ByteView prepared, ByteView blind_signature,
               const BlindingState& state, const Params& params) {
  check_public_key(pk);
  if (blind_signature.size() != pk.modulus_bytes()) {
    throw Error(ErrorCode::kMalformed, "blind signature has wrong length");
  }
  const BigInt z = os2ip(blind_signature);
  if (z >= pk.modulus) {
    throw Error(ErrorCode::kMalformed, "blind signature not below modulus");
  }
  Bytes sig = i2osp(unblind_integer(pk, z, state.inverse_blind), pk.modulus_bytes());
  if (!verify(pk, prepared, sig, params)) {
    throw Error(ErrorCode::kIssuerMisbehavior, "finalized signature does not verify");
  }
  return sig;
}

bool verify(const PublicKey& pk, ByteView prepared, ByteView signature, const Params& params) {
  if (pk.modulus < 3 || signature.size() != pk.modulus_bytes()) return false;
  const BigInt s = os2ip(signature);
  if (s >= pk.modulus) return false;
  const BigInt m = powm(s, pk.exponent, pk.modulus);
  switch (params.encoding) {
    case Encoding::kPss: {
      const std::size_t em_bits = pk.modulus_bits() - 1;
      const std::size_t em_len = (em_bits + 7) / 8;
      if (bit_length(m) > em_bits) return false;
      return emsa_pss_verify(prepared, i2osp(m, em_len), em_bits, params.salt_length);
    }
    case Encoding::kToyFullDomain: {
      Bytes no_salt;
      return m == encode_to_integer(pk, prepared, no_salt, params);
    }
  }
  return false;
}

Bytes mgf1_sha384(ByteView seed, std::size_t length) {
  Bytes out;
  out.reserve(length + kSha384Size);
  for (std::uint32_t counter = 0; out.size() < length; ++counter) {
    ByteWriter w;
    w.raw(seed);
    w.u32(counter);
    Bytes block = sha384(w.bytes());
    out.insert(out.end(), block.begin(), block.end());
  }
  out.resize(length);
  return out;
}

Bytes emsa_pss_encode(ByteView message, std::size_t em_bits, ByteView salt) {
  const std::size_t h_len = kSha384Size;
  const std::size_t em_len = (em_bits + 7) / 8;
  if (em_len < h_len + salt.size() + 2) {
    throw Error(ErrorCode::kEncoding, "modulus too small for PSS encoding");
  }
  const Bytes m_hash = sha384(message);
  ByteWriter m_prime;
  m_prime.raw(Bytes(8, 0));
  m_prime.raw(m_hash);
  m_prime.raw(salt);
  const Bytes h = sha384(m_prime.bytes());

  const std::size_t db_len = em_len - h_len - 1;
  Bytes db(db_len - salt.size() - 1, 0);
  db.push_back(0x01);
  db.insert(db.end(), salt.begin(), salt.end());
  const Bytes mask = mgf1_sha384(h, db_len);
  for (std::size_t i = 0; i < db_len; ++i) db[i] ^= mask[i];
  db[0] &= static_cast<std::uint8_t>(0xff >> (8 * em_len - em_bits));

  Bytes em = std::move(db);
  em.insert(em.end(), h.begin(), h.end());
  em.push_back(0xbc);
  return em;
}

bool emsa_pss_verify(ByteView message, ByteView encoded, std::size_t em_bits,
                     std::size_t salt_length) {
  const std::size_t h_len = kSha384Size;
  const std::size_t em_len = (em_bits + 7) / 8;
  if (encoded.size() != em_len || em_len < h_len + salt_length + 2) return false;
  if (encoded.back() != 0xbc) return false;
  const std::size_t db_len = em_len - h_len - 1;
  ByteView masked_db = encoded.first(db_len);
  ByteView h = encoded.subspan(db_len, h_len);
  const std::uint8_t top_mask = static_cast<std::uint8_t>(0xff << (8 - (8 * em_len - em_bits)));
  if ((8 * em_len - em_bits) != 0 && (masked_db[0] & top_mask) != 0) return false;

  Bytes db = mgf1_sha384(h, db_len);
  for (std::size_t i = 0; i < db_len; ++i) db[i] ^= masked_db[i];
  db[0] &= static_cast<std::uint8_t>(0xff >> (8 * em_len - em_bits));
  const std::size_t ps_len = em_len - h_len - salt_length - 2;
  for (std::size_t i = 0; i < ps_len; ++i) {
    if (db[i] != 0) return false;
  }
  if (db[ps_len] != 0x01) return false;
  ByteView salt(db.data() + db_len - salt_length, salt_length);

  ByteWriter m_prime;
  m_prime.raw(Bytes(8, 0));
  m_prime.raw(sha384(message));
  m_prime.raw(salt);
  const Bytes expected = sha384(m_prime.bytes());
  return std::equal(expected.begin(), expected.end(), h.begin(), h.end());
}

BigInt os2ip(ByteView bytes) {
  BigInt out;
  if (!bytes.empty()) {
    mpz_import(out.get_mpz_t(), bytes.size(), 1, 1, 1, 0, bytes.data());
  }
  return out;
}

Bytes i2osp(const BigInt& value, std::size_t length) {
  if (value < 0) throw Error(ErrorCode::kEncoding, "negative integer");
  const std::size_t needed = (bit_length(value) + 7) / 8;
  if (needed > length) throw Error(ErrorCode::kEncoding, "integer too large for encoding");
  Bytes out(length, 0);
  if (value != 0) {
    std::size_t count = 0;
    mpz_export(out.data() + (length - needed), &count, 1, 1, 1, 0, value.get_mpz_t());
  }
  return out;
}

BigInt blind_integer(const PublicKey& pk, const BigInt& encoded, const BigInt& blind_factor) {
  BigInt out = (encoded * powm(blind_factor, pk.exponent, pk.modulus)) % pk.modulus;
  return out;
}

BigInt sign_integer(const KeyPair& sk, const BigInt& value) {
  if (sk.prime_p < 2 || sk.prime_q < 2) {
    return powm(value, sk.private_exponent, sk.modulus);
  }
  const BigInt& p = sk.prime_p;
  const BigInt& q = sk.prime_q;
  const BigInt dp = sk.private_exponent % (p - 1);
  const BigInt dq = sk.private_exponent % (q - 1);
  const BigInt q_inv = invert_or_zero(q % p, p);
  const BigInt m1 = powm(value % p, dp, p);
  const BigInt m2 = powm(value % q, dq, q);
  BigInt h = (q_inv * (m1 - m2)) % p;
  if (h < 0) h += p;
  return m2 + h * q;
}

BigInt unblind_integer(const PublicKey& pk, const BigInt& blind_signature,
                       const BigInt& inverse_blind) {
  BigInt out = (blind_signature * inverse_blind) % pk.modulus;
  return out;
}

}  // namespace agetoken::blindsig
