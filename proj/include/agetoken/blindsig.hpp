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

// Blind RSA signatures with an EMSA-PSS message encoding over SHA-384
// (the RSABSSA-SHA384 family). The protocol is:
//
//   client:  prepared = prepare(msg)
//            {blinded, state} = blind(pk, prepared)
//   issuer:  blind_sig = blind_sign(sk, blinded)
//   client:  sig = finalize(pk, prepared, blind_sig, state)
//   anyone:  verify(pk, prepared, sig)
//
// The issuer only ever sees `blinded`, which is uniformly distributed in the
// multiplicative group mod n independently of the message.
//
// Not constant time. Intended as a reference implementation; do not use
// this code where timing side channels matter.

#ifndef AGETOKEN_BLINDSIG_HPP_
#define AGETOKEN_BLINDSIG_HPP_

#include <gmpxx.h>

#include <cstddef>

#include "agetoken/common.hpp"
#include "agetoken/crypto.hpp"

namespace agetoken::blindsig {

using BigInt = mpz_class;

inline constexpr unsigned kMinProductionBits = 2048;
inline constexpr unsigned kMinToyBits = 16;
inline constexpr std::size_t kPrepareRandomBytes = 32;

// Production keys must be at least 2048 bits. Toy keys (>= 16 bits) exist so
// tests can check arithmetic against brute-force oracles.
enum class KeyMode { kProduction, kToy };

struct PublicKey {
  BigInt modulus;
  BigInt exponent;

  std::size_t modulus_bits() const;
  std::size_t modulus_bytes() const;

  friend bool operator==(const PublicKey& a, const PublicKey& b) {
    return a.modulus == b.modulus && a.exponent == b.exponent;
  }
};

struct KeyPair {
  BigInt modulus;
  BigInt public_exponent;
  BigInt private_exponent;
  BigInt prime_p;
  BigInt prime_q;

  PublicKey public_key() const { return PublicKey{modulus, public_exponent}; }
};

KeyPair generate_keypair(unsigned bits, Entropy& rng, KeyMode mode = KeyMode::kProduction);

// Builds a key from injected primes; the private exponent is e^-1 mod
// (p-1)(q-1). Throws kInvalidArgument if e is not invertible.
KeyPair keypair_from_primes(const BigInt& p, const BigInt& q, const BigInt& e);

// n = pq and e*d = 1 mod lcm(p-1, q-1).
bool satisfies_invariants(const KeyPair& key);

enum class Variant { kDeterministic, kRandomized };

// kPss is the standard encoding. kToyFullDomain hashes the message into
// [0, n) with MGF1 and only exists so that round trips can run on moduli far
// too small for PSS.
enum class Encoding { kPss, kToyFullDomain };

struct Params {
  Variant variant = Variant::kDeterministic;
  std::size_t salt_length = 0;
  Encoding encoding = Encoding::kPss;
};

// Randomized: 32 random bytes || message. Deterministic: message unchanged.
Bytes prepare(ByteView message, Variant variant, Entropy& rng);

// Client-only secret for one blind/finalize pair. Never put on the wire.
struct BlindingState {
  BigInt inverse_blind;
  Bytes prepared_message;
};

struct BlindOutput {
  Bytes blinded_message;
  BlindingState state;
};

BlindOutput blind(const PublicKey& pk, ByteView prepared, Entropy& rng, const Params& params = {});

// Same as blind() with a caller-chosen blinding factor and salt. A blind that
// is not invertible mod n is reported as kInvalidArgument instead of being
// redrawn.
BlindOutput blind_with(const PublicKey& pk, ByteView prepared, const BigInt& blind_factor,
                       ByteView salt, const Params& params = {});

// Throws kMalformed if the input is not exactly modulus_bytes() long or is
// not below the modulus.
Bytes blind_sign(const KeyPair& sk, ByteView blinded_message);

// Unblinds and self-verifies. A signature that fails verification raises
// kIssuerMisbehavior.
Bytes finalize(const PublicKey& pk, ByteView prepared, ByteView blind_signature,
               const BlindingState& state, const Params& params = {});

bool verify(const PublicKey& pk, ByteView prepared, ByteView signature, const Params& params = {});

// Message encodings.
Bytes mgf1_sha384(ByteView seed, std::size_t length);
Bytes emsa_pss_encode(ByteView message, std::size_t em_bits, ByteView salt);
bool emsa_pss_verify(ByteView message, ByteView encoded, std::size_t em_bits,
                     std::size_t salt_length);

// Integer layer.
BigInt os2ip(ByteView bytes);
// Throws kEncoding if the value does not fit in `length` bytes.
Bytes i2osp(const BigInt& value, std::size_t length);
BigInt blind_integer(const PublicKey& pk, const BigInt& encoded, const BigInt& blind_factor);
BigInt sign_integer(const KeyPair& sk, const BigInt& value);
BigInt unblind_integer(const PublicKey& pk, const BigInt& blind_signature,
                       const BigInt& inverse_blind);

}  // namespace agetoken::blindsig

#endif  // AGETOKEN_BLINDSIG_HPP_
