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

// Wire structures of the token lifecycle. Byte layouts are documented in
// docs/wire-formats.md; all integers are big-endian.
//
//   TokenChallenge  u16 token_type | u16-len issuer_name | u8-len context
//                   | u16-len origin_info
//   TokenRequest    u16 token_type | u8 truncated_key_id | blinded[Nk]
//   Token           u16 token_type | nonce[32] | challenge_digest[32]
//                   | token_key_id[32] | authenticator[Nk]

#ifndef AGETOKEN_TOKENS_HPP_
#define AGETOKEN_TOKENS_HPP_

#include <cstdint>
#include <optional>
#include <string>

#include "agetoken/blindsig.hpp"
#include "agetoken/common.hpp"

namespace agetoken::tokens {

// Blind-RSA age token over a 2048-bit modulus.
inline constexpr std::uint16_t kTokenTypeBlindRsa2048 = 0x0002;
// Private-use type for every other modulus size (toy and test keys).
inline constexpr std::uint16_t kTokenTypeTestModulus = 0xF0A1;

inline constexpr std::size_t kNonceSize = 32;
inline constexpr std::size_t kRedemptionContextSize = 32;
inline constexpr std::size_t kTokenInputSize = 2 + 32 + 32 + 32;

using Nonce = std::array<std::uint8_t, kNonceSize>;

std::uint16_t token_type_for(const blindsig::PublicKey& pk);

// The signature parameters every token uses: deterministic variant, PSS with
// an empty salt.
blindsig::Params token_signature_params();

// DER RSAPublicKey: SEQUENCE { INTEGER modulus, INTEGER publicExponent }.
Bytes encode_public_key(const blindsig::PublicKey& pk);
blindsig::PublicKey decode_public_key(ByteView der);

// SHA-256 over encode_public_key(pk).
Digest derive_key_id(const blindsig::PublicKey& pk);
inline std::uint8_t truncate_key_id(const Digest& key_id) { return key_id.back(); }

struct TokenChallenge {
  std::uint16_t token_type = kTokenTypeBlindRsa2048;
  std::string issuer_name;
  // Empty for batch-compatible challenges, 32 bytes for bound ones.
  Bytes redemption_context;
  std::string origin_info;

  bool bound() const { return !redemption_context.empty(); }
  friend bool operator==(const TokenChallenge&, const TokenChallenge&) = default;
};

// `allow_empty_issuer` admits the issuer-hiding form with no issuer name.
Bytes encode_challenge(const TokenChallenge& challenge, bool allow_empty_issuer = false);
TokenChallenge decode_challenge(ByteView bytes, bool allow_empty_issuer = false);
Digest challenge_digest(ByteView encoded_challenge);

struct TokenRequest {
  std::uint16_t token_type = kTokenTypeBlindRsa2048;
  std::uint8_t truncated_key_id = 0;
  Bytes blinded_message;

  friend bool operator==(const TokenRequest&, const TokenRequest&) = default;
};

Bytes encode_request(const TokenRequest& request);
TokenRequest decode_request(ByteView bytes, std::size_t blinded_width);

struct Token {
  std::uint16_t token_type = kTokenTypeBlindRsa2048;
  Nonce nonce{};
  Digest challenge_digest{};
  Digest token_key_id{};
  Bytes authenticator;

  friend bool operator==(const Token&, const Token&) = default;
};

// token_type | nonce | challenge_digest | token_key_id (98 bytes); the message
// the authenticator signs.
Bytes token_input(std::uint16_t token_type, const Nonce& nonce, const Digest& challenge_digest,
                  const Digest& token_key_id);
inline Bytes token_input(const Token& t) {
  return token_input(t.token_type, t.nonce, t.challenge_digest, t.token_key_id);
}

Bytes encode_token(const Token& token);
Token decode_token(ByteView bytes, std::size_t authenticator_width);
// Reads the key id of an encoded token without knowing the authenticator
// width, so the verifier can resolve the key first.
Digest peek_token_key_id(ByteView bytes);

// Authenticator check under `pk`, including key-id consistency.
bool verify_token(const Token& token, const blindsig::PublicKey& pk);

}  // namespace agetoken::tokens

#endif  // AGETOKEN_TOKENS_HPP_
