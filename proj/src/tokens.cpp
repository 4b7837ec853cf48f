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

#include "agetoken/tokens.hpp"

#include <algorithm>

#include "agetoken/crypto.hpp"

namespace agetoken::tokens {

namespace {

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t extra = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xe0) == 0xc0) {
      extra = 1;
      cp = c & 0x1f;
    } else if ((c & 0xf0) == 0xe0) {
      extra = 2;
      cp = c & 0x0f;
    } else if ((c & 0xf8) == 0xf0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xc0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3f);
    }
    static constexpr std::uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) return false;
    i += extra + 1;
  }
  return true;
}

void check_challenge(const TokenChallenge& c, bool allow_empty_issuer) {
  if (c.redemption_context.size() != 0 && c.redemption_context.size() != kRedemptionContextSize) {
    throw Error(ErrorCode::kMalformed, "redemption context must be 0 or 32 bytes");
  }
  if (c.issuer_name.empty() && !allow_empty_issuer) {
    throw Error(ErrorCode::kMalformed, "issuer name must not be empty");
  }
  if (!valid_utf8(c.issuer_name) || !valid_utf8(c.origin_info)) {
    throw Error(ErrorCode::kMalformed, "challenge strings must be UTF-8");
  }
}

// DER definite-length encoding.
void der_length(ByteWriter& w, std::size_t len) {
  if (len < 0x80) {
    w.u8(static_cast<std::uint8_t>(len));
    return;
  }
  Bytes digits;
  for (std::size_t v = len; v != 0; v >>= 8) digits.insert(digits.begin(), static_cast<std::uint8_t>(v));
  w.u8(static_cast<std::uint8_t>(0x80 | digits.size()));
  w.raw(digits);
}

void der_integer(ByteWriter& w, const blindsig::BigInt& v) {
  const std::size_t bytes = v == 0 ? 1 : (mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8;
  Bytes body = blindsig::i2osp(v, bytes);
  if (body[0] & 0x80) body.insert(body.begin(), 0x00);
  w.u8(0x02);
  der_length(w, body.size());
  w.raw(body);
}

std::size_t der_read_length(ByteReader& r) {
  const std::uint8_t first = r.u8();
  if (first < 0x80) return first;
  const std::size_t n = first & 0x7f;
  if (n == 0 || n > 4) throw Error(ErrorCode::kMalformed, "unsupported DER length");
  std::size_t len = 0;
  for (std::size_t i = 0; i < n; ++i) len = (len << 8) | r.u8();
  if (len < 0x80) throw Error(ErrorCode::kMalformed, "non-minimal DER length");
  return len;
}

blindsig::BigInt der_read_integer(ByteReader& r) {
  if (r.u8() != 0x02) throw Error(ErrorCode::kMalformed, "expected DER INTEGER");
  ByteView body = r.raw(der_read_length(r));
  if (body.empty() || (body[0] & 0x80)) throw Error(ErrorCode::kMalformed, "negative DER INTEGER");
  if (body.size() > 1 && body[0] == 0 && !(body[1] & 0x80)) {
    throw Error(ErrorCode::kMalformed, "non-minimal DER INTEGER");
  }
  return blindsig::os2ip(body);
}

}  // namespace

std::uint16_t token_type_for(const blindsig::PublicKey& pk) {
  return pk.modulus_bits() == 2048 ? kTokenTypeBlindRsa2048 : kTokenTypeTestModulus;
}

blindsig::Params token_signature_params() {
  return blindsig::Params{blindsig::Variant::kDeterministic, 0, blindsig::Encoding::kPss};
}

Bytes encode_public_key(const blindsig::PublicKey& pk) {
  ByteWriter body;
  der_integer(body, pk.modulus);
  der_integer(body, pk.exponent);
  ByteWriter out;
  out.u8(0x30);
  der_length(out, body.bytes().size());
  out.raw(body.bytes());
  return std::move(out).bytes();
}

blindsig::PublicKey decode_public_key(ByteView der) {
  ByteReader r(der);
  if (r.u8() != 0x30) throw Error(ErrorCode::kMalformed, "expected DER SEQUENCE");
  const std::size_t len = der_read_length(r);
  if (len != r.remaining()) throw Error(ErrorCode::kMalformed, "DER SEQUENCE length mismatch");
  blindsig::PublicKey pk;
  pk.modulus = der_read_integer(r);
  pk.exponent = der_read_integer(r);
  r.expect_end("public key");
  return pk;
}

Digest derive_key_id(const blindsig::PublicKey& pk) { return sha256(encode_public_key(pk)); }

Bytes encode_challenge(const TokenChallenge& challenge, bool allow_empty_issuer) {
  check_challenge(challenge, allow_empty_issuer);
  ByteWriter w;
  w.u16(challenge.token_type);
  w.prefixed(challenge.issuer_name, 2);
  w.prefixed(challenge.redemption_context, 1);
  w.prefixed(challenge.origin_info, 2);
  return std::move(w).bytes();
}

TokenChallenge decode_challenge(ByteView bytes, bool allow_empty_issuer) {
  ByteReader r(bytes);
  TokenChallenge c;
  c.token_type = r.u16();
  c.issuer_name = r.prefixed_string(2);
  ByteView ctx = r.prefixed(1);
  c.redemption_context.assign(ctx.begin(), ctx.end());
  c.origin_info = r.prefixed_string(2);
  r.expect_end("token challenge");
  check_challenge(c, allow_empty_issuer);
  return c;
}

Digest challenge_digest(ByteView encoded_challenge) { return sha256(encoded_challenge); }

Bytes encode_request(const TokenRequest& request) {
  if (request.blinded_message.empty()) {
    throw Error(ErrorCode::kMalformed, "token request has empty blinded message");
  }
  ByteWriter w;
  w.u16(request.token_type);
  w.u8(request.truncated_key_id);
  w.raw(request.blinded_message);
  return std::move(w).bytes();
}

TokenRequest decode_request(ByteView bytes, std::size_t blinded_width) {
  ByteReader r(bytes);
  TokenRequest req;
  req.token_type = r.u16();
  req.truncated_key_id = r.u8();
  if (r.remaining() != blinded_width) {
    throw Error(ErrorCode::kMalformed, "token request blinded message width mismatch");
  }
  ByteView blinded = r.raw(blinded_width);
  req.blinded_message.assign(blinded.begin(), blinded.end());
  return req;
}

Bytes token_input(std::uint16_t token_type, const Nonce& nonce, const Digest& challenge_digest,
                  const Digest& token_key_id) {
  ByteWriter w;
  w.u16(token_type);
  w.raw(nonce);
  w.raw(challenge_digest);
  w.raw(token_key_id);
  return std::move(w).bytes();
}

Bytes encode_token(const Token& token) {
  if (token.authenticator.empty()) {
    throw Error(ErrorCode::kMalformed, "token has empty authenticator");
  }
  Bytes out = token_input(token);
  out.insert(out.end(), token.authenticator.begin(), token.authenticator.end());
  return out;
}

Token decode_token(ByteView bytes, std::size_t authenticator_width) {
  ByteReader r(bytes);
  Token t;
  t.token_type = r.u16();
  ByteView nonce = r.raw(kNonceSize);
  std::copy(nonce.begin(), nonce.end(), t.nonce.begin());
  t.challenge_digest = to_digest(r.raw(32));
  t.token_key_id = to_digest(r.raw(32));
  if (r.remaining() != authenticator_width || authenticator_width == 0) {
    throw Error(ErrorCode::kMalformed, "token authenticator width mismatch");
  }
  ByteView auth = r.raw(authenticator_width);
  t.authenticator.assign(auth.begin(), auth.end());
  return t;
}

Digest peek_token_key_id(ByteView bytes) {
  if (bytes.size() < kTokenInputSize) {
    throw Error(ErrorCode::kMalformed, "token shorter than its fixed fields");
  }
  return to_digest(bytes.subspan(66, 32));
}

bool verify_token(const Token& token, const blindsig::PublicKey& pk) {
  if (token.token_key_id != derive_key_id(pk)) return false;
  if (token.token_type != token_type_for(pk)) return false;
  return blindsig::verify(pk, token_input(token), token.authenticator, token_signature_params());
}

}  // namespace agetoken::tokens
