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

#include "agetoken/common.hpp"

#include <algorithm>

namespace agetoken {

namespace {

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::string to_hex(ByteView bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) {
    throw Error(ErrorCode::kMalformed, "hex string has odd length");
  }
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) {
      throw Error(ErrorCode::kMalformed, "invalid hex character");
    }
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

Bytes to_bytes(std::string_view text) { return Bytes(text.begin(), text.end()); }

Digest to_digest(ByteView bytes) {
  if (bytes.size() != 32) {
    throw Error(ErrorCode::kMalformed, "expected 32-byte digest");
  }
  Digest d;
  std::copy(bytes.begin(), bytes.end(), d.begin());
  return d;
}

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformed: return "malformed";
    case ErrorCode::kAttesterAuth: return "attester-auth";
    case ErrorCode::kKeyIdMismatch: return "key-id-mismatch";
    case ErrorCode::kPolicyDenied: return "policy-denied";
    case ErrorCode::kUnknownIssuer: return "unknown-issuer";
    case ErrorCode::kAllowanceExceeded: return "allowance-exceeded";
    case ErrorCode::kInvalidToken: return "invalid-token";
    case ErrorCode::kDoubleSpend: return "double-spend";
    case ErrorCode::kContextExpired: return "context-expired";
    case ErrorCode::kPoolExhausted: return "pool-exhausted";
    case ErrorCode::kIssuerMisbehavior: return "issuer-misbehavior";
    case ErrorCode::kIssuanceInProgress: return "issuance-in-progress";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kEncoding: return "encoding";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kNetwork: return "network";
    case ErrorCode::kEntropy: return "entropy";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kInternal: return "internal";
  }
  return "internal";
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformed:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kEncoding:
    case ErrorCode::kKeyIdMismatch:
    case ErrorCode::kInvalidToken:
      return 400;
    case ErrorCode::kAttesterAuth:
      return 401;
    case ErrorCode::kPolicyDenied:
    case ErrorCode::kAllowanceExceeded:
      return 403;
    case ErrorCode::kUnknownIssuer:
      return 404;
    case ErrorCode::kDoubleSpend:
      return 409;
    case ErrorCode::kContextExpired:
      return 410;
    default:
      return 500;
  }
}

Timestamp SystemClock::now() const {
  return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
}

void ByteWriter::u16(std::uint16_t v) {
  out_.push_back(static_cast<std::uint8_t>(v >> 8));
  out_.push_back(static_cast<std::uint8_t>(v));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
}

void ByteWriter::prefixed(ByteView body, int prefix_bytes) {
  const std::uint64_t limit = prefix_bytes == 1 ? 0xff : prefix_bytes == 2 ? 0xffff : 0xffffffffULL;
  if (body.size() > limit) {
    throw Error(ErrorCode::kInvalidArgument, "field too long for its length prefix");
  }
  switch (prefix_bytes) {
    case 1: u8(static_cast<std::uint8_t>(body.size())); break;
    case 2: u16(static_cast<std::uint16_t>(body.size())); break;
    case 4: u32(static_cast<std::uint32_t>(body.size())); break;
    default: throw Error(ErrorCode::kInternal, "unsupported prefix width");
  }
  raw(body);
}

void ByteWriter::prefixed(std::string_view text, int prefix_bytes) {
  prefixed(ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()), prefix_bytes);
}

std::uint8_t ByteReader::u8() { return raw(1)[0]; }

std::uint16_t ByteReader::u16() {
  ByteView b = raw(2);
  return static_cast<std::uint16_t>((b[0] << 8) | b[1]);
}

std::uint32_t ByteReader::u32() {
  ByteView b = raw(4);
  std::uint32_t v = 0;
  for (std::uint8_t x : b) v = (v << 8) | x;
  return v;
}

std::uint64_t ByteReader::u64() {
  ByteView b = raw(8);
  std::uint64_t v = 0;
  for (std::uint8_t x : b) v = (v << 8) | x;
  return v;
}

ByteView ByteReader::raw(std::size_t n) {
  if (n > remaining()) {
    throw Error(ErrorCode::kMalformed, "truncated input");
  }
  ByteView out = in_.subspan(pos_, n);
  pos_ += n;
  return out;
}

ByteView ByteReader::prefixed(int prefix_bytes) {
  std::size_t n = 0;
  switch (prefix_bytes) {
    case 1: n = u8(); break;
    case 2: n = u16(); break;
    case 4: n = u32(); break;
    default: throw Error(ErrorCode::kInternal, "unsupported prefix width");
  }
  return raw(n);
}

std::string ByteReader::prefixed_string(int prefix_bytes) {
  ByteView b = prefixed(prefix_bytes);
  return std::string(b.begin(), b.end());
}

void ByteReader::expect_end(std::string_view what) const {
  if (remaining() != 0) {
    throw Error(ErrorCode::kMalformed, std::string(what) + ": trailing bytes");
  }
}

}  // namespace agetoken
