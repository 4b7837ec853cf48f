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

#ifndef AGETOKEN_COMMON_HPP_
#define AGETOKEN_COMMON_HPP_

#include <array>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace agetoken {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;
using Digest = std::array<std::uint8_t, 32>;

// Seconds since the Unix epoch, UTC.
using Timestamp = std::chrono::sys_seconds;

std::string to_hex(ByteView bytes);
// Accepts upper or lower case; throws Error(kMalformed) on odd length or
// non-hex characters.
Bytes from_hex(std::string_view hex);
Bytes to_bytes(std::string_view text);
Digest to_digest(ByteView bytes);

inline ByteView view(const Digest& d) { return ByteView(d.data(), d.size()); }

// Stable error taxonomy. The numeric values are part of the CLI exit-code
// contract (see docs/cli.md) and must not be renumbered.
enum class ErrorCode : int {
  kMalformed = 40,
  kAttesterAuth = 41,
  kKeyIdMismatch = 42,
  kPolicyDenied = 43,
  kUnknownIssuer = 44,
  kAllowanceExceeded = 45,
  kInvalidToken = 46,
  kDoubleSpend = 49,
  kContextExpired = 50,
  kPoolExhausted = 60,
  kIssuerMisbehavior = 61,
  kIssuanceInProgress = 62,
  kInvalidArgument = 64,
  kEncoding = 65,
  kConfig = 66,
  kNetwork = 70,
  kEntropy = 71,
  kIo = 74,
  kInternal = 1,
};

std::string_view error_code_name(ErrorCode code);
// HTTP status used by the services layer for this error.
int http_status(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() const = 0;
};

class SystemClock final : public Clock {
 public:
  Timestamp now() const override;
};

// Manually advanced clock for deterministic simulation and expiry tests.
class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(Timestamp start = Timestamp{std::chrono::seconds{1'750'000'000}})
      : seconds_(start.time_since_epoch().count()) {}

  Timestamp now() const override {
    return Timestamp{std::chrono::seconds{seconds_.load()}};
  }
  void advance(std::chrono::seconds by) { seconds_ += by.count(); }
  void set(Timestamp t) { seconds_ = t.time_since_epoch().count(); }

 private:
  std::atomic<std::int64_t> seconds_;
};

inline std::int64_t to_unix(Timestamp t) { return t.time_since_epoch().count(); }
inline Timestamp from_unix(std::int64_t s) { return Timestamp{std::chrono::seconds{s}}; }

// Big-endian writer for the length-prefixed wire layouts.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void raw(ByteView bytes) { out_.insert(out_.end(), bytes.begin(), bytes.end()); }
  // Length prefix of 1, 2 or 4 bytes; throws kInvalidArgument if the body
  // does not fit the prefix.
  void prefixed(ByteView body, int prefix_bytes);
  void prefixed(std::string_view text, int prefix_bytes);

  const Bytes& bytes() const& { return out_; }
  Bytes bytes() && { return std::move(out_); }

 private:
  Bytes out_;
};

// Reader counterpart; every shortfall throws Error(kMalformed).
class ByteReader {
 public:
  explicit ByteReader(ByteView in) : in_(in) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  ByteView raw(std::size_t n);
  ByteView prefixed(int prefix_bytes);
  std::string prefixed_string(int prefix_bytes);

  std::size_t remaining() const { return in_.size() - pos_; }
  void expect_end(std::string_view what) const;

 private:
  ByteView in_;
  std::size_t pos_ = 0;
};

}  // namespace agetoken

#endif  // AGETOKEN_COMMON_HPP_
