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

// Hashing, entropy sources and the conventional (non-blind) signature used
// for attester-to-issuer authentication. Thin wrappers over libcrypto.

#ifndef AGETOKEN_CRYPTO_HPP_
#define AGETOKEN_CRYPTO_HPP_

#include <cstdint>
#include <mutex>

#include "agetoken/common.hpp"

namespace agetoken {

Digest sha256(ByteView data);
Bytes sha384(ByteView data);

inline constexpr std::size_t kSha384Size = 48;

// Source of random bytes. Implementations must be safe to call from
// multiple threads.
class Entropy {
 public:
  virtual ~Entropy() = default;
  virtual void fill(std::span<std::uint8_t> out) = 0;

  Bytes bytes(std::size_t n);
  // Uniform integer in [0, bound); bound must be non-zero.
  std::uint64_t uniform(std::uint64_t bound);
};

// Operating-system CSPRNG.
class SystemEntropy final : public Entropy {
 public:
  void fill(std::span<std::uint8_t> out) override;
};

// Deterministic stream: SHA-256(seed || label || counter) blocks. Used for
// reproducible tests and seeded simulation runs, never for deployed keys.
class SeededEntropy final : public Entropy {
 public:
  explicit SeededEntropy(std::uint64_t seed, std::string_view label = "");

  void fill(std::span<std::uint8_t> out) override;

 private:
  std::mutex mu_;
  Bytes key_;
  std::uint64_t counter_ = 0;
  Digest block_{};
  std::size_t used_ = 32;
};

// Entropy that fails on every draw; exercises entropy-failure paths.
class FailingEntropy final : public Entropy {
 public:
  void fill(std::span<std::uint8_t>) override {
    throw Error(ErrorCode::kEntropy, "entropy source unavailable");
  }
};

inline constexpr std::size_t kEd25519PublicKeySize = 32;
inline constexpr std::size_t kEd25519SignatureSize = 64;

class Ed25519SigningKey {
 public:
  static Ed25519SigningKey generate(Entropy& rng);
  static Ed25519SigningKey from_seed(ByteView seed);

  const Bytes& seed() const { return seed_; }
  const Bytes& public_key() const { return public_key_; }
  Bytes sign(ByteView message) const;

 private:
  Bytes seed_;
  Bytes public_key_;
};

bool ed25519_verify(ByteView public_key, ByteView message, ByteView signature);

}  // namespace agetoken

#endif  // AGETOKEN_CRYPTO_HPP_
