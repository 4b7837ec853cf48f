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

#include "agetoken/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include <algorithm>
#include <memory>

namespace agetoken {

namespace {

struct PkeyDeleter {
  void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* p) const { EVP_MD_CTX_free(p); }
};
using PkeyPtr = std::unique_ptr<EVP_PKEY, PkeyDeleter>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;

}  // namespace

Digest sha256(ByteView data) {
  Digest out;
  SHA256(data.data(), data.size(), out.data());
  return out;
}

Bytes sha384(ByteView data) {
  Bytes out(kSha384Size);
  SHA384(data.data(), data.size(), out.data());
  return out;
}

Bytes Entropy::bytes(std::size_t n) {
  Bytes out(n);
  fill(out);
  return out;
}

std::uint64_t Entropy::uniform(std::uint64_t bound) {
  if (bound == 0) throw Error(ErrorCode::kInvalidArgument, "uniform: zero bound");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  for (;;) {
    std::uint8_t buf[8];
    fill(buf);
    std::uint64_t v = 0;
    for (std::uint8_t b : buf) v = (v << 8) | b;
    if (v < limit) return v % bound;
  }
}

void SystemEntropy::fill(std::span<std::uint8_t> out) {
  if (out.empty()) return;
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) {
    throw Error(ErrorCode::kEntropy, "RAND_bytes failed");
  }
}

SeededEntropy::SeededEntropy(std::uint64_t seed, std::string_view label) {
  ByteWriter w;
  w.raw(to_bytes("agetoken-seeded-entropy"));
  w.u64(seed);
  w.prefixed(label, 2);
  key_ = std::move(w).bytes();
}

void SeededEntropy::fill(std::span<std::uint8_t> out) {
  std::lock_guard<std::mutex> lock(mu_);
  std::size_t written = 0;
  while (written < out.size()) {
    if (used_ == block_.size()) {
      ByteWriter w;
      w.raw(key_);
      w.u64(counter_++);
      block_ = sha256(w.bytes());
      used_ = 0;
    }
    std::size_t take = std::min(out.size() - written, block_.size() - used_);
    std::copy_n(block_.begin() + used_, take, out.begin() + written);
    used_ += take;
    written += take;
  }
}

Ed25519SigningKey Ed25519SigningKey::generate(Entropy& rng) { return from_seed(rng.bytes(32)); }

Ed25519SigningKey Ed25519SigningKey::from_seed(ByteView seed) {
  if (seed.size() != 32) {
    throw Error(ErrorCode::kInvalidArgument, "ed25519 seed must be 32 bytes");
  }
  PkeyPtr pkey(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed.data(), seed.size()));
  if (!pkey) throw Error(ErrorCode::kInternal, "ed25519 key construction failed");
  Ed25519SigningKey key;
  key.seed_.assign(seed.begin(), seed.end());
  key.public_key_.resize(kEd25519PublicKeySize);
  std::size_t len = key.public_key_.size();
  if (EVP_PKEY_get_raw_public_key(pkey.get(), key.public_key_.data(), &len) != 1 ||
      len != kEd25519PublicKeySize) {
    throw Error(ErrorCode::kInternal, "ed25519 public key export failed");
  }
  return key;
}

Bytes Ed25519SigningKey::sign(ByteView message) const {
  PkeyPtr pkey(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed_.data(), seed_.size()));
  MdCtxPtr ctx(EVP_MD_CTX_new());
  if (!pkey || !ctx || EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, pkey.get()) != 1) {
    throw Error(ErrorCode::kInternal, "ed25519 sign init failed");
  }
  Bytes sig(kEd25519SignatureSize);
  std::size_t len = sig.size();
  if (EVP_DigestSign(ctx.get(), sig.data(), &len, message.data(), message.size()) != 1) {
    throw Error(ErrorCode::kInternal, "ed25519 sign failed");
  }
  return sig;
}

bool ed25519_verify(ByteView public_key, ByteView message, ByteView signature) {
  if (public_key.size() != kEd25519PublicKeySize || signature.size() != kEd25519SignatureSize) {
    return false;
  }
  PkeyPtr pkey(EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, public_key.data(),
                                           public_key.size()));
  MdCtxPtr ctx(EVP_MD_CTX_new());
  if (!pkey || !ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, pkey.get()) != 1) {
    return false;
  }
  return EVP_DigestVerify(ctx.get(), signature.data(), signature.size(), message.data(),
                          message.size()) == 1;
}

}  // namespace agetoken
