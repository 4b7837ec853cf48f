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

// Issuer-hiding exchange: an issuer spends a valid token from any trusted
// issuer (itself included) and blind-signs one replacement under its own
// key. The old token is the attestation; no KYC step is involved.

#ifndef AGETOKEN_EXCHANGE_HPP_
#define AGETOKEN_EXCHANGE_HPP_

#include <memory>
#include <string>

#include "agetoken/actors.hpp"
#include "agetoken/blindsig.hpp"
#include "agetoken/registry.hpp"
#include "agetoken/spent_store.hpp"
#include "agetoken/tokens.hpp"

namespace agetoken::exchange {

struct ExchangeRequest {
  tokens::Token spent_token;
  tokens::TokenRequest new_request;
  // Digest of the challenge the replacement token commits to. Opaque to the
  // exchange point, which only sees the blinded request.
  Digest exchange_challenge_digest{};

  friend bool operator==(const ExchangeRequest&, const ExchangeRequest&) = default;
};

// u16-len token | u16-len request | digest[32]
Bytes encode_exchange_request(const ExchangeRequest& req);
ExchangeRequest decode_exchange_request(ByteView bytes);

class ExchangePoint {
 public:
  struct Config {
    std::string issuer_name;
    AgePolicy policy;
  };

  ExchangePoint(Config config, blindsig::KeyPair key,
                std::shared_ptr<const registry::TrustedList> trusted,
                std::shared_ptr<SpentStore> spent, std::shared_ptr<const Clock> clock);

  // Consumes the old token and returns one blind signature. Errors:
  // kMalformed / kKeyIdMismatch for a request not aimed at this key,
  // kUnknownIssuer when the old token's key does not resolve to an active
  // issuer, kPolicyDenied when that issuer's policy does not cover ours,
  // kInvalidToken when the old token does not verify, kDoubleSpend when it
  // was already exchanged here.
  Bytes exchange(const ExchangeRequest& req);

  const Config& config() const { return config_; }
  blindsig::PublicKey public_key() const { return key_.public_key(); }
  const Digest& key_id() const { return key_id_; }
  SpentStore& spent_store() { return *spent_; }

 private:
  Config config_;
  blindsig::KeyPair key_;
  Digest key_id_;
  std::shared_ptr<const registry::TrustedList> trusted_;
  std::shared_ptr<SpentStore> spent_;
  std::shared_ptr<const Clock> clock_;
};

// Client side: blinds one replacement token for `new_challenge` under the
// exchange key and pairs it with `old_token`. Complete with
// Client::finalize_batch on the single response.
ExchangeRequest begin_exchange(actors::Client& client, tokens::Token old_token,
                               const tokens::TokenChallenge& new_challenge,
                               const blindsig::PublicKey& exchange_key, Entropy& rng);

}  // namespace agetoken::exchange

#endif  // AGETOKEN_EXCHANGE_HPP_
