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

#include "agetoken/exchange.hpp"

namespace agetoken::exchange {

Bytes encode_exchange_request(const ExchangeRequest& req) {
  ByteWriter w;
  w.prefixed(tokens::encode_token(req.spent_token), 2);
  w.prefixed(tokens::encode_request(req.new_request), 2);
  w.raw(req.exchange_challenge_digest);
  return std::move(w).bytes();
}

ExchangeRequest decode_exchange_request(ByteView bytes) {
  ByteReader r(bytes);
  ExchangeRequest req;
  ByteView token = r.prefixed(2);
  if (token.size() <= tokens::kTokenInputSize) throw Error(ErrorCode::kMalformed, "short token");
  req.spent_token = tokens::decode_token(token, token.size() - tokens::kTokenInputSize);
  ByteView request = r.prefixed(2);
  if (request.size() < 4) throw Error(ErrorCode::kMalformed, "short token request");
  req.new_request = tokens::decode_request(request, request.size() - 3);
  req.exchange_challenge_digest = to_digest(r.raw(32));
  r.expect_end("exchange request");
  return req;
}

ExchangePoint::ExchangePoint(Config config, blindsig::KeyPair key,
                             std::shared_ptr<const registry::TrustedList> trusted,
                             std::shared_ptr<SpentStore> spent, std::shared_ptr<const Clock> clock)
    : config_(std::move(config)),
      key_(std::move(key)),
      key_id_(tokens::derive_key_id(key_.public_key())),
      trusted_(std::move(trusted)),
      spent_(std::move(spent)),
      clock_(std::move(clock)) {}

Bytes ExchangePoint::exchange(const ExchangeRequest& req) {
  const blindsig::PublicKey pk = key_.public_key();
  const tokens::TokenRequest& next = req.new_request;
  if (next.token_type != tokens::token_type_for(pk) ||
      next.blinded_message.size() != pk.modulus_bytes()) {
    throw Error(ErrorCode::kMalformed, "replacement request does not match the exchange key");
  }
  if (next.truncated_key_id != tokens::truncate_key_id(key_id_)) {
    throw Error(ErrorCode::kKeyIdMismatch, "replacement request is for a different key");
  }

  const Timestamp now = clock_->now();
  const tokens::Token& old = req.spent_token;
  std::optional<registry::ResolvedKey> source = trusted_->resolve_key(old.token_key_id, now);
  if (!source || source->role != registry::Role::kIssuer ||
      source->key.algorithm != registry::KeyAlgorithm::kBlindRsa) {
    throw Error(ErrorCode::kUnknownIssuer, "old token's issuer is not trusted");
  }
  std::optional<AgePolicy> source_policy = registry::issuer_policy(source->metadata);
  if (!source_policy || !source_policy->satisfies(config_.policy)) {
    throw Error(ErrorCode::kPolicyDenied, "old token's policy does not cover " + config_.policy.label());
  }
  if (!tokens::verify_token(old, tokens::decode_public_key(source->key.public_key))) {
    throw Error(ErrorCode::kInvalidToken, "old token does not verify");
  }
  if (!spent_->insert_if_absent(
          SpentTokenRecord{old.nonce, old.token_key_id, config_.issuer_name, now})) {
    throw Error(ErrorCode::kDoubleSpend, "old token was already exchanged");
  }
  return blindsig::blind_sign(key_, next.blinded_message);
}

ExchangeRequest begin_exchange(actors::Client& client, tokens::Token old_token,
                               const tokens::TokenChallenge& new_challenge,
                               const blindsig::PublicKey& exchange_key, Entropy& rng) {
  std::vector<tokens::TokenRequest> reqs =
      client.begin_issuance(new_challenge, exchange_key, 1, 1, rng);
  return ExchangeRequest{std::move(old_token), std::move(reqs.front()),
                         tokens::challenge_digest(tokens::encode_challenge(new_challenge))};
}

}  // namespace agetoken::exchange
