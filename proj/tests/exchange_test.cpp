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

#include <gtest/gtest.h>

#include "agetoken/stats.hpp"
#include "test_support.hpp"

namespace agetoken::exchange {
namespace {

using agetoken::testing::adult_evidence;
using agetoken::testing::t0;
using agetoken::testing::test_key;
using agetoken::testing::World;
using actors::ChallengeMode;
using actors::Client;

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInternal;
}

void register_issuer(registry::TrustedList& list, const std::string& name,
                     const blindsig::KeyPair& key, const AgePolicy& policy) {
  registry::TrustedListEntry e;
  e.entity_id = name;
  e.role = registry::Role::kIssuer;
  e.keys.push_back(registry::make_issuer_key(key.public_key(), t0() - std::chrono::hours(1),
                                             t0() + std::chrono::hours(24 * 30)));
  e.metadata[std::string(registry::kIssuerPolicyKey)] = policy.label();
  list.register_entry(e);
}

// The World's issuer plays "A". Exchange points "B" and "C" and an origin
// that trusts B are added on top.
struct ExchangeWorld : World {
  ExchangeWorld()
      : b({"issuer-b.example", policy}, test_key(1024, 1), list,
          std::make_shared<MemorySpentStore>(), clock),
        c({"issuer-c.example", policy}, test_key(1024, 2), list,
          std::make_shared<MemorySpentStore>(), clock),
        origin_b({"origin-b.example", "issuer-b.example", policy, actors::kDefaultBoundContextTtl},
                 list, std::make_shared<MemorySpentStore>(), clock) {
    register_issuer(*list, "issuer-b.example", test_key(1024, 1), policy);
    register_issuer(*list, "issuer-c.example", test_key(1024, 2), policy);
  }

  tokens::Token swap(Client& client, ExchangePoint& point, const tokens::Token& old,
                     const tokens::TokenChallenge& target) {
    const ExchangeRequest req = begin_exchange(client, old, target, point.public_key(), rng);
    const Bytes sig = point.exchange(decode_exchange_request(encode_exchange_request(req)));
    return client.finalize_batch(std::span<const Bytes>(&sig, 1)).front();
  }

  ExchangePoint b;
  ExchangePoint c;
  actors::Origin origin_b;
};

TEST(Exchange, RequestCodecRoundTrip) {
  ExchangeWorld w;
  Client client;
  const auto old = w.obtain(client, 1, adult_evidence()).front();
  const auto target = w.origin_b.make_challenge(ChallengeMode::kBatch, w.rng);
  Client fresh;
  const ExchangeRequest req = begin_exchange(fresh, old, target, w.b.public_key(), w.rng);
  const Bytes encoded = encode_exchange_request(req);
  EXPECT_EQ(decode_exchange_request(encoded), req);
  EXPECT_EQ(req.exchange_challenge_digest,
            tokens::challenge_digest(tokens::encode_challenge(target)));
  EXPECT_THROW(decode_exchange_request(ByteView(encoded).first(encoded.size() - 1)), Error);
}

TEST(Exchange, AToBRedeemsAtB) {
  ExchangeWorld w;
  Client client;
  const auto old = w.obtain(client, 1, adult_evidence()).front();
  client.store().take_any();
  const auto target = w.origin_b.make_challenge(ChallengeMode::kBatch, w.rng);
  const auto fresh = w.swap(client, w.b, old, target);
  EXPECT_EQ(fresh.token_key_id, w.b.key_id());
  const Bytes cb = tokens::encode_challenge(target);
  EXPECT_TRUE(w.origin_b.redeem(client.redeem(cb), cb).granted);
  // The A token is gone from the client and consumed at B.
  EXPECT_TRUE(w.b.spent_store().contains(old.nonce, old.token_key_id));
}

TEST(Exchange, DoubleExchangeRejected) {
  ExchangeWorld w;
  Client client;
  const auto old = w.obtain(client, 1, adult_evidence()).front();
  const auto target = w.origin_b.make_challenge(ChallengeMode::kBatch, w.rng);
  w.swap(client, w.b, old, target);
  EXPECT_EQ(code_of([&] { w.swap(client, w.b, old, target); }), ErrorCode::kDoubleSpend);
  client.store().clear_pending();
  // A different exchange point keeps its own spent set.
  const auto target_c = tokens::TokenChallenge{tokens::token_type_for(w.c.public_key()),
                                               "issuer-c.example", {}, ""};
  EXPECT_NO_THROW(w.swap(client, w.c, old, target_c));
}

TEST(Exchange, ChainAToBToC) {
  ExchangeWorld w;
  Client client;
  const auto a = w.obtain(client, 1, adult_evidence()).front();
  const auto target_b = w.origin_b.make_challenge(ChallengeMode::kBatch, w.rng);
  const auto b = w.swap(client, w.b, a, target_b);
  const tokens::TokenChallenge target_c{tokens::token_type_for(w.c.public_key()), "issuer-c.example",
                                        {}, ""};
  const auto c = w.swap(client, w.c, b, target_c);
  EXPECT_EQ(c.token_key_id, w.c.key_id());
  EXPECT_TRUE(tokens::verify_token(c, w.c.public_key()));
  // Swapping the B token back through B is also fine; B only refuses its
  // own double exchange.
  Client other;
  const auto a2 = w.obtain(other, 1, adult_evidence()).front();
  const auto b2 = w.swap(other, w.b, a2, target_b);
  EXPECT_NO_THROW(w.swap(other, w.b, b2, target_b));
}

TEST(Exchange, RejectsBadInputs) {
  ExchangeWorld w;
  Client client;
  auto old = w.obtain(client, 1, adult_evidence()).front();
  const auto target = w.origin_b.make_challenge(ChallengeMode::kBatch, w.rng);

  Client c1;
  auto forged = old;
  forged.authenticator[0] ^= 1;
  auto req = begin_exchange(c1, forged, target, w.b.public_key(), w.rng);
  EXPECT_EQ(code_of([&] { w.b.exchange(req); }), ErrorCode::kInvalidToken);

  auto unknown = old;
  unknown.token_key_id[3] ^= 1;
  req.spent_token = unknown;
  EXPECT_EQ(code_of([&] { w.b.exchange(req); }), ErrorCode::kUnknownIssuer);

  req.spent_token = old;
  auto wrong_key = req;
  wrong_key.new_request.truncated_key_id ^= 1;
  EXPECT_EQ(code_of([&] { w.b.exchange(wrong_key); }), ErrorCode::kKeyIdMismatch);
  auto wrong_width = req;
  wrong_width.new_request.blinded_message.pop_back();
  EXPECT_EQ(code_of([&] { w.b.exchange(wrong_width); }), ErrorCode::kMalformed);

  // Failed attempts did not consume the token.
  EXPECT_NO_THROW(w.b.exchange(req));
}

TEST(Exchange, CannotLaunderWeakerPolicy) {
  ExchangeWorld w;
  // A 13+ issuer that the same attester serves.
  auto clock = w.clock;
  actors::Issuer teen({"teen.example", AgePolicy::make(13, Assurance::kLow), 10}, test_key(1024, 3),
                      w.list, clock);
  register_issuer(*w.list, "teen.example", test_key(1024, 3), AgePolicy::make(13, Assurance::kLow));
  Client client;
  const tokens::TokenChallenge teen_challenge{tokens::token_type_for(teen.public_key()),
                                              "teen.example", {}, ""};
  const auto reqs = client.begin_issuance(teen_challenge, teen.public_key(), 1, 10, w.rng);
  const auto d = w.attester.attest(adult_evidence(), AgePolicy::make(13, Assurance::kLow), t0());
  const auto teen_token = client.finalize_batch(teen.issue(w.attester.forward(d, reqs))).front();

  const auto target = w.origin_b.make_challenge(ChallengeMode::kBatch, w.rng);
  EXPECT_EQ(code_of([&] { w.swap(client, w.b, teen_token, target); }), ErrorCode::kPolicyDenied);

  // The other direction is fine: an 18+ token satisfies a 13+ exchange.
  ExchangePoint teen_point({"teen.example", AgePolicy::make(13, Assurance::kLow)}, test_key(1024, 3),
                           w.list, std::make_shared<MemorySpentStore>(), clock);
  Client c2;
  const auto adult = w.obtain(c2, 1, adult_evidence()).front();
  EXPECT_NO_THROW(w.swap(c2, teen_point, adult, teen_challenge));
}

// The origin sees tokens that started at A or C and were exchanged at B,
// and guesses the source from the bytes it receives. Without exchange the
// key id gives the answer away.
TEST(Exchange, HidesTheSourceIssuer) {
  ExchangeWorld w;
  actors::Issuer issuer_c({"issuer-c.example", w.policy, 10}, test_key(1024, 2), w.list, w.clock);
  const auto target = w.origin_b.make_challenge(ChallengeMode::kBatch, w.rng);
  const Bytes cb = tokens::encode_challenge(target);
  const Digest a_id = w.issuer.key_id();
  std::uint64_t correct_plain = 0, correct_exchanged = 0, trials = 200;
  for (std::uint64_t i = 0; i < trials; ++i) {
    const bool from_c = w.rng.uniform(2) == 1;
    Client client;
    tokens::Token source;
    if (from_c) {
      const tokens::TokenChallenge cc{tokens::token_type_for(issuer_c.public_key()),
                                      "issuer-c.example", {}, ""};
      const auto reqs = client.begin_issuance(cc, issuer_c.public_key(), 1, 10, w.rng);
      const auto d = w.attester.attest(adult_evidence(), w.policy, w.clock->now());
      source = client.finalize_batch(issuer_c.issue(w.attester.forward(d, reqs))).front();
    } else {
      source = w.obtain(client, 1, adult_evidence()).front();
    }
    client.store().take_any();
    correct_plain += (source.token_key_id != a_id) == from_c ? 1 : 0;

    const auto exchanged = w.swap(client, w.b, source, target);
    ASSERT_TRUE(w.origin_b.redeem(client.redeem(cb), cb).granted);
    // Best observable feature: low bit of the authenticator.
    const bool guess = (tokens::encode_token(exchanged).back() & 1) == 1;
    correct_exchanged += guess == from_c ? 1 : 0;
  }
  EXPECT_EQ(correct_plain, trials);
  EXPECT_GE(stats::binomial_two_sided_p(correct_exchanged, trials, 0.5), 0.01)
      << correct_exchanged << "/" << trials;
}

}  // namespace
}  // namespace agetoken::exchange
