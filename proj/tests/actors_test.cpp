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

#include "agetoken/actors.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <set>
#include <thread>

#include "test_support.hpp"

namespace agetoken::actors {
namespace {

namespace chr = std::chrono;
using agetoken::testing::adult_evidence;
using agetoken::testing::minor_evidence;
using agetoken::testing::t0;
using agetoken::testing::test_key;
using agetoken::testing::World;

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInternal;
}

Timestamp midday(chr::year_month_day d) { return chr::sys_days{d} + chr::hours(12); }

bool contains(const Bytes& hay, ByteView needle) {
  if (needle.empty()) return true;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

TEST(Dates, ParseAndFormat) {
  EXPECT_EQ(format_date(parse_date("2007-02-28")), "2007-02-28");
  for (const char* bad : {"2007-2-28", "2007-02-30", "2007/02/28", "20070228", "2007-02-2x", ""}) {
    EXPECT_EQ(code_of([&] { parse_date(bad); }), ErrorCode::kMalformed) << bad;
  }
  EXPECT_EQ(utc_date(from_unix(0)), parse_date("1970-01-01"));
  EXPECT_EQ(utc_date(from_unix(86399)), parse_date("1970-01-01"));
  EXPECT_EQ(utc_date(from_unix(86400)), parse_date("1970-01-02"));
}

TEST(Dates, AgeBoundaryPlusMinusOneDay) {
  const auto dob = parse_date("2007-06-15");
  const auto birthday = chr::sys_days{parse_date("2025-06-15")};
  EXPECT_FALSE(has_reached_age(dob, 18, chr::year_month_day{birthday - chr::days(1)}));
  EXPECT_TRUE(has_reached_age(dob, 18, chr::year_month_day{birthday}));
  EXPECT_TRUE(has_reached_age(dob, 18, chr::year_month_day{birthday + chr::days(1)}));
}

TEST(Dates, LeapDayBirthdays) {
  const auto dob = parse_date("2008-02-29");
  EXPECT_FALSE(has_reached_age(dob, 18, parse_date("2026-02-28")));
  EXPECT_TRUE(has_reached_age(dob, 18, parse_date("2026-03-01")));
  EXPECT_FALSE(has_reached_age(dob, 16, parse_date("2024-02-28")));
  EXPECT_TRUE(has_reached_age(dob, 16, parse_date("2024-02-29")));
}

TEST(Dates, MatchesDayCountOracle) {
  // Oracle: age in whole years from field comparison.
  SeededEntropy rng(51);
  for (int i = 0; i < 5000; ++i) {
    const chr::sys_days dob_days{chr::days(static_cast<int>(rng.uniform(20000)))};
    const chr::year_month_day dob{dob_days};
    if (dob.month() == chr::February && dob.day() == chr::day{29}) continue;
    const chr::year_month_day today{dob_days + chr::days(static_cast<int>(rng.uniform(15000)))};
    int years = static_cast<int>(today.year()) - static_cast<int>(dob.year());
    if (std::pair{static_cast<unsigned>(today.month()), static_cast<unsigned>(today.day())} <
        std::pair{static_cast<unsigned>(dob.month()), static_cast<unsigned>(dob.day())}) {
      --years;
    }
    const unsigned threshold = 1 + static_cast<unsigned>(rng.uniform(40));
    ASSERT_EQ(has_reached_age(dob, threshold, today), years >= static_cast<int>(threshold))
        << format_date(dob) << " " << format_date(today) << " " << threshold;
  }
}

TEST(Attester, GrantsOnAgeAndAssurance) {
  SeededEntropy rng(52);
  Attester a({"att", 10}, Ed25519SigningKey::generate(rng));
  const Timestamp now = midday(parse_date("2025-06-15"));
  const auto dob = parse_date("2007-06-15");
  struct Case {
    EvidenceKind kind;
    Assurance required;
    bool granted;
  };
  for (const Case& c : {Case{EvidenceKind::kDeclared, Assurance::kLow, true},
                        Case{EvidenceKind::kDeclared, Assurance::kSubstantial, false},
                        Case{EvidenceKind::kDocumentMock, Assurance::kSubstantial, true},
                        Case{EvidenceKind::kDocumentMock, Assurance::kHigh, false},
                        Case{EvidenceKind::kDeviceAttestedMock, Assurance::kHigh, true}}) {
    const auto d = a.attest({dob, c.kind, "h"}, AgePolicy::make(18, c.required), now);
    EXPECT_EQ(d.granted, c.granted);
    EXPECT_EQ(d.batch_allowance, c.granted ? 10u : 0u);
  }
  const auto young = a.attest({dob, EvidenceKind::kDeviceAttestedMock, "h"},
                              AgePolicy::make(18, Assurance::kLow), now - chr::days(1));
  EXPECT_FALSE(young.granted);
  EXPECT_EQ(code_of([&] { a.forward(young, {}); }), ErrorCode::kPolicyDenied);
  const auto bad_date = KycEvidence{chr::year_month_day{chr::year{2001}, chr::month{2}, chr::day{30}},
                                    EvidenceKind::kDeclared, "h"};
  EXPECT_EQ(code_of([&] { a.attest(bad_date, AgePolicy{}, now); }), ErrorCode::kMalformed);
}

TEST(Attester, AllowanceBoundsTheBatch) {
  SeededEntropy rng(53);
  Attester a({"att", 3}, Ed25519SigningKey::generate(rng));
  const auto d = a.attest(adult_evidence(), AgePolicy{}, t0());
  std::vector<tokens::TokenRequest> reqs(4, tokens::TokenRequest{2, 1, Bytes(8, 0)});
  EXPECT_EQ(code_of([&] { a.forward(d, reqs); }), ErrorCode::kAllowanceExceeded);
  reqs.pop_back();
  const auto fwd = a.forward(d, reqs);
  EXPECT_TRUE(ed25519_verify(a.public_key(), forwarded_signing_input(fwd), fwd.attester_signature));
  EXPECT_EQ(decode_forwarded(encode_forwarded(fwd)), fwd);
  EXPECT_EQ(decode_decision(encode_decision(d)), d);
}

// Everything the attester emits depends only on (granted, policy, time,
// attester). Two subjects with different birth dates, handles and evidence
// kinds but the same outcome produce identical bytes, and no rendering of
// the birth date or the handle appears.
TEST(Attester, OutputsCarryNoEvidenceFields) {
  SeededEntropy rng(54);
  const auto key = Ed25519SigningKey::generate(rng);
  Attester a({"attester.example", 10}, key);
  const AgePolicy policy = AgePolicy::make(18, Assurance::kLow);
  const Timestamp now = t0();
  const std::vector<tokens::TokenRequest> reqs{tokens::TokenRequest{2, 7, rng.bytes(16)}};
  std::map<bool, Bytes> reference;
  int scanned = 0;
  for (int i = 0; i < 1000; ++i) {
    const chr::sys_days dob_days{chr::days(static_cast<int>(rng.uniform(25000)))};
    KycEvidence ev{chr::year_month_day{dob_days},
                   static_cast<EvidenceKind>(rng.uniform(3)),
                   "subject-" + to_hex(rng.bytes(6))};
    const auto d = a.attest(ev, policy, now);
    Bytes out = encode_decision(d);
    if (d.granted) {
      const Bytes f = encode_forwarded(a.forward(d, reqs));
      out.insert(out.end(), f.begin(), f.end());
    }
    auto [it, inserted] = reference.emplace(d.granted, out);
    if (!inserted) {
      ASSERT_EQ(it->second, out);
    }

    const std::string iso = format_date(ev.date_of_birth);
    std::string compact = iso;
    std::erase(compact, '-');
    ByteWriter days_be;
    days_be.u32(static_cast<std::uint32_t>(dob_days.time_since_epoch().count()));
    ByteWriter secs_be;
    secs_be.u64(static_cast<std::uint64_t>(to_unix(chr::sys_seconds{dob_days})));
    for (const Bytes& needle : {to_bytes(iso), to_bytes(compact), to_bytes(ev.subject_handle),
                                to_bytes(evidence_kind_name(ev.kind)), days_be.bytes(),
                                secs_be.bytes()}) {
      ASSERT_FALSE(contains(out, needle)) << iso;
    }
    ++scanned;
  }
  EXPECT_EQ(scanned, 1000);
  EXPECT_EQ(reference.size(), 2u);
}

TEST(Issuer, IssuesForTrustedAttester) {
  World w;
  Client c;
  const auto tokens = w.obtain(c, 10, adult_evidence());
  EXPECT_EQ(tokens.size(), 10u);
  EXPECT_EQ(c.store().ready_count(), 10u);
  for (const auto& t : tokens) EXPECT_TRUE(tokens::verify_token(t, w.issuer.public_key()));
}

TEST(Issuer, RejectsUntrustedOrForgedForwarding) {
  World w;
  Client c;
  const auto challenge = w.origin.make_challenge(ChallengeMode::kBatch, w.rng);
  const auto reqs = c.begin_issuance(challenge, w.issuer.public_key(), 2, 10, w.rng);
  const auto d = w.attester.attest(adult_evidence(), w.policy, w.clock->now());
  const auto fwd = w.attester.forward(d, reqs);

  SeededEntropy rng(55);
  Attester rogue({"attester.example", 10}, Ed25519SigningKey::generate(rng));
  EXPECT_EQ(code_of([&] { w.issuer.issue(rogue.forward(d, reqs)); }), ErrorCode::kAttesterAuth);

  Attester unknown({"nobody", 10}, w.attester_key);
  EXPECT_EQ(code_of([&] { w.issuer.issue(unknown.forward(d, reqs)); }), ErrorCode::kAttesterAuth);

  auto tampered = fwd;
  tampered.requests.pop_back();
  EXPECT_EQ(code_of([&] { w.issuer.issue(tampered); }), ErrorCode::kAttesterAuth);

  auto upgraded = fwd;
  upgraded.policy = AgePolicy::make(21, Assurance::kLow);
  EXPECT_EQ(code_of([&] { w.issuer.issue(upgraded); }), ErrorCode::kAttesterAuth);

  w.clock->advance(chr::hours(24 * 400));
  EXPECT_EQ(code_of([&] { w.issuer.issue(fwd); }), ErrorCode::kAttesterAuth);
}

TEST(Issuer, PolicyChecks) {
  World w;
  Client c;
  const auto challenge = w.origin.make_challenge(ChallengeMode::kBatch, w.rng);
  const auto reqs = c.begin_issuance(challenge, w.issuer.public_key(), 1, 10, w.rng);

  // Attester metadata trusts 18+/high and 13+/high; 21+ is outside it.
  const auto d21 = w.attester.attest(adult_evidence(), AgePolicy::make(21, Assurance::kLow), t0());
  EXPECT_EQ(code_of([&] { w.issuer.issue(w.attester.forward(d21, reqs)); }),
            ErrorCode::kPolicyDenied);
  // 13+ does not cover the issuer's 18+.
  const auto d13 = w.attester.attest(adult_evidence(), AgePolicy::make(13, Assurance::kLow), t0());
  EXPECT_EQ(code_of([&] { w.issuer.issue(w.attester.forward(d13, reqs)); }),
            ErrorCode::kPolicyDenied);
  // A stronger attested policy covers the issuer's.
  const auto d18h = w.attester.attest(adult_evidence(), AgePolicy::make(18, Assurance::kSubstantial), t0());
  EXPECT_EQ(w.issuer.issue(w.attester.forward(d18h, reqs)).size(), 1u);
}

TEST(Issuer, RequestShapeChecks) {
  World w;
  const auto d = w.attester.attest(adult_evidence(), w.policy, t0());
  Client c;
  const auto challenge = w.origin.make_challenge(ChallengeMode::kBatch, w.rng);
  auto reqs = c.begin_issuance(challenge, w.issuer.public_key(), 1, 10, w.rng);

  auto wrong_key = reqs;
  wrong_key[0].truncated_key_id ^= 1;
  EXPECT_EQ(code_of([&] { w.issuer.issue(w.attester.forward(d, wrong_key)); }),
            ErrorCode::kKeyIdMismatch);
  auto wrong_type = reqs;
  wrong_type[0].token_type = tokens::kTokenTypeBlindRsa2048;
  EXPECT_EQ(code_of([&] { w.issuer.issue(w.attester.forward(d, wrong_type)); }),
            ErrorCode::kMalformed);
  auto wrong_width = reqs;
  wrong_width[0].blinded_message.pop_back();
  EXPECT_EQ(code_of([&] { w.issuer.issue(w.attester.forward(d, wrong_width)); }),
            ErrorCode::kMalformed);

  Attester generous({"attester.example", 20}, w.attester_key);
  std::vector<tokens::TokenRequest> many(11, reqs[0]);
  const auto dg = generous.attest(adult_evidence(), w.policy, t0());
  EXPECT_EQ(code_of([&] { w.issuer.issue(generous.forward(dg, many)); }),
            ErrorCode::kAllowanceExceeded);
}

TEST(Issuer, SuspendedAttesterIsRefused) {
  World w;
  auto entry = *w.list->entity("attester.example");
  entry.status = registry::Status::kSuspended;
  w.list->register_entry(entry);
  Client c;
  EXPECT_EQ(code_of([&] { w.obtain(c, 1, adult_evidence()); }), ErrorCode::kAttesterAuth);
}

TEST(Client, CountingTenThenPoolExhausted) {
  World w;
  Client c;
  w.obtain(c, 10, adult_evidence());
  const auto challenge = w.origin.make_challenge(ChallengeMode::kBatch, w.rng);
  const Bytes cb = tokens::encode_challenge(challenge);
  for (int i = 0; i < 10; ++i) {
    const auto t = c.redeem(cb);
    EXPECT_TRUE(w.origin.redeem(t, cb).granted) << i;
  }
  EXPECT_EQ(code_of([&] { c.redeem(cb); }), ErrorCode::kPoolExhausted);
}

TEST(Client, IssuanceArgumentChecks) {
  World w;
  Client c;
  const auto batch = w.origin.make_challenge(ChallengeMode::kBatch, w.rng);
  const auto bound = w.origin.make_challenge(ChallengeMode::kBound, w.rng);
  const auto pk = w.issuer.public_key();
  EXPECT_EQ(code_of([&] { c.begin_issuance(batch, pk, 0, 10, w.rng); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { c.begin_issuance(bound, pk, 2, 10, w.rng); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { c.begin_issuance(batch, pk, 11, 10, w.rng); }),
            ErrorCode::kAllowanceExceeded);
  EXPECT_EQ(code_of([&] { c.begin_issuance(batch, test_key(2048).public_key(), 1, 10, w.rng); }),
            ErrorCode::kInvalidArgument);
  c.begin_issuance(batch, pk, 1, 10, w.rng);
  EXPECT_EQ(code_of([&] { c.begin_issuance(batch, pk, 1, 10, w.rng); }),
            ErrorCode::kIssuanceInProgress);
}

TEST(Client, MisbehavingIssuerYieldsNoTokens) {
  World w;
  Client c;
  const auto challenge = w.origin.make_challenge(ChallengeMode::kBatch, w.rng);
  const auto reqs = c.begin_issuance(challenge, w.issuer.public_key(), 3, 10, w.rng);
  const auto d = w.attester.attest(adult_evidence(), w.policy, t0());
  auto sigs = w.issuer.issue(w.attester.forward(d, reqs));
  std::swap(sigs[0], sigs[2]);
  EXPECT_EQ(code_of([&] { c.finalize_batch(sigs); }), ErrorCode::kIssuerMisbehavior);
  EXPECT_EQ(c.store().ready_count(), 0u);
  EXPECT_FALSE(c.store().has_pending());

  const auto reqs2 = c.begin_issuance(challenge, w.issuer.public_key(), 2, 10, w.rng);
  auto sigs2 = w.issuer.issue(w.attester.forward(d, reqs2));
  sigs2.pop_back();
  EXPECT_EQ(code_of([&] { c.finalize_batch(sigs2); }), ErrorCode::kIssuerMisbehavior);
  EXPECT_EQ(c.store().ready_count(), 0u);
}

TEST(Client, NoncesNeverRepeat) {
  World w;
  Client c;
  const auto challenge = w.origin.make_challenge(ChallengeMode::kBatch, w.rng);
  std::set<tokens::Nonce> seen;
  std::set<Bytes> blinded;
  for (int round = 0; round < 1000; ++round) {
    const auto reqs = c.begin_issuance(challenge, w.issuer.public_key(), 1, 10, w.rng);
    ASSERT_TRUE(seen.insert(c.store().pending().front().nonce).second);
    ASSERT_TRUE(blinded.insert(reqs.front().blinded_message).second);
    c.store().clear_pending();
  }
}

TEST(Client, StoreSurvivesSerializationMidIssuance) {
  World w;
  Client c;
  w.obtain(c, 2, adult_evidence());
  const auto challenge = w.origin.make_challenge(ChallengeMode::kBatch, w.rng);
  const auto reqs = c.begin_issuance(challenge, w.issuer.public_key(), 3, 10, w.rng);
  const Bytes saved = c.store().serialize();
  EXPECT_EQ(ClientTokenStore::deserialize(saved).serialize(), saved);

  Client restarted(ClientTokenStore::deserialize(saved));
  EXPECT_EQ(restarted.store().ready_count(), 2u);
  const auto d = w.attester.attest(adult_evidence(), w.policy, t0());
  const auto tokens = restarted.finalize_batch(w.issuer.issue(w.attester.forward(d, reqs)));
  EXPECT_EQ(tokens.size(), 3u);
  EXPECT_EQ(restarted.store().ready_count(), 5u);

  EXPECT_EQ(code_of([&] { ClientTokenStore::deserialize(Bytes(saved.begin(), saved.end() - 1)); }),
            ErrorCode::kMalformed);
  Bytes bad_magic = saved;
  bad_magic[0] = 'X';
  EXPECT_EQ(code_of([&] { ClientTokenStore::deserialize(bad_magic); }), ErrorCode::kMalformed);
}

TEST(Origin, RejectReasons) {
  World w;
  Client c;
  w.obtain(c, 5, adult_evidence());
  const auto challenge = w.origin.make_challenge(ChallengeMode::kBatch, w.rng);
  const Bytes cb = tokens::encode_challenge(challenge);
  const auto t = c.redeem(cb);

  auto other = challenge;
  other.origin_info = "somewhere";
  EXPECT_EQ(w.origin.redeem(t, tokens::encode_challenge(other)).reason,
            RejectReason::kChallengeMismatch);
  EXPECT_EQ(w.origin.redeem(t, Bytes{1, 2, 3}).reason, RejectReason::kMalformed);

  auto forged = t;
  forged.authenticator[5] ^= 1;
  EXPECT_EQ(w.origin.redeem(forged, cb).reason, RejectReason::kInvalidSignature);
  auto renonced = t;
  renonced.nonce[0] ^= 1;
  EXPECT_EQ(w.origin.redeem(renonced, cb).reason, RejectReason::kInvalidSignature);
  auto unknown_key = t;
  unknown_key.token_key_id[0] ^= 1;
  EXPECT_EQ(w.origin.redeem(unknown_key, cb).reason, RejectReason::kUnknownIssuer);

  EXPECT_TRUE(w.origin.redeem(t, cb).granted);
  EXPECT_EQ(w.origin.redeem(t, cb).reason, RejectReason::kDoubleSpend);
  EXPECT_EQ(w.origin.redeem_encoded(tokens::encode_token(t), cb).reason, RejectReason::kDoubleSpend);

  const auto t2 = c.redeem(cb);
  EXPECT_TRUE(w.origin.redeem_encoded(tokens::encode_token(t2), cb).granted);
  EXPECT_EQ(w.origin.redeem_encoded(Bytes(50, 0), cb).reason, RejectReason::kMalformed);

  Origin strict({"strict.example", "issuer.example", AgePolicy::make(18, Assurance::kHigh),
                 kDefaultBoundContextTtl},
                w.list, std::make_shared<MemorySpentStore>(), w.clock);
  EXPECT_EQ(strict.redeem(c.redeem(cb), cb).reason, RejectReason::kPolicyMismatch);

  Origin elsewhere({"else.example", "other-issuer", w.policy, kDefaultBoundContextTtl}, w.list,
                   std::make_shared<MemorySpentStore>(), w.clock);
  EXPECT_EQ(elsewhere.redeem(c.redeem(cb), cb).reason, RejectReason::kUnknownChallenge);
  EXPECT_EQ(code_of([&] { elsewhere.make_challenge(ChallengeMode::kBatch, w.rng); }),
            ErrorCode::kUnknownIssuer);
}

TEST(Origin, MalformedBytesNeverThrow) {
  World w;
  SeededEntropy rng(56);
  const Bytes cb = tokens::encode_challenge(w.origin.make_challenge(ChallengeMode::kBatch, w.rng));
  for (int i = 0; i < 2000; ++i) {
    const Bytes token = rng.bytes(rng.uniform(300));
    const Bytes challenge = rng.uniform(2) ? cb : rng.bytes(rng.uniform(80));
    EXPECT_FALSE(w.origin.redeem_encoded(token, challenge).granted);
  }
}

TEST(Origin, BoundTokenExpiresWithTheContext) {
  World w;
  for (int delay : {0, 60, 119, 120, 500, 5000}) {
    Client c;
    w.clock->set(t0());
    const auto challenge = w.origin.make_challenge(ChallengeMode::kBound, w.rng);
    EXPECT_EQ(challenge.redemption_context.size(), 32u);
    EXPECT_EQ(challenge.origin_info, "origin.example");
    w.obtain_for(c, challenge, 1, adult_evidence());
    w.clock->advance(chr::seconds(delay));
    const Bytes cb = tokens::encode_challenge(challenge);
    const auto decision = w.origin.redeem(c.redeem(cb), cb);
    if (delay < 120) {
      EXPECT_TRUE(decision.granted) << delay;
    } else if (delay <= 1200) {
      EXPECT_EQ(decision.reason, RejectReason::kContextExpired) << delay;
    } else {
      EXPECT_FALSE(decision.granted) << delay;
    }
  }
}

TEST(Origin, BoundTokenIsOriginScoped) {
  World w;
  Origin second({"second.example", "issuer.example", w.policy, kDefaultBoundContextTtl}, w.list,
                std::make_shared<MemorySpentStore>(), w.clock);
  Client c;
  const auto challenge = w.origin.make_challenge(ChallengeMode::kBound, w.rng);
  w.obtain_for(c, challenge, 1, adult_evidence());
  const Bytes cb = tokens::encode_challenge(challenge);
  const auto t = c.redeem(cb);
  EXPECT_EQ(second.redeem(t, cb).reason, RejectReason::kUnknownChallenge);
  EXPECT_TRUE(w.origin.redeem(t, cb).granted);

  // A context this origin never issued.
  auto invented = w.origin.make_challenge(ChallengeMode::kBound, w.rng);
  invented.redemption_context = Bytes(32, 7);
  Client c2;
  w.obtain_for(c2, invented, 1, adult_evidence());
  const Bytes ib = tokens::encode_challenge(invented);
  EXPECT_EQ(w.origin.redeem(c2.redeem(ib), ib).reason, RejectReason::kUnknownChallenge);
}

TEST(Origin, BatchTokensAreCrossOriginWithoutSharedState) {
  World w;
  Origin second({"second.example", "issuer.example", w.policy, kDefaultBoundContextTtl}, w.list,
                std::make_shared<MemorySpentStore>(), w.clock);
  Client c;
  w.obtain(c, 1, adult_evidence());
  const auto a = w.origin.make_challenge(ChallengeMode::kBatch, w.rng);
  const auto b = second.make_challenge(ChallengeMode::kBatch, w.rng);
  ASSERT_EQ(a, b);
  const Bytes cb = tokens::encode_challenge(a);
  const auto t = c.redeem(cb);
  EXPECT_TRUE(w.origin.redeem(t, cb).granted);
  // Without a shared or synced spent store the second origin cannot tell.
  EXPECT_TRUE(second.redeem(t, cb).granted);
  second.spent_store().merge(w.origin.spent_store().records());
  Origin third({"third.example", "issuer.example", w.policy, kDefaultBoundContextTtl}, w.list,
               w.origin.spent_store_ptr(), w.clock);
  EXPECT_EQ(third.redeem(t, cb).reason, RejectReason::kDoubleSpend);
}

TEST(Origin, SixtyFourWayRedeemRace) {
  World w;
  for (int round = 0; round < 5; ++round) {
    Client c;
    w.obtain(c, 1, adult_evidence());
    const Bytes cb = tokens::encode_challenge(w.origin.make_challenge(ChallengeMode::kBatch, w.rng));
    const Bytes token = tokens::encode_token(c.redeem(cb));
    std::atomic<int> granted{0}, double_spend{0};
    std::atomic<bool> go{false};
    std::vector<std::thread> threads;
    for (int i = 0; i < 64; ++i) {
      threads.emplace_back([&] {
        while (!go) std::this_thread::yield();
        const auto d = w.origin.redeem_encoded(token, cb);
        if (d.granted) ++granted;
        if (d.reason == RejectReason::kDoubleSpend) ++double_spend;
      });
    }
    go = true;
    for (auto& t : threads) t.join();
    EXPECT_EQ(granted, 1);
    EXPECT_EQ(double_spend, 63);
  }
}

TEST(Origin, RevokedIssuerStopsRedemption) {
  World w;
  Client c;
  w.obtain(c, 2, adult_evidence());
  const Bytes cb = tokens::encode_challenge(w.origin.make_challenge(ChallengeMode::kBatch, w.rng));
  EXPECT_TRUE(w.origin.redeem(c.redeem(cb), cb).granted);
  auto entry = *w.list->entity("issuer.example");
  entry.status = registry::Status::kRevoked;
  w.list->register_entry(entry);
  EXPECT_EQ(w.origin.redeem(c.redeem(cb), cb).reason, RejectReason::kUnknownIssuer);
}

TEST(RejectReasons, MapToErrorCodes) {
  EXPECT_EQ(error_code_for(RejectReason::kDoubleSpend), ErrorCode::kDoubleSpend);
  EXPECT_EQ(error_code_for(RejectReason::kInvalidSignature), ErrorCode::kInvalidToken);
  EXPECT_EQ(error_code_for(RejectReason::kContextExpired), ErrorCode::kContextExpired);
  EXPECT_EQ(reject_reason_name(RejectReason::kPolicyMismatch), "policy-mismatch");
}

}  // namespace
}  // namespace agetoken::actors
