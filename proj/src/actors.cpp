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

#include <algorithm>
#include <charconv>

namespace agetoken::actors {

namespace chr = std::chrono;

namespace {

constexpr std::string_view kStoreMagic = "AGSTORE1";

void write_policy(ByteWriter& w, const AgePolicy& p) {
  w.u8(static_cast<std::uint8_t>(p.minimum_age_years));
  w.u8(static_cast<std::uint8_t>(p.required_assurance));
}

AgePolicy read_policy(ByteReader& r) {
  const unsigned age = r.u8();
  const std::uint8_t assurance = r.u8();
  if (assurance < 1 || assurance > 3) throw Error(ErrorCode::kMalformed, "bad assurance level");
  try {
    return AgePolicy::make(age, static_cast<Assurance>(assurance));
  } catch (const Error& e) {
    throw Error(ErrorCode::kMalformed, e.what());
  }
}

void write_key(ByteWriter& w, const blindsig::PublicKey& pk) {
  w.prefixed(tokens::encode_public_key(pk), 2);
}

blindsig::PublicKey read_key(ByteReader& r) { return tokens::decode_public_key(r.prefixed(2)); }

}  // namespace

// ---------------------------------------------------------------------------
// Attestation

std::string_view evidence_kind_name(EvidenceKind kind) {
  switch (kind) {
    case EvidenceKind::kDeclared: return "declared";
    case EvidenceKind::kDocumentMock: return "document_mock";
    case EvidenceKind::kDeviceAttestedMock: return "device_attested_mock";
  }
  return "declared";
}

EvidenceKind parse_evidence_kind(std::string_view name) {
  if (name == "declared") return EvidenceKind::kDeclared;
  if (name == "document_mock") return EvidenceKind::kDocumentMock;
  if (name == "device_attested_mock") return EvidenceKind::kDeviceAttestedMock;
  throw Error(ErrorCode::kMalformed, "unknown evidence kind '" + std::string(name) + "'");
}

Assurance assurance_of(EvidenceKind kind) {
  switch (kind) {
    case EvidenceKind::kDeclared: return Assurance::kLow;
    case EvidenceKind::kDocumentMock: return Assurance::kSubstantial;
    case EvidenceKind::kDeviceAttestedMock: return Assurance::kHigh;
  }
  return Assurance::kLow;
}

chr::year_month_day parse_date(std::string_view text) {
  auto field = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, v);
    if (ec != std::errc() || ptr != text.data() + pos + len) {
      throw Error(ErrorCode::kMalformed, "date must be YYYY-MM-DD");
    }
    return v;
  };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw Error(ErrorCode::kMalformed, "date must be YYYY-MM-DD");
  }
  chr::year_month_day d{chr::year{field(0, 4)}, chr::month{static_cast<unsigned>(field(5, 2))},
                        chr::day{static_cast<unsigned>(field(8, 2))}};
  if (!d.ok()) throw Error(ErrorCode::kMalformed, "invalid calendar date");
  return d;
}

std::string format_date(chr::year_month_day date) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
  return buf;
}

chr::year_month_day utc_date(Timestamp t) { return chr::year_month_day{chr::floor<chr::days>(t)}; }

bool has_reached_age(chr::year_month_day dob, unsigned years, chr::year_month_day today) {
  const chr::year target_year = dob.year() + chr::years{static_cast<int>(years)};
  chr::year_month_day birthday{target_year, dob.month(), dob.day()};
  if (!birthday.ok()) {
    // Only 29 February can fail here.
    birthday = chr::year_month_day{target_year, chr::March, chr::day{1}};
  }
  return chr::sys_days{today} >= chr::sys_days{birthday};
}

Bytes encode_decision(const AttestationDecision& d) {
  ByteWriter w;
  w.u8(d.granted ? 1 : 0);
  write_policy(w, d.policy);
  w.u32(d.batch_allowance);
  w.prefixed(d.attester_id, 2);
  w.u64(static_cast<std::uint64_t>(to_unix(d.decision_time)));
  return std::move(w).bytes();
}

AttestationDecision decode_decision(ByteView bytes) {
  ByteReader r(bytes);
  AttestationDecision d;
  const std::uint8_t granted = r.u8();
  if (granted > 1) throw Error(ErrorCode::kMalformed, "bad granted flag");
  d.granted = granted == 1;
  d.policy = read_policy(r);
  d.batch_allowance = r.u32();
  d.attester_id = r.prefixed_string(2);
  d.decision_time = from_unix(static_cast<std::int64_t>(r.u64()));
  r.expect_end("attestation decision");
  if (!d.granted && d.batch_allowance != 0) {
    throw Error(ErrorCode::kMalformed, "denied decision with non-zero allowance");
  }
  return d;
}

Bytes forwarded_signing_input(const ForwardedRequest& fwd) {
  ByteWriter w;
  w.raw(to_bytes("agetoken forwarded request v1"));
  w.prefixed(fwd.attester_id, 2);
  write_policy(w, fwd.policy);
  w.u64(static_cast<std::uint64_t>(to_unix(fwd.decision_time)));
  w.u16(static_cast<std::uint16_t>(fwd.requests.size()));
  for (const tokens::TokenRequest& req : fwd.requests) w.prefixed(tokens::encode_request(req), 2);
  return std::move(w).bytes();
}

Bytes encode_forwarded(const ForwardedRequest& fwd) {
  ByteWriter w;
  w.prefixed(fwd.attester_id, 2);
  write_policy(w, fwd.policy);
  w.u64(static_cast<std::uint64_t>(to_unix(fwd.decision_time)));
  w.u16(static_cast<std::uint16_t>(fwd.requests.size()));
  for (const tokens::TokenRequest& req : fwd.requests) w.prefixed(tokens::encode_request(req), 2);
  w.prefixed(fwd.attester_signature, 2);
  return std::move(w).bytes();
}

ForwardedRequest decode_forwarded(ByteView bytes) {
  ByteReader r(bytes);
  ForwardedRequest fwd;
  fwd.attester_id = r.prefixed_string(2);
  fwd.policy = read_policy(r);
  fwd.decision_time = from_unix(static_cast<std::int64_t>(r.u64()));
  const std::uint16_t count = r.u16();
  for (std::uint16_t i = 0; i < count; ++i) {
    ByteView req = r.prefixed(2);
    if (req.size() < 4) throw Error(ErrorCode::kMalformed, "token request too short");
    fwd.requests.push_back(tokens::decode_request(req, req.size() - 3));
  }
  ByteView sig = r.prefixed(2);
  fwd.attester_signature.assign(sig.begin(), sig.end());
  r.expect_end("forwarded request");
  return fwd;
}

Attester::Attester(Config config, Ed25519SigningKey key)
    : config_(std::move(config)), key_(std::move(key)) {}

AttestationDecision Attester::attest(const KycEvidence& evidence, const AgePolicy& policy,
                                     Timestamp now) const {
  if (!evidence.date_of_birth.ok()) {
    throw Error(ErrorCode::kMalformed, "invalid date of birth");
  }
  AttestationDecision d;
  d.policy = policy;
  d.attester_id = config_.attester_id;
  d.decision_time = now;
  d.granted = has_reached_age(evidence.date_of_birth, policy.minimum_age_years, utc_date(now)) &&
              assurance_of(evidence.kind) >= policy.required_assurance;
  d.batch_allowance = d.granted ? config_.batch_allowance : 0;
  return d;
}

ForwardedRequest Attester::forward(const AttestationDecision& decision,
                                   std::span<const tokens::TokenRequest> batch) const {
  if (!decision.granted) {
    throw Error(ErrorCode::kPolicyDenied, "attestation was not granted");
  }
  if (batch.size() > decision.batch_allowance) {
    throw Error(ErrorCode::kAllowanceExceeded,
                "batch of " + std::to_string(batch.size()) + " exceeds allowance of " +
                    std::to_string(decision.batch_allowance));
  }
  ForwardedRequest fwd;
  fwd.attester_id = config_.attester_id;
  fwd.policy = decision.policy;
  fwd.decision_time = decision.decision_time;
  fwd.requests.assign(batch.begin(), batch.end());
  fwd.attester_signature = key_.sign(forwarded_signing_input(fwd));
  return fwd;
}

// ---------------------------------------------------------------------------
// Issuer

Issuer::Issuer(Config config, blindsig::KeyPair key,
               std::shared_ptr<const registry::TrustedList> trusted,
               std::shared_ptr<const Clock> clock)
    : config_(std::move(config)),
      key_(std::move(key)),
      key_id_(tokens::derive_key_id(key_.public_key())),
      trusted_(std::move(trusted)),
      clock_(std::move(clock)) {}

std::vector<Bytes> Issuer::issue(const ForwardedRequest& fwd) const {
  const Timestamp now = clock_->now();
  std::optional<registry::TrustedListEntry> attester = trusted_->entity(fwd.attester_id);
  if (!attester || attester->role != registry::Role::kAttester ||
      attester->status != registry::Status::kActive) {
    throw Error(ErrorCode::kAttesterAuth, "attester '" + fwd.attester_id + "' is not trusted");
  }
  const Bytes signed_input = forwarded_signing_input(fwd);
  const bool authentic = std::any_of(
      attester->keys.begin(), attester->keys.end(), [&](const registry::KeyEntry& k) {
        return k.algorithm == registry::KeyAlgorithm::kEd25519 && k.valid_at(now) &&
               ed25519_verify(k.public_key, signed_input, fwd.attester_signature);
      });
  if (!authentic) {
    throw Error(ErrorCode::kAttesterAuth, "attester signature does not verify");
  }
  const auto trusted_for = registry::attester_policies(attester->metadata);
  const bool policy_trusted = std::any_of(trusted_for.begin(), trusted_for.end(),
                                          [&](const AgePolicy& p) { return p.satisfies(fwd.policy); });
  if (!policy_trusted) {
    throw Error(ErrorCode::kPolicyDenied, "attester not trusted for policy " + fwd.policy.label());
  }
  if (!fwd.policy.satisfies(config_.policy)) {
    throw Error(ErrorCode::kPolicyDenied,
                "policy " + fwd.policy.label() + " does not cover issuer policy " +
                    config_.policy.label());
  }
  if (fwd.requests.size() > config_.batch_maximum) {
    throw Error(ErrorCode::kAllowanceExceeded, "batch exceeds issuer maximum");
  }
  const blindsig::PublicKey pk = key_.public_key();
  const std::uint16_t token_type = tokens::token_type_for(pk);
  for (const tokens::TokenRequest& req : fwd.requests) {
    if (req.token_type != token_type) {
      throw Error(ErrorCode::kMalformed, "token request has the wrong token type");
    }
    if (req.truncated_key_id != tokens::truncate_key_id(key_id_)) {
      throw Error(ErrorCode::kKeyIdMismatch, "token request is for a different issuer key");
    }
    if (req.blinded_message.size() != pk.modulus_bytes()) {
      throw Error(ErrorCode::kMalformed, "blinded message width mismatch");
    }
  }
  std::vector<Bytes> out;
  out.reserve(fwd.requests.size());
  for (const tokens::TokenRequest& req : fwd.requests) {
    out.push_back(blindsig::blind_sign(key_, req.blinded_message));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Origin

std::string_view reject_reason_name(RejectReason reason) {
  switch (reason) {
    case RejectReason::kMalformed: return "malformed";
    case RejectReason::kChallengeMismatch: return "challenge-mismatch";
    case RejectReason::kUnknownChallenge: return "unknown-challenge";
    case RejectReason::kContextExpired: return "context-expired";
    case RejectReason::kUnknownIssuer: return "unknown-issuer";
    case RejectReason::kPolicyMismatch: return "policy-mismatch";
    case RejectReason::kInvalidSignature: return "invalid-signature";
    case RejectReason::kDoubleSpend: return "double-spend";
  }
  return "malformed";
}

ErrorCode error_code_for(RejectReason reason) {
  switch (reason) {
    case RejectReason::kMalformed:
    case RejectReason::kChallengeMismatch:
    case RejectReason::kUnknownChallenge:
      return ErrorCode::kMalformed;
    case RejectReason::kInvalidSignature: return ErrorCode::kInvalidToken;
    case RejectReason::kContextExpired: return ErrorCode::kContextExpired;
    case RejectReason::kUnknownIssuer: return ErrorCode::kUnknownIssuer;
    case RejectReason::kPolicyMismatch: return ErrorCode::kPolicyDenied;
    case RejectReason::kDoubleSpend: return ErrorCode::kDoubleSpend;
  }
  return ErrorCode::kMalformed;
}

Origin::Origin(Config config, std::shared_ptr<const registry::TrustedList> trusted,
               std::shared_ptr<SpentStore> spent, std::shared_ptr<const Clock> clock)
    : config_(std::move(config)),
      trusted_(std::move(trusted)),
      spent_(std::move(spent)),
      clock_(std::move(clock)) {}

std::uint16_t Origin::issuer_token_type() const {
  const Timestamp now = clock_->now();
  std::optional<registry::TrustedListEntry> issuer = trusted_->entity(config_.issuer_name);
  if (issuer && issuer->role == registry::Role::kIssuer &&
      issuer->status == registry::Status::kActive) {
    for (const registry::KeyEntry& k : issuer->keys) {
      if (k.algorithm == registry::KeyAlgorithm::kBlindRsa && k.valid_at(now)) {
        return tokens::token_type_for(tokens::decode_public_key(k.public_key));
      }
    }
  }
  throw Error(ErrorCode::kUnknownIssuer,
              "issuer '" + config_.issuer_name + "' has no active key in the trusted list");
}

tokens::TokenChallenge Origin::make_challenge(ChallengeMode mode, Entropy& rng) {
  tokens::TokenChallenge c;
  c.token_type = issuer_token_type();
  c.issuer_name = config_.issuer_name;
  if (mode == ChallengeMode::kBound) {
    c.redemption_context = rng.bytes(tokens::kRedemptionContextSize);
    c.origin_info = config_.origin_id;
    const Timestamp now = clock_->now();
    std::lock_guard<std::mutex> lock(contexts_mu_);
    // Keep expired contexts around for a while so late redemptions report
    // context-expired rather than unknown-challenge.
    std::erase_if(bound_contexts_, [&](const auto& entry) {
      return entry.second + 10 * config_.bound_context_ttl < now;
    });
    bound_contexts_[c.redemption_context] = now + config_.bound_context_ttl;
  }
  return c;
}

RedeemDecision Origin::redeem_encoded(ByteView token_bytes, ByteView challenge_bytes) {
  try {
    const Digest key_id = tokens::peek_token_key_id(token_bytes);
    std::optional<registry::ResolvedKey> key = trusted_->resolve_key(key_id, clock_->now());
    if (!key || key->key.algorithm != registry::KeyAlgorithm::kBlindRsa) {
      return RedeemDecision::reject(RejectReason::kUnknownIssuer);
    }
    const blindsig::PublicKey pk = tokens::decode_public_key(key->key.public_key);
    return redeem(tokens::decode_token(token_bytes, pk.modulus_bytes()), challenge_bytes);
  } catch (const Error&) {
    return RedeemDecision::reject(RejectReason::kMalformed);
  }
}

RedeemDecision Origin::redeem(const tokens::Token& token, ByteView challenge_bytes) {
  tokens::TokenChallenge challenge;
  try {
    challenge = tokens::decode_challenge(challenge_bytes);
  } catch (const Error&) {
    return RedeemDecision::reject(RejectReason::kMalformed);
  }
  if (token.challenge_digest != tokens::challenge_digest(challenge_bytes)) {
    return RedeemDecision::reject(RejectReason::kChallengeMismatch);
  }
  if (challenge.issuer_name != config_.issuer_name) {
    return RedeemDecision::reject(RejectReason::kUnknownChallenge);
  }
  const Timestamp now = clock_->now();
  if (challenge.bound()) {
    if (challenge.origin_info != config_.origin_id) {
      return RedeemDecision::reject(RejectReason::kUnknownChallenge);
    }
    std::lock_guard<std::mutex> lock(contexts_mu_);
    auto it = bound_contexts_.find(challenge.redemption_context);
    if (it == bound_contexts_.end()) return RedeemDecision::reject(RejectReason::kUnknownChallenge);
    if (now >= it->second) return RedeemDecision::reject(RejectReason::kContextExpired);
  } else if (!challenge.origin_info.empty()) {
    return RedeemDecision::reject(RejectReason::kUnknownChallenge);
  }

  std::optional<registry::ResolvedKey> key = trusted_->resolve_key(token.token_key_id, now);
  if (!key || key->role != registry::Role::kIssuer ||
      key->key.algorithm != registry::KeyAlgorithm::kBlindRsa ||
      key->entity_id != challenge.issuer_name) {
    return RedeemDecision::reject(RejectReason::kUnknownIssuer);
  }
  std::optional<AgePolicy> issuer_policy = registry::issuer_policy(key->metadata);
  if (!issuer_policy || !issuer_policy->satisfies(config_.policy)) {
    return RedeemDecision::reject(RejectReason::kPolicyMismatch);
  }
  blindsig::PublicKey pk;
  try {
    pk = tokens::decode_public_key(key->key.public_key);
  } catch (const Error&) {
    return RedeemDecision::reject(RejectReason::kUnknownIssuer);
  }
  if (token.token_type != challenge.token_type || !tokens::verify_token(token, pk)) {
    return RedeemDecision::reject(RejectReason::kInvalidSignature);
  }
  SpentTokenRecord record{token.nonce, token.token_key_id, config_.origin_id, now};
  if (!spent_->insert_if_absent(record)) {
    return RedeemDecision::reject(RejectReason::kDoubleSpend);
  }
  return RedeemDecision::grant();
}

// ---------------------------------------------------------------------------
// Client

bool ClientTokenStore::contains_nonce(const tokens::Nonce& nonce) const {
  return std::any_of(pending_.begin(), pending_.end(),
                     [&](const PendingToken& p) { return p.nonce == nonce; }) ||
         std::any_of(ready_.begin(), ready_.end(),
                     [&](const tokens::Token& t) { return t.nonce == nonce; });
}

void ClientTokenStore::set_pending(blindsig::PublicKey issuer, std::vector<PendingToken> pending) {
  pending_issuer_ = std::move(issuer);
  pending_ = std::move(pending);
}

void ClientTokenStore::clear_pending() {
  pending_issuer_.reset();
  pending_.clear();
}

void ClientTokenStore::add_ready(tokens::Token token) {
  if (std::any_of(ready_.begin(), ready_.end(),
                  [&](const tokens::Token& t) { return t.nonce == token.nonce; })) {
    throw Error(ErrorCode::kInvalidArgument, "token nonce already in store");
  }
  ready_.push_back(std::move(token));
}

std::optional<tokens::Token> ClientTokenStore::take_matching(const Digest& challenge_digest) {
  auto it = std::find_if(ready_.begin(), ready_.end(), [&](const tokens::Token& t) {
    return t.challenge_digest == challenge_digest;
  });
  if (it == ready_.end()) return std::nullopt;
  tokens::Token out = std::move(*it);
  ready_.erase(it);
  return out;
}

std::optional<tokens::Token> ClientTokenStore::take_any() {
  if (ready_.empty()) return std::nullopt;
  tokens::Token out = std::move(ready_.front());
  ready_.erase(ready_.begin());
  return out;
}

Bytes ClientTokenStore::serialize() const {
  ByteWriter w;
  w.raw(to_bytes(kStoreMagic));
  w.u8(pending_issuer_ ? 1 : 0);
  if (pending_issuer_) write_key(w, *pending_issuer_);
  w.u32(static_cast<std::uint32_t>(pending_.size()));
  for (const PendingToken& p : pending_) {
    w.raw(p.nonce);
    w.raw(p.challenge_digest);
    const std::size_t width = pending_issuer_ ? pending_issuer_->modulus_bytes() : 0;
    w.prefixed(blindsig::i2osp(p.state.inverse_blind, width), 2);
    w.prefixed(p.state.prepared_message, 2);
  }
  w.u32(static_cast<std::uint32_t>(ready_.size()));
  for (const tokens::Token& t : ready_) w.prefixed(tokens::encode_token(t), 2);
  return std::move(w).bytes();
}

ClientTokenStore ClientTokenStore::deserialize(ByteView bytes) {
  ByteReader r(bytes);
  ByteView magic = r.raw(kStoreMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kStoreMagic.begin())) {
    throw Error(ErrorCode::kMalformed, "not a token store file");
  }
  ClientTokenStore store;
  const std::uint8_t has_issuer = r.u8();
  if (has_issuer > 1) throw Error(ErrorCode::kMalformed, "bad pending-issuer flag");
  if (has_issuer) store.pending_issuer_ = read_key(r);
  const std::uint32_t pending = r.u32();
  if (pending > 0 && !has_issuer) throw Error(ErrorCode::kMalformed, "pending tokens without issuer");
  for (std::uint32_t i = 0; i < pending; ++i) {
    PendingToken p;
    ByteView nonce = r.raw(tokens::kNonceSize);
    std::copy(nonce.begin(), nonce.end(), p.nonce.begin());
    p.challenge_digest = to_digest(r.raw(32));
    p.state.inverse_blind = blindsig::os2ip(r.prefixed(2));
    ByteView prepared = r.prefixed(2);
    p.state.prepared_message.assign(prepared.begin(), prepared.end());
    store.pending_.push_back(std::move(p));
  }
  const std::uint32_t ready = r.u32();
  for (std::uint32_t i = 0; i < ready; ++i) {
    ByteView enc = r.prefixed(2);
    if (enc.size() <= tokens::kTokenInputSize) throw Error(ErrorCode::kMalformed, "short token");
    store.add_ready(tokens::decode_token(enc, enc.size() - tokens::kTokenInputSize));
  }
  r.expect_end("token store");
  return store;
}

std::vector<tokens::TokenRequest> Client::begin_issuance(const tokens::TokenChallenge& challenge,
                                                         const blindsig::PublicKey& issuer_key,
                                                         std::uint32_t count,
                                                         std::uint32_t batch_maximum,
                                                         Entropy& rng) {
  if (count == 0) throw Error(ErrorCode::kInvalidArgument, "count must be at least 1");
  if (challenge.bound() && count != 1) {
    throw Error(ErrorCode::kInvalidArgument, "a bound challenge admits exactly one token");
  }
  if (count > batch_maximum) {
    throw Error(ErrorCode::kAllowanceExceeded, "count exceeds the issuer batch maximum");
  }
  if (store_.has_pending()) {
    throw Error(ErrorCode::kIssuanceInProgress, "an issuance is already pending");
  }
  const Digest digest = tokens::challenge_digest(tokens::encode_challenge(challenge));
  const Digest key_id = tokens::derive_key_id(issuer_key);
  const std::uint16_t token_type = tokens::token_type_for(issuer_key);
  if (challenge.token_type != token_type) {
    throw Error(ErrorCode::kInvalidArgument, "challenge token type does not match issuer key");
  }
  const blindsig::Params params = tokens::token_signature_params();

  std::vector<PendingToken> pending;
  std::vector<tokens::TokenRequest> requests;
  for (std::uint32_t i = 0; i < count; ++i) {
    PendingToken p;
    do {
      rng.fill(p.nonce);
    } while (store_.contains_nonce(p.nonce) ||
             std::any_of(pending.begin(), pending.end(),
                         [&](const PendingToken& q) { return q.nonce == p.nonce; }));
    p.challenge_digest = digest;
    const Bytes input = tokens::token_input(token_type, p.nonce, digest, key_id);
    blindsig::BlindOutput blinded = blindsig::blind(issuer_key, input, rng, params);
    p.state = std::move(blinded.state);
    requests.push_back(tokens::TokenRequest{token_type, tokens::truncate_key_id(key_id),
                                            std::move(blinded.blinded_message)});
    pending.push_back(std::move(p));
  }
  store_.set_pending(issuer_key, std::move(pending));
  return requests;
}

std::vector<tokens::Token> Client::finalize_batch(std::span<const Bytes> responses) {
  if (!store_.has_pending() || !store_.pending_issuer()) {
    throw Error(ErrorCode::kInvalidArgument, "no issuance pending");
  }
  const std::vector<PendingToken>& pending = store_.pending();
  const blindsig::PublicKey pk = *store_.pending_issuer();
  if (responses.size() != pending.size()) {
    store_.clear_pending();
    throw Error(ErrorCode::kIssuerMisbehavior, "issuer returned the wrong number of signatures");
  }
  const Digest key_id = tokens::derive_key_id(pk);
  const std::uint16_t token_type = tokens::token_type_for(pk);
  std::vector<tokens::Token> tokens_out;
  tokens_out.reserve(pending.size());
  try {
    for (std::size_t i = 0; i < pending.size(); ++i) {
      const PendingToken& p = pending[i];
      tokens::Token t;
      t.token_type = token_type;
      t.nonce = p.nonce;
      t.challenge_digest = p.challenge_digest;
      t.token_key_id = key_id;
      t.authenticator = blindsig::finalize(pk, p.state.prepared_message, responses[i], p.state,
                                           tokens::token_signature_params());
      tokens_out.push_back(std::move(t));
    }
  } catch (const Error& e) {
    store_.clear_pending();
    throw Error(ErrorCode::kIssuerMisbehavior, std::string("batch rejected: ") + e.what());
  }
  store_.clear_pending();
  for (const tokens::Token& t : tokens_out) store_.add_ready(t);
  return tokens_out;
}

tokens::Token Client::redeem(const tokens::TokenChallenge& challenge) {
  return redeem(tokens::encode_challenge(challenge));
}

tokens::Token Client::redeem(ByteView challenge_bytes) {
  std::optional<tokens::Token> t = store_.take_matching(tokens::challenge_digest(challenge_bytes));
  if (!t) {
    throw Error(ErrorCode::kPoolExhausted, "no token for this challenge; re-attestation needed");
  }
  return std::move(*t);
}

}  // namespace agetoken::actors
