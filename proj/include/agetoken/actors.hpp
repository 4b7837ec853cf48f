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

// The four protocol parties.
//
// Issuance:   origin challenge -> client blinds `count` token inputs ->
//             attester checks KYC evidence and signs the forwarded batch ->
//             issuer blind-signs -> client finalizes into ready tokens.
// Redemption: client presents a ready token for the origin's challenge ->
//             origin checks digest, key, signature and the spent store.
//
// KycEvidence never crosses the attester boundary: no issuer or origin
// operation takes it, and ForwardedRequest has no field derived from it.

#ifndef AGETOKEN_ACTORS_HPP_
#define AGETOKEN_ACTORS_HPP_

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agetoken/blindsig.hpp"
#include "agetoken/common.hpp"
#include "agetoken/crypto.hpp"
#include "agetoken/policy.hpp"
#include "agetoken/registry.hpp"
#include "agetoken/spent_store.hpp"
#include "agetoken/tokens.hpp"

namespace agetoken::actors {

inline constexpr std::uint32_t kDefaultBatchAllowance = 10;
inline constexpr std::chrono::seconds kDefaultBoundContextTtl{120};

// ---------------------------------------------------------------------------
// Attestation

enum class EvidenceKind : std::uint8_t { kDeclared = 0, kDocumentMock = 1, kDeviceAttestedMock = 2 };

std::string_view evidence_kind_name(EvidenceKind kind);
EvidenceKind parse_evidence_kind(std::string_view name);
// declared -> low, document_mock -> substantial, device_attested_mock -> high.
Assurance assurance_of(EvidenceKind kind);

struct KycEvidence {
  std::chrono::year_month_day date_of_birth;
  EvidenceKind kind = EvidenceKind::kDeclared;
  std::string subject_handle;

  friend bool operator==(const KycEvidence&, const KycEvidence&) = default;
};

// Strict YYYY-MM-DD; throws kMalformed otherwise.
std::chrono::year_month_day parse_date(std::string_view text);
std::string format_date(std::chrono::year_month_day date);
std::chrono::year_month_day utc_date(Timestamp t);

// Inclusive on the birthday. A 29 February birthday falls on 1 March in
// non-leap years.
bool has_reached_age(std::chrono::year_month_day date_of_birth, unsigned years,
                     std::chrono::year_month_day today);

struct AttestationDecision {
  bool granted = false;
  AgePolicy policy;
  std::uint32_t batch_allowance = 0;  // 0 whenever !granted
  std::string attester_id;
  Timestamp decision_time{};

  friend bool operator==(const AttestationDecision&, const AttestationDecision&) = default;
};

Bytes encode_decision(const AttestationDecision& decision);
AttestationDecision decode_decision(ByteView bytes);

// The attester-signed batch the issuer accepts.
struct ForwardedRequest {
  std::string attester_id;
  AgePolicy policy;
  Timestamp decision_time{};
  std::vector<tokens::TokenRequest> requests;
  Bytes attester_signature;

  friend bool operator==(const ForwardedRequest&, const ForwardedRequest&) = default;
};

// Everything except the signature; what the attester signs.
Bytes forwarded_signing_input(const ForwardedRequest& fwd);
Bytes encode_forwarded(const ForwardedRequest& fwd);
ForwardedRequest decode_forwarded(ByteView bytes);

class Attester {
 public:
  struct Config {
    std::string attester_id;
    std::uint32_t batch_allowance = kDefaultBatchAllowance;
  };

  Attester(Config config, Ed25519SigningKey key);

  // Throws kMalformed for an invalid date of birth.
  AttestationDecision attest(const KycEvidence& evidence, const AgePolicy& policy,
                             Timestamp now) const;
  // Throws kPolicyDenied if not granted, kAllowanceExceeded if the batch is
  // larger than the decision allows.
  ForwardedRequest forward(const AttestationDecision& decision,
                           std::span<const tokens::TokenRequest> batch) const;

  const Config& config() const { return config_; }
  const Bytes& public_key() const { return key_.public_key(); }

 private:
  Config config_;
  Ed25519SigningKey key_;
};

// ---------------------------------------------------------------------------
// Issuer

class Issuer {
 public:
  struct Config {
    std::string issuer_name;
    AgePolicy policy;
    std::uint32_t batch_maximum = kDefaultBatchAllowance;
  };

  Issuer(Config config, blindsig::KeyPair key, std::shared_ptr<const registry::TrustedList> trusted,
         std::shared_ptr<const Clock> clock);

  // One blind signature per request, in order. Errors: kAttesterAuth for an
  // unknown, inactive or forged attester; kPolicyDenied when the attester
  // is not trusted for the policy or the policy does not cover this
  // issuer's; kKeyIdMismatch / kMalformed for requests not aimed at this key;
  // kAllowanceExceeded beyond batch_maximum.
  std::vector<Bytes> issue(const ForwardedRequest& fwd) const;

  const Config& config() const { return config_; }
  blindsig::PublicKey public_key() const { return key_.public_key(); }
  const Digest& key_id() const { return key_id_; }
  const blindsig::KeyPair& keypair() const { return key_; }

 private:
  Config config_;
  blindsig::KeyPair key_;
  Digest key_id_;
  std::shared_ptr<const registry::TrustedList> trusted_;
  std::shared_ptr<const Clock> clock_;
};

// ---------------------------------------------------------------------------
// Origin

enum class ChallengeMode { kBatch, kBound };

enum class RejectReason {
  kMalformed,
  kChallengeMismatch,
  kUnknownChallenge,
  kContextExpired,
  kUnknownIssuer,
  kPolicyMismatch,
  kInvalidSignature,
  kDoubleSpend,
};

std::string_view reject_reason_name(RejectReason reason);
ErrorCode error_code_for(RejectReason reason);

struct RedeemDecision {
  bool granted = false;
  std::optional<RejectReason> reason;

  static RedeemDecision grant() { return RedeemDecision{true, std::nullopt}; }
  static RedeemDecision reject(RejectReason r) { return RedeemDecision{false, r}; }
  friend bool operator==(const RedeemDecision&, const RedeemDecision&) = default;
};

class Origin {
 public:
  struct Config {
    std::string origin_id;
    std::string issuer_name;
    AgePolicy policy;
    std::chrono::seconds bound_context_ttl = kDefaultBoundContextTtl;
  };

  Origin(Config config, std::shared_ptr<const registry::TrustedList> trusted,
         std::shared_ptr<SpentStore> spent, std::shared_ptr<const Clock> clock);

  // Batch: the standing challenge (no context, no origin info), identical
  // at every origin that trusts the same issuer. Bound: fresh 32-byte
  // context scoped to this origin, valid for bound_context_ttl. Throws
  // kUnknownIssuer if the configured issuer has no usable key.
  tokens::TokenChallenge make_challenge(ChallengeMode mode, Entropy& rng);

  // Never throws for bad input; every failure is a reject reason.
  RedeemDecision redeem(const tokens::Token& token, ByteView challenge_bytes);
  RedeemDecision redeem_encoded(ByteView token_bytes, ByteView challenge_bytes);

  const Config& config() const { return config_; }
  SpentStore& spent_store() { return *spent_; }
  std::shared_ptr<SpentStore> spent_store_ptr() { return spent_; }

 private:
  std::uint16_t issuer_token_type() const;

  Config config_;
  std::shared_ptr<const registry::TrustedList> trusted_;
  std::shared_ptr<SpentStore> spent_;
  std::shared_ptr<const Clock> clock_;
  std::mutex contexts_mu_;
  std::map<Bytes, Timestamp> bound_contexts_;  // context -> expiry
};

// ---------------------------------------------------------------------------
// Client

struct PendingToken {
  tokens::Nonce nonce{};
  blindsig::BlindingState state;
  Digest challenge_digest{};
};

// Pending blinding state plus finalized, unspent tokens.
class ClientTokenStore {
 public:
  bool has_pending() const { return !pending_.empty(); }
  const std::vector<PendingToken>& pending() const { return pending_; }
  const std::optional<blindsig::PublicKey>& pending_issuer() const { return pending_issuer_; }
  const std::vector<tokens::Token>& ready() const { return ready_; }
  std::size_t ready_count() const { return ready_.size(); }
  bool contains_nonce(const tokens::Nonce& nonce) const;

  void set_pending(blindsig::PublicKey issuer, std::vector<PendingToken> pending);
  void clear_pending();
  // Throws kInvalidArgument on a nonce already held.
  void add_ready(tokens::Token token);
  // Removes and returns the first ready token bound to `challenge_digest`.
  std::optional<tokens::Token> take_matching(const Digest& challenge_digest);
  std::optional<tokens::Token> take_any();

  // File layout in docs/wire-formats.md ("Client token store").
  Bytes serialize() const;
  static ClientTokenStore deserialize(ByteView bytes);

 private:
  std::optional<blindsig::PublicKey> pending_issuer_;
  std::vector<PendingToken> pending_;
  std::vector<tokens::Token> ready_;
};

class Client {
 public:
  Client() = default;
  explicit Client(ClientTokenStore store) : store_(std::move(store)) {}

  // Errors: kInvalidArgument for count == 0 or count > 1 on a bound
  // challenge; kAllowanceExceeded above `batch_maximum`;
  // kIssuanceInProgress while an earlier batch is pending.
  std::vector<tokens::TokenRequest> begin_issuance(const tokens::TokenChallenge& challenge,
                                                   const blindsig::PublicKey& issuer_key,
                                                   std::uint32_t count, std::uint32_t batch_maximum,
                                                   Entropy& rng);

  // All-or-nothing: any response that does not finalize raises
  // kIssuerMisbehavior and leaves no token from the batch in the store.
  std::vector<tokens::Token> finalize_batch(std::span<const Bytes> responses);

  // Throws kPoolExhausted when no ready token matches the challenge.
  tokens::Token redeem(const tokens::TokenChallenge& challenge);
  tokens::Token redeem(ByteView challenge_bytes);

  ClientTokenStore& store() { return store_; }
  const ClientTokenStore& store() const { return store_; }

 private:
  ClientTokenStore store_;
};

}  // namespace agetoken::actors

#endif  // AGETOKEN_ACTORS_HPP_
