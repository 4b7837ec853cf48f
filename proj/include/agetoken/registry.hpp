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

// Trusted list of attesters and issuers with their verification keys.
//
// The list is an append-only log of entity registrations; version v is the
// state after the first v registrations. A registration for an existing
// entity_id replaces that entity's entry. Revocation is terminal.

#ifndef AGETOKEN_REGISTRY_HPP_
#define AGETOKEN_REGISTRY_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "agetoken/blindsig.hpp"
#include "agetoken/common.hpp"
#include "agetoken/policy.hpp"

namespace agetoken::registry {

enum class Role { kAttester, kIssuer };
enum class Status { kActive, kSuspended, kRevoked };
enum class KeyAlgorithm { kBlindRsa, kEd25519 };

std::string_view role_name(Role r);
std::string_view status_name(Status s);
std::string_view algorithm_name(KeyAlgorithm a);

// Metadata keys understood by the actors.
inline constexpr std::string_view kIssuerPolicyKey = "policy";      // issuers: one label
inline constexpr std::string_view kAttesterPoliciesKey = "policies";  // attesters: list

struct KeyEntry {
  Digest key_id{};  // SHA-256 of public_key
  KeyAlgorithm algorithm = KeyAlgorithm::kBlindRsa;
  // DER RSAPublicKey for kBlindRsa, raw 32 bytes for kEd25519.
  Bytes public_key;
  Timestamp valid_from{};
  Timestamp valid_until{};  // exclusive

  bool valid_at(Timestamp t) const { return valid_from <= t && t < valid_until; }
  friend bool operator==(const KeyEntry&, const KeyEntry&) = default;
};

KeyEntry make_issuer_key(const blindsig::PublicKey& pk, Timestamp valid_from, Timestamp valid_until);
KeyEntry make_attester_key(ByteView ed25519_public_key, Timestamp valid_from, Timestamp valid_until);

struct TrustedListEntry {
  std::string entity_id;
  Role role = Role::kIssuer;
  Status status = Status::kActive;
  std::vector<KeyEntry> keys;
  std::map<std::string, std::string> metadata;

  friend bool operator==(const TrustedListEntry&, const TrustedListEntry&) = default;
};

struct ResolvedKey {
  std::string entity_id;
  Role role = Role::kIssuer;
  KeyEntry key;
  std::map<std::string, std::string> metadata;
};

// Policy an issuer's tokens certify, from its metadata; nullopt if absent
// or unparsable.
std::optional<AgePolicy> issuer_policy(const std::map<std::string, std::string>& metadata);
// Policies an attester is trusted to vouch for.
std::vector<AgePolicy> attester_policies(const std::map<std::string, std::string>& metadata);

class TrustedList {
 public:
  TrustedList() = default;
  TrustedList(const TrustedList& other);
  TrustedList& operator=(const TrustedList& other);

  // Appends a registration and returns the new version (1-based). Throws
  // kInvalidArgument when the entry breaks an invariant; the list is left
  // unchanged in that case.
  std::uint64_t register_entry(TrustedListEntry entry);

  std::uint64_t version() const;

  // Unique active key valid at `at`. Suspended or revoked entities resolve
  // nothing.
  std::optional<ResolvedKey> resolve_key(const Digest& key_id, Timestamp at) const;
  std::optional<ResolvedKey> resolve_key(const Digest& key_id, Timestamp at,
                                         std::uint64_t version) const;

  std::optional<TrustedListEntry> entity(std::string_view entity_id) const;
  // State (one entry per entity, sorted by id) at a version.
  std::vector<TrustedListEntry> entries(std::uint64_t version) const;
  std::vector<TrustedListEntry> history() const;

  // Canonical JSON snapshot of the log prefix up to `version`.
  std::string export_list(std::uint64_t version) const;
  std::string export_list() const { return export_list(version()); }
  // Rebuilds a list by replaying the snapshot's log. Errors carry the
  // offending field path.
  static TrustedList import_list(std::string_view text);

 private:
  struct KeyBinding {
    std::string entity_id;
    Timestamp valid_from;
    Timestamp valid_until;
  };
  using State = std::map<std::string, TrustedListEntry, std::less<>>;

  static std::optional<ResolvedKey> resolve_in(const State& state, const Digest& key_id,
                                               Timestamp at);
  State state_at(std::uint64_t version) const;

  mutable std::shared_mutex mu_;
  std::vector<TrustedListEntry> log_;
  State current_;
  std::map<Digest, KeyBinding> bindings_;
};

}  // namespace agetoken::registry

#endif  // AGETOKEN_REGISTRY_HPP_
