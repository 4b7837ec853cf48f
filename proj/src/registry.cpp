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

#include "agetoken/registry.hpp"

#include <json.hpp>

#include <mutex>

#include "agetoken/crypto.hpp"
#include "agetoken/tokens.hpp"

namespace agetoken::registry {

using nlohmann::json;

namespace {

constexpr std::string_view kFormatName = "agetoken-trusted-list";
constexpr int kFormatVersion = 1;

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::kMalformed, "trusted list: " + path + ": " + what);
}

void validate_entry(const TrustedListEntry& e) {
  if (e.entity_id.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "entity_id must not be empty");
  }
  std::map<Digest, const KeyEntry*> seen;
  for (const KeyEntry& k : e.keys) {
    if (!(k.valid_from < k.valid_until)) {
      throw Error(ErrorCode::kInvalidArgument, "key validity window is empty");
    }
    if (sha256(k.public_key) != k.key_id) {
      throw Error(ErrorCode::kInvalidArgument, "key_id is not the hash of the public key");
    }
    if (k.algorithm == KeyAlgorithm::kEd25519 && k.public_key.size() != kEd25519PublicKeySize) {
      throw Error(ErrorCode::kInvalidArgument, "ed25519 key must be 32 bytes");
    }
    if (k.algorithm == KeyAlgorithm::kBlindRsa) {
      tokens::decode_public_key(k.public_key);
    }
    if (!seen.emplace(k.key_id, &k).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate key_id within entry");
    }
  }
}

json entry_to_json(const TrustedListEntry& e) {
  json keys = json::array();
  for (const KeyEntry& k : e.keys) {
    keys.push_back(json{{"key_id", to_hex(view(k.key_id))},
                        {"algorithm", algorithm_name(k.algorithm)},
                        {"public_key", to_hex(k.public_key)},
                        {"valid_from", to_unix(k.valid_from)},
                        {"valid_until", to_unix(k.valid_until)}});
  }
  json meta = json::object();
  for (const auto& [key, value] : e.metadata) meta[key] = value;
  return json{{"entity_id", e.entity_id},
              {"role", role_name(e.role)},
              {"status", status_name(e.status)},
              {"keys", std::move(keys)},
              {"metadata", std::move(meta)}};
}

const json& require(const json& obj, const std::string& path, const char* field) {
  if (!obj.is_object()) field_error(path, "expected object");
  auto it = obj.find(field);
  if (it == obj.end()) field_error(path + "." + field, "missing field");
  return *it;
}

std::string require_string(const json& obj, const std::string& path, const char* field) {
  const json& v = require(obj, path, field);
  if (!v.is_string()) field_error(path + "." + field, "expected string");
  return v.get<std::string>();
}

std::int64_t require_int(const json& obj, const std::string& path, const char* field) {
  const json& v = require(obj, path, field);
  if (!v.is_number_integer()) field_error(path + "." + field, "expected integer");
  return v.get<std::int64_t>();
}

Bytes require_hex(const json& obj, const std::string& path, const char* field) {
  std::string s = require_string(obj, path, field);
  try {
    return from_hex(s);
  } catch (const Error&) {
    field_error(path + "." + field, "invalid hex");
  }
}

template <typename Enum>
Enum require_enum(const json& obj, const std::string& path, const char* field,
                  std::initializer_list<std::pair<std::string_view, Enum>> options) {
  std::string s = require_string(obj, path, field);
  for (const auto& [name, value] : options) {
    if (name == s) return value;
  }
  field_error(path + "." + field, "unknown value '" + s + "'");
}

TrustedListEntry entry_from_json(const json& j, const std::string& path) {
  TrustedListEntry e;
  e.entity_id = require_string(j, path, "entity_id");
  e.role = require_enum<Role>(j, path, "role", {{"attester", Role::kAttester}, {"issuer", Role::kIssuer}});
  e.status = require_enum<Status>(
      j, path, "status",
      {{"active", Status::kActive}, {"suspended", Status::kSuspended}, {"revoked", Status::kRevoked}});
  const json& keys = require(j, path, "keys");
  if (!keys.is_array()) field_error(path + ".keys", "expected array");
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const std::string kp = path + ".keys[" + std::to_string(i) + "]";
    KeyEntry k;
    Bytes id = require_hex(keys[i], kp, "key_id");
    if (id.size() != 32) field_error(kp + ".key_id", "expected 32 bytes");
    k.key_id = to_digest(id);
    k.algorithm = require_enum<KeyAlgorithm>(
        keys[i], kp, "algorithm",
        {{"blind-rsa", KeyAlgorithm::kBlindRsa}, {"ed25519", KeyAlgorithm::kEd25519}});
    k.public_key = require_hex(keys[i], kp, "public_key");
    k.valid_from = from_unix(require_int(keys[i], kp, "valid_from"));
    k.valid_until = from_unix(require_int(keys[i], kp, "valid_until"));
    if (sha256(k.public_key) != k.key_id) field_error(kp + ".key_id", "does not match public_key");
    e.keys.push_back(std::move(k));
  }
  const json& meta = require(j, path, "metadata");
  if (!meta.is_object()) field_error(path + ".metadata", "expected object");
  for (auto it = meta.begin(); it != meta.end(); ++it) {
    if (!it.value().is_string()) field_error(path + ".metadata." + it.key(), "expected string");
    e.metadata[it.key()] = it.value().get<std::string>();
  }
  return e;
}

}  // namespace

std::string_view role_name(Role r) { return r == Role::kAttester ? "attester" : "issuer"; }

std::string_view status_name(Status s) {
  switch (s) {
    case Status::kActive: return "active";
    case Status::kSuspended: return "suspended";
    case Status::kRevoked: return "revoked";
  }
  return "revoked";
}

std::string_view algorithm_name(KeyAlgorithm a) {
  return a == KeyAlgorithm::kBlindRsa ? "blind-rsa" : "ed25519";
}

KeyEntry make_issuer_key(const blindsig::PublicKey& pk, Timestamp valid_from, Timestamp valid_until) {
  KeyEntry k;
  k.public_key = tokens::encode_public_key(pk);
  k.key_id = sha256(k.public_key);
  k.algorithm = KeyAlgorithm::kBlindRsa;
  k.valid_from = valid_from;
  k.valid_until = valid_until;
  return k;
}

KeyEntry make_attester_key(ByteView ed25519_public_key, Timestamp valid_from, Timestamp valid_until) {
  KeyEntry k;
  k.public_key.assign(ed25519_public_key.begin(), ed25519_public_key.end());
  k.key_id = sha256(k.public_key);
  k.algorithm = KeyAlgorithm::kEd25519;
  k.valid_from = valid_from;
  k.valid_until = valid_until;
  return k;
}

std::optional<AgePolicy> issuer_policy(const std::map<std::string, std::string>& metadata) {
  auto it = metadata.find(std::string(kIssuerPolicyKey));
  if (it == metadata.end()) return std::nullopt;
  try {
    return AgePolicy::parse(it->second);
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::vector<AgePolicy> attester_policies(const std::map<std::string, std::string>& metadata) {
  auto it = metadata.find(std::string(kAttesterPoliciesKey));
  if (it == metadata.end()) return {};
  try {
    return parse_policy_list(it->second);
  } catch (const Error&) {
    return {};
  }
}

TrustedList::TrustedList(const TrustedList& other) {
  std::shared_lock lock(other.mu_);
  log_ = other.log_;
  current_ = other.current_;
  bindings_ = other.bindings_;
}

TrustedList& TrustedList::operator=(const TrustedList& other) {
  if (this == &other) return *this;
  TrustedList copy(other);
  std::unique_lock lock(mu_);
  log_ = std::move(copy.log_);
  current_ = std::move(copy.current_);
  bindings_ = std::move(copy.bindings_);
  return *this;
}

std::uint64_t TrustedList::register_entry(TrustedListEntry entry) {
  validate_entry(entry);
  std::unique_lock lock(mu_);
  auto existing = current_.find(entry.entity_id);
  if (existing != current_.end()) {
    if (existing->second.status == Status::kRevoked && entry.status != Status::kRevoked) {
      throw Error(ErrorCode::kInvalidArgument, "revoked entity cannot be reactivated");
    }
    if (existing->second.role != entry.role) {
      throw Error(ErrorCode::kInvalidArgument, "entity role cannot change");
    }
  }
  for (const KeyEntry& k : entry.keys) {
    auto b = bindings_.find(k.key_id);
    if (b == bindings_.end()) continue;
    if (b->second.entity_id != entry.entity_id) {
      throw Error(ErrorCode::kInvalidArgument, "key_id already registered to another entity");
    }
    if (b->second.valid_from != k.valid_from || b->second.valid_until != k.valid_until) {
      throw Error(ErrorCode::kInvalidArgument, "key_id already registered with a different window");
    }
  }
  for (const KeyEntry& k : entry.keys) {
    bindings_.emplace(k.key_id, KeyBinding{entry.entity_id, k.valid_from, k.valid_until});
  }
  log_.push_back(entry);
  current_[entry.entity_id] = std::move(entry);
  return log_.size();
}

std::uint64_t TrustedList::version() const {
  std::shared_lock lock(mu_);
  return log_.size();
}

std::optional<ResolvedKey> TrustedList::resolve_in(const State& state, const Digest& key_id,
                                                   Timestamp at) {
  std::optional<ResolvedKey> found;
  for (const auto& [id, entry] : state) {
    if (entry.status != Status::kActive) continue;
    for (const KeyEntry& k : entry.keys) {
      if (k.key_id == key_id && k.valid_at(at)) {
        // Bindings make key ids unique across entities.
        found = ResolvedKey{entry.entity_id, entry.role, k, entry.metadata};
      }
    }
  }
  return found;
}

std::optional<ResolvedKey> TrustedList::resolve_key(const Digest& key_id, Timestamp at) const {
  std::shared_lock lock(mu_);
  auto b = bindings_.find(key_id);
  if (b == bindings_.end()) return std::nullopt;
  auto e = current_.find(b->second.entity_id);
  if (e == current_.end() || e->second.status != Status::kActive) return std::nullopt;
  for (const KeyEntry& k : e->second.keys) {
    if (k.key_id == key_id && k.valid_at(at)) {
      return ResolvedKey{e->second.entity_id, e->second.role, k, e->second.metadata};
    }
  }
  return std::nullopt;
}

std::optional<ResolvedKey> TrustedList::resolve_key(const Digest& key_id, Timestamp at,
                                                    std::uint64_t version) const {
  return resolve_in(state_at(version), key_id, at);
}

TrustedList::State TrustedList::state_at(std::uint64_t version) const {
  std::shared_lock lock(mu_);
  if (version > log_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "unknown trusted list version");
  }
  State state;
  for (std::uint64_t i = 0; i < version; ++i) state[log_[i].entity_id] = log_[i];
  return state;
}

std::optional<TrustedListEntry> TrustedList::entity(std::string_view entity_id) const {
  std::shared_lock lock(mu_);
  auto it = current_.find(entity_id);
  if (it == current_.end()) return std::nullopt;
  return it->second;
}

std::vector<TrustedListEntry> TrustedList::entries(std::uint64_t version) const {
  std::vector<TrustedListEntry> out;
  for (auto& [id, e] : state_at(version)) out.push_back(std::move(e));
  return out;
}

std::vector<TrustedListEntry> TrustedList::history() const {
  std::shared_lock lock(mu_);
  return log_;
}

std::string TrustedList::export_list(std::uint64_t version) const {
  std::shared_lock lock(mu_);
  if (version > log_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "unknown trusted list version");
  }
  json log = json::array();
  for (std::uint64_t i = 0; i < version; ++i) log.push_back(entry_to_json(log_[i]));
  json doc{{"format", kFormatName},
           {"format_version", kFormatVersion},
           {"version", version},
           {"log", std::move(log)}};
  return doc.dump(2) + "\n";
}

TrustedList TrustedList::import_list(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kMalformed, std::string("trusted list: ") + e.what());
  }
  if (require_string(doc, "$", "format") != kFormatName) field_error("$.format", "unknown format");
  if (require_int(doc, "$", "format_version") != kFormatVersion) {
    field_error("$.format_version", "unsupported");
  }
  const std::int64_t version = require_int(doc, "$", "version");
  const json& log = require(doc, "$", "log");
  if (!log.is_array()) field_error("$.log", "expected array");
  if (version < 0 || static_cast<std::size_t>(version) != log.size()) {
    field_error("$.version", "does not match log length");
  }
  TrustedList list;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const std::string path = "$.log[" + std::to_string(i) + "]";
    TrustedListEntry entry = entry_from_json(log[i], path);
    try {
      list.register_entry(std::move(entry));
    } catch (const Error& e) {
      field_error(path, e.what());
    }
  }
  return list;
}

}  // namespace agetoken::registry
