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

// HTTP/1.1 services for each party, spent-store anti-entropy sync and the
// matching client calls. Bodies are application/octet-stream in the
// layouts of docs/wire-formats.md; errors are small JSON objects.

#ifndef AGETOKEN_SERVICES_HPP_
#define AGETOKEN_SERVICES_HPP_

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "agetoken/actors.hpp"
#include "agetoken/crypto.hpp"
#include "agetoken/exchange.hpp"
#include "agetoken/registry.hpp"
#include "agetoken/spent_store.hpp"

namespace agetoken::services {

enum class ServiceRole { kAttester, kIssuer, kOrigin, kExchange, kHub, kRegistry };

std::string_view service_role_name(ServiceRole role);
ServiceRole parse_service_role(std::string_view name);

struct ServiceConfig {
  ServiceRole role = ServiceRole::kOrigin;
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks a free port
  // Attester id, issuer name or origin id depending on the role.
  std::string entity_id;
  // Origin: the issuer whose tokens it accepts.
  std::string issuer_name;
  // Attester: where granted requests are forwarded.
  std::string issuer_url;
  AgePolicy policy;
  std::filesystem::path key_file;
  std::filesystem::path registry_file;
  std::filesystem::path spent_store_file;  // empty keeps the store in memory
  std::vector<std::string> sync_peers;     // base URLs
  std::chrono::milliseconds sync_interval{5000};
  std::uint32_t batch_maximum = actors::kDefaultBatchAllowance;
  std::chrono::seconds bound_context_ttl = actors::kDefaultBoundContextTtl;

  // Throws kConfig when a role-specific field is missing.
  void validate(bool have_key, bool have_registry) const;
};

// "key = value" lines, '#' comments. Unknown keys are errors.
ServiceConfig parse_service_config(std::string_view text);
// Reads the file, then applies AGETOKEN_HOST, AGETOKEN_PORT, AGETOKEN_KEY_FILE,
// AGETOKEN_REGISTRY and AGETOKEN_SPENT_STORE.
ServiceConfig load_service_config(const std::filesystem::path& path);
void apply_environment(ServiceConfig& config);

// Key files are JSON: {"kind":"blind-rsa","n":..,"e":..,"d":..,"p":..,"q":..}
// or {"kind":"ed25519","seed":..}, hex values.
std::string encode_rsa_key_file(const blindsig::KeyPair& key);
std::string encode_ed25519_key_file(const Ed25519SigningKey& key);
blindsig::KeyPair load_rsa_key_file(const std::filesystem::path& path);
Ed25519SigningKey load_ed25519_key_file(const std::filesystem::path& path);
// Writes with mode 0600.
void write_private_file(const std::filesystem::path& path, std::string_view contents);

// ---------------------------------------------------------------------------
// Spent-store sync

struct SyncReport {
  std::size_t pulled = 0;   // records received
  std::size_t merged = 0;   // of which new locally
  std::size_t pushed = 0;   // records sent
  std::vector<std::string> reached;
  std::vector<std::string> unreachable;

  std::string to_json() const;
};

class SyncTransport {
 public:
  struct Pull {
    std::vector<SpentTokenRecord> records;
    std::size_t next = 0;  // peer log position after these records
  };
  virtual ~SyncTransport() = default;
  // nullopt when the peer is unreachable.
  virtual std::optional<Pull> pull(const std::string& peer, std::size_t since) = 0;
  virtual bool push(const std::string& peer, std::span<const SpentTokenRecord> records) = 0;
};

// Push-pull union with every peer. Watermarks only advance on success, so
// an unreachable peer is caught up on a later round.
class SpentStoreSync {
 public:
  SpentStoreSync(std::shared_ptr<SpentStore> local, std::vector<std::string> peers,
                 std::shared_ptr<SyncTransport> transport);

  SyncReport sync_once();

  const std::vector<std::string>& peers() const { return peers_; }
  std::size_t pulled_watermark(const std::string& peer) const;
  std::size_t pushed_watermark(const std::string& peer) const;

 private:
  std::shared_ptr<SpentStore> local_;
  std::vector<std::string> peers_;
  std::shared_ptr<SyncTransport> transport_;
  mutable std::mutex mu_;
  std::map<std::string, std::size_t> pulled_;
  std::map<std::string, std::size_t> pushed_;
};

// Peers addressed by name, for tests and in-process simulation.
class MemorySyncTransport : public SyncTransport {
 public:
  void add_peer(const std::string& name, std::shared_ptr<SpentStore> store);
  void set_reachable(const std::string& name, bool reachable);

  std::optional<Pull> pull(const std::string& peer, std::size_t since) override;
  bool push(const std::string& peer, std::span<const SpentTokenRecord> records) override;

 private:
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<SpentStore>> stores_;
  std::map<std::string, bool> reachable_;
};

class HttpSyncTransport : public SyncTransport {
 public:
  std::optional<Pull> pull(const std::string& peer, std::size_t since) override;
  bool push(const std::string& peer, std::span<const SpentTokenRecord> records) override;
};

// u64 next | u32 count | count x (u16-len spent record)
Bytes encode_spent_batch(std::span<const SpentTokenRecord> records, std::uint64_t next);
SyncTransport::Pull decode_spent_batch(ByteView bytes);

// ---------------------------------------------------------------------------
// Servers

struct ServeOptions {
  // Each overrides the corresponding file in the config when set.
  std::shared_ptr<const Clock> clock;
  std::shared_ptr<Entropy> rng;
  std::shared_ptr<registry::TrustedList> trusted;
  std::optional<blindsig::KeyPair> rsa_key;
  std::optional<Ed25519SigningKey> ed25519_key;
  std::shared_ptr<SpentStore> spent;
  // Runs sync_once every sync_interval of wall time when peers are set.
  bool background_sync = true;
};

class Service {
 public:
  virtual ~Service() = default;
  virtual const ServiceConfig& config() const = 0;
  virtual int port() const = 0;
  virtual std::string url() const = 0;
  virtual void stop() = 0;
  // Null for roles without a spent store.
  virtual std::shared_ptr<SpentStore> spent_store() const = 0;
  virtual SyncReport sync_now() = 0;
};

// Binds, starts serving on a background thread and returns once /health
// answers. Throws kConfig for missing settings, kIo / kMalformed for bad
// key or registry files and kNetwork when the address cannot be bound.
std::unique_ptr<Service> serve(const ServiceConfig& config, ServeOptions options = {});

// ---------------------------------------------------------------------------
// Client side

// Throws kNetwork when the peer is unreachable and the mapped ErrorCode for
// an error response.
class HttpClient {
 public:
  explicit HttpClient(std::string base_url);
  Bytes get(const std::string& path) const;
  Bytes post(const std::string& path, ByteView body) const;
  const std::string& base_url() const { return base_url_; }

 private:
  std::string base_url_;
};

struct AttestRequestBody {
  actors::KycEvidence evidence;
  AgePolicy policy;
  std::vector<tokens::TokenRequest> requests;
};

// u8 kind | u16-len date | u16-len handle | u8 age | u8 assurance |
// u16 count | count x (u16-len token request)
Bytes encode_attest_request(const AttestRequestBody& body);
AttestRequestBody decode_attest_request(ByteView bytes);

struct AttestResponse {
  actors::AttestationDecision decision;
  std::vector<Bytes> blind_signatures;
};

// u16-len decision | u16 count | count x (u16-len blind signature)
Bytes encode_attest_response(const AttestResponse& response);
AttestResponse decode_attest_response(ByteView bytes);

// u16 count | count x (u16-len blind signature)
Bytes encode_signature_list(std::span<const Bytes> sigs);
std::vector<Bytes> decode_signature_list(ByteView bytes);

// u16-len challenge | token
Bytes encode_redeem_request(ByteView challenge, ByteView token);
std::pair<Bytes, Bytes> decode_redeem_request(ByteView bytes);

AttestResponse remote_attest(const HttpClient& attester, const AttestRequestBody& body);
std::vector<Bytes> remote_issue(const HttpClient& issuer, const actors::ForwardedRequest& fwd);
Bytes remote_exchange(const HttpClient& point, const exchange::ExchangeRequest& req);
tokens::TokenChallenge remote_challenge(const HttpClient& origin, actors::ChallengeMode mode);
// Rejections come back as decisions; only transport failures throw.
actors::RedeemDecision remote_redeem(const HttpClient& origin, ByteView challenge, ByteView token);
registry::TrustedList remote_trusted_list(const HttpClient& server,
                                          std::optional<std::uint64_t> version = std::nullopt);
void remote_sync(const HttpClient& server);

// Active blind-RSA key of `issuer_name` in `list` at `at`.
std::optional<blindsig::PublicKey> issuer_key(const registry::TrustedList& list,
                                              std::string_view issuer_name, Timestamp at);

std::optional<actors::RejectReason> parse_reject_reason(std::string_view name);
std::optional<ErrorCode> parse_error_code(std::string_view name);

}  // namespace agetoken::services

#endif  // AGETOKEN_SERVICES_HPP_
