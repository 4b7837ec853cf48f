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

#include "agetoken/services.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <charconv>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace agetoken::services {

using json = nlohmann::json;
namespace chr = std::chrono;

namespace {

constexpr const char* kOctets = "application/octet-stream";
constexpr const char* kJson = "application/json";

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw Error(ErrorCode::kConfig, "config: " + key + " must be a number, got '" + value + "'");
  }
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string as_string(ByteView b) { return std::string(b.begin(), b.end()); }
Bytes as_bytes(const std::string& s) { return Bytes(s.begin(), s.end()); }

std::string error_json(ErrorCode code, const std::string& message,
                       std::optional<actors::RejectReason> reason = std::nullopt) {
  json j{{"error", error_code_name(code)}, {"code", static_cast<int>(code)}, {"message", message}};
  if (reason) j["reason"] = actors::reject_reason_name(*reason);
  return j.dump();
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  res.status = http_status(code);
  res.set_content(error_json(code, message), kJson);
}

// Runs a handler body, turning exceptions into error responses.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    send_error(res, e.code(), e.what());
  } catch (const std::exception& e) {
    send_error(res, ErrorCode::kInternal, e.what());
  }
}

std::string normalize_url(std::string url) {
  if (url.rfind("http://", 0) != 0 && url.rfind("https://", 0) != 0) url = "http://" + url;
  while (!url.empty() && url.back() == '/') url.pop_back();
  return url;
}

}  // namespace

std::string_view service_role_name(ServiceRole role) {
  switch (role) {
    case ServiceRole::kAttester: return "attester";
    case ServiceRole::kIssuer: return "issuer";
    case ServiceRole::kOrigin: return "origin";
    case ServiceRole::kExchange: return "exchange";
    case ServiceRole::kHub: return "hub";
    case ServiceRole::kRegistry: return "registry";
  }
  return "origin";
}

ServiceRole parse_service_role(std::string_view name) {
  for (ServiceRole r : {ServiceRole::kAttester, ServiceRole::kIssuer, ServiceRole::kOrigin,
                        ServiceRole::kExchange, ServiceRole::kHub, ServiceRole::kRegistry}) {
    if (service_role_name(r) == name) return r;
  }
  throw Error(ErrorCode::kConfig, "unknown role '" + std::string(name) + "'");
}

void ServiceConfig::validate(bool have_key, bool have_registry) const {
  auto need = [&](bool ok, const char* what) {
    if (!ok) {
      throw Error(ErrorCode::kConfig, std::string(service_role_name(role)) + " service needs " + what);
    }
  };
  switch (role) {
    case ServiceRole::kAttester:
      need(!entity_id.empty(), "entity_id");
      need(have_key, "an ed25519 key_file");
      need(!issuer_url.empty(), "issuer_url");
      break;
    case ServiceRole::kIssuer:
    case ServiceRole::kExchange:
      need(!entity_id.empty(), "entity_id");
      need(have_key, "a blind-rsa key_file");
      need(have_registry, "a registry file");
      break;
    case ServiceRole::kOrigin:
      need(!entity_id.empty(), "entity_id");
      need(!issuer_name.empty(), "issuer_name");
      need(have_registry, "a registry file");
      break;
    case ServiceRole::kRegistry:
      need(have_registry, "a registry file");
      break;
    case ServiceRole::kHub:
      break;
  }
  if (port < 0 || port > 65535) throw Error(ErrorCode::kConfig, "port out of range");
}

ServiceConfig parse_service_config(std::string_view text) {
  ServiceConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kConfig, "config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    try {
      if (key == "role") {
        c.role = parse_service_role(value);
      } else if (key == "listen") {
        const auto colon = value.rfind(':');
        if (colon == std::string::npos) throw Error(ErrorCode::kConfig, "listen must be host:port");
        c.host = value.substr(0, colon);
        c.port = parse_number<int>(key, value.substr(colon + 1));
      } else if (key == "entity_id") {
        c.entity_id = value;
      } else if (key == "issuer_name") {
        c.issuer_name = value;
      } else if (key == "issuer_url") {
        c.issuer_url = value;
      } else if (key == "policy") {
        c.policy = AgePolicy::parse(value);
      } else if (key == "key_file") {
        c.key_file = value;
      } else if (key == "registry") {
        c.registry_file = value;
      } else if (key == "spent_store") {
        c.spent_store_file = value;
      } else if (key == "sync_peers") {
        c.sync_peers.clear();
        std::string_view rest = value;
        while (!rest.empty()) {
          const auto comma = rest.find(',');
          const std::string peer = trim(rest.substr(0, comma));
          if (!peer.empty()) c.sync_peers.push_back(peer);
          if (comma == std::string_view::npos) break;
          rest.remove_prefix(comma + 1);
        }
      } else if (key == "sync_interval_ms") {
        c.sync_interval = chr::milliseconds(parse_number<long>(key, value));
      } else if (key == "batch_maximum") {
        c.batch_maximum = parse_number<std::uint32_t>(key, value);
      } else if (key == "bound_context_ttl_s") {
        c.bound_context_ttl = chr::seconds(parse_number<long>(key, value));
      } else {
        throw Error(ErrorCode::kConfig, "unknown key '" + key + "'");
      }
    } catch (const Error& e) {
      throw Error(ErrorCode::kConfig, "config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

void apply_environment(ServiceConfig& c) {
  if (const char* v = std::getenv("AGETOKEN_HOST")) c.host = v;
  if (const char* v = std::getenv("AGETOKEN_PORT")) c.port = parse_number<int>("AGETOKEN_PORT", v);
  if (const char* v = std::getenv("AGETOKEN_KEY_FILE")) c.key_file = v;
  if (const char* v = std::getenv("AGETOKEN_REGISTRY")) c.registry_file = v;
  if (const char* v = std::getenv("AGETOKEN_SPENT_STORE")) c.spent_store_file = v;
}

ServiceConfig load_service_config(const std::filesystem::path& path) {
  ServiceConfig c = parse_service_config(read_text(path));
  const auto base = path.parent_path();
  for (auto* p : {&c.key_file, &c.registry_file, &c.spent_store_file}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
  apply_environment(c);
  return c;
}

std::string encode_rsa_key_file(const blindsig::KeyPair& key) {
  auto hex = [](const blindsig::BigInt& v) { return v.get_str(16); };
  json j{{"kind", "blind-rsa"},
         {"n", hex(key.modulus)},
         {"e", hex(key.public_exponent)},
         {"d", hex(key.private_exponent)},
         {"p", hex(key.prime_p)},
         {"q", hex(key.prime_q)}};
  return j.dump(2) + "\n";
}

std::string encode_ed25519_key_file(const Ed25519SigningKey& key) {
  json j{{"kind", "ed25519"}, {"seed", to_hex(key.seed())}, {"public_key", to_hex(key.public_key())}};
  return j.dump(2) + "\n";
}

namespace {

json parse_key_json(const std::filesystem::path& path, std::string_view kind) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed, path.string() + ": " + e.what());
  }
  if (!j.is_object() || j.value("kind", "") != kind) {
    throw Error(ErrorCode::kMalformed, path.string() + ": not a " + std::string(kind) + " key file");
  }
  return j;
}

blindsig::BigInt hex_field(const json& j, const char* name, const std::filesystem::path& path) {
  if (!j.contains(name) || !j[name].is_string()) {
    throw Error(ErrorCode::kMalformed, path.string() + ": missing " + name);
  }
  blindsig::BigInt v;
  if (v.set_str(j[name].get<std::string>(), 16) != 0) {
    throw Error(ErrorCode::kMalformed, path.string() + ": bad hex in " + name);
  }
  return v;
}

}  // namespace

blindsig::KeyPair load_rsa_key_file(const std::filesystem::path& path) {
  const json j = parse_key_json(path, "blind-rsa");
  blindsig::KeyPair key{hex_field(j, "n", path), hex_field(j, "e", path), hex_field(j, "d", path),
                        hex_field(j, "p", path), hex_field(j, "q", path)};
  if (!blindsig::satisfies_invariants(key)) {
    throw Error(ErrorCode::kMalformed, path.string() + ": inconsistent RSA key");
  }
  return key;
}

Ed25519SigningKey load_ed25519_key_file(const std::filesystem::path& path) {
  const json j = parse_key_json(path, "ed25519");
  if (!j.contains("seed") || !j["seed"].is_string()) {
    throw Error(ErrorCode::kMalformed, path.string() + ": missing seed");
  }
  return Ed25519SigningKey::from_seed(from_hex(j["seed"].get<std::string>()));
}

void write_private_file(const std::filesystem::path& path, std::string_view contents) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
  if (fd < 0) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  ::fchmod(fd, 0600);
  std::size_t done = 0;
  while (done < contents.size()) {
    const ssize_t n = ::write(fd, contents.data() + done, contents.size() - done);
    if (n < 0) {
      ::close(fd);
      throw Error(ErrorCode::kIo, "cannot write " + path.string());
    }
    done += static_cast<std::size_t>(n);
  }
  ::close(fd);
}

// ---------------------------------------------------------------------------
// Sync

std::string SyncReport::to_json() const {
  return json{{"pulled", pulled},
              {"merged", merged},
              {"pushed", pushed},
              {"reached", reached},
              {"unreachable", unreachable}}
      .dump();
}

Bytes encode_spent_batch(std::span<const SpentTokenRecord> records, std::uint64_t next) {
  ByteWriter w;
  w.u64(next);
  w.u32(static_cast<std::uint32_t>(records.size()));
  for (const SpentTokenRecord& r : records) w.prefixed(encode_spent_record(r), 2);
  return std::move(w).bytes();
}

SyncTransport::Pull decode_spent_batch(ByteView bytes) {
  ByteReader r(bytes);
  SyncTransport::Pull out;
  out.next = static_cast<std::size_t>(r.u64());
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    ByteReader body(r.prefixed(2));
    out.records.push_back(decode_spent_record(body));
    body.expect_end("spent record");
  }
  r.expect_end("spent batch");
  return out;
}

SpentStoreSync::SpentStoreSync(std::shared_ptr<SpentStore> local, std::vector<std::string> peers,
                               std::shared_ptr<SyncTransport> transport)
    : local_(std::move(local)), peers_(std::move(peers)), transport_(std::move(transport)) {}

SyncReport SpentStoreSync::sync_once() {
  std::lock_guard<std::mutex> lock(mu_);
  SyncReport report;
  for (const std::string& peer : peers_) {
    std::optional<SyncTransport::Pull> pulled = transport_->pull(peer, pulled_[peer]);
    if (!pulled) {
      report.unreachable.push_back(peer);
      continue;
    }
    report.pulled += pulled->records.size();
    report.merged += local_->merge(pulled->records);
    pulled_[peer] = pulled->next;

    const std::size_t from = pushed_[peer];
    const std::vector<SpentTokenRecord> outgoing = local_->records_since(from);
    if (!outgoing.empty()) {
      if (!transport_->push(peer, outgoing)) {
        report.unreachable.push_back(peer);
        continue;
      }
      report.pushed += outgoing.size();
    }
    pushed_[peer] = from + outgoing.size();
    report.reached.push_back(peer);
  }
  return report;
}

std::size_t SpentStoreSync::pulled_watermark(const std::string& peer) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = pulled_.find(peer);
  return it == pulled_.end() ? 0 : it->second;
}

std::size_t SpentStoreSync::pushed_watermark(const std::string& peer) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = pushed_.find(peer);
  return it == pushed_.end() ? 0 : it->second;
}

void MemorySyncTransport::add_peer(const std::string& name, std::shared_ptr<SpentStore> store) {
  std::lock_guard<std::mutex> lock(mu_);
  stores_[name] = std::move(store);
  reachable_[name] = true;
}

void MemorySyncTransport::set_reachable(const std::string& name, bool reachable) {
  std::lock_guard<std::mutex> lock(mu_);
  reachable_[name] = reachable;
}

std::optional<SyncTransport::Pull> MemorySyncTransport::pull(const std::string& peer,
                                                             std::size_t since) {
  std::shared_ptr<SpentStore> store;
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = stores_.find(peer);
    if (it == stores_.end() || !reachable_[peer]) return std::nullopt;
    store = it->second;
  }
  Pull out;
  out.records = store->records_since(since);
  out.next = std::min(since, store->size() - out.records.size()) + out.records.size();
  return out;
}

bool MemorySyncTransport::push(const std::string& peer, std::span<const SpentTokenRecord> records) {
  std::shared_ptr<SpentStore> store;
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = stores_.find(peer);
    if (it == stores_.end() || !reachable_[peer]) return false;
    store = it->second;
  }
  store->merge(records);
  return true;
}

std::optional<SyncTransport::Pull> HttpSyncTransport::pull(const std::string& peer,
                                                           std::size_t since) {
  try {
    return decode_spent_batch(HttpClient(peer).get("/spent?since=" + std::to_string(since)));
  } catch (const Error&) {
    return std::nullopt;
  }
}

bool HttpSyncTransport::push(const std::string& peer, std::span<const SpentTokenRecord> records) {
  try {
    HttpClient(peer).post("/spent", encode_spent_batch(records, 0));
    return true;
  } catch (const Error&) {
    return false;
  }
}

// ---------------------------------------------------------------------------
// Bodies

Bytes encode_attest_request(const AttestRequestBody& body) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(body.evidence.kind));
  w.prefixed(actors::format_date(body.evidence.date_of_birth), 2);
  w.prefixed(body.evidence.subject_handle, 2);
  w.u8(static_cast<std::uint8_t>(body.policy.minimum_age_years));
  w.u8(static_cast<std::uint8_t>(body.policy.required_assurance));
  w.u16(static_cast<std::uint16_t>(body.requests.size()));
  for (const auto& req : body.requests) w.prefixed(tokens::encode_request(req), 2);
  return std::move(w).bytes();
}

AttestRequestBody decode_attest_request(ByteView bytes) {
  ByteReader r(bytes);
  AttestRequestBody body;
  const std::uint8_t kind = r.u8();
  if (kind > 2) throw Error(ErrorCode::kMalformed, "unknown evidence kind");
  body.evidence.kind = static_cast<actors::EvidenceKind>(kind);
  body.evidence.date_of_birth = actors::parse_date(r.prefixed_string(2));
  body.evidence.subject_handle = r.prefixed_string(2);
  const unsigned age = r.u8();
  const std::uint8_t assurance = r.u8();
  if (assurance < 1 || assurance > 3) throw Error(ErrorCode::kMalformed, "bad assurance level");
  try {
    body.policy = AgePolicy::make(age, static_cast<Assurance>(assurance));
  } catch (const Error& e) {
    throw Error(ErrorCode::kMalformed, e.what());
  }
  const std::uint16_t count = r.u16();
  for (std::uint16_t i = 0; i < count; ++i) {
    ByteView req = r.prefixed(2);
    if (req.size() < 4) throw Error(ErrorCode::kMalformed, "token request too short");
    body.requests.push_back(tokens::decode_request(req, req.size() - 3));
  }
  r.expect_end("attest request");
  return body;
}

Bytes encode_signature_list(std::span<const Bytes> sigs) {
  ByteWriter w;
  w.u16(static_cast<std::uint16_t>(sigs.size()));
  for (const Bytes& s : sigs) w.prefixed(s, 2);
  return std::move(w).bytes();
}

namespace {

std::vector<Bytes> read_signature_list(ByteReader& r) {
  std::vector<Bytes> out;
  const std::uint16_t count = r.u16();
  for (std::uint16_t i = 0; i < count; ++i) {
    ByteView s = r.prefixed(2);
    out.emplace_back(s.begin(), s.end());
  }
  return out;
}

}  // namespace

std::vector<Bytes> decode_signature_list(ByteView bytes) {
  ByteReader r(bytes);
  auto out = read_signature_list(r);
  r.expect_end("signature list");
  return out;
}

Bytes encode_attest_response(const AttestResponse& response) {
  ByteWriter w;
  w.prefixed(actors::encode_decision(response.decision), 2);
  w.raw(encode_signature_list(response.blind_signatures));
  return std::move(w).bytes();
}

AttestResponse decode_attest_response(ByteView bytes) {
  ByteReader r(bytes);
  AttestResponse out;
  out.decision = actors::decode_decision(r.prefixed(2));
  out.blind_signatures = read_signature_list(r);
  r.expect_end("attest response");
  return out;
}

Bytes encode_redeem_request(ByteView challenge, ByteView token) {
  ByteWriter w;
  w.prefixed(challenge, 2);
  w.raw(token);
  return std::move(w).bytes();
}

std::pair<Bytes, Bytes> decode_redeem_request(ByteView bytes) {
  ByteReader r(bytes);
  ByteView challenge = r.prefixed(2);
  ByteView token = r.raw(r.remaining());
  return {Bytes(challenge.begin(), challenge.end()), Bytes(token.begin(), token.end())};
}

std::optional<actors::RejectReason> parse_reject_reason(std::string_view name) {
  using actors::RejectReason;
  for (RejectReason r : {RejectReason::kMalformed, RejectReason::kChallengeMismatch,
                         RejectReason::kUnknownChallenge, RejectReason::kContextExpired,
                         RejectReason::kUnknownIssuer, RejectReason::kPolicyMismatch,
                         RejectReason::kInvalidSignature, RejectReason::kDoubleSpend}) {
    if (actors::reject_reason_name(r) == name) return r;
  }
  return std::nullopt;
}

std::optional<ErrorCode> parse_error_code(std::string_view name) {
  for (ErrorCode c :
       {ErrorCode::kMalformed, ErrorCode::kAttesterAuth, ErrorCode::kKeyIdMismatch,
        ErrorCode::kPolicyDenied, ErrorCode::kUnknownIssuer, ErrorCode::kAllowanceExceeded,
        ErrorCode::kInvalidToken, ErrorCode::kDoubleSpend, ErrorCode::kContextExpired,
        ErrorCode::kPoolExhausted, ErrorCode::kIssuerMisbehavior, ErrorCode::kIssuanceInProgress,
        ErrorCode::kInvalidArgument, ErrorCode::kEncoding, ErrorCode::kConfig, ErrorCode::kNetwork,
        ErrorCode::kEntropy, ErrorCode::kIo, ErrorCode::kInternal}) {
    if (error_code_name(c) == name) return c;
  }
  return std::nullopt;
}

std::optional<blindsig::PublicKey> issuer_key(const registry::TrustedList& list,
                                              std::string_view issuer_name, Timestamp at) {
  std::optional<registry::TrustedListEntry> e = list.entity(issuer_name);
  if (!e || e->role != registry::Role::kIssuer || e->status != registry::Status::kActive) {
    return std::nullopt;
  }
  for (const registry::KeyEntry& k : e->keys) {
    if (k.algorithm == registry::KeyAlgorithm::kBlindRsa && k.valid_at(at)) {
      return tokens::decode_public_key(k.public_key);
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// HTTP client

namespace {

struct RawResponse {
  int status = 0;
  std::string body;
};

RawResponse perform(const std::string& base, const std::string& path,
                    const std::optional<ByteView>& body) {
  httplib::Client cli(base);
  cli.set_connection_timeout(5, 0);
  cli.set_read_timeout(60, 0);
  cli.set_write_timeout(60, 0);
  httplib::Result res = body ? cli.Post(path, as_string(*body), kOctets) : cli.Get(path);
  if (!res) {
    throw Error(ErrorCode::kNetwork,
                base + path + ": " + httplib::to_string(res.error()));
  }
  return RawResponse{res->status, res->body};
}

[[noreturn]] void raise_remote(const std::string& where, const RawResponse& r) {
  try {
    const json j = json::parse(r.body);
    const auto code = parse_error_code(j.value("error", ""));
    if (code) throw Error(*code, j.value("message", where));
  } catch (const json::exception&) {
  }
  throw Error(ErrorCode::kNetwork, where + ": HTTP " + std::to_string(r.status));
}

}  // namespace

HttpClient::HttpClient(std::string base_url) : base_url_(normalize_url(std::move(base_url))) {}

Bytes HttpClient::get(const std::string& path) const {
  const RawResponse r = perform(base_url_, path, std::nullopt);
  if (r.status != 200) raise_remote(base_url_ + path, r);
  return as_bytes(r.body);
}

Bytes HttpClient::post(const std::string& path, ByteView body) const {
  const RawResponse r = perform(base_url_, path, body);
  if (r.status != 200) raise_remote(base_url_ + path, r);
  return as_bytes(r.body);
}

AttestResponse remote_attest(const HttpClient& attester, const AttestRequestBody& body) {
  return decode_attest_response(attester.post("/attest", encode_attest_request(body)));
}

std::vector<Bytes> remote_issue(const HttpClient& issuer, const actors::ForwardedRequest& fwd) {
  return decode_signature_list(issuer.post("/issue", actors::encode_forwarded(fwd)));
}

Bytes remote_exchange(const HttpClient& point, const exchange::ExchangeRequest& req) {
  return point.post("/exchange", exchange::encode_exchange_request(req));
}

tokens::TokenChallenge remote_challenge(const HttpClient& origin, actors::ChallengeMode mode) {
  const char* m = mode == actors::ChallengeMode::kBound ? "bound" : "batch";
  return tokens::decode_challenge(origin.get(std::string("/challenge?mode=") + m));
}

actors::RedeemDecision remote_redeem(const HttpClient& origin, ByteView challenge, ByteView token) {
  const RawResponse r =
      perform(origin.base_url(), "/redeem", ByteView(encode_redeem_request(challenge, token)));
  if (r.status == 200) return actors::RedeemDecision::grant();
  try {
    const json j = json::parse(r.body);
    if (auto reason = parse_reject_reason(j.value("reason", ""))) {
      return actors::RedeemDecision::reject(*reason);
    }
  } catch (const json::exception&) {
  }
  raise_remote(origin.base_url() + "/redeem", r);
}

registry::TrustedList remote_trusted_list(const HttpClient& server,
                                          std::optional<std::uint64_t> version) {
  std::string path = "/trusted-list";
  if (version) path += "?version=" + std::to_string(*version);
  return registry::TrustedList::import_list(as_string(server.get(path)));
}

void remote_sync(const HttpClient& server) { server.post("/sync", Bytes{}); }

// ---------------------------------------------------------------------------
// Server

namespace {

class HttpService final : public Service {
 public:
  HttpService(ServiceConfig config, ServeOptions options);
  ~HttpService() override { stop(); }

  const ServiceConfig& config() const override { return config_; }
  int port() const override { return port_; }
  std::string url() const override { return "http://" + config_.host + ":" + std::to_string(port_); }
  void stop() override;
  std::shared_ptr<SpentStore> spent_store() const override { return spent_; }
  SyncReport sync_now() override;

  void start();

 private:
  void routes();
  void handle_attest(const httplib::Request& req, httplib::Response& res);
  void handle_redeem(const httplib::Request& req, httplib::Response& res);

  ServiceConfig config_;
  std::shared_ptr<const Clock> clock_;
  std::shared_ptr<Entropy> rng_;
  std::shared_ptr<registry::TrustedList> trusted_;
  std::shared_ptr<SpentStore> spent_;
  std::unique_ptr<actors::Attester> attester_;
  std::unique_ptr<actors::Issuer> issuer_;
  std::unique_ptr<actors::Origin> origin_;
  std::unique_ptr<exchange::ExchangePoint> exchange_;
  std::unique_ptr<SpentStoreSync> sync_;
  bool background_sync_ = true;

  httplib::Server server_;
  int port_ = 0;
  std::thread listener_;
  std::thread syncer_;
  std::mutex stop_mu_;
  std::condition_variable stop_cv_;
  bool stopping_ = false;
};

HttpService::HttpService(ServiceConfig config, ServeOptions options)
    : config_(std::move(config)), background_sync_(options.background_sync) {
  clock_ = options.clock ? options.clock : std::make_shared<SystemClock>();
  rng_ = options.rng ? options.rng : std::make_shared<SystemEntropy>();

  trusted_ = options.trusted;
  if (!trusted_ && !config_.registry_file.empty()) {
    trusted_ = std::make_shared<registry::TrustedList>(
        registry::TrustedList::import_list(read_text(config_.registry_file)));
  }

  const bool wants_rsa =
      config_.role == ServiceRole::kIssuer || config_.role == ServiceRole::kExchange;
  const bool wants_ed = config_.role == ServiceRole::kAttester;
  std::optional<blindsig::KeyPair> rsa = options.rsa_key;
  std::optional<Ed25519SigningKey> ed = options.ed25519_key;
  if (wants_rsa && !rsa && !config_.key_file.empty()) rsa = load_rsa_key_file(config_.key_file);
  if (wants_ed && !ed && !config_.key_file.empty()) ed = load_ed25519_key_file(config_.key_file);
  config_.validate(wants_rsa ? rsa.has_value() : ed.has_value(), trusted_ != nullptr);

  const bool wants_spent = config_.role == ServiceRole::kOrigin ||
                           config_.role == ServiceRole::kExchange ||
                           config_.role == ServiceRole::kHub;
  if (wants_spent) {
    spent_ = options.spent;
    if (!spent_) {
      if (config_.spent_store_file.empty()) {
        spent_ = std::make_shared<MemorySpentStore>();
      } else {
        spent_ = std::make_shared<FileSpentStore>(config_.spent_store_file);
      }
    }
    if (!config_.sync_peers.empty()) {
      std::vector<std::string> peers;
      for (const auto& p : config_.sync_peers) peers.push_back(normalize_url(p));
      sync_ = std::make_unique<SpentStoreSync>(spent_, std::move(peers),
                                               std::make_shared<HttpSyncTransport>());
    }
  }

  switch (config_.role) {
    case ServiceRole::kAttester:
      attester_ = std::make_unique<actors::Attester>(
          actors::Attester::Config{config_.entity_id, config_.batch_maximum}, *ed);
      break;
    case ServiceRole::kIssuer:
      issuer_ = std::make_unique<actors::Issuer>(
          actors::Issuer::Config{config_.entity_id, config_.policy, config_.batch_maximum}, *rsa,
          trusted_, clock_);
      break;
    case ServiceRole::kExchange:
      exchange_ = std::make_unique<exchange::ExchangePoint>(
          exchange::ExchangePoint::Config{config_.entity_id, config_.policy}, *rsa, trusted_,
          spent_, clock_);
      break;
    case ServiceRole::kOrigin:
      origin_ = std::make_unique<actors::Origin>(
          actors::Origin::Config{config_.entity_id, config_.issuer_name, config_.policy,
                                 config_.bound_context_ttl},
          trusted_, spent_, clock_);
      break;
    case ServiceRole::kHub:
    case ServiceRole::kRegistry:
      break;
  }
  routes();
}

void HttpService::routes() {
  server_.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    json j{{"status", "ok"},
           {"role", service_role_name(config_.role)},
           {"entity_id", config_.entity_id}};
    if (trusted_) j["registry_version"] = trusted_->version();
    if (spent_) j["spent_records"] = spent_->size();
    res.set_content(j.dump(), kJson);
  });

  if (trusted_) {
    server_.Get("/trusted-list", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::uint64_t version = trusted_->version();
        if (req.has_param("version")) {
          const std::string v = req.get_param_value("version");
          std::uint64_t parsed = 0;
          auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), parsed);
          if (ec != std::errc() || ptr != v.data() + v.size()) {
            throw Error(ErrorCode::kInvalidArgument, "version must be an integer");
          }
          version = parsed;
        }
        res.set_content(trusted_->export_list(version), kJson);
      });
    });
  }

  if (attester_) {
    server_.Post("/attest", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { handle_attest(req, res); });
    });
  }

  if (issuer_) {
    server_.Post("/issue", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto fwd = actors::decode_forwarded(as_bytes(req.body));
        res.set_content(as_string(encode_signature_list(issuer_->issue(fwd))), kOctets);
      });
    });
  }

  if (exchange_) {
    server_.Post("/exchange", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto xr = exchange::decode_exchange_request(as_bytes(req.body));
        res.set_content(as_string(exchange_->exchange(xr)), kOctets);
      });
    });
  }

  if (origin_) {
    server_.Get("/challenge", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::string mode = req.has_param("mode") ? req.get_param_value("mode") : "batch";
        actors::ChallengeMode m;
        if (mode == "batch") {
          m = actors::ChallengeMode::kBatch;
        } else if (mode == "bound") {
          m = actors::ChallengeMode::kBound;
        } else {
          throw Error(ErrorCode::kInvalidArgument, "mode must be batch or bound");
        }
        res.set_content(as_string(tokens::encode_challenge(origin_->make_challenge(m, *rng_))),
                        kOctets);
      });
    });
    server_.Post("/redeem", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { handle_redeem(req, res); });
    });
  }

  if (spent_) {
    server_.Get("/spent", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::size_t since = 0;
        if (req.has_param("since")) {
          const std::string v = req.get_param_value("since");
          auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), since);
          if (ec != std::errc() || ptr != v.data() + v.size()) {
            throw Error(ErrorCode::kInvalidArgument, "since must be an integer");
          }
        }
        const auto records = spent_->records_since(since);
        const std::size_t next = std::min(since, spent_->size() - records.size()) + records.size();
        res.set_content(as_string(encode_spent_batch(records, next)), kOctets);
      });
    });
    server_.Post("/spent", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto batch = decode_spent_batch(as_bytes(req.body));
        const std::size_t added = spent_->merge(batch.records);
        res.set_content(json{{"added", added}}.dump(), kJson);
      });
    });
    server_.Post("/sync", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { res.set_content(sync_now().to_json(), kJson); });
    });
  }
}

void HttpService::handle_attest(const httplib::Request& req, httplib::Response& res) {
  const AttestRequestBody body = decode_attest_request(as_bytes(req.body));
  AttestResponse out;
  out.decision = attester_->attest(body.evidence, body.policy, clock_->now());
  if (!out.decision.granted) {
    throw Error(ErrorCode::kPolicyDenied, "attestation denied for " + body.policy.label());
  }
  if (!body.requests.empty()) {
    const actors::ForwardedRequest fwd = attester_->forward(out.decision, body.requests);
    out.blind_signatures = remote_issue(HttpClient(config_.issuer_url), fwd);
  }
  res.set_content(as_string(encode_attest_response(out)), kOctets);
}

void HttpService::handle_redeem(const httplib::Request& req, httplib::Response& res) {
  std::pair<Bytes, Bytes> parts;
  try {
    parts = decode_redeem_request(as_bytes(req.body));
  } catch (const Error& e) {
    res.status = 400;
    res.set_content(error_json(ErrorCode::kMalformed, e.what(), actors::RejectReason::kMalformed),
                    kJson);
    return;
  }
  const actors::RedeemDecision d = origin_->redeem_encoded(parts.second, parts.first);
  if (d.granted) {
    res.set_content(json{{"granted", true}}.dump(), kJson);
    return;
  }
  const ErrorCode code = actors::error_code_for(*d.reason);
  res.status = http_status(code);
  res.set_content(error_json(code, std::string(actors::reject_reason_name(*d.reason)), d.reason),
                  kJson);
}

SyncReport HttpService::sync_now() {
  if (!sync_) return SyncReport{};
  return sync_->sync_once();
}

void HttpService::start() {
  if (config_.port == 0) {
    port_ = server_.bind_to_any_port(config_.host);
    if (port_ <= 0) throw Error(ErrorCode::kNetwork, "cannot bind " + config_.host);
  } else {
    if (!server_.bind_to_port(config_.host, config_.port)) {
      throw Error(ErrorCode::kNetwork,
                  "cannot bind " + config_.host + ":" + std::to_string(config_.port));
    }
    port_ = config_.port;
  }
  listener_ = std::thread([this] { server_.listen_after_bind(); });
  server_.wait_until_ready();
  if (sync_ && background_sync_ && config_.sync_interval.count() > 0) {
    syncer_ = std::thread([this] {
      std::unique_lock<std::mutex> lock(stop_mu_);
      while (!stop_cv_.wait_for(lock, config_.sync_interval, [this] { return stopping_; })) {
        lock.unlock();
        sync_->sync_once();
        lock.lock();
      }
    });
  }
}

void HttpService::stop() {
  {
    std::lock_guard<std::mutex> lock(stop_mu_);
    if (stopping_) return;
    stopping_ = true;
  }
  stop_cv_.notify_all();
  server_.stop();
  if (listener_.joinable()) listener_.join();
  if (syncer_.joinable()) syncer_.join();
}

}  // namespace

std::unique_ptr<Service> serve(const ServiceConfig& config, ServeOptions options) {
  auto service = std::make_unique<HttpService>(config, std::move(options));
  service->start();
  return service;
}

}  // namespace agetoken::services
