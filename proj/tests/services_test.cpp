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

#include <gtest/gtest.h>
#include <sys/stat.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <thread>

#include "test_support.hpp"

namespace agetoken::services {
namespace {

using agetoken::testing::adult_evidence;
using agetoken::testing::minor_evidence;
using agetoken::testing::t0;
using agetoken::testing::test_key;
using agetoken::testing::World;
using actors::ChallengeMode;
using actors::Client;
using actors::RejectReason;

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInternal;
}

class TempDir {
 public:
  TempDir() {
    path_ = std::filesystem::temp_directory_path() /
            ("agetoken-svc-" + to_hex(SystemEntropy().bytes(8)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::filesystem::path file(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

SpentTokenRecord random_record(Entropy& rng) {
  SpentTokenRecord r;
  rng.fill(r.nonce);
  rng.fill(r.token_key_id);
  r.origin_id = "o";
  r.spend_time = t0();
  return r;
}

std::set<Bytes> keys_of(const SpentStore& s) {
  std::set<Bytes> out;
  for (const auto& r : s.records()) {
    Bytes k(r.nonce.begin(), r.nonce.end());
    k.insert(k.end(), r.token_key_id.begin(), r.token_key_id.end());
    out.insert(k);
  }
  return out;
}

TEST(ServiceConfig, ParsesAllKeys) {
  const ServiceConfig c = parse_service_config(R"(
# origin
role = origin
listen = 0.0.0.0:8443
entity_id = origin.example
issuer_name = issuer.example
policy = 13+/high
registry = trusted.json
spent_store = /var/lib/spent.log
sync_peers = http://a:1, b:2 ,
sync_interval_ms = 250
batch_maximum = 4
bound_context_ttl_s = 30
)");
  EXPECT_EQ(c.role, ServiceRole::kOrigin);
  EXPECT_EQ(c.host, "0.0.0.0");
  EXPECT_EQ(c.port, 8443);
  EXPECT_EQ(c.entity_id, "origin.example");
  EXPECT_EQ(c.issuer_name, "issuer.example");
  EXPECT_EQ(c.policy, AgePolicy::make(13, Assurance::kHigh));
  EXPECT_EQ(c.registry_file, "trusted.json");
  EXPECT_EQ(c.spent_store_file, "/var/lib/spent.log");
  EXPECT_EQ(c.sync_peers, (std::vector<std::string>{"http://a:1", "b:2"}));
  EXPECT_EQ(c.sync_interval, std::chrono::milliseconds(250));
  EXPECT_EQ(c.batch_maximum, 4u);
  EXPECT_EQ(c.bound_context_ttl, std::chrono::seconds(30));
}

TEST(ServiceConfig, RejectsBadInput) {
  EXPECT_EQ(code_of([] { parse_service_config("colour = blue"); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { parse_service_config("role = banker"); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { parse_service_config("listen = nohost"); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { parse_service_config("listen = h:12x"); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { parse_service_config("policy = 18+"); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { parse_service_config("just words"); }), ErrorCode::kConfig);
}

TEST(ServiceConfig, FileWithEnvironmentOverrides) {
  TempDir dir;
  const auto path = dir.file("issuer.conf");
  std::ofstream(path) << "role = issuer\nentity_id = i\nkey_file = key.json\nregistry = r.json\n"
                         "listen = 127.0.0.1:1000\n";
  ServiceConfig c = load_service_config(path);
  EXPECT_EQ(c.key_file, dir.file("key.json"));
  EXPECT_EQ(c.registry_file, dir.file("r.json"));
  EXPECT_EQ(c.port, 1000);

  ::setenv("AGETOKEN_PORT", "2000", 1);
  ::setenv("AGETOKEN_KEY_FILE", "/elsewhere/key.json", 1);
  c = load_service_config(path);
  ::unsetenv("AGETOKEN_PORT");
  ::unsetenv("AGETOKEN_KEY_FILE");
  EXPECT_EQ(c.port, 2000);
  EXPECT_EQ(c.key_file, "/elsewhere/key.json");
}

TEST(ServiceConfig, MissingKeypairIsAStartupError) {
  World w;
  ServiceConfig c;
  c.role = ServiceRole::kIssuer;
  c.entity_id = "issuer.example";
  ServeOptions o;
  o.trusted = w.list;
  EXPECT_EQ(code_of([&] { serve(c, o); }), ErrorCode::kConfig);
  c.key_file = "/nonexistent/key.json";
  EXPECT_EQ(code_of([&] { serve(c, o); }), ErrorCode::kIo);
  c.role = ServiceRole::kAttester;
  c.key_file.clear();
  c.issuer_url = "http://127.0.0.1:1";
  EXPECT_EQ(code_of([&] { serve(c, o); }), ErrorCode::kConfig);
  c.role = ServiceRole::kOrigin;
  EXPECT_EQ(code_of([&] { serve(c, ServeOptions{}); }), ErrorCode::kConfig);
}

TEST(KeyFiles, RoundTripWithPrivateMode) {
  TempDir dir;
  const auto& key = test_key(1024);
  write_private_file(dir.file("rsa.json"), encode_rsa_key_file(key));
  const auto loaded = load_rsa_key_file(dir.file("rsa.json"));
  EXPECT_EQ(loaded.modulus, key.modulus);
  EXPECT_EQ(loaded.private_exponent, key.private_exponent);
  EXPECT_EQ(loaded.prime_p, key.prime_p);
  struct stat st{};
  ASSERT_EQ(::stat(dir.file("rsa.json").c_str(), &st), 0);
  EXPECT_EQ(st.st_mode & 0777, 0600u);

  SeededEntropy rng(5);
  const auto ed = Ed25519SigningKey::generate(rng);
  write_private_file(dir.file("ed.json"), encode_ed25519_key_file(ed));
  EXPECT_EQ(load_ed25519_key_file(dir.file("ed.json")).public_key(), ed.public_key());

  EXPECT_EQ(code_of([&] { load_rsa_key_file(dir.file("ed.json")); }), ErrorCode::kMalformed);
  std::string text = encode_rsa_key_file(key);
  text[text.find("\"d\": \"") + 6] ^= 1;
  write_private_file(dir.file("bad.json"), text);
  EXPECT_EQ(code_of([&] { load_rsa_key_file(dir.file("bad.json")); }), ErrorCode::kMalformed);
}

TEST(SpentBatch, RoundTrip) {
  SeededEntropy rng(6);
  std::vector<SpentTokenRecord> records;
  for (int i = 0; i < 17; ++i) records.push_back(random_record(rng));
  const Bytes e = encode_spent_batch(records, 99);
  const auto p = decode_spent_batch(e);
  EXPECT_EQ(p.records, records);
  EXPECT_EQ(p.next, 99u);
  EXPECT_THROW(decode_spent_batch(ByteView(e).first(e.size() - 1)), Error);
}

// Five stores in a full mesh; any sequence of sync rounds that visits every
// node twice leaves all of them holding the union.
TEST(SpentStoreSync, MeshConvergesInAnyOrder) {
  SeededEntropy rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto transport = std::make_shared<MemorySyncTransport>();
    std::vector<std::shared_ptr<MemorySpentStore>> stores;
    std::vector<std::string> names;
    for (int i = 0; i < 5; ++i) {
      stores.push_back(std::make_shared<MemorySpentStore>());
      names.push_back("peer" + std::to_string(i));
      transport->add_peer(names.back(), stores.back());
    }
    std::set<Bytes> expected;
    for (auto& s : stores) {
      const auto n = rng.uniform(30);
      for (std::uint64_t k = 0; k < n; ++k) s->insert_if_absent(random_record(rng));
      for (const auto& key : keys_of(*s)) expected.insert(key);
    }
    // A record spent at two places before sync.
    const auto shared = random_record(rng);
    stores[0]->insert_if_absent(shared);
    stores[3]->insert_if_absent(shared);
    expected.merge(keys_of(*stores[0]));

    std::vector<std::unique_ptr<SpentStoreSync>> syncs;
    for (int i = 0; i < 5; ++i) {
      std::vector<std::string> peers;
      for (int j = 0; j < 5; ++j) {
        if (j != i) peers.push_back(names[j]);
      }
      syncs.push_back(std::make_unique<SpentStoreSync>(stores[i], peers, transport));
    }
    std::vector<int> order(5);
    std::iota(order.begin(), order.end(), 0);
    for (int round = 0; round < 2; ++round) {
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.uniform(i)]);
      }
      for (int i : order) syncs[i]->sync_once();
    }
    for (auto& s : stores) EXPECT_EQ(keys_of(*s), expected);
    // Idempotent: another round moves nothing new.
    for (auto& sync : syncs) EXPECT_EQ(sync->sync_once().merged, 0u);
    for (auto& s : stores) EXPECT_EQ(s->size(), expected.size());
  }
}

TEST(SpentStoreSync, UnreachablePeerIsReportedAndCaughtUp) {
  SeededEntropy rng(8);
  auto transport = std::make_shared<MemorySyncTransport>();
  auto a = std::make_shared<MemorySpentStore>();
  auto b = std::make_shared<MemorySpentStore>();
  transport->add_peer("b", b);
  SpentStoreSync sync(a, {"b", "ghost"}, transport);
  for (int i = 0; i < 5; ++i) a->insert_if_absent(random_record(rng));
  transport->set_reachable("b", false);
  auto report = sync.sync_once();
  EXPECT_EQ(report.unreachable, (std::vector<std::string>{"b", "ghost"}));
  EXPECT_EQ(sync.pushed_watermark("b"), 0u);
  transport->set_reachable("b", true);
  b->insert_if_absent(random_record(rng));
  report = sync.sync_once();
  EXPECT_EQ(report.reached, (std::vector<std::string>{"b"}));
  EXPECT_EQ(report.pulled, 1u);
  // The pulled record is echoed back once; merge makes that harmless.
  EXPECT_EQ(report.pushed, 6u);
  EXPECT_EQ(keys_of(*a), keys_of(*b));
  EXPECT_EQ(sync.pushed_watermark("b"), 6u);
  EXPECT_EQ(sync.pulled_watermark("b"), 1u);
  const std::string j = report.to_json();
  EXPECT_NE(j.find("\"unreachable\":[\"ghost\"]"), std::string::npos) << j;
}

TEST(Bodies, AttestRequestRoundTrip) {
  World w;
  Client client;
  const auto challenge = w.origin.make_challenge(ChallengeMode::kBatch, w.rng);
  AttestRequestBody body{adult_evidence(), AgePolicy::make(18, Assurance::kHigh),
                         client.begin_issuance(challenge, w.issuer.public_key(), 3, 10, w.rng)};
  const Bytes e = encode_attest_request(body);
  const auto d = decode_attest_request(e);
  EXPECT_EQ(d.evidence, body.evidence);
  EXPECT_EQ(d.policy, body.policy);
  EXPECT_EQ(d.requests, body.requests);
  for (std::size_t cut = 0; cut < e.size(); cut += 5) {
    EXPECT_THROW(decode_attest_request(ByteView(e).first(cut)), Error) << cut;
  }
  const auto redeem = encode_redeem_request(Bytes{1, 2, 3}, Bytes{9, 9});
  EXPECT_EQ(decode_redeem_request(redeem), std::make_pair(Bytes{1, 2, 3}, Bytes{9, 9}));
}

TEST(Bodies, NameParsersCoverEveryValue) {
  for (int i = 0; i <= static_cast<int>(RejectReason::kDoubleSpend); ++i) {
    const auto r = static_cast<RejectReason>(i);
    EXPECT_EQ(parse_reject_reason(actors::reject_reason_name(r)), r);
  }
  EXPECT_EQ(parse_error_code("double-spend"), ErrorCode::kDoubleSpend);
  EXPECT_EQ(parse_error_code("policy-denied"), ErrorCode::kPolicyDenied);
  EXPECT_FALSE(parse_error_code("nope"));
  EXPECT_EQ(parse_service_role("hub"), ServiceRole::kHub);
}

// Attester, issuer and origin over loopback HTTP, sharing the World's
// registry and virtual clock.
struct HttpWorld : World {
  explicit HttpWorld(std::shared_ptr<SpentStore> origin_store = nullptr,
                     std::filesystem::path spent_file = {}) {
    ServiceConfig ic;
    ic.role = ServiceRole::kIssuer;
    ic.entity_id = "issuer.example";
    ic.policy = policy;
    ServeOptions io = options();
    io.rsa_key = test_key(1024);
    issuer_svc = serve(ic, io);

    ServiceConfig ac;
    ac.role = ServiceRole::kAttester;
    ac.entity_id = "attester.example";
    ac.issuer_url = issuer_svc->url();
    ServeOptions ao = options();
    ao.ed25519_key = attester_key;
    attester_svc = serve(ac, ao);

    origin_cfg.role = ServiceRole::kOrigin;
    origin_cfg.entity_id = "origin.example";
    origin_cfg.issuer_name = "issuer.example";
    origin_cfg.policy = policy;
    origin_cfg.spent_store_file = spent_file;
    ServeOptions oo = options();
    oo.spent = origin_store;
    origin_svc = serve(origin_cfg, oo);
  }

  ServeOptions options() {
    ServeOptions o;
    o.clock = clock;
    o.trusted = list;
    o.rng = std::make_shared<SeededEntropy>(++service_seed, "service");
    return o;
  }

  std::vector<tokens::Token> obtain_http(Client& client, std::uint32_t count,
                                         const actors::KycEvidence& evidence) {
    const HttpClient origin(origin_svc->url());
    const auto challenge = remote_challenge(origin, ChallengeMode::kBatch);
    const auto trusted = remote_trusted_list(HttpClient(issuer_svc->url()));
    const auto key = issuer_key(trusted, "issuer.example", clock->now());
    EXPECT_TRUE(key.has_value());
    AttestRequestBody body{evidence, policy,
                           client.begin_issuance(challenge, *key, count, 10, rng)};
    const auto response = remote_attest(HttpClient(attester_svc->url()), body);
    return client.finalize_batch(response.blind_signatures);
  }

  actors::RedeemDecision spend(Client& client, const Service& at) {
    const HttpClient origin(at.url());
    const Bytes cb = tokens::encode_challenge(remote_challenge(origin, ChallengeMode::kBatch));
    const auto token = client.redeem(cb);
    return remote_redeem(origin, cb, tokens::encode_token(token));
  }

  std::uint64_t service_seed = 100;
  ServiceConfig origin_cfg;
  std::unique_ptr<Service> issuer_svc;
  std::unique_ptr<Service> attester_svc;
  std::unique_ptr<Service> origin_svc;
};

TEST(Http, HealthAndTrustedList) {
  HttpWorld w;
  const Bytes health = HttpClient(w.origin_svc->url()).get("/health");
  EXPECT_NE(std::string(health.begin(), health.end()).find("\"role\":\"origin\""),
            std::string::npos);
  const auto remote = remote_trusted_list(HttpClient(w.issuer_svc->url()));
  EXPECT_EQ(remote.export_list(), w.list->export_list());
  const auto v1 = remote_trusted_list(HttpClient(w.issuer_svc->url()), 1);
  EXPECT_EQ(v1.version(), 1u);
  EXPECT_EQ(code_of([&] { HttpClient(w.issuer_svc->url()).get("/trusted-list?version=x"); }),
            ErrorCode::kInvalidArgument);
}

TEST(Http, FlowRedeemThenReplay) {
  HttpWorld w;
  Client client;
  const auto tokens = w.obtain_http(client, 10, adult_evidence());
  ASSERT_EQ(tokens.size(), 10u);
  EXPECT_EQ(client.store().ready_count(), 10u);
  EXPECT_TRUE(w.spend(client, *w.origin_svc).granted);
  EXPECT_EQ(client.store().ready_count(), 9u);

  // Replay the same token bytes against a fresh challenge.
  const HttpClient origin(w.origin_svc->url());
  const Bytes cb = tokens::encode_challenge(remote_challenge(origin, ChallengeMode::kBatch));
  const Bytes replay = encode_redeem_request(cb, tokens::encode_token(tokens.front()));
  auto d = remote_redeem(origin, cb, tokens::encode_token(tokens.front()));
  EXPECT_EQ(d, actors::RedeemDecision::reject(RejectReason::kDoubleSpend));
  try {
    origin.post("/redeem", replay);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDoubleSpend);
  }
}

TEST(Http, ErrorsMapToCodes) {
  HttpWorld w;
  Client minor;
  EXPECT_EQ(code_of([&] { w.obtain_http(minor, 1, minor_evidence()); }), ErrorCode::kPolicyDenied);
  EXPECT_EQ(code_of([&] { HttpClient(w.attester_svc->url()).post("/attest", Bytes{1, 2}); }),
            ErrorCode::kMalformed);
  EXPECT_EQ(code_of([&] { HttpClient(w.issuer_svc->url()).post("/issue", Bytes{0}); }),
            ErrorCode::kMalformed);
  EXPECT_EQ(code_of([&] { HttpClient(w.origin_svc->url()).get("/challenge?mode=odd"); }),
            ErrorCode::kInvalidArgument);
  const auto d = remote_redeem(HttpClient(w.origin_svc->url()), Bytes{}, Bytes{1});
  EXPECT_EQ(d, actors::RedeemDecision::reject(RejectReason::kMalformed));
  // An issuer that does not know the attester: the attester relays the 401.
  Client c;
  const Bytes cb = tokens::encode_challenge(w.origin.make_challenge(ChallengeMode::kBatch, w.rng));
  auto fwd = w.attester.forward(w.attester.attest(adult_evidence(), w.policy, t0()),
                                c.begin_issuance(tokens::decode_challenge(cb),
                                                 w.issuer.public_key(), 1, 10, w.rng));
  fwd.attester_id = "stranger.example";
  EXPECT_EQ(code_of([&] { remote_issue(HttpClient(w.issuer_svc->url()), fwd); }),
            ErrorCode::kAttesterAuth);
  Client greedy;
  EXPECT_EQ(code_of([&] { w.obtain_http(greedy, 11, adult_evidence()); }),
            ErrorCode::kAllowanceExceeded);
}

TEST(Http, UnreachablePeerIsANetworkError) {
  std::unique_ptr<Service> hub;
  {
    ServiceConfig c;
    c.role = ServiceRole::kHub;
    hub = serve(c);
  }
  const std::string url = hub->url();
  hub->stop();
  EXPECT_EQ(code_of([&] { HttpClient(url).get("/health"); }), ErrorCode::kNetwork);
}

// The same forwarded request yields the same blind signatures whether the
// issuer runs in-process or behind HTTP.
TEST(Http, WireMatchesInProcess) {
  HttpWorld w;
  Client client;
  const auto challenge = w.origin.make_challenge(ChallengeMode::kBatch, w.rng);
  const auto reqs = client.begin_issuance(challenge, w.issuer.public_key(), 5, 10, w.rng);
  const auto fwd = w.attester.forward(w.attester.attest(adult_evidence(), w.policy, t0()), reqs);
  EXPECT_EQ(remote_issue(HttpClient(w.issuer_svc->url()), fwd), w.issuer.issue(fwd));

  // And a remote attest wraps the same decision bytes the local attester
  // produces for the same evidence.
  Client c2;
  AttestRequestBody body{adult_evidence(), w.policy,
                         c2.begin_issuance(challenge, w.issuer.public_key(), 2, 10, w.rng)};
  const auto response = remote_attest(HttpClient(w.attester_svc->url()), body);
  EXPECT_EQ(response.decision, w.attester.attest(adult_evidence(), w.policy, t0()));
  EXPECT_EQ(response.blind_signatures,
            w.issuer.issue(w.attester.forward(response.decision, body.requests)));
}

TEST(Http, PeerOriginsSync) {
  HttpWorld w;
  ServiceConfig pc = w.origin_cfg;
  pc.entity_id = "origin-2.example";
  pc.sync_peers = {w.origin_svc->url()};
  ServeOptions po = w.options();
  po.background_sync = false;
  auto peer = serve(pc, po);

  Client client;
  const auto tokens = w.obtain_http(client, 2, adult_evidence());
  ASSERT_TRUE(w.spend(client, *w.origin_svc).granted);
  // Before sync the peer does not know the spend.
  Client copy;
  copy.store().add_ready(tokens.front());
  EXPECT_TRUE(w.spend(copy, *peer).granted);

  remote_sync(HttpClient(peer->url()));
  EXPECT_EQ(peer->spent_store()->size(), 1u);
  EXPECT_EQ(w.origin_svc->spent_store()->size(), 1u);
  ASSERT_TRUE(w.spend(client, *w.origin_svc).granted);
  const auto report = peer->sync_now();
  EXPECT_EQ(report.merged, 1u);
  Client replay;
  replay.store().add_ready(tokens.back());
  EXPECT_EQ(w.spend(replay, *peer), actors::RedeemDecision::reject(RejectReason::kDoubleSpend));
}

TEST(Http, HubStarTopology) {
  HttpWorld w;
  ServiceConfig hc;
  hc.role = ServiceRole::kHub;
  auto hub = serve(hc);
  auto origin_at = [&](const std::string& id) {
    ServiceConfig c = w.origin_cfg;
    c.entity_id = id;
    c.sync_peers = {hub->url()};
    ServeOptions o = w.options();
    o.background_sync = false;
    return serve(c, o);
  };
  auto a = origin_at("a.example");
  auto b = origin_at("b.example");
  Client client;
  const auto tokens = w.obtain_http(client, 1, adult_evidence());
  ASSERT_TRUE(w.spend(client, *a).granted);
  a->sync_now();
  b->sync_now();
  EXPECT_EQ(hub->spent_store()->size(), 1u);
  Client copy;
  copy.store().add_ready(tokens.front());
  EXPECT_EQ(w.spend(copy, *b), actors::RedeemDecision::reject(RejectReason::kDoubleSpend));
}

TEST(Http, RestartKeepsSpentStore) {
  TempDir dir;
  const auto path = dir.file("origin-spent.log");
  tokens::Token token;
  {
    HttpWorld w(nullptr, path);
    Client client;
    token = w.obtain_http(client, 1, adult_evidence()).front();
    ASSERT_TRUE(w.spend(client, *w.origin_svc).granted);
  }
  HttpWorld w(nullptr, path);
  Client client;
  client.store().add_ready(token);
  EXPECT_EQ(w.spend(client, *w.origin_svc),
            actors::RedeemDecision::reject(RejectReason::kDoubleSpend));
}

TEST(Http, ConcurrentRedeemsHaveOneWinner) {
  HttpWorld w;
  Client client;
  const auto token = w.obtain_http(client, 1, adult_evidence()).front();
  const HttpClient origin(w.origin_svc->url());
  const Bytes cb = tokens::encode_challenge(remote_challenge(origin, ChallengeMode::kBatch));
  const Bytes tb = tokens::encode_token(token);
  std::atomic<int> wins{0}, double_spends{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 16; ++t) {
    threads.emplace_back([&] {
      const auto d = remote_redeem(origin, cb, tb);
      if (d.granted) ++wins;
      if (d.reason == RejectReason::kDoubleSpend) ++double_spends;
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(wins, 1);
  EXPECT_EQ(double_spends, 15);
}

}  // namespace
}  // namespace agetoken::services
