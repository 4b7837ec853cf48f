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

#include "agetoken/simharness.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "agetoken/services.hpp"
#include "agetoken/stats.hpp"

#ifndef AGETOKEN_VERSION
#define AGETOKEN_VERSION "0.0.0"
#endif

namespace agetoken::sim {

using json = nlohmann::json;
namespace chr = std::chrono;
using actors::ChallengeMode;
using actors::Client;

namespace {

constexpr std::int64_t kStartUnix = 1'750'000'000;
constexpr double kZ99 = 2.5758293035489;
const char* const kAttesterId = "attester.sim";
const char* const kExchangeId = "exchange.sim";

std::string issuer_id(std::size_t i) { return "issuer-" + std::to_string(i) + ".sim"; }
std::string origin_id(std::size_t i) { return "origin-" + std::to_string(i) + ".sim"; }

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

AgePolicy scenario_policy() { return AgePolicy::make(18, Assurance::kLow); }

// ---------------------------------------------------------------------------
// Deployments

struct OriginSpec {
  std::string id;
  std::string issuer;
};

struct Topology {
  unsigned key_bits = 1024;
  std::uint64_t seed = 1;
  std::vector<std::string> issuers;
  bool exchange_point = false;
  std::vector<OriginSpec> origins;
  bool hub = false;
};

class Deployment {
 public:
  explicit Deployment(Topology topo)
      : topo_(std::move(topo)),
        policy_(scenario_policy()),
        clock_(std::make_shared<VirtualClock>(from_unix(kStartUnix))),
        list_(std::make_shared<registry::TrustedList>()),
        attester_key_(make_attester_key(topo_.seed)) {
    const Timestamp from = from_unix(kStartUnix) - chr::hours(24);
    const Timestamp until = from_unix(kStartUnix) + chr::hours(24 * 365 * 5);
    registry::TrustedListEntry a;
    a.entity_id = kAttesterId;
    a.role = registry::Role::kAttester;
    a.keys.push_back(registry::make_attester_key(attester_key_.public_key(), from, until));
    a.metadata[std::string(registry::kAttesterPoliciesKey)] = "18+/high,13+/high";
    list_->register_entry(a);
    std::vector<std::string> names = topo_.issuers;
    if (topo_.exchange_point) names.push_back(kExchangeId);
    for (const std::string& name : names) {
      const blindsig::KeyPair& key = harness_key(topo_.key_bits, topo_.seed, name);
      keys_.emplace(name, key);
      registry::TrustedListEntry e;
      e.entity_id = name;
      e.role = registry::Role::kIssuer;
      e.keys.push_back(registry::make_issuer_key(key.public_key(), from, until));
      e.metadata[std::string(registry::kIssuerPolicyKey)] = policy_.label();
      list_->register_entry(e);
    }
  }
  virtual ~Deployment() = default;

  VirtualClock& clock() { return *clock_; }
  const registry::TrustedList& trusted() const { return *list_; }
  const AgePolicy& policy() const { return policy_; }
  blindsig::PublicKey public_key(const std::string& issuer) const {
    return keys_.at(issuer).public_key();
  }

  // Attest `evidence`, forward `requests` to `issuer`, return its blind
  // signatures.
  virtual std::vector<Bytes> issue(const std::string& issuer, const actors::KycEvidence& evidence,
                                   const std::vector<tokens::TokenRequest>& requests) = 0;
  virtual tokens::TokenChallenge challenge(std::size_t origin, ChallengeMode mode) = 0;
  virtual actors::RedeemDecision redeem(std::size_t origin, ByteView challenge, ByteView token) = 0;
  virtual Bytes exchange(const exchange::ExchangeRequest& req) = 0;
  // Every origin exchanges with the hub, twice, so all stores agree after.
  virtual void sync_round() = 0;

 protected:
  static Ed25519SigningKey make_attester_key(std::uint64_t seed) {
    SeededEntropy rng(seed, "attester-key");
    return Ed25519SigningKey::generate(rng);
  }
  std::shared_ptr<Entropy> origin_rng(const std::string& id) const {
    return std::make_shared<SeededEntropy>(topo_.seed, "origin-rng-" + id);
  }

  Topology topo_;
  AgePolicy policy_;
  std::shared_ptr<VirtualClock> clock_;
  std::shared_ptr<registry::TrustedList> list_;
  Ed25519SigningKey attester_key_;
  std::map<std::string, blindsig::KeyPair> keys_;
};

class InProcessDeployment final : public Deployment {
 public:
  explicit InProcessDeployment(Topology topo)
      : Deployment(std::move(topo)),
        attester_({kAttesterId, actors::kDefaultBatchAllowance}, attester_key_) {
    for (const std::string& name : topo_.issuers) {
      issuers_.emplace(name, std::make_unique<actors::Issuer>(
                                 actors::Issuer::Config{name, policy_, actors::kDefaultBatchAllowance},
                                 keys_.at(name), list_, clock_));
    }
    if (topo_.exchange_point) {
      exchange_ = std::make_unique<exchange::ExchangePoint>(
          exchange::ExchangePoint::Config{kExchangeId, policy_}, keys_.at(kExchangeId), list_,
          std::make_shared<MemorySpentStore>(), clock_);
    }
    auto transport = std::make_shared<services::MemorySyncTransport>();
    if (topo_.hub) {
      hub_ = std::make_shared<MemorySpentStore>();
      transport->add_peer("hub", hub_);
    }
    for (const OriginSpec& o : topo_.origins) {
      auto store = std::make_shared<MemorySpentStore>();
      origins_.push_back(std::make_unique<actors::Origin>(
          actors::Origin::Config{o.id, o.issuer, policy_, actors::kDefaultBoundContextTtl}, list_,
          store, clock_));
      rngs_.push_back(origin_rng(o.id));
      if (topo_.hub) {
        syncs_.push_back(std::make_unique<services::SpentStoreSync>(
            store, std::vector<std::string>{"hub"}, transport));
      }
    }
  }

  std::vector<Bytes> issue(const std::string& issuer, const actors::KycEvidence& evidence,
                           const std::vector<tokens::TokenRequest>& requests) override {
    const auto decision = attester_.attest(evidence, policy_, clock_->now());
    if (!decision.granted) throw Error(ErrorCode::kPolicyDenied, "attestation denied");
    return issuers_.at(issuer)->issue(attester_.forward(decision, requests));
  }

  tokens::TokenChallenge challenge(std::size_t origin, ChallengeMode mode) override {
    return origins_.at(origin)->make_challenge(mode, *rngs_.at(origin));
  }

  actors::RedeemDecision redeem(std::size_t origin, ByteView challenge, ByteView token) override {
    return origins_.at(origin)->redeem_encoded(token, challenge);
  }

  Bytes exchange(const exchange::ExchangeRequest& req) override { return exchange_->exchange(req); }

  void sync_round() override {
    for (int pass = 0; pass < 2; ++pass) {
      for (auto& s : syncs_) s->sync_once();
    }
  }

 private:
  actors::Attester attester_;
  std::map<std::string, std::unique_ptr<actors::Issuer>> issuers_;
  std::unique_ptr<exchange::ExchangePoint> exchange_;
  std::vector<std::unique_ptr<actors::Origin>> origins_;
  std::vector<std::shared_ptr<Entropy>> rngs_;
  std::shared_ptr<MemorySpentStore> hub_;
  std::vector<std::unique_ptr<services::SpentStoreSync>> syncs_;
};

class HttpDeployment final : public Deployment {
 public:
  explicit HttpDeployment(Topology topo) : Deployment(std::move(topo)) {
    using services::ServiceConfig;
    using services::ServiceRole;
    if (topo_.hub) {
      ServiceConfig c;
      c.role = ServiceRole::kHub;
      hub_ = services::serve(c, base_options());
    }
    for (const std::string& name : topo_.issuers) {
      ServiceConfig ic;
      ic.role = ServiceRole::kIssuer;
      ic.entity_id = name;
      ic.policy = policy_;
      auto io = base_options();
      io.rsa_key = keys_.at(name);
      auto issuer = services::serve(ic, io);

      // The attester relays to one issuer, so each issuer gets its own
      // attester instance under the same identity.
      ServiceConfig ac;
      ac.role = ServiceRole::kAttester;
      ac.entity_id = kAttesterId;
      ac.issuer_url = issuer->url();
      auto ao = base_options();
      ao.ed25519_key = attester_key_;
      attesters_.emplace(name, services::serve(ac, ao));
      issuers_.emplace(name, std::move(issuer));
    }
    if (topo_.exchange_point) {
      ServiceConfig xc;
      xc.role = ServiceRole::kExchange;
      xc.entity_id = kExchangeId;
      xc.policy = policy_;
      auto xo = base_options();
      xo.rsa_key = keys_.at(kExchangeId);
      exchange_ = services::serve(xc, xo);
    }
    for (const OriginSpec& o : topo_.origins) {
      ServiceConfig oc;
      oc.role = ServiceRole::kOrigin;
      oc.entity_id = o.id;
      oc.issuer_name = o.issuer;
      oc.policy = policy_;
      if (hub_) oc.sync_peers = {hub_->url()};
      auto oo = base_options();
      oo.rng = origin_rng(o.id);
      origins_.push_back(services::serve(oc, oo));
    }
  }

  std::vector<Bytes> issue(const std::string& issuer, const actors::KycEvidence& evidence,
                           const std::vector<tokens::TokenRequest>& requests) override {
    const services::HttpClient attester(attesters_.at(issuer)->url());
    return services::remote_attest(attester, {evidence, policy_, requests}).blind_signatures;
  }

  tokens::TokenChallenge challenge(std::size_t origin, ChallengeMode mode) override {
    return services::remote_challenge(services::HttpClient(origins_.at(origin)->url()), mode);
  }

  actors::RedeemDecision redeem(std::size_t origin, ByteView challenge, ByteView token) override {
    return services::remote_redeem(services::HttpClient(origins_.at(origin)->url()), challenge,
                                   token);
  }

  Bytes exchange(const exchange::ExchangeRequest& req) override {
    return services::remote_exchange(services::HttpClient(exchange_->url()), req);
  }

  void sync_round() override {
    for (int pass = 0; pass < 2; ++pass) {
      for (auto& o : origins_) services::remote_sync(services::HttpClient(o->url()));
    }
  }

 private:
  services::ServeOptions base_options() const {
    services::ServeOptions o;
    o.clock = clock_;
    o.trusted = list_;
    o.background_sync = false;
    o.rng = std::make_shared<SeededEntropy>(topo_.seed, "service-rng");
    return o;
  }

  std::unique_ptr<services::Service> hub_;
  std::map<std::string, std::unique_ptr<services::Service>> issuers_;
  std::map<std::string, std::unique_ptr<services::Service>> attesters_;
  std::unique_ptr<services::Service> exchange_;
  std::vector<std::unique_ptr<services::Service>> origins_;
};

std::unique_ptr<Deployment> deploy(const ScenarioConfig& config, Topology topo) {
  topo.key_bits = config.key_bits;
  topo.seed = config.seed;
  if (config.deployment == DeploymentKind::kHttp) {
    return std::make_unique<HttpDeployment>(std::move(topo));
  }
  return std::make_unique<InProcessDeployment>(std::move(topo));
}

// ---------------------------------------------------------------------------
// Client helpers

actors::KycEvidence random_adult(Entropy& rng, std::uint64_t subject) {
  const chr::sys_days first{chr::year{1950} / 1 / 1};
  const chr::sys_days last{chr::year{2000} / 12 / 31};
  const auto span = static_cast<std::uint64_t>((last - first).count());
  actors::KycEvidence ev;
  ev.date_of_birth = chr::year_month_day{first + chr::days(rng.uniform(span + 1))};
  ev.kind = static_cast<actors::EvidenceKind>(rng.uniform(3));
  ev.subject_handle = "subject-" + std::to_string(subject);
  return ev;
}

struct Issuance {
  std::vector<tokens::TokenRequest> requests;
  std::vector<Bytes> signatures;
  std::vector<tokens::Token> tokens;
};

Issuance obtain(Deployment& d, Client& client, const std::string& issuer,
                const tokens::TokenChallenge& challenge, std::uint32_t count,
                const actors::KycEvidence& evidence, Entropy& rng) {
  Issuance out;
  out.requests = client.begin_issuance(challenge, d.public_key(issuer), count,
                                       actors::kDefaultBatchAllowance, rng);
  out.signatures = d.issue(issuer, evidence, out.requests);
  out.tokens = client.finalize_batch(out.signatures);
  return out;
}

template <typename T>
void shuffle(std::vector<T>& v, Entropy& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform(i)]);
}

// ---------------------------------------------------------------------------
// Report helpers

Metric proportion(std::string name, std::uint64_t successes, std::uint64_t n,
                  std::optional<double> expected) {
  Metric m;
  m.name = std::move(name);
  m.n = n;
  m.value = n ? static_cast<double>(successes) / static_cast<double>(n) : 0.0;
  m.expected = expected;
  const auto ci = stats::wilson_interval(successes, n, kZ99);
  m.ci = std::make_pair(ci.low, ci.high);
  return m;
}

Metric scalar(std::string name, double value, std::optional<double> expected = std::nullopt) {
  Metric m;
  m.name = std::move(name);
  m.value = value;
  m.expected = expected;
  return m;
}

// Two-sided binomial test at kAlpha plus the 3-sigma band.
Check chance_check(std::string name, std::uint64_t successes, std::uint64_t n, double p) {
  const double pv = stats::binomial_two_sided_p(successes, n, p);
  const double sigma = stats::proportion_sigma(n, p);
  const double dev = std::fabs(static_cast<double>(successes) / static_cast<double>(n) - p);
  const bool within = sigma == 0.0 ? dev == 0.0 : dev <= kSigmaBound * sigma;
  Check c;
  c.name = std::move(name);
  c.pass = pv >= kAlpha && within;
  c.detail = std::to_string(successes) + "/" + std::to_string(n) + " vs chance " +
             fmt("%.4f", p) + ", p=" + fmt("%.4g", pv) + ", deviation " +
             (sigma == 0.0 ? std::string("0") : fmt("%.2f", dev / sigma)) + " sigma";
  return c;
}

Check power_check(std::uint64_t n, double p) {
  const double p1 = std::min(1.0, 2 * p);
  const double power = stats::binomial_test_power(n, p, p1, kAlpha);
  Check c;
  c.name = "power_vs_double_chance";
  c.pass = power >= kRequiredPower;
  c.detail = "power " + fmt("%.4f", power) + " against rate " + fmt("%.4f", p1) + " with n=" +
             std::to_string(n);
  return c;
}

Check exact_check(std::string name, std::uint64_t got, std::uint64_t want) {
  return Check{std::move(name), got == want, std::to_string(got) + " (expected " +
                                                 std::to_string(want) + ")"};
}

// ---------------------------------------------------------------------------
// Unlinkability adversaries

struct SessionView {
  Timestamp time;
  std::vector<tokens::TokenRequest> requests;
  std::vector<Bytes> signatures;
};

struct RedemptionView {
  Timestamp time;
  Bytes token;
};

std::size_t common_prefix(ByteView a, ByteView b) {
  std::size_t i = 0;
  while (i < a.size() && i < b.size() && a[i] == b[i]) ++i;
  return i;
}

std::size_t pick_best(const std::vector<std::size_t>& scores, Entropy& rng) {
  const std::size_t best = *std::max_element(scores.begin(), scores.end());
  std::vector<std::size_t> tied;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] == best) tied.push_back(i);
  }
  return tied[rng.uniform(tied.size())];
}

// Colluding issuer and origin: keeps sessions whose key id matches, then
// scores byte overlap between the session's blinded messages and blind
// signatures and the redeemed token. Ties are broken at random.
std::size_t transcript_guess(const std::vector<SessionView>& sessions,
                             const std::vector<RedemptionView>& redemptions, std::size_t target,
                             Entropy& rng) {
  const tokens::Token token = tokens::decode_token(redemptions[target].token,
                                                   redemptions[target].token.size() - 98);
  std::vector<std::size_t> scores(sessions.size(), 0);
  for (std::size_t s = 0; s < sessions.size(); ++s) {
    bool key_match = false;
    std::size_t score = 1;
    for (const auto& req : sessions[s].requests) {
      key_match |= req.truncated_key_id == token.token_key_id.back();
      score = std::max(score, 1 + common_prefix(req.blinded_message, token.authenticator));
      score = std::max(score, 1 + common_prefix(req.blinded_message, token.nonce));
    }
    for (const auto& sig : sessions[s].signatures) {
      score = std::max(score, 1 + common_prefix(sig, token.authenticator));
    }
    scores[s] = key_match ? score : 0;
  }
  return pick_best(scores, rng);
}

// Colluding issuer and origin: the n-th redemption belongs to the n-th
// issuance.
std::size_t timing_guess(const std::vector<SessionView>& sessions,
                         const std::vector<RedemptionView>& redemptions, std::size_t target) {
  std::vector<std::size_t> by_time(sessions.size());
  std::iota(by_time.begin(), by_time.end(), 0);
  std::stable_sort(by_time.begin(), by_time.end(),
                   [&](std::size_t a, std::size_t b) { return sessions[a].time < sessions[b].time; });
  std::size_t rank = 0;
  for (std::size_t i = 0; i < redemptions.size(); ++i) {
    if (redemptions[i].time < redemptions[target].time) ++rank;
  }
  return by_time[std::min(rank, by_time.size() - 1)];
}

// Origin alone: no issuance view, so a uniform guess over the set.
std::size_t origin_only_guess(std::size_t set_size, Entropy& rng) { return rng.uniform(set_size); }

// ---------------------------------------------------------------------------
// Issuer-hiding distinguisher: key id lookup in the public registry, then
// the authenticator's last byte as a fallback feature.

std::size_t distinguish_issuer(const tokens::Token& token, const std::map<Digest, std::size_t>& ids,
                               std::size_t sources) {
  auto it = ids.find(token.token_key_id);
  if (it != ids.end()) return it->second;
  return token.authenticator.back() % sources;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view deployment_name(DeploymentKind kind) {
  return kind == DeploymentKind::kHttp ? "http" : "in-process";
}

DeploymentKind parse_deployment(std::string_view name) {
  if (name == "http") return DeploymentKind::kHttp;
  if (name == "in-process") return DeploymentKind::kInProcess;
  throw Error(ErrorCode::kInvalidArgument, "unknown deployment '" + std::string(name) + "'");
}

void ScenarioConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
  };
  need(clients >= 1 && origins >= 1 && issuers >= 1 && tokens >= 1 && trials >= 1,
       "scenario counts must be at least 1");
  need(key_bits >= 512, "key_bits must be at least 512");
  need(sync_interval.count() >= 1, "sync interval must be at least 1 s");
  need(spend_spacing.count() >= 0, "spend spacing must not be negative");
  if (scenario == "issuer-hiding") need(issuers >= 2, "issuer-hiding needs at least 2 issuers");
}

const blindsig::KeyPair& harness_key(unsigned bits, std::uint64_t seed, const std::string& label) {
  static std::mutex mu;
  static std::map<std::tuple<unsigned, std::uint64_t, std::string>, blindsig::KeyPair> cache;
  std::lock_guard<std::mutex> lock(mu);
  const auto k = std::make_tuple(bits, seed, label);
  auto it = cache.find(k);
  if (it == cache.end()) {
    SeededEntropy rng(seed, "harness-key-" + label + "-" + std::to_string(bits));
    const auto mode = bits >= 2048 ? blindsig::KeyMode::kProduction : blindsig::KeyMode::kToy;
    it = cache.emplace(k, blindsig::generate_keypair(bits, rng, mode)).first;
  }
  return it->second;
}

std::vector<std::string> scenario_names() {
  return {"unlinkability", "double-spend", "issuer-hiding", "token-transfer"};
}

ScenarioReport run_unlinkability(const ScenarioConfig& config) {
  config.validate();
  ScenarioReport report;
  report.config = config;
  report.config.scenario = "unlinkability";
  Topology topo;
  topo.issuers = {issuer_id(0)};
  topo.origins = {{origin_id(0), issuer_id(0)}};
  auto d = deploy(config, topo);
  SeededEntropy rng(config.seed, "clients");
  SeededEntropy adv(config.seed, "adversary");
  const std::size_t k = config.clients;

  std::uint64_t transcript_hits = 0, origin_hits = 0, timing_hits = 0, spurious = 0;
  std::uint64_t subject = 0;
  for (std::uint32_t trial = 0; trial < config.trials; ++trial) {
    std::vector<Client> clients(k);
    std::vector<SessionView> sessions(k);
    std::vector<std::string> identities(k);
    for (std::size_t j = 0; j < k; ++j) {
      d->clock().advance(chr::seconds(1 + rng.uniform(30)));
      const auto ev = random_adult(rng, subject++);
      const auto challenge = d->challenge(0, ChallengeMode::kBatch);
      Issuance iss = obtain(*d, clients[j], issuer_id(0), challenge, 1, ev, rng);
      sessions[j] = {d->clock().now(), std::move(iss.requests), std::move(iss.signatures)};
      identities[j] = ev.subject_handle;
    }
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    std::vector<RedemptionView> redemptions;
    for (std::size_t r = 0; r < k; ++r) {
      d->clock().advance(chr::seconds(1 + rng.uniform(300)));
      const Bytes cb = tokens::encode_challenge(d->challenge(0, ChallengeMode::kBatch));
      const Bytes tb = tokens::encode_token(clients[order[r]].redeem(cb));
      if (!d->redeem(0, cb, tb).granted) ++spurious;
      redemptions.push_back({d->clock().now(), tb});
    }
    const std::size_t target = rng.uniform(k);
    const std::size_t truth = order[target];
    // With the attester colluding, sessions carry identities and the
    // adversary names a person instead of a session.
    auto hit = [&](std::size_t guess) {
      return config.collude_attester ? identities[guess] == identities[truth] : guess == truth;
    };
    transcript_hits += hit(transcript_guess(sessions, redemptions, target, adv)) ? 1 : 0;
    origin_hits += hit(origin_only_guess(k, adv)) ? 1 : 0;
    timing_hits += hit(timing_guess(sessions, redemptions, target)) ? 1 : 0;
  }

  // Clients that redeem right after issuance, for contrast with the timing
  // adversary above.
  const std::uint32_t immediate_trials = std::min<std::uint32_t>(config.trials, 100);
  std::uint64_t immediate_hits = 0;
  for (std::uint32_t trial = 0; trial < immediate_trials; ++trial) {
    std::vector<SessionView> sessions;
    std::vector<RedemptionView> redemptions;
    for (std::size_t j = 0; j < k; ++j) {
      d->clock().advance(chr::seconds(1 + rng.uniform(30)));
      Client client;
      const auto challenge = d->challenge(0, ChallengeMode::kBatch);
      Issuance iss = obtain(*d, client, issuer_id(0), challenge, 1, random_adult(rng, subject++), rng);
      sessions.push_back({d->clock().now(), std::move(iss.requests), std::move(iss.signatures)});
      d->clock().advance(chr::seconds(1));
      const Bytes cb = tokens::encode_challenge(d->challenge(0, ChallengeMode::kBatch));
      const Bytes tb = tokens::encode_token(client.redeem(cb));
      if (!d->redeem(0, cb, tb).granted) ++spurious;
      redemptions.push_back({d->clock().now(), tb});
    }
    const std::size_t target = rng.uniform(k);
    immediate_hits += timing_guess(sessions, redemptions, target) == target ? 1 : 0;
  }

  const double chance = 1.0 / static_cast<double>(k);
  const std::uint64_t n = config.trials;
  const std::uint64_t primary = config.collude_issuer_origin ? transcript_hits : origin_hits;
  report.metrics.push_back(proportion("linking_accuracy", primary, n, chance));
  report.metrics.push_back(proportion("transcript_adversary_accuracy", transcript_hits, n, chance));
  report.metrics.push_back(proportion("origin_only_adversary_accuracy", origin_hits, n, chance));
  report.metrics.push_back(proportion("timing_adversary_accuracy_batch", timing_hits, n, chance));
  report.metrics.push_back(
      proportion("timing_adversary_accuracy_immediate", immediate_hits, immediate_trials, std::nullopt));
  report.metrics.push_back(scalar("anonymity_set", static_cast<double>(k)));
  report.metrics.push_back(scalar("spurious_rejections", static_cast<double>(spurious), 0.0));

  report.checks.push_back(chance_check("linking_accuracy_at_chance", primary, n, chance));
  report.checks.push_back(chance_check("origin_only_at_chance", origin_hits, n, chance));
  report.checks.push_back(exact_check("no_spurious_rejections", spurious, 0));
  if (k == 1) {
    report.flags.push_back("degenerate anonymity set");
  } else {
    report.checks.push_back(power_check(n, chance));
  }
  return report;
}

ScenarioReport run_double_spend(const ScenarioConfig& config) {
  config.validate();
  ScenarioReport report;
  report.config = config;
  report.config.scenario = "double-spend";
  Topology topo;
  topo.issuers = {issuer_id(0)};
  for (std::uint32_t o = 0; o < config.origins; ++o) topo.origins.push_back({origin_id(o), issuer_id(0)});
  topo.hub = config.sync;
  auto d = deploy(config, topo);
  SeededEntropy rng(config.seed, "clients");
  const std::int64_t interval = config.sync_interval.count();
  const std::size_t origins = config.origins;
  std::int64_t next_sync = (kStartUnix / interval + 1) * interval;
  std::uint64_t subject = 0;

  auto advance_to = [&](std::int64_t t) {
    if (config.sync) {
      while (next_sync <= t) {
        d->clock().set(from_unix(next_sync));
        d->sync_round();
        next_sync += interval;
      }
    }
    d->clock().set(from_unix(t));
  };

  auto get_tokens = [&](std::uint32_t n) {
    std::vector<tokens::Token> out;
    while (out.size() < n) {
      Client client;
      const auto count = static_cast<std::uint32_t>(
          std::min<std::size_t>(n - out.size(), actors::kDefaultBatchAllowance));
      const auto challenge = d->challenge(0, ChallengeMode::kBatch);
      Issuance iss = obtain(*d, client, issuer_id(0), challenge, count,
                            random_adult(rng, subject++), rng);
      out.insert(out.end(), iss.tokens.begin(), iss.tokens.end());
    }
    return out;
  };

  struct Outcome {
    std::uint64_t grants = 0;
    std::uint64_t double_grants = 0;  // tokens granted more than once
    std::uint64_t replay_rejected = 0;
    std::int64_t latency_sum = 0;
  };

  // The dishonest client visits every origin with each token, `spacing`
  // seconds apart, starting at a random phase of the sync schedule.
  auto run_point = [&](std::int64_t spacing, std::uint32_t n) {
    Outcome out;
    for (const tokens::Token& token : get_tokens(n)) {
      const Bytes tb = tokens::encode_token(token);
      const std::int64_t start =
          to_unix(d->clock().now()) + 1 + static_cast<std::int64_t>(rng.uniform(interval));
      std::vector<std::size_t> order(origins);
      std::iota(order.begin(), order.end(), 0);
      shuffle(order, rng);
      std::uint64_t granted = 0;
      for (std::size_t m = 0; m < origins; ++m) {
        advance_to(start + static_cast<std::int64_t>(m) * spacing);
        const Bytes cb = tokens::encode_challenge(d->challenge(order[m], ChallengeMode::kBatch));
        granted += d->redeem(order[m], cb, tb).granted ? 1 : 0;
      }
      const Bytes cb = tokens::encode_challenge(d->challenge(order[0], ChallengeMode::kBatch));
      const auto replay = d->redeem(order[0], cb, tb);
      out.replay_rejected += replay.reason == actors::RejectReason::kDoubleSpend ? 1 : 0;
      out.grants += granted;
      out.double_grants += granted > 1 ? 1 : 0;
      if (config.sync) out.latency_sum += (start / interval + 1) * interval - start;
    }
    return out;
  };

  const std::int64_t spacing = config.spend_spacing.count();
  const std::uint32_t n = config.tokens;
  const Outcome main = run_point(spacing, n);
  const bool spaced_beyond = spacing > interval;
  const std::uint64_t expected = !config.sync || origins == 1 ? n * origins : 0;

  report.metrics.push_back(scalar("grants_total", static_cast<double>(main.grants),
                                  expected ? std::optional<double>(static_cast<double>(expected))
                                  : spaced_beyond ? std::optional<double>(n)
                                                  : std::nullopt));
  report.metrics.push_back(scalar("grants_per_token",
                                  static_cast<double>(main.grants) / static_cast<double>(n)));
  report.metrics.push_back(proportion("local_replay_rejected", main.replay_rejected, n, 1.0));
  report.checks.push_back(exact_check("local_replay_rejected", main.replay_rejected, n));

  if (!config.sync || origins == 1) {
    report.checks.push_back(exact_check(origins == 1 ? "single_origin_one_grant_per_token"
                                                     : "sync_off_every_origin_grants",
                                        main.grants, n * origins));
  } else if (spaced_beyond) {
    report.checks.push_back(exact_check("hub_sync_one_grant_per_token", main.grants, n));
  }

  if (config.sync && origins >= 2) {
    report.metrics.push_back(scalar("mean_detection_latency_s",
                                    static_cast<double>(main.latency_sum) / static_cast<double>(n),
                                    static_cast<double>(interval + 1) / 2.0));
    // Detection-latency curve: with a uniform phase, the m-th visit slips
    // through iff the next sync boundary is more than m * spacing away.
    std::vector<std::int64_t> points;
    for (std::int64_t s : {std::int64_t{0}, interval / 4, interval / 2, 3 * interval / 4, interval,
                           2 * interval}) {
      if (points.empty() || points.back() != s) points.push_back(s);
    }
    for (std::int64_t s : points) {
      const Outcome o = run_point(s, n);
      double expect = 0;
      for (std::size_t m = 0; m < origins; ++m) {
        const double x = static_cast<double>(m) * static_cast<double>(s);
        expect += std::max(0.0, (static_cast<double>(interval) - x) / static_cast<double>(interval));
      }
      report.metrics.push_back(scalar("curve_grants_per_token@" + std::to_string(s) + "s",
                                      static_cast<double>(o.grants) / static_cast<double>(n),
                                      expect));
    }
  }
  return report;
}

ScenarioReport run_issuer_hiding(const ScenarioConfig& config) {
  ScenarioConfig c = config;
  c.scenario = "issuer-hiding";
  c.validate();
  ScenarioReport report;
  report.config = c;
  const std::size_t sources = c.issuers;
  Topology topo;
  for (std::size_t i = 0; i < sources; ++i) {
    topo.issuers.push_back(issuer_id(i));
    topo.origins.push_back({origin_id(i), issuer_id(i)});
  }
  topo.exchange_point = true;
  topo.origins.push_back({"origin-x.sim", kExchangeId});
  auto d = deploy(c, topo);
  SeededEntropy rng(c.seed, "clients");

  // The distinguisher's key table comes from the public registry.
  std::map<Digest, std::size_t> ids;
  for (std::size_t i = 0; i < sources; ++i) {
    ids.emplace(tokens::derive_key_id(d->public_key(issuer_id(i))), i);
  }

  std::uint64_t plain_hits = 0, exchanged_hits = 0, spurious = 0, subject = 0;
  for (std::uint32_t t = 0; t < c.trials; ++t) {
    d->clock().advance(chr::seconds(1 + rng.uniform(30)));
    const std::size_t s = rng.uniform(sources);
    Client client;
    const auto challenge = d->challenge(s, ChallengeMode::kBatch);
    obtain(*d, client, issuer_id(s), challenge, 1, random_adult(rng, subject++), rng);
    const Bytes cb = tokens::encode_challenge(d->challenge(s, ChallengeMode::kBatch));
    const Bytes tb = tokens::encode_token(client.redeem(cb));
    if (!d->redeem(s, cb, tb).granted) ++spurious;
    plain_hits += distinguish_issuer(tokens::decode_token(tb, tb.size() - 98), ids, sources) == s;
  }

  const blindsig::PublicKey xpk = d->public_key(kExchangeId);
  for (std::uint32_t t = 0; t < c.trials; ++t) {
    d->clock().advance(chr::seconds(1 + rng.uniform(30)));
    const std::size_t s = rng.uniform(sources);
    Client client;
    const auto source_pk = d->public_key(issuer_id(s));
    const tokens::TokenChallenge source{tokens::token_type_for(source_pk), issuer_id(s), {}, ""};
    const auto old = obtain(*d, client, issuer_id(s), source, 1, random_adult(rng, subject++), rng)
                         .tokens.front();
    client.store().take_any();
    const std::size_t x = sources;
    const auto target = d->challenge(x, ChallengeMode::kBatch);
    const auto req = exchange::begin_exchange(client, old, target, xpk, rng);
    const Bytes sig = d->exchange(req);
    client.finalize_batch(std::span<const Bytes>(&sig, 1));
    const Bytes cb = tokens::encode_challenge(d->challenge(x, ChallengeMode::kBatch));
    const Bytes tb = tokens::encode_token(client.redeem(cb));
    if (!d->redeem(x, cb, tb).granted) ++spurious;
    exchanged_hits +=
        distinguish_issuer(tokens::decode_token(tb, tb.size() - 98), ids, sources) == s;
  }

  const double chance = 1.0 / static_cast<double>(sources);
  const std::uint64_t n = c.trials;
  report.metrics.push_back(proportion("accuracy_without_exchange", plain_hits, n, 1.0));
  report.metrics.push_back(proportion("accuracy_with_exchange", exchanged_hits, n, chance));
  report.metrics.push_back(scalar("source_issuers", static_cast<double>(sources)));
  report.metrics.push_back(scalar("spurious_rejections", static_cast<double>(spurious), 0.0));
  report.checks.push_back(exact_check("without_exchange_always_identified", plain_hits, n));
  report.checks.push_back(chance_check("with_exchange_at_chance", exchanged_hits, n, chance));
  report.checks.push_back(power_check(n, chance));
  report.checks.push_back(exact_check("no_spurious_rejections", spurious, 0));
  return report;
}

ScenarioReport run_token_transfer(const ScenarioConfig& config) {
  config.validate();
  ScenarioReport report;
  report.config = config;
  report.config.scenario = "token-transfer";
  Topology topo;
  topo.issuers = {issuer_id(0)};
  topo.origins = {{origin_id(0), issuer_id(0)}};
  auto d = deploy(config, topo);
  SeededEntropy rng(config.seed, "clients");
  const auto ttl = actors::kDefaultBoundContextTtl;

  auto transfer = [](const Client& from) {
    return Client(actors::ClientTokenStore::deserialize(from.store().serialize()));
  };

  std::uint64_t batch_granted = 0, delayed_expired = 0, immediate_granted = 0, subject = 0;
  for (std::uint32_t t = 0; t < config.trials; ++t) {
    {
      Client owner;
      obtain(*d, owner, issuer_id(0), d->challenge(0, ChallengeMode::kBatch), 1,
             random_adult(rng, subject++), rng);
      Client other = transfer(owner);
      d->clock().advance(chr::seconds(1 + rng.uniform(3600)));
      const Bytes cb = tokens::encode_challenge(d->challenge(0, ChallengeMode::kBatch));
      batch_granted += d->redeem(0, cb, tokens::encode_token(other.redeem(cb))).granted;
    }
    {
      Client owner;
      const auto challenge = d->challenge(0, ChallengeMode::kBound);
      obtain(*d, owner, issuer_id(0), challenge, 1, random_adult(rng, subject++), rng);
      Client other = transfer(owner);
      d->clock().advance(ttl + chr::seconds(rng.uniform(600)));
      const Bytes cb = tokens::encode_challenge(challenge);
      const auto dec = d->redeem(0, cb, tokens::encode_token(other.redeem(cb)));
      delayed_expired += dec.reason == actors::RejectReason::kContextExpired;
    }
    {
      Client owner;
      const auto challenge = d->challenge(0, ChallengeMode::kBound);
      obtain(*d, owner, issuer_id(0), challenge, 1, random_adult(rng, subject++), rng);
      Client other = transfer(owner);
      d->clock().advance(chr::seconds(1));
      const Bytes cb = tokens::encode_challenge(challenge);
      immediate_granted += d->redeem(0, cb, tokens::encode_token(other.redeem(cb))).granted;
    }
  }
  const std::uint64_t n = config.trials;
  report.metrics.push_back(proportion("batch_transfer_granted", batch_granted, n, 1.0));
  report.metrics.push_back(proportion("bound_delayed_rejected", delayed_expired, n, 1.0));
  report.metrics.push_back(proportion("bound_immediate_granted", immediate_granted, n, 1.0));
  report.metrics.push_back(scalar("bound_context_ttl_s", static_cast<double>(ttl.count())));
  report.checks.push_back(exact_check("batch_transfer_granted", batch_granted, n));
  report.checks.push_back(exact_check("bound_delayed_context_expired", delayed_expired, n));
  report.checks.push_back(exact_check("bound_immediate_granted", immediate_granted, n));
  report.flags.push_back("batch tokens are transferable");
  report.flags.push_back("residual risk: bound tokens transfer within the TTL, no device binding");
  return report;
}

ScenarioReport run_scenario(const ScenarioConfig& config) {
  if (config.scenario == "unlinkability") return run_unlinkability(config);
  if (config.scenario == "double-spend") return run_double_spend(config);
  if (config.scenario == "issuer-hiding") return run_issuer_hiding(config);
  if (config.scenario == "token-transfer") return run_token_transfer(config);
  throw Error(ErrorCode::kInvalidArgument, "unknown scenario '" + config.scenario + "'");
}

// ---------------------------------------------------------------------------
// Reports

bool ScenarioReport::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

const Metric* ScenarioReport::metric(std::string_view name) const {
  for (const Metric& m : metrics) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

const Check* ScenarioReport::check(std::string_view name) const {
  for (const Check& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

std::string ScenarioReport::to_json_lines() const {
  std::string out;
  const json header{
      {"type", "header"},
      {"scenario", config.scenario},
      {"seed", config.seed},
      {"version", AGETOKEN_VERSION},
      {"config",
       {{"clients", config.clients},
        {"origins", config.origins},
        {"issuers", config.issuers},
        {"tokens", config.tokens},
        {"trials", config.trials},
        {"key_bits", config.key_bits},
        {"sync", config.sync},
        {"sync_interval_s", config.sync_interval.count()},
        {"spend_spacing_s", config.spend_spacing.count()},
        {"collude_issuer_origin", config.collude_issuer_origin},
        {"collude_attester", config.collude_attester}}},
      {"thresholds", {{"alpha", kAlpha}, {"sigma", kSigmaBound}, {"power", kRequiredPower}}}};
  out += header.dump() + "\n";
  for (const Metric& m : metrics) {
    json j{{"type", "metric"}, {"name", m.name}, {"value", m.value}};
    if (m.n) j["n"] = m.n;
    if (m.expected) j["expected"] = *m.expected;
    if (m.ci) j["ci99"] = {m.ci->first, m.ci->second};
    out += j.dump() + "\n";
  }
  for (const Check& c : checks) {
    out += json{{"type", "check"}, {"name", c.name}, {"pass", c.pass}, {"detail", c.detail}}.dump() +
           "\n";
  }
  out += json{{"type", "verdict"}, {"pass", pass()}, {"flags", flags}}.dump() + "\n";
  return out;
}

ScenarioReport ScenarioReport::from_json_lines(std::string_view text) {
  ScenarioReport r;
  std::istringstream in{std::string(text)};
  std::string line;
  bool saw_header = false, saw_verdict = false;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "header") {
        saw_header = true;
        r.config.scenario = j.at("scenario").get<std::string>();
        r.config.seed = j.at("seed").get<std::uint64_t>();
        const json& c = j.at("config");
        r.config.clients = c.at("clients").get<std::uint32_t>();
        r.config.origins = c.at("origins").get<std::uint32_t>();
        r.config.issuers = c.at("issuers").get<std::uint32_t>();
        r.config.tokens = c.at("tokens").get<std::uint32_t>();
        r.config.trials = c.at("trials").get<std::uint32_t>();
        r.config.key_bits = c.at("key_bits").get<unsigned>();
        r.config.sync = c.at("sync").get<bool>();
        r.config.sync_interval = chr::seconds(c.at("sync_interval_s").get<std::int64_t>());
        r.config.spend_spacing = chr::seconds(c.at("spend_spacing_s").get<std::int64_t>());
        r.config.collude_issuer_origin = c.at("collude_issuer_origin").get<bool>();
        r.config.collude_attester = c.at("collude_attester").get<bool>();
      } else if (type == "metric") {
        Metric m;
        m.name = j.at("name").get<std::string>();
        m.value = j.at("value").get<double>();
        if (j.contains("n")) m.n = j["n"].get<std::uint64_t>();
        if (j.contains("expected")) m.expected = j["expected"].get<double>();
        if (j.contains("ci99")) m.ci = std::make_pair(j["ci99"][0].get<double>(), j["ci99"][1].get<double>());
        r.metrics.push_back(std::move(m));
      } else if (type == "check") {
        r.checks.push_back({j.at("name").get<std::string>(), j.at("pass").get<bool>(),
                            j.at("detail").get<std::string>()});
      } else if (type == "verdict") {
        saw_verdict = true;
        r.flags = j.at("flags").get<std::vector<std::string>>();
      } else {
        throw Error(ErrorCode::kMalformed, "unknown report line type '" + type + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed, std::string("report: ") + e.what());
  }
  if (!saw_header || !saw_verdict) throw Error(ErrorCode::kMalformed, "report: missing header or verdict");
  return r;
}

std::string ScenarioReport::render_table() const {
  std::ostringstream out;
  out << "scenario " << config.scenario << "  seed " << config.seed << "  verdict "
      << (pass() ? "PASS" : "FAIL") << "\n";
  std::size_t width = 6;
  for (const Metric& m : metrics) width = std::max(width, m.name.size());
  for (const Check& c : checks) width = std::max(width, c.name.size());
  auto pad = [&](const std::string& s) { return s + std::string(width - s.size() + 2, ' '); };
  out << "\n" << pad("metric") << "value       expected    99% CI\n";
  for (const Metric& m : metrics) {
    std::string value = fmt("%-10.4f", m.value);
    std::string expected = m.expected ? fmt("%-10.4f", *m.expected) : std::string(10, ' ');
    out << pad(m.name) << value << "  " << expected;
    if (m.ci) out << "  [" << fmt("%.4f", m.ci->first) << ", " << fmt("%.4f", m.ci->second) << "]";
    out << "\n";
  }
  out << "\n" << pad("check") << "result  detail\n";
  for (const Check& c : checks) {
    out << pad(c.name) << (c.pass ? "PASS    " : "FAIL    ") << c.detail << "\n";
  }
  for (const std::string& f : flags) out << "flag: " << f << "\n";
  return out.str();
}

}  // namespace agetoken::sim
