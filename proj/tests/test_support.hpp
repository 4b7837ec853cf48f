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

// Shared fixtures for the unit tests: cached keys, the published vector
// file and a small single-issuer world.

#ifndef AGETOKEN_TESTS_TEST_SUPPORT_HPP_
#define AGETOKEN_TESTS_TEST_SUPPORT_HPP_

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "agetoken/actors.hpp"
#include "agetoken/blindsig.hpp"
#include "agetoken/crypto.hpp"
#include "agetoken/registry.hpp"
#include "agetoken/tokens.hpp"

namespace agetoken::testing {

inline std::filesystem::path fixture_path(const std::string& name) {
  return std::filesystem::path(AGETOKEN_FIXTURE_DIR) / name;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Keys are generated once per (bits, index) from a fixed seed.
inline const blindsig::KeyPair& test_key(unsigned bits, int index = 0) {
  static std::map<std::pair<unsigned, int>, blindsig::KeyPair> cache;
  auto it = cache.find({bits, index});
  if (it == cache.end()) {
    SeededEntropy rng(0xC0FFEE + static_cast<std::uint64_t>(index), "test-key-" + std::to_string(bits));
    const auto mode = bits >= blindsig::kMinProductionBits ? blindsig::KeyMode::kProduction
                                                           : blindsig::KeyMode::kToy;
    it = cache.emplace(std::make_pair(bits, index), blindsig::generate_keypair(bits, rng, mode)).first;
  }
  return it->second;
}

// One record of the vendored RSABSSA vector file.
using VectorRecord = std::map<std::string, std::string>;

inline std::vector<VectorRecord> load_vectors(const std::filesystem::path& p) {
  std::vector<VectorRecord> out;
  std::istringstream in(read_file(p));
  std::string line;
  VectorRecord current;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    if (line.empty()) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
      continue;
    }
    auto eq = line.find(" = ");
    std::string key = line.substr(0, eq);
    std::string value = eq == std::string::npos ? "" : line.substr(eq + 3);
    if (line.size() == key.size() + 2 && line.ends_with(" =")) {
      key = line.substr(0, line.size() - 2);
      value.clear();
    }
    current[key] = value;
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

inline Timestamp t0() { return from_unix(1'750'000'000); }  // 2025-06-15T15:06:40Z

inline actors::KycEvidence adult_evidence(std::string handle = "subject-adult") {
  return actors::KycEvidence{actors::parse_date("1990-04-02"), actors::EvidenceKind::kDocumentMock,
                             std::move(handle)};
}

inline actors::KycEvidence minor_evidence() {
  return actors::KycEvidence{actors::parse_date("2012-09-30"), actors::EvidenceKind::kDocumentMock,
                             "subject-minor"};
}

// Attester, issuer and one origin wired to one trusted list and a virtual
// clock.
struct World {
  explicit World(unsigned bits = 1024, std::uint64_t seed = 7,
                 AgePolicy policy = AgePolicy::make(18, Assurance::kLow))
      : clock(std::make_shared<VirtualClock>(t0())),
        list(std::make_shared<registry::TrustedList>()),
        rng(seed, "world"),
        attester_key(Ed25519SigningKey::generate(rng)),
        attester({"attester.example", actors::kDefaultBatchAllowance}, attester_key),
        issuer({"issuer.example", policy, actors::kDefaultBatchAllowance}, test_key(bits), list, clock),
        spent(std::make_shared<MemorySpentStore>()),
        origin({"origin.example", "issuer.example", policy, actors::kDefaultBoundContextTtl}, list,
               spent, clock),
        policy(policy) {
    registry::TrustedListEntry a;
    a.entity_id = "attester.example";
    a.role = registry::Role::kAttester;
    a.keys.push_back(registry::make_attester_key(attester_key.public_key(), t0() - std::chrono::hours(24),
                                                 t0() + std::chrono::hours(24 * 365)));
    a.metadata[std::string(registry::kAttesterPoliciesKey)] = "18+/high,13+/high";
    list->register_entry(a);
    registry::TrustedListEntry i;
    i.entity_id = "issuer.example";
    i.role = registry::Role::kIssuer;
    i.keys.push_back(registry::make_issuer_key(issuer.public_key(), t0() - std::chrono::hours(24),
                                               t0() + std::chrono::hours(24 * 365)));
    i.metadata[std::string(registry::kIssuerPolicyKey)] = policy.label();
    list->register_entry(i);
  }

  // Full issuance for `client` against the origin's batch challenge.
  std::vector<tokens::Token> obtain(actors::Client& client, std::uint32_t count,
                                    const actors::KycEvidence& evidence) {
    tokens::TokenChallenge challenge = origin.make_challenge(actors::ChallengeMode::kBatch, rng);
    return obtain_for(client, challenge, count, evidence);
  }

  std::vector<tokens::Token> obtain_for(actors::Client& client, const tokens::TokenChallenge& challenge,
                                        std::uint32_t count, const actors::KycEvidence& evidence) {
    auto requests = client.begin_issuance(challenge, issuer.public_key(), count,
                                          issuer.config().batch_maximum, rng);
    actors::AttestationDecision decision = attester.attest(evidence, policy, clock->now());
    actors::ForwardedRequest fwd = attester.forward(decision, requests);
    std::vector<Bytes> sigs = issuer.issue(fwd);
    return client.finalize_batch(sigs);
  }

  std::shared_ptr<VirtualClock> clock;
  std::shared_ptr<registry::TrustedList> list;
  SeededEntropy rng;
  Ed25519SigningKey attester_key;
  actors::Attester attester;
  actors::Issuer issuer;
  std::shared_ptr<MemorySpentStore> spent;
  actors::Origin origin;
  AgePolicy policy;
};

}  // namespace agetoken::testing

#endif  // AGETOKEN_TESTS_TEST_SUPPORT_HPP_
