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

// agetoken: key generation, registry management, the party services, a
// client with a local token store, and the scenario runner.
//
// Human-readable trace goes to stderr, JSON lines to stdout. The exit status
// is 0 on success and otherwise the numeric ErrorCode of the failure.

#include <signal.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "agetoken/actors.hpp"
#include "agetoken/blindsig.hpp"
#include "agetoken/crypto.hpp"
#include "agetoken/registry.hpp"
#include "agetoken/services.hpp"
#include "agetoken/simharness.hpp"
#include "agetoken/tokens.hpp"

namespace {

using namespace agetoken;
using json = nlohmann::json;
namespace chr = std::chrono;

void trace(const std::string& line) { std::cerr << line << "\n"; }
void emit(const json& j) { std::cout << j.dump() << "\n" << std::flush; }

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

struct Globals {
  std::optional<std::uint64_t> seed;
};

std::unique_ptr<Entropy> make_rng(const Globals& g, const std::string& label) {
  if (g.seed) return std::make_unique<SeededEntropy>(*g.seed, label);
  return std::make_unique<SystemEntropy>();
}

Timestamp now() { return SystemClock().now(); }

// ---------------------------------------------------------------------------
// keygen

struct KeygenArgs {
  std::string kind = "blind-rsa";
  unsigned bits = 2048;
  std::string out;
};

int run_keygen(const Globals& g, const KeygenArgs& a) {
  auto rng = make_rng(g, "keygen");
  if (a.kind == "ed25519") {
    const auto key = Ed25519SigningKey::generate(*rng);
    services::write_private_file(a.out, services::encode_ed25519_key_file(key));
    trace("wrote ed25519 key to " + a.out);
    emit({{"kind", "ed25519"}, {"file", a.out}, {"public_key", to_hex(key.public_key())}});
    return 0;
  }
  const auto mode = a.bits >= 2048 ? blindsig::KeyMode::kProduction : blindsig::KeyMode::kToy;
  if (mode == blindsig::KeyMode::kToy) trace("warning: " + std::to_string(a.bits) + "-bit toy key");
  const auto key = blindsig::generate_keypair(a.bits, *rng, mode);
  services::write_private_file(a.out, services::encode_rsa_key_file(key));
  const Digest id = tokens::derive_key_id(key.public_key());
  trace("wrote " + std::to_string(a.bits) + "-bit blind-rsa key to " + a.out);
  emit({{"kind", "blind-rsa"},
        {"file", a.out},
        {"bits", a.bits},
        {"token_type", tokens::token_type_for(key.public_key())},
        {"key_id", to_hex(id)}});
  return 0;
}

// ---------------------------------------------------------------------------
// registry

struct RegistryArgs {
  std::string file;
  std::string role;
  std::string entity;
  std::string key;
  std::string policy;
  std::string policies = "18+/high,13+/high";
  std::optional<std::int64_t> valid_from;
  std::optional<std::int64_t> valid_until;
  std::optional<std::uint64_t> version;
  std::string out;
};

registry::TrustedList load_registry(const std::string& file, bool may_be_missing) {
  if (may_be_missing && !std::filesystem::exists(file)) return registry::TrustedList{};
  return registry::TrustedList::import_list(read_text(file));
}

int run_registry_add(const RegistryArgs& a) {
  auto list = load_registry(a.file, true);
  const Timestamp from = a.valid_from ? from_unix(*a.valid_from) : now() - chr::minutes(5);
  const Timestamp until = a.valid_until ? from_unix(*a.valid_until) : now() + chr::hours(24 * 365);
  registry::TrustedListEntry e;
  e.entity_id = a.entity;
  if (a.role == "issuer") {
    e.role = registry::Role::kIssuer;
    const auto key = services::load_rsa_key_file(a.key);
    e.keys.push_back(registry::make_issuer_key(key.public_key(), from, until));
    if (a.policy.empty()) throw Error(ErrorCode::kInvalidArgument, "issuers need --policy");
    e.metadata[std::string(registry::kIssuerPolicyKey)] = AgePolicy::parse(a.policy).label();
  } else {
    e.role = registry::Role::kAttester;
    const auto key = services::load_ed25519_key_file(a.key);
    e.keys.push_back(registry::make_attester_key(key.public_key(), from, until));
    e.metadata[std::string(registry::kAttesterPoliciesKey)] =
        format_policy_list(parse_policy_list(a.policies));
  }
  const std::uint64_t version = list.register_entry(e);
  write_text(a.file, list.export_list());
  trace("registered " + a.role + " " + a.entity + " at version " + std::to_string(version));
  emit({{"registered", a.entity},
        {"role", a.role},
        {"version", version},
        {"key_id", to_hex(e.keys.front().key_id)}});
  return 0;
}

int run_registry_list(const RegistryArgs& a) {
  const auto list = load_registry(a.file, false);
  const std::uint64_t version = a.version.value_or(list.version());
  for (const auto& e : list.entries(version)) {
    json keys = json::array();
    for (const auto& k : e.keys) {
      keys.push_back({{"key_id", to_hex(k.key_id)},
                      {"algorithm", registry::algorithm_name(k.algorithm)},
                      {"valid_from", to_unix(k.valid_from)},
                      {"valid_until", to_unix(k.valid_until)}});
    }
    emit({{"entity_id", e.entity_id},
          {"role", registry::role_name(e.role)},
          {"status", registry::status_name(e.status)},
          {"metadata", e.metadata},
          {"keys", keys}});
  }
  trace("version " + std::to_string(version) + " of " + std::to_string(list.version()));
  return 0;
}

int run_registry_export(const RegistryArgs& a) {
  const auto list = load_registry(a.file, false);
  const std::string text = list.export_list(a.version.value_or(list.version()));
  if (a.out.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << "\n";
  } else {
    write_text(a.out, text);
    trace("exported to " + a.out);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// serve

int run_serve(services::ServiceRole role, const std::string& config_path) {
  services::ServiceConfig config = services::load_service_config(config_path);
  if (config.role != role) {
    throw Error(ErrorCode::kConfig, "config role is " +
                                        std::string(services::service_role_name(config.role)) +
                                        ", expected " + std::string(services::service_role_name(role)));
  }
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  auto service = services::serve(config);
  trace(std::string(services::service_role_name(role)) + " listening on " + service->url());
  emit({{"event", "listening"}, {"role", services::service_role_name(role)}, {"url", service->url()}});
  int sig = 0;
  sigwait(&signals, &sig);
  trace("shutting down");
  service->stop();
  return 0;
}

// ---------------------------------------------------------------------------
// client

struct ClientArgs {
  std::string attester;
  std::string issuer;
  std::string origin;
  std::string evidence;
  std::string policy = "18+/low";
  std::uint32_t count = 10;
  std::string mode = "batch";
  std::string store;
};

actors::KycEvidence load_evidence(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed, path + ": " + e.what());
  }
  actors::KycEvidence ev;
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "declared") {
      ev.kind = actors::EvidenceKind::kDeclared;
    } else if (kind == "document") {
      ev.kind = actors::EvidenceKind::kDocumentMock;
    } else if (kind == "device") {
      ev.kind = actors::EvidenceKind::kDeviceAttestedMock;
    } else {
      throw Error(ErrorCode::kMalformed, path + ": kind must be declared, document or device");
    }
    ev.date_of_birth = actors::parse_date(j.at("date_of_birth").get<std::string>());
    ev.subject_handle = j.value("subject", "");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed, path + ": " + e.what());
  }
  return ev;
}

actors::Client load_client(const std::string& path) {
  if (!std::filesystem::exists(path)) return actors::Client{};
  const std::string text = read_text(path);
  return actors::Client(actors::ClientTokenStore::deserialize(Bytes(text.begin(), text.end())));
}

void save_client(const std::string& path, const actors::Client& client) {
  const Bytes b = client.store().serialize();
  services::write_private_file(path, std::string(b.begin(), b.end()));
}

actors::ChallengeMode parse_mode(const std::string& mode) {
  return mode == "bound" ? actors::ChallengeMode::kBound : actors::ChallengeMode::kBatch;
}

json decision_json(const actors::AttestationDecision& d) {
  return {{"step", "attest"},
          {"granted", d.granted},
          {"policy", d.policy.label()},
          {"batch_allowance", d.batch_allowance},
          {"attester", d.attester_id}};
}

int run_client_attest(const ClientArgs& a) {
  services::AttestRequestBody body{load_evidence(a.evidence), AgePolicy::parse(a.policy), {}};
  const auto response = services::remote_attest(services::HttpClient(a.attester), body);
  trace("attest: granted " + response.decision.policy.label() + ", allowance " +
        std::to_string(response.decision.batch_allowance));
  emit(decision_json(response.decision));
  return 0;
}

// Attest, forward through the attester, finalize. Returns the challenge the
// tokens were issued for.
tokens::TokenChallenge obtain(const Globals& g, const ClientArgs& a, actors::Client& client) {
  auto rng = make_rng(g, "client-obtain");
  const services::HttpClient origin(a.origin);
  const auto challenge = services::remote_challenge(origin, parse_mode(a.mode));
  trace("challenge: " + challenge.issuer_name + (challenge.bound() ? " (bound)" : " (batch)"));
  const auto trusted = services::remote_trusted_list(services::HttpClient(a.issuer));
  const auto key = services::issuer_key(trusted, challenge.issuer_name, now());
  if (!key) throw Error(ErrorCode::kUnknownIssuer, challenge.issuer_name + " has no active key");
  trace("issuer key: " + to_hex(tokens::derive_key_id(*key)).substr(0, 16) + "... from registry v" +
        std::to_string(trusted.version()));

  std::uint32_t count = a.count;
  if (challenge.bound() && count != 1) {
    trace("bound challenge: requesting a single token");
    count = 1;
  }
  services::AttestRequestBody body{load_evidence(a.evidence), AgePolicy::parse(a.policy), {}};
  body.requests = client.begin_issuance(challenge, *key, count, count, *rng);
  trace("begin-issuance: " + std::to_string(body.requests.size()) + " blinded requests");
  services::AttestResponse response;
  try {
    response = services::remote_attest(services::HttpClient(a.attester), body);
  } catch (const Error& e) {
    client.store().clear_pending();
    if (e.code() == ErrorCode::kPolicyDenied) trace("attest: denied");
    throw;
  }
  trace("attest: granted " + response.decision.policy.label());
  emit(decision_json(response.decision));
  trace("issue: " + std::to_string(response.blind_signatures.size()) + " blind signatures");
  const auto tokens = client.finalize_batch(response.blind_signatures);
  trace("finalize: " + std::to_string(tokens.size()) + " tokens");
  emit({{"step", "issue"}, {"tokens", tokens.size()}});
  return challenge;
}

int spend(const ClientArgs& a, actors::Client& client,
          const std::optional<tokens::TokenChallenge>& issued_for) {
  const services::HttpClient origin(a.origin);
  // A bound token only redeems against the challenge it was issued for.
  const auto challenge = issued_for && issued_for->bound()
                             ? *issued_for
                             : services::remote_challenge(origin, actors::ChallengeMode::kBatch);
  const Bytes cb = tokens::encode_challenge(challenge);
  tokens::Token token;
  try {
    token = client.redeem(cb);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kPoolExhausted) {
      trace("redeem: pool exhausted, re-attest with `client obtain` for more tokens");
      emit({{"step", "redeem"}, {"granted", false}, {"error", "pool-exhausted"}});
    }
    throw;
  }
  const auto decision = services::remote_redeem(origin, cb, tokens::encode_token(token));
  const std::size_t left = client.store().ready_count();
  if (decision.granted) {
    trace("redeem: granted, " + std::to_string(left) + " tokens left");
    emit({{"step", "redeem"}, {"granted", true}, {"remaining", left}});
    return 0;
  }
  const auto reason = actors::reject_reason_name(*decision.reason);
  trace("redeem: rejected (" + std::string(reason) + ")");
  emit({{"step", "redeem"}, {"granted", false}, {"reason", reason}, {"remaining", left}});
  return static_cast<int>(actors::error_code_for(*decision.reason));
}

int run_client_obtain(const Globals& g, const ClientArgs& a) {
  actors::Client client = load_client(a.store);
  obtain(g, a, client);
  save_client(a.store, client);
  emit({{"step", "store"}, {"file", a.store}, {"tokens", client.store().ready_count()}});
  return 0;
}

int run_client_spend(const ClientArgs& a) {
  actors::Client client = load_client(a.store);
  int rc = 0;
  try {
    rc = spend(a, client, std::nullopt);
  } catch (...) {
    save_client(a.store, client);
    throw;
  }
  save_client(a.store, client);
  return rc;
}

int run_client_flow(const Globals& g, const ClientArgs& a) {
  actors::Client client = load_client(a.store);
  const auto challenge = obtain(g, a, client);
  save_client(a.store, client);
  const int rc = spend(a, client, challenge);
  save_client(a.store, client);
  emit({{"step", "store"}, {"file", a.store}, {"tokens", client.store().ready_count()}});
  return rc;
}

int run_client_balance(const ClientArgs& a) {
  const actors::Client client = load_client(a.store);
  trace(std::to_string(client.store().ready_count()) + " tokens ready" +
        (client.store().has_pending() ? ", issuance pending" : ""));
  emit({{"tokens", client.store().ready_count()}, {"pending", client.store().pending().size()}});
  return 0;
}

// ---------------------------------------------------------------------------
// scenario

struct ScenarioArgs {
  std::string name;
  std::string out;
  std::string deployment = "http";
  sim::ScenarioConfig config;
  std::int64_t sync_interval = 5;
  std::int64_t spacing = 10;
  bool no_collude = false;
  std::string report;
};

int run_scenario(const Globals& g, ScenarioArgs a) {
  a.config.scenario = a.name;
  if (g.seed) a.config.seed = *g.seed;
  a.config.deployment = sim::parse_deployment(a.deployment);
  a.config.sync_interval = chr::seconds(a.sync_interval);
  a.config.spend_spacing = chr::seconds(a.spacing);
  a.config.collude_issuer_origin = !a.no_collude;
  trace("running " + a.name + " (seed " + std::to_string(a.config.seed) + ", " + a.deployment + ")");
  const sim::ScenarioReport report = sim::run_scenario(a.config);
  const std::string lines = report.to_json_lines();
  if (!a.out.empty()) write_text(a.out, lines);
  std::cout << lines << std::flush;
  std::cerr << report.render_table();
  return 0;
}

int run_scenario_report(const std::string& file) {
  const auto report = sim::ScenarioReport::from_json_lines(read_text(file));
  std::cout << report.render_table();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"agetoken: anonymous age-verification tokens"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& v) { g.seed = v; },
                                         "Seed all client-side randomness")
      ->check(CLI::NonNegativeNumber);
  app.set_version_flag("--version", AGETOKEN_VERSION);

  KeygenArgs keygen;
  auto* keygen_cmd = app.add_subcommand("keygen", "Generate a key file");
  keygen_cmd->add_option("--kind", keygen.kind, "blind-rsa or ed25519")
      ->check(CLI::IsMember({"blind-rsa", "ed25519"}));
  keygen_cmd->add_option("--bits", keygen.bits, "RSA modulus size")->check(CLI::Range(64, 8192));
  keygen_cmd->add_option("--out", keygen.out, "Key file to write (mode 0600)")->required();

  RegistryArgs reg;
  auto* registry_cmd = app.add_subcommand("registry", "Manage a trusted-list file");
  registry_cmd->require_subcommand(1);
  auto* reg_add = registry_cmd->add_subcommand("add", "Register an attester or issuer");
  auto* reg_list = registry_cmd->add_subcommand("list", "List entities");
  auto* reg_export = registry_cmd->add_subcommand("export", "Print a canonical snapshot");
  for (auto* c : {reg_add, reg_list, reg_export}) {
    c->add_option("--registry", reg.file, "Trusted-list file")->required();
  }
  reg_add->add_option("--role", reg.role)->required()->check(CLI::IsMember({"attester", "issuer"}));
  reg_add->add_option("--entity", reg.entity)->required();
  reg_add->add_option("--key", reg.key, "Key file")->required();
  reg_add->add_option("--policy", reg.policy, "Issuer policy, e.g. 18+/low");
  reg_add->add_option("--policies", reg.policies, "Attester policies")->capture_default_str();
  reg_add->add_option("--valid-from", reg.valid_from, "Unix seconds");
  reg_add->add_option("--valid-until", reg.valid_until, "Unix seconds");
  reg_list->add_option("--version", reg.version);
  reg_export->add_option("--version", reg.version);
  reg_export->add_option("--out", reg.out);

  std::string config_path;
  std::vector<std::pair<CLI::App*, services::ServiceRole>> serve_cmds;
  for (auto [name, role] : {std::pair{"attester", services::ServiceRole::kAttester},
                            std::pair{"issuer", services::ServiceRole::kIssuer},
                            std::pair{"origin", services::ServiceRole::kOrigin},
                            std::pair{"exchange", services::ServiceRole::kExchange},
                            std::pair{"hub", services::ServiceRole::kHub}}) {
    auto* parent = app.add_subcommand(name, std::string("Run the ") + name + " service");
    parent->require_subcommand(1);
    auto* serve = parent->add_subcommand("serve", "Serve until SIGINT or SIGTERM");
    serve->add_option("--config", config_path, "Service config file")->required();
    serve_cmds.emplace_back(serve, role);
  }

  ClientArgs cl;
  auto* client_cmd = app.add_subcommand("client", "Client operations");
  client_cmd->require_subcommand(1);
  auto* c_attest = client_cmd->add_subcommand("attest", "Ask the attester for a decision");
  auto* c_obtain = client_cmd->add_subcommand("obtain", "Attest and obtain tokens into the store");
  auto* c_spend = client_cmd->add_subcommand("spend", "Redeem one stored token at an origin");
  auto* c_balance = client_cmd->add_subcommand("balance", "Count stored tokens");
  auto* c_flow = client_cmd->add_subcommand("flow", "Obtain tokens and redeem one");
  for (auto* c : {c_attest, c_obtain, c_flow}) {
    c->add_option("--attester", cl.attester, "Attester URL")->required();
    c->add_option("--evidence", cl.evidence, "Evidence JSON file")->required();
    c->add_option("--policy", cl.policy)->capture_default_str();
  }
  for (auto* c : {c_obtain, c_flow}) {
    c->add_option("--issuer", cl.issuer, "URL serving /trusted-list")->required();
    c->add_option("--count", cl.count)->capture_default_str()->check(CLI::Range(1, 1000));
    c->add_option("--mode", cl.mode)->capture_default_str()->check(CLI::IsMember({"batch", "bound"}));
  }
  for (auto* c : {c_obtain, c_spend, c_flow}) {
    c->add_option("--origin", cl.origin, "Origin URL")->required();
  }
  for (auto* c : {c_obtain, c_spend, c_balance, c_flow}) {
    c->add_option("--store", cl.store, "Token store file")->required();
  }

  ScenarioArgs sc;
  auto* scenario_cmd = app.add_subcommand("scenario", "Simulation scenarios");
  scenario_cmd->require_subcommand(1);
  auto* s_run = scenario_cmd->add_subcommand("run", "Run a scenario and print its report");
  s_run->add_option("name", sc.name, "unlinkability, double-spend, issuer-hiding, token-transfer")
      ->required();
  s_run->add_option("--out", sc.out, "Report file (JSON lines)");
  s_run->add_option("--deployment", sc.deployment)
      ->capture_default_str()
      ->check(CLI::IsMember({"http", "in-process"}));
  s_run->add_option("--clients", sc.config.clients)->capture_default_str();
  s_run->add_option("--origins", sc.config.origins)->capture_default_str();
  s_run->add_option("--issuers", sc.config.issuers)->capture_default_str();
  s_run->add_option("--tokens", sc.config.tokens)->capture_default_str();
  s_run->add_option("--trials", sc.config.trials)->capture_default_str();
  s_run->add_option("--key-bits", sc.config.key_bits)->capture_default_str();
  s_run->add_flag("--sync", sc.config.sync, "Hub sync between origins");
  s_run->add_option("--sync-interval", sc.sync_interval, "Seconds")->capture_default_str();
  s_run->add_option("--spacing", sc.spacing, "Seconds between replays")->capture_default_str();
  s_run->add_flag("--no-collude", sc.no_collude, "Origin-only adversary");
  s_run->add_flag("--collude-attester", sc.config.collude_attester);
  auto* s_report = scenario_cmd->add_subcommand("report", "Render a report file as a table");
  s_report->add_option("file", sc.report)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorCode::kInvalidArgument);
  }

  try {
    if (*keygen_cmd) return run_keygen(g, keygen);
    if (*reg_add) return run_registry_add(reg);
    if (*reg_list) return run_registry_list(reg);
    if (*reg_export) return run_registry_export(reg);
    for (auto& [cmd, role] : serve_cmds) {
      if (*cmd) return run_serve(role, config_path);
    }
    if (*c_attest) return run_client_attest(cl);
    if (*c_obtain) return run_client_obtain(g, cl);
    if (*c_spend) return run_client_spend(cl);
    if (*c_balance) return run_client_balance(cl);
    if (*c_flow) return run_client_flow(g, cl);
    if (*s_run) return run_scenario(g, sc);
    if (*s_report) return run_scenario_report(sc.report);
  } catch (const Error& e) {
    trace(std::string("error: ") + std::string(error_code_name(e.code())) + ": " + e.what());
    emit({{"error", error_code_name(e.code())}, {"code", static_cast<int>(e.code())},
          {"message", e.what()}});
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    trace(std::string("error: internal: ") + e.what());
    return static_cast<int>(ErrorCode::kInternal);
  }
  return static_cast<int>(ErrorCode::kInvalidArgument);
}
