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

// Records of redeemed tokens. The atomic check-and-insert is the only
// synchronisation point redemption needs.

#ifndef AGETOKEN_SPENT_STORE_HPP_
#define AGETOKEN_SPENT_STORE_HPP_

#include <filesystem>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "agetoken/common.hpp"
#include "agetoken/tokens.hpp"

namespace agetoken {

struct SpentTokenRecord {
  tokens::Nonce nonce{};
  Digest token_key_id{};
  std::string origin_id;
  Timestamp spend_time{};

  friend bool operator==(const SpentTokenRecord&, const SpentTokenRecord&) = default;
};

Bytes encode_spent_record(const SpentTokenRecord& record);
SpentTokenRecord decode_spent_record(ByteReader& reader);

class SpentStore {
 public:
  virtual ~SpentStore() = default;

  // Inserts the record unless (nonce, token_key_id) is already present.
  // Returns true iff this call inserted it. Linearizable.
  virtual bool insert_if_absent(const SpentTokenRecord& record) = 0;
  virtual bool contains(const tokens::Nonce& nonce, const Digest& token_key_id) const = 0;
  virtual std::size_t size() const = 0;
  // Records in local insertion order, starting at log position `from`.
  virtual std::vector<SpentTokenRecord> records_since(std::size_t from) const = 0;

  // Union merge of foreign records; returns how many were new.
  std::size_t merge(std::span<const SpentTokenRecord> records);
  std::vector<SpentTokenRecord> records() const { return records_since(0); }
};

class MemorySpentStore : public SpentStore {
 public:
  bool insert_if_absent(const SpentTokenRecord& record) override;
  bool contains(const tokens::Nonce& nonce, const Digest& token_key_id) const override;
  std::size_t size() const override;
  std::vector<SpentTokenRecord> records_since(std::size_t from) const override;

 private:
  using Key = std::pair<tokens::Nonce, Digest>;
  mutable std::mutex mu_;
  std::set<Key> index_;
  std::vector<SpentTokenRecord> log_;
};

// Append-only log on disk. Layout (docs/wire-formats.md):
//   "AGSPENT1" then records of
//   u32 body_len | body | first 4 bytes of SHA-256(body)
// where body = encode_spent_record(). A torn trailing record left by a crash
// is discarded on open. insert_if_absent() returns only after the record is
// flushed with fsync (when `durable` is set).
class FileSpentStore : public SpentStore {
 public:
  explicit FileSpentStore(std::filesystem::path path, bool durable = true);
  ~FileSpentStore() override;
  FileSpentStore(const FileSpentStore&) = delete;
  FileSpentStore& operator=(const FileSpentStore&) = delete;

  bool insert_if_absent(const SpentTokenRecord& record) override;
  bool contains(const tokens::Nonce& nonce, const Digest& token_key_id) const override;
  std::size_t size() const override;
  std::vector<SpentTokenRecord> records_since(std::size_t from) const override;

  // Rewrites the log without any discarded tail.
  void compact();
  const std::filesystem::path& path() const { return path_; }

 private:
  void append_locked(const SpentTokenRecord& record);
  void open_for_append();

  std::filesystem::path path_;
  bool durable_;
  int fd_ = -1;
  mutable std::mutex mu_;
  MemorySpentStore memory_;
};

}  // namespace agetoken

#endif  // AGETOKEN_SPENT_STORE_HPP_
