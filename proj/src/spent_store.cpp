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

#include "agetoken/spent_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <iterator>

#include "agetoken/crypto.hpp"

namespace agetoken {

namespace {

constexpr std::string_view kMagic = "AGSPENT1";

[[noreturn]] void io_error(const std::string& what) {
  throw Error(ErrorCode::kIo, what + ": " + std::strerror(errno));
}

void write_all(int fd, ByteView data) {
  std::size_t done = 0;
  while (done < data.size()) {
    ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      io_error("spent log write");
    }
    done += static_cast<std::size_t>(n);
  }
}

Bytes frame(const SpentTokenRecord& record) {
  Bytes body = encode_spent_record(record);
  Digest check = sha256(body);
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(body.size()));
  w.raw(body);
  w.raw(ByteView(check.data(), 4));
  return std::move(w).bytes();
}

}  // namespace

Bytes encode_spent_record(const SpentTokenRecord& record) {
  ByteWriter w;
  w.raw(record.nonce);
  w.raw(record.token_key_id);
  w.u64(static_cast<std::uint64_t>(to_unix(record.spend_time)));
  w.prefixed(record.origin_id, 2);
  return std::move(w).bytes();
}

SpentTokenRecord decode_spent_record(ByteReader& reader) {
  SpentTokenRecord r;
  ByteView nonce = reader.raw(tokens::kNonceSize);
  std::copy(nonce.begin(), nonce.end(), r.nonce.begin());
  r.token_key_id = to_digest(reader.raw(32));
  r.spend_time = from_unix(static_cast<std::int64_t>(reader.u64()));
  r.origin_id = reader.prefixed_string(2);
  return r;
}

std::size_t SpentStore::merge(std::span<const SpentTokenRecord> records) {
  std::size_t added = 0;
  for (const SpentTokenRecord& r : records) {
    if (insert_if_absent(r)) ++added;
  }
  return added;
}

bool MemorySpentStore::insert_if_absent(const SpentTokenRecord& record) {
  std::lock_guard<std::mutex> lock(mu_);
  if (!index_.emplace(record.nonce, record.token_key_id).second) return false;
  log_.push_back(record);
  return true;
}

bool MemorySpentStore::contains(const tokens::Nonce& nonce, const Digest& token_key_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  return index_.count(Key{nonce, token_key_id}) != 0;
}

std::size_t MemorySpentStore::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return log_.size();
}

std::vector<SpentTokenRecord> MemorySpentStore::records_since(std::size_t from) const {
  std::lock_guard<std::mutex> lock(mu_);
  if (from >= log_.size()) return {};
  return std::vector<SpentTokenRecord>(log_.begin() + static_cast<std::ptrdiff_t>(from), log_.end());
}

FileSpentStore::FileSpentStore(std::filesystem::path path, bool durable)
    : path_(std::move(path)), durable_(durable) {
  std::size_t valid_bytes = 0;
  bool needs_rewrite = false;
  if (std::filesystem::exists(path_)) {
    std::ifstream in(path_, std::ios::binary);
    if (!in) io_error("open spent log " + path_.string());
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t head = std::min(data.size(), kMagic.size());
    if (!std::equal(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(head), kMagic.begin())) {
      throw Error(ErrorCode::kIo, "spent log " + path_.string() + " has a bad header");
    }
    // A header cut short by a crash holds no records.
    valid_bytes = head < kMagic.size() ? 0 : kMagic.size();
    ByteReader reader(ByteView(data).subspan(head));
    while (valid_bytes > 0 && reader.remaining() > 0) {
      try {
        const std::uint32_t len = reader.u32();
        ByteView body = reader.raw(len);
        ByteView check = reader.raw(4);
        Digest expect = sha256(body);
        if (!std::equal(check.begin(), check.end(), expect.begin())) break;
        ByteReader body_reader(body);
        SpentTokenRecord record = decode_spent_record(body_reader);
        body_reader.expect_end("spent record");
        memory_.insert_if_absent(record);
        valid_bytes = data.size() - reader.remaining();
      } catch (const Error&) {
        break;
      }
    }
    needs_rewrite = valid_bytes == 0 || valid_bytes != data.size();
  }
  if (needs_rewrite) {
    compact();
  } else {
    open_for_append();
  }
}

FileSpentStore::~FileSpentStore() {
  if (fd_ >= 0) ::close(fd_);
}

void FileSpentStore::open_for_append() {
  const bool fresh = !std::filesystem::exists(path_);
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0600);
  if (fd_ < 0) io_error("open spent log " + path_.string());
  if (fresh) {
    write_all(fd_, ByteView(reinterpret_cast<const std::uint8_t*>(kMagic.data()), kMagic.size()));
    if (durable_ && ::fsync(fd_) != 0) io_error("fsync spent log");
  }
}

void FileSpentStore::compact() {
  std::lock_guard<std::mutex> lock(mu_);
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
  const std::filesystem::path tmp = path_.string() + ".compact";
  {
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
    if (fd < 0) io_error("open " + tmp.string());
    ByteWriter w;
    w.raw(to_bytes(kMagic));
    for (const SpentTokenRecord& r : memory_.records()) w.raw(frame(r));
    write_all(fd, w.bytes());
    if (::fsync(fd) != 0) io_error("fsync " + tmp.string());
    ::close(fd);
  }
  std::filesystem::rename(tmp, path_);
  open_for_append();
}

void FileSpentStore::append_locked(const SpentTokenRecord& record) {
  write_all(fd_, frame(record));
  if (durable_ && ::fdatasync(fd_) != 0) io_error("fsync spent log");
}

bool FileSpentStore::insert_if_absent(const SpentTokenRecord& record) {
  std::lock_guard<std::mutex> lock(mu_);
  if (memory_.contains(record.nonce, record.token_key_id)) return false;
  append_locked(record);
  return memory_.insert_if_absent(record);
}

bool FileSpentStore::contains(const tokens::Nonce& nonce, const Digest& token_key_id) const {
  return memory_.contains(nonce, token_key_id);
}

std::size_t FileSpentStore::size() const { return memory_.size(); }

std::vector<SpentTokenRecord> FileSpentStore::records_since(std::size_t from) const {
  return memory_.records_since(from);
}

}  // namespace agetoken
