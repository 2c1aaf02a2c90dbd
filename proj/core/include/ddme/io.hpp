// Copyright 2026 The DDME Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ddme {

// Little-endian binary encoding, byte-composed so the on-disk layout does not
// depend on host endianness.
class BinaryWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void bytes(std::string_view s) { buf_.append(s); }
  /// u32 length prefix followed by raw bytes.
  void str(std::string_view s);

  const std::string& buffer() const { return buf_; }
  void to_file(const std::filesystem::path& path) const;

 private:
  std::string buf_;
};

// Bounds-checked reader over an in-memory buffer; throws ParseError on
// truncation.
class BinaryReader {
 public:
  explicit BinaryReader(std::string_view data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  std::string str();

  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const;

  std::string_view data_;
  std::size_t pos_ = 0;
};

// Minimal JSON emitter for reports and manifests. Handles escaping and keeps
// key order as written so emitted documents are byte-stable.
class JsonWriter {
 public:
  JsonWriter& begin_object();
  JsonWriter& end_object();
  JsonWriter& begin_array();
  JsonWriter& end_array();
  JsonWriter& key(std::string_view k);
  JsonWriter& value(std::string_view v);
  JsonWriter& value(const char* v) { return value(std::string_view(v)); }
  JsonWriter& value(double v);
  JsonWriter& value(std::int64_t v);
  JsonWriter& value(std::uint64_t v);
  JsonWriter& value(int v) { return value(static_cast<std::int64_t>(v)); }
  JsonWriter& value(bool v);

  JsonWriter& kv(std::string_view k, auto v) { return key(k), value(v); }

  const std::string& str() const { return out_; }

 private:
  void comma();

  std::string out_;
  std::vector<bool> first_;   // per nesting level
  bool pending_key_ = false;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// FNV-1a 64 of a file's bytes, formatted as "fnv1a64:<16 hex digits>".
std::string file_digest(const std::filesystem::path& path);
std::string bytes_digest(std::string_view bytes);

/// Fixed-point decimal with `decimals` places ('%.Nf'), locale-independent.
std::string format_fixed(double v, int decimals);

}  // namespace ddme
