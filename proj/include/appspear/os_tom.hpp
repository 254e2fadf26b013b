/*
 * Copyright 2026 The AppSPEAR Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Wrapper TOM for OS objects: files under a sandbox root appear as policy
// entities of kind os-object, and the four file operations are mediated
// like any other TOM operation before the real I/O runs.

#ifndef APPSPEAR_OS_TOM_HPP_
#define APPSPEAR_OS_TOM_HPP_

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "appspear/tom.hpp"

namespace appspear {

enum class OsCall : uint8_t {
  file_read = 0,
  file_write = 1,
  file_create = 2,
  file_delete = 3,
};

inline const char* os_call_name(OsCall c) {
  switch (c) {
    case OsCall::file_read: return "file_read";
    case OsCall::file_write: return "file_write";
    case OsCall::file_create: return "file_create";
    case OsCall::file_delete: return "file_delete";
  }
  return "?";
}

class OsObjectTom : public Tom {
 public:
  OsObjectTom(std::string sandbox_root, TpsClient& tps)
      : Tom("os-wrapper", EntityKind::os_object, tps),
        root_(std::move(sandbox_root)) {
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
  }

  /// Binds a sandbox-relative path to an os-object entity. Paths may not
  /// escape the sandbox root.
  Result<EntityId> register_path(const std::string& rel_path) {
    auto norm = normalize(rel_path);
    if (!norm) return norm.error();
    if (auto it = by_path_.find(*norm); it != by_path_.end()) {
      return EntityId{it->second, EntityKind::os_object};
    }
    EntityId eid = register_object(
        ByteSpan{reinterpret_cast<const uint8_t*>(norm->data()), norm->size()});
    by_path_[*norm] = eid.id;
    return eid;
  }

  /// Mediated OS access: on allow, performs the real file operation.
  /// `data` feeds file_write / file_create; I/O errors surface as IoFailure,
  /// distinct from policy denials.
  Result<Bytes> call(EntityId subject, OsCall kind, const std::string& rel_path,
                     ByteSpan data = {}) {
    auto norm = normalize(rel_path);
    if (!norm) return norm.error();
    auto it = by_path_.find(*norm);
    if (it == by_path_.end()) {
      return Error{Err::unknown_entity, "unregistered path " + rel_path};
    }
    EntityId file{it->second, EntityKind::os_object};
    std::string full = root_ + "/" + *norm;
    EntityId tgt[] = {file};
    return mediate(subject, os_call_name(kind), tgt,
                   [&]() -> Result<Bytes> { return execute(kind, full, data); });
  }

 private:
  static Result<std::string> normalize(const std::string& rel) {
    if (rel.empty() || rel.front() == '/') {
      return {Err::io_failure, "path must be sandbox-relative"};
    }
    std::filesystem::path p = std::filesystem::path(rel).lexically_normal();
    for (const auto& part : p) {
      if (part == "..") return {Err::io_failure, "path escapes sandbox: " + rel};
    }
    return p.string();
  }

  static Result<Bytes> execute(OsCall kind, const std::string& full, ByteSpan data) {
    switch (kind) {
      case OsCall::file_read: {
        std::ifstream f(full, std::ios::binary);
        if (!f) return Error{Err::io_failure, "open " + full};
        std::ostringstream ss;
        ss << f.rdbuf();
        const std::string& s = ss.str();
        return Bytes(s.begin(), s.end());
      }
      case OsCall::file_create:
      case OsCall::file_write: {
        if (kind == OsCall::file_create && std::filesystem::exists(full)) {
          return Error{Err::io_failure, "exists " + full};
        }
        std::ofstream f(full, std::ios::binary | std::ios::trunc);
        if (!f) return Error{Err::io_failure, "open " + full};
        f.write(reinterpret_cast<const char*>(data.data()),
                static_cast<std::streamsize>(data.size()));
        if (!f) return Error{Err::io_failure, "write " + full};
        return Bytes{};
      }
      case OsCall::file_delete: {
        std::error_code ec;
        if (!std::filesystem::remove(full, ec) || ec) {
          return Error{Err::io_failure, "remove " + full};
        }
        return Bytes{};
      }
    }
    return Error{Err::io_failure, "bad call"};
  }

  std::string root_;
  std::unordered_map<std::string, uint64_t> by_path_;
};

}  // namespace appspear

#endif  // APPSPEAR_OS_TOM_HPP_
