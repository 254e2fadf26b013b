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

#ifndef APPSPEAR_COMMON_HPP_
#define APPSPEAR_COMMON_HPP_

#include <cstdint>
#include <cstdlib>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace appspear {

using Bytes = std::vector<uint8_t>;
using ByteSpan = std::span<const uint8_t>;

/// Error codes. Values are part of the wire format and must stay stable.
enum class Err : uint8_t {
  none = 0,
  unknown_entity = 1,
  arity_mismatch = 2,
  unknown_context_variable = 3,
  unknown_referent = 4,
  invariant_violation = 5,
  unknown_kind = 6,
  permission_denied = 7,
  transport_failure = 8,
  backend_unavailable = 9,
  attestation_mismatch = 10,
  tamper_detected = 11,
  queue_saturated = 12,
  stale_notice = 13,
  checksum_mismatch = 14,
  malformed_record = 15,
  unknown_user = 16,
  role_not_assigned = 17,
  dangling_link = 18,
  sink_failure = 19,
  io_failure = 20,
  clock_unavailable = 21,
  config_unsupported = 22,
  dataset_missing = 23,
  unknown_provider = 24,
  stale_context = 25,
  unknown_operation = 26,
  unknown_service = 27,
};

inline const char* err_name(Err e) {
  switch (e) {
    case Err::none: return "ok";
    case Err::unknown_entity: return "UnknownEntity";
    case Err::arity_mismatch: return "ArityMismatch";
    case Err::unknown_context_variable: return "UnknownContextVariable";
    case Err::unknown_referent: return "UnknownReferent";
    case Err::invariant_violation: return "InvariantViolation";
    case Err::unknown_kind: return "UnknownKind";
    case Err::permission_denied: return "PermissionDenied";
    case Err::transport_failure: return "TransportFailure";
    case Err::backend_unavailable: return "BackendUnavailable";
    case Err::attestation_mismatch: return "AttestationMismatch";
    case Err::tamper_detected: return "TamperDetected";
    case Err::queue_saturated: return "QueueSaturated";
    case Err::stale_notice: return "StaleNotice";
    case Err::checksum_mismatch: return "ChecksumMismatch";
    case Err::malformed_record: return "MalformedRecord";
    case Err::unknown_user: return "UnknownUser";
    case Err::role_not_assigned: return "RoleNotAssigned";
    case Err::dangling_link: return "DanglingLink";
    case Err::sink_failure: return "SinkFailure";
    case Err::io_failure: return "IoFailure";
    case Err::clock_unavailable: return "ClockUnavailable";
    case Err::config_unsupported: return "ConfigUnsupported";
    case Err::dataset_missing: return "DatasetMissing";
    case Err::unknown_provider: return "UnknownProvider";
    case Err::stale_context: return "StaleContext";
    case Err::unknown_operation: return "UnknownOperation";
    case Err::unknown_service: return "UnknownService";
  }
  return "unknown";
}

struct Error {
  Err code = Err::none;
  std::string detail;

  std::string message() const {
    return detail.empty() ? err_name(code)
                          : std::string(err_name(code)) + ": " + detail;
  }
};

/// Minimal expected-style result. std::expected is not available on the
/// toolchains this library targets.
template <typename T>
class Result {
 public:
  Result(T value) : v_(std::move(value)) {}
  Result(Error err) : v_(std::move(err)) {}
  Result(Err code, std::string detail = {})
      : v_(Error{code, std::move(detail)}) {}

  bool ok() const { return std::holds_alternative<T>(v_); }
  explicit operator bool() const { return ok(); }

  T& value() { return std::get<T>(v_); }
  const T& value() const { return std::get<T>(v_); }
  T& operator*() { return value(); }
  const T& operator*() const { return value(); }
  T* operator->() { return &value(); }
  const T* operator->() const { return &value(); }

  const Error& error() const { return std::get<Error>(v_); }
  Err code() const { return ok() ? Err::none : error().code; }

 private:
  std::variant<T, Error> v_;
};

template <>
class Result<void> {
 public:
  Result() = default;
  Result(Error err) : err_(std::move(err)) {}
  Result(Err code, std::string detail = {}) : err_(Error{code, std::move(detail)}) {}

  bool ok() const { return err_.code == Err::none; }
  explicit operator bool() const { return ok(); }
  const Error& error() const { return err_; }
  Err code() const { return err_.code; }

 private:
  Error err_;
};

inline std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? std::string(v) : std::move(fallback);
}

}  // namespace appspear

#endif  // APPSPEAR_COMMON_HPP_
