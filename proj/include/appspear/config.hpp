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

#ifndef APPSPEAR_CONFIG_HPP_
#define APPSPEAR_CONFIG_HPP_

#include <optional>
#include <string>
#include <string_view>

#include "appspear/common.hpp"

namespace appspear {

/// Isolation mechanism at one component boundary.
enum class Boundary : uint8_t {
  lpc = 0,  // in-process call, direct dispatch
  ipc = 1,  // separate process, local domain socket
  tee = 2,  // TEE-sim worker process: attested, encrypted channel
};

inline const char* boundary_name(Boundary b) {
  switch (b) {
    case Boundary::lpc: return "lpc";
    case Boundary::ipc: return "ipc";
    case Boundary::tee: return "tee";
  }
  return "?";
}

inline std::optional<Boundary> boundary_from_name(std::string_view s) {
  if (s == "lpc") return Boundary::lpc;
  if (s == "ipc") return Boundary::ipc;
  if (s == "tee") return Boundary::tee;
  return std::nullopt;
}

enum class CallMode : uint8_t {
  synchronous = 0,
  queued = 1,  // switchless-style: shared submission/completion queues
};

/// Placement of the two isolation boundaries plus call-path options. The TPS
/// and TEP are never separated from each other; the boundaries sit between
/// application logic and TOMs, and between TOMs and TPS/TEP.
struct IsolationConfig {
  Boundary app_tom = Boundary::lpc;
  Boundary tom_tps = Boundary::lpc;
  CallMode call_mode = CallMode::synchronous;
  bool cache_enabled = true;

  std::string name() const {
    return std::string(boundary_name(app_tom)) + "/" + boundary_name(tom_tps);
  }

  bool any_remote() const {
    return app_tom != Boundary::lpc || tom_tps != Boundary::lpc;
  }

  friend bool operator==(const IsolationConfig&, const IsolationConfig&) = default;
};

/// The variant set measured by the benchmark matrix and the transparency
/// suite.
inline const IsolationConfig* variant_matrix(size_t& count) {
  static const IsolationConfig kVariants[] = {
      {Boundary::lpc, Boundary::lpc},
      {Boundary::lpc, Boundary::ipc},
      {Boundary::ipc, Boundary::lpc},
      {Boundary::ipc, Boundary::ipc},
      {Boundary::lpc, Boundary::tee},
      {Boundary::tee, Boundary::lpc},
      {Boundary::ipc, Boundary::tee},
  };
  count = sizeof(kVariants) / sizeof(kVariants[0]);
  return kVariants;
}

inline std::string default_runtime_dir() {
  return env_or("APPSPEAR_RUNTIME_DIR", "/tmp");
}

/// Socket path convention: <runtime-dir>/appspear-<component>.sock
inline std::string component_socket_path(const std::string& runtime_dir,
                                         const std::string& component) {
  return runtime_dir + "/appspear-" + component + ".sock";
}

}  // namespace appspear

#endif  // APPSPEAR_CONFIG_HPP_
