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

// Trusted event processor: asynchronous context providers feeding the
// policy server's context store, plus the audit sink consuming decision
// events. Always co-located with the TPS; never isolated from it.

#ifndef APPSPEAR_TEP_HPP_
#define APPSPEAR_TEP_HPP_

#include <atomic>
#include <chrono>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>
#include <vector>

#include "appspear/common.hpp"
#include "appspear/policy.hpp"
#include "appspear/wire.hpp"

namespace appspear {

class AuditSink {
 public:
  virtual ~AuditSink() = default;
  virtual Result<void> append(const wire::EventRecord& ev) = 0;
};

/// Append-only line-delimited audit log:
///   seq=<n> req=<id> op=<name> entities=<kind:id,...> verdict=<0|1>
///   epoch=<n> ts=<n>
class FileAuditSink : public AuditSink {
 public:
  explicit FileAuditSink(const std::string& path)
      : out_(path, std::ios::app) {}

  Result<void> append(const wire::EventRecord& ev) override {
    if (!out_) return {Err::sink_failure, "audit stream closed"};
    out_ << format_line(ev) << '\n';
    out_.flush();
    if (!out_) return {Err::sink_failure, "audit write failed"};
    return {};
  }

  static std::string format_line(const wire::EventRecord& ev) {
    std::ostringstream o;
    o << "seq=" << ev.seq << " req=" << ev.request_id << " op=" << ev.op
      << " entities=";
    for (size_t i = 0; i < ev.entities.size(); i++) {
      if (i > 0) o << ',';
      o << ev.entities[i].str();
    }
    o << " verdict=" << (ev.verdict ? 1 : 0) << " epoch=" << ev.epoch
      << " ts=" << ev.timestamp;
    return o.str();
  }

  /// Parses one audit line back into an event (replay).
  static Result<wire::EventRecord> parse_line(const std::string& line) {
    wire::EventRecord ev;
    std::istringstream in(line);
    std::string tok;
    auto bad = [&line]() -> Error {
      return {Err::malformed_record, "audit line: " + line};
    };
    while (in >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) return bad();
      std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      try {
        if (key == "seq") ev.seq = std::stoull(val);
        else if (key == "req") ev.request_id = std::stoull(val);
        else if (key == "op") ev.op = val;
        else if (key == "verdict") ev.verdict = val == "1";
        else if (key == "epoch") ev.epoch = std::stoull(val);
        else if (key == "ts") ev.timestamp = std::stoull(val);
        else if (key == "entities") {
          std::istringstream es(val);
          std::string e;
          while (std::getline(es, e, ',')) {
            auto colon = e.rfind(':');
            if (colon == std::string::npos) return bad();
            auto kind = kind_from_name(e.substr(0, colon));
            if (!kind) return bad();
            ev.entities.push_back({std::stoull(e.substr(colon + 1)), *kind});
          }
        } else {
          return bad();
        }
      } catch (const std::exception&) {
        return bad();
      }
    }
    return ev;
  }

  static Result<std::vector<wire::EventRecord>> replay(const std::string& path) {
    std::ifstream in(path);
    if (!in) return {Err::io_failure, "cannot open " + path};
    std::vector<wire::EventRecord> out;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto ev = parse_line(line);
      if (!ev) return ev.error();
      out.push_back(std::move(*ev));
    }
    return out;
  }

 private:
  std::ofstream out_;
};

/// Scripted context trace: lines of `<name> <value> <timestamp>`, pushed in
/// file order for reproducible context in tests.
struct TraceEntry {
  std::string name;
  double value = 0.0;
  uint64_t timestamp = 0;
};

inline Result<std::vector<TraceEntry>> parse_context_trace(std::string_view text) {
  std::vector<TraceEntry> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    std::istringstream ls(line);
    TraceEntry e;
    if (!(ls >> e.name)) continue;
    if (e.name[0] == '#') continue;
    if (!(ls >> e.value >> e.timestamp)) {
      return {Err::malformed_record, "trace line " + std::to_string(lineno)};
    }
    out.push_back(std::move(e));
  }
  return out;
}

class TrustedEventProcessor {
 public:
  void register_provider(const std::string& name) {
    std::lock_guard lk(mu_);
    providers_.insert(name);
  }

  /// Updates the latest held value for the variable. Values older than the
  /// last seen timestamp for the same variable are rejected unchanged.
  Result<void> push_context(const ContextValue& v) {
    std::lock_guard lk(mu_);
    if (!providers_.contains(v.name)) return {Err::unknown_provider, v.name};
    auto it = latest_.find(v.name);
    if (it != latest_.end() && v.timestamp < it->second.timestamp) {
      return {Err::stale_context, v.name};
    }
    latest_[v.name] = v;
    return {};
  }

  std::optional<ContextValue> latest(const std::string& name) const {
    std::lock_guard lk(mu_);
    auto it = latest_.find(name);
    if (it == latest_.end()) return std::nullopt;
    return it->second;
  }

  /// Collects the held value of every variable the risk metric weighs.
  Result<std::vector<ContextValue>> gather(const RiskPolicy& risk) const {
    std::lock_guard lk(mu_);
    std::vector<ContextValue> out;
    out.reserve(risk.weights.size());
    for (const auto& [name, w] : risk.weights) {
      (void)w;
      auto it = latest_.find(name);
      if (it == latest_.end()) return {Err::unknown_context_variable, name};
      out.push_back(it->second);
    }
    return out;
  }

  void set_sink(std::unique_ptr<AuditSink> sink) {
    std::lock_guard lk(mu_);
    sink_ = std::move(sink);
  }

  /// Appends a decision event to the audit sink. Sink failures are counted
  /// but never surface: auditing is off the enforcement path.
  void record_event(wire::EventRecord ev) {
    std::lock_guard lk(mu_);
    ev.seq = next_seq_++;
    if (!sink_) {
      sink_failures_++;
      return;
    }
    if (auto r = sink_->append(ev); !r) {
      sink_failures_++;
    } else {
      events_recorded_++;
    }
  }

  uint64_t events_recorded() const { return events_recorded_; }
  uint64_t sink_failures() const { return sink_failures_; }

 private:
  mutable std::mutex mu_;
  std::set<std::string> providers_;
  std::map<std::string, ContextValue> latest_;
  std::unique_ptr<AuditSink> sink_;
  uint64_t next_seq_ = 1;
  std::atomic<uint64_t> events_recorded_{0};
  std::atomic<uint64_t> sink_failures_{0};
};

/// Clock provider: periodically pushes a monotonic time reading (seconds)
/// for the named variable.
class ClockProvider {
 public:
  ClockProvider(TrustedEventProcessor& tep, std::string name,
                std::chrono::milliseconds period)
      : tep_(tep), name_(std::move(name)), period_(period) {
    tep_.register_provider(name_);
    thread_ = std::thread([this] { run(); });
  }

  ~ClockProvider() {
    stop_.store(true);
    if (thread_.joinable()) thread_.join();
  }

 private:
  void run() {
    while (!stop_.load()) {
      auto now = std::chrono::steady_clock::now().time_since_epoch();
      uint64_t ns = static_cast<uint64_t>(
          std::chrono::duration_cast<std::chrono::nanoseconds>(now).count());
      (void)tep_.push_context({name_, static_cast<double>(ns) * 1e-9, ns});
      std::this_thread::sleep_for(period_);
    }
  }

  TrustedEventProcessor& tep_;
  std::string name_;
  std::chrono::milliseconds period_;
  std::atomic<bool> stop_{false};
  std::thread thread_;
};

}  // namespace appspear

#endif  // APPSPEAR_TEP_HPP_
