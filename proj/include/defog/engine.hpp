#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "defog/envelope.hpp"
#include "defog/error.hpp"
#include "defog/graph.hpp"
#include "defog/negotiation.hpp"
#include "defog/tensor.hpp"

namespace defog {

// Result slot shared between the application thread and the progress context.
// Fields other than `done` are written before `done` is released.
struct Completion {
  std::atomic<bool> done{false};
  ErrorCode code = ErrorCode::kOk;
  std::string message;
  Tensor result;
  std::vector<Tensor> gathered;
  std::optional<Envelope> envelope;  // recv_match result

  bool ok() const { return code == ErrorCode::kOk; }
  void rethrow_if_error() const {
    if (code != ErrorCode::kOk) throw_error(code, message);
  }
};
using CompletionPtr = std::shared_ptr<Completion>;

struct EngineCounters {
  std::uint64_t messages_sent = 0;  // excludes loopback messages to self
  std::uint64_t tensor_messages = 0;
  std::uint64_t tensor_bytes = 0;
  std::uint64_t data_messages = 0;  // collective payload messages only
  std::uint64_t data_bytes = 0;
  std::uint64_t batches_executed = 0;
  std::uint64_t requests_executed = 0;
  std::array<std::uint64_t, kMaxMsgKind + 1> by_kind{};
};

// What the engine needs from its backend.
class EngineHost {
 public:
  virtual ~EngineHost() = default;
  virtual void send(Envelope env) = 0;
  virtual double now() const = 0;
  // Called after one or more completions finished.
  virtual void notify() = 0;
};

struct EngineConfig {
  int rank = 0;
  int size = 1;
  std::size_t fusion_bytes = std::size_t{2} << 20;
  bool topology_check = true;
};

struct CollectiveRequest {
  OpKind kind = OpKind::kAllreduce;
  std::string name;
  Tensor tensor;
  WeightScheme scheme;          // normalized; never static for neighbor ops
  int local_size = 1;
  WeightScheme machine_scheme;  // hierarchical only
  CompletionPtr done;
};

struct WindowWrite {
  bool accumulate = false;
  std::string name;
  Tensor tensor;
  std::optional<double> self_weight;
  std::optional<std::map<int, double>> dst_weights;
  bool require_mutex = false;
  CompletionPtr done;
};

struct WindowState {
  Tensor local;
  std::map<int, Tensor> buffers;  // one per in-neighbor at creation time
  std::set<int> in_neighbors;
  std::set<int> out_neighbors;
  // Mutex owned by this rank for this window.
  std::optional<int> holder;
  std::deque<int> waiters;
  // Shares of an in-progress mutex-protected write that are not sent yet.
  std::vector<std::pair<int, Tensor>> unsent;
};

// Per-rank protocol state machine. Every method runs on the rank's progress
// context (communication thread or simulator event); none is thread safe.
class Engine {
 public:
  Engine(EngineConfig cfg, EngineHost& host);
  ~Engine();

  int rank() const { return cfg_.rank; }
  int size() const { return cfg_.size; }

  void submit(CollectiveRequest req);
  void barrier(CompletionPtr done);

  // Application point-to-point messages (kind forced to kDirect).
  using EnvelopePredicate = std::function<bool(const Envelope&)>;
  void send_direct(Envelope env, CompletionPtr done);
  void recv_match(EnvelopePredicate pred, CompletionPtr done);

  void win_create(const std::string& name, const Tensor& tensor, bool zero_init,
                  const NeighborSets& neighbors, CompletionPtr done);
  void win_free(const std::string& name, CompletionPtr done);
  void win_write(WindowWrite req);
  void win_get(const std::string& name, const std::optional<Tensor>& publish,
               const std::optional<std::map<int, double>>& src_weights, CompletionPtr done);
  void win_update(const std::string& name, std::optional<double> self_weight,
                  const std::optional<std::map<int, double>>& src_weights, CompletionPtr done);
  void win_collect(const std::string& name, CompletionPtr done);
  void win_snapshot(const std::string& name, CompletionPtr done);
  void mutex_acquire(const std::string& name, int target, CompletionPtr done);
  void mutex_release(const std::string& name, int target, CompletionPtr done);

  void on_envelope(Envelope env);

  // Marks `c` done from a posted task and wakes its waiter.
  void complete(const CompletionPtr& c) { finish(c); }

  // Work that waits for the end of the current progress cycle (fusion window).
  bool wants_flush() const;
  void flush();

  const EngineCounters& counters() const { return counters_; }
  const std::map<std::string, WindowState>& windows() const { return windows_; }
  std::size_t pending_requests() const { return pending_.size(); }
  std::size_t active_executions() const { return execs_.size(); }

 private:
  struct Exec;
  friend struct Exec;

  void send(Envelope env);
  void finish(const CompletionPtr& c, ErrorCode code = ErrorCode::kOk, std::string msg = {});
  void fail(const CompletionPtr& c, const Error& e) { finish(c, e.code(), e.what()); }
  void deferred_error(const std::string& msg);

  void on_negotiate(Envelope env);
  void on_plan(Envelope env);
  void on_data(Envelope env);
  void on_barrier(const Envelope& env);
  void on_direct(Envelope env);
  void on_window_write(Envelope env);
  void on_get_request(const Envelope& env);
  void on_get_reply(Envelope env);
  void on_mutex_acquire(const Envelope& env);
  void on_mutex_release(const Envelope& env);
  void grant(const std::string& name, int from);

  WindowState& window(const std::string& name);
  void acquire(const std::string& name, int target, std::function<void()> on_grant);
  void release(const std::string& name, int target);
  void owner_release(const std::string& name, int releaser);

  EngineConfig cfg_;
  EngineHost& host_;
  EngineCounters counters_;
  std::unique_ptr<Coordinator> coordinator_;

  std::uint32_t next_req_ = 1;
  std::map<std::uint32_t, CollectiveRequest> pending_;
  std::map<std::uint32_t, std::unique_ptr<Exec>> execs_;
  std::map<std::pair<std::uint32_t, int>, std::deque<Envelope>> inbox_;

  std::uint32_t barrier_epoch_ = 0;
  std::map<std::uint32_t, int> barrier_arrivals_;
  std::map<std::uint32_t, CompletionPtr> barrier_waiters_;

  std::map<std::string, WindowState> windows_;
  std::map<std::pair<std::string, int>, std::deque<std::function<void()>>> grant_waiters_;
  std::set<std::pair<std::string, int>> held_;
  std::uint32_t next_get_ = 1;
  struct GetState {
    std::string name;
    std::map<int, double> weights;
    int outstanding = 0;
    CompletionPtr done;
  };
  std::map<std::uint32_t, GetState> gets_;

  std::deque<Envelope> mailbox_;
  std::deque<std::pair<EnvelopePredicate, CompletionPtr>> matchers_;

  std::optional<std::string> deferred_;
};

}  // namespace defog
