#pragma once

#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include "defog/engine.hpp"
#include "defog/graph.hpp"

namespace defog {

class Context;

struct SimConfig {
  double latency = 1e-4;          // seconds per message, every edge
  double control_latency = -1.0;  // control kinds; negative means `latency`
  double bandwidth = 0.0;         // bytes per second for tensor payloads; 0 = unlimited
  double jitter = 0.0;            // extra uniform [0, jitter) delay per message
  std::map<Edge, double> edge_latency;  // per (src, dst) overrides of `latency`
  std::uint64_t seed = 1;
  std::size_t fusion_bytes = std::size_t{2} << 20;
  bool topology_check = true;
  int local_size = 0;             // processes per machine; 0 = single machine
  std::map<int, int> rank_local_size;  // per-rank overrides (misconfiguration tests)
  bool record_trace = false;
};

struct TraceEntry {
  double time = 0;
  MsgKind kind = MsgKind::kData;
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  std::uint32_t tag = 0;
  std::string name;
  std::uint64_t payload_hash = 0;
  bool operator==(const TraceEntry&) const = default;
};

// Deterministic discrete-event fabric. Application ranks are real threads but
// exactly one of them runs at a time; the running thread drives the event
// loop when it blocks and hands control directly to the next resumed rank.
// Events at equal virtual time run in (phase, insertion) order, so a fixed
// configuration always produces the same message trace.
class SimWorld {
 public:
  SimWorld(int size, SimConfig config = {});
  ~SimWorld();
  SimWorld(const SimWorld&) = delete;
  SimWorld& operator=(const SimWorld&) = delete;

  // Runs fn once per rank to completion. Rethrows the first error raised by a
  // rank (in virtual-time order). Each SimWorld runs once.
  void run(const std::function<void(Context&)>& fn);

  int size() const { return size_; }
  const SimConfig& config() const { return cfg_; }
  double now() const { return now_; }
  std::uint64_t events_processed() const { return events_; }
  int deadlocks() const { return deadlocks_; }

  // Inspection, valid inside the observer and after run().
  const Engine& engine(int rank) const { return *engines_[rank]; }
  std::vector<const Envelope*> in_flight() const;
  const std::vector<TraceEntry>& trace() const { return trace_; }

  // Called after every fabric event (delivery, task, flush).
  void set_observer(std::function<void(const SimWorld&)> fn) { observer_ = std::move(fn); }

  // Per-rank exceptions from the last run (null when the rank finished cleanly).
  const std::vector<std::exception_ptr>& rank_errors() const { return errors_; }

 private:
  friend class SimRuntime;
  struct Host;
  enum class EventType { kDeliver, kTask, kFlush, kResume };
  struct Event {
    double time;
    int phase;
    std::uint64_t seq;
    int rank;
    EventType type;
    Envelope env;
    std::function<void(Engine&)> task;
  };
  // Heap entries point into a pool so the heap only moves small keys.
  struct Key {
    double time;
    int phase;
    std::uint64_t seq;
    std::uint32_t slot;
  };
  struct EventAfter {
    bool operator()(const Key& a, const Key& b) const {
      if (a.time != b.time) return a.time > b.time;
      if (a.phase != b.phase) return a.phase > b.phase;
      return a.seq > b.seq;
    }
  };
  enum class SlotState { kBlocked, kRunning, kDone };
  struct Slot {
    std::binary_semaphore sem{0};
    SlotState state = SlotState::kBlocked;
    std::function<bool()> pred;
    bool resume_pending = false;
    bool cancelled = false;
  };

  void push(Event ev);
  void schedule_resume(int rank, double at);
  void deliver(Envelope env);
  void post(int rank, std::function<void(Engine&)> task);
  void notify(int rank);
  void after_event(int rank);
  void block(int rank, std::function<bool()> pred);
  void compute(int rank, double seconds);
  void drive(int self);
  void record_error(int rank, std::exception_ptr e);
  double edge_latency(int src, int dst, MsgKind kind) const;

  int size_;
  SimConfig cfg_;
  double now_ = 0.0;
  std::uint64_t seq_ = 0;
  std::uint64_t events_ = 0;
  int deadlocks_ = 0;
  bool ran_ = false;
  std::vector<Key> heap_;
  std::vector<Event> pool_;
  std::vector<std::uint32_t> free_slots_;
  std::vector<std::unique_ptr<Host>> hosts_;
  std::vector<std::unique_ptr<Engine>> engines_;
  std::vector<std::unique_ptr<Slot>> slots_;
  std::vector<char> flush_scheduled_;
  std::vector<double> last_delivery_;
  std::mt19937_64 rng_;
  std::binary_semaphore main_sem_{0};
  std::function<void(const SimWorld&)> observer_;
  std::vector<TraceEntry> trace_;
  std::vector<std::exception_ptr> errors_;
  std::vector<std::pair<double, int>> error_order_;
  std::exception_ptr fabric_error_;
};

}  // namespace defog
