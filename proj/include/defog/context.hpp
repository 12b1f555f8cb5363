#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "defog/engine.hpp"
#include "defog/graph.hpp"
#include "defog/runtime.hpp"
#include "defog/tensor.hpp"

namespace defog {

// Ticket for an in-flight nonblocking collective. Valid for exactly one wait.
struct CommHandle {
  std::uint64_t id = 0;
  std::string name;
};

// One rank's view of the runtime. Used by a single application thread.
class Context {
 public:
  explicit Context(std::unique_ptr<Runtime> runtime);
  ~Context();
  Context(const Context&) = delete;
  Context& operator=(const Context&) = delete;

  int rank() const { return rank_; }
  int size() const { return size_; }
  int local_size() const { return local_size_; }
  int local_rank() const { return rank_ % local_size_; }
  int machine_rank() const { return rank_ / local_size_; }
  int machine_size() const { return size_ / local_size_; }
  const char* backend() const { return runtime_->backend(); }

  // ---- topology state
  // Returns false (and leaves the state unchanged) on a size mismatch.
  bool set_topology(const Topology& topology);
  const Topology& topology() const { return topology_; }
  bool set_machine_topology(const Topology& topology);
  const Topology& machine_topology() const { return machine_topology_; }
  // This rank's row of the global W as a pull/push scheme.
  WeightScheme static_scheme() const;
  std::string last_diagnostic() const { return diagnostic_; }

  // ---- synchronous collectives
  Tensor allreduce(const Tensor& x, const std::string& name);
  Tensor neighbor_allreduce(const Tensor& x, const std::string& name,
                            const std::optional<WeightScheme>& scheme = std::nullopt);
  Tensor hierarchical_neighbor_allreduce(const Tensor& x, const std::string& name,
                                         const std::optional<WeightScheme>& machine_scheme = std::nullopt);
  std::vector<Tensor> allgather(const Tensor& x, const std::string& name);
  void barrier();

  // ---- nonblocking forms; the input is snapshotted at call time
  CommHandle allreduce_nonblocking(const Tensor& x, const std::string& name);
  CommHandle neighbor_allreduce_nonblocking(const Tensor& x, const std::string& name,
                                            const std::optional<WeightScheme>& scheme = std::nullopt);
  CommHandle hierarchical_neighbor_allreduce_nonblocking(
      const Tensor& x, const std::string& name,
      const std::optional<WeightScheme>& machine_scheme = std::nullopt);
  Tensor wait(const CommHandle& handle);
  bool poll(const CommHandle& handle) const;

  // ---- point to point (buffered, per-pair FIFO)
  void send(int dst, std::uint32_t tag, const std::string& name, const Tensor& x);
  // First buffered message (arrival order) that satisfies `pred`; blocks until one arrives.
  Envelope recv_match(std::function<bool(const Envelope&)> pred);
  Envelope recv(int src, std::uint32_t tag);

  // ---- windows
  bool win_create(const Tensor& x, const std::string& name, bool zero_init = false);
  bool win_free(const std::string& name);
  bool win_put(const Tensor& x, const std::string& name,
               std::optional<double> self_weight = std::nullopt,
               const std::optional<std::map<int, double>>& dst_weights = std::nullopt,
               bool require_mutex = false);
  bool win_accumulate(const Tensor& x, const std::string& name,
                      std::optional<double> self_weight = std::nullopt,
                      const std::optional<std::map<int, double>>& dst_weights = std::nullopt,
                      bool require_mutex = false);
  bool win_get(const std::string& name, const std::optional<Tensor>& x = std::nullopt,
               const std::optional<std::map<int, double>>& src_weights = std::nullopt);
  Tensor win_update(const std::string& name, std::optional<double> self_weight = std::nullopt,
                    const std::optional<std::map<int, double>>& src_weights = std::nullopt);
  Tensor win_update_then_collect(const std::string& name);
  bool mutex_acquire(const std::string& name, int target);
  bool mutex_release(const std::string& name, int target);
  // Local tensor followed by the per-in-neighbor buffers in ascending rank order.
  std::vector<Tensor> win_snapshot(const std::string& name);

  // ---- instrumentation and time
  EngineCounters counters();
  double now() const { return runtime_->now(); }
  void compute(double seconds) { runtime_->compute(seconds); }

  // Collective shutdown (barrier then teardown on tcp). Called by the
  // destructor unless an exception is propagating, in which case abort() is.
  void finalize();
  // Drops all connections without synchronizing; peers observe a lost rank.
  void abort();

 private:
  CompletionPtr run(std::function<void(Engine&, CompletionPtr)> op);
  CommHandle launch(CollectiveRequest req);
  void check_tensor(const Tensor& x, const char* op) const;
  WeightScheme normalize(const std::optional<WeightScheme>& scheme) const;
  WeightScheme machine_scheme(const std::optional<WeightScheme>& scheme) const;
  bool window_write(bool accumulate, const Tensor& x, const std::string& name,
                    std::optional<double> self_weight,
                    const std::optional<std::map<int, double>>& dst_weights, bool require_mutex);

  std::unique_ptr<Runtime> runtime_;
  int rank_;
  int size_;
  int local_size_;
  Topology topology_;
  mutable std::optional<WeightScheme> static_scheme_;
  Topology machine_topology_;
  std::string diagnostic_;
  std::uint64_t next_handle_ = 1;
  std::map<std::uint64_t, CompletionPtr> handles_;
  bool finalized_ = false;
};

}  // namespace defog
