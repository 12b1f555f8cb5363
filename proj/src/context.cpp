#include "defog/context.hpp"

#include <exception>
#include <utility>

#include "defog/error.hpp"
#include "defog/topology.hpp"

namespace defog {

namespace {

Topology default_topology(int n) {
  if (n == 1) return Topology(1, {}, Matrix::identity(1), "full");
  return full_graph(n);
}

WeightScheme row_scheme(const Topology& t, int i) {
  WeightScheme s;
  const auto ns = t.neighbors(i);
  s.self_weight = t.weights()(i, i);
  s.src_weights = std::map<int, double>{};
  for (int j : ns.in_neighbors) (*s.src_weights)[j] = t.weights()(i, j);
  s.dst_weights = std::map<int, double>{};
  for (int k : ns.out_neighbors) (*s.dst_weights)[k] = 1.0;
  return s;
}

}  // namespace

Context::Context(std::unique_ptr<Runtime> runtime)
    : runtime_(std::move(runtime)),
      rank_(runtime_->rank()),
      size_(runtime_->size()),
      local_size_(runtime_->local_size()) {
  if (local_size_ < 1 || size_ % local_size_ != 0) {
    throw ConfigError("local size " + std::to_string(local_size_) + " does not divide world size " +
                      std::to_string(size_));
  }
  topology_ = default_topology(size_);
  machine_topology_ = default_topology(size_ / local_size_);
}

Context::~Context() {
  try {
    if (std::uncaught_exceptions() > 0) abort();
    else finalize();
  } catch (...) {
  }
}

void Context::abort() {
  if (finalized_) return;
  finalized_ = true;
  runtime_->abort();
}

void Context::finalize() {
  if (finalized_) return;
  finalized_ = true;
  runtime_->finalize();
}

bool Context::set_topology(const Topology& topology) {
  if (topology.size() != size_) {
    diagnostic_ = "topology has " + std::to_string(topology.size()) + " nodes but the world has " +
                  std::to_string(size_) + " ranks";
    return false;
  }
  topology_ = topology;
  static_scheme_.reset();
  diagnostic_.clear();
  return true;
}

bool Context::set_machine_topology(const Topology& topology) {
  if (topology.size() != machine_size()) {
    diagnostic_ = "machine topology has " + std::to_string(topology.size()) + " nodes but there are " +
                  std::to_string(machine_size()) + " machines";
    return false;
  }
  machine_topology_ = topology;
  diagnostic_.clear();
  return true;
}

WeightScheme Context::static_scheme() const {
  if (!static_scheme_) static_scheme_ = row_scheme(topology_, rank_);
  return *static_scheme_;
}

void Context::check_tensor(const Tensor& x, const char* op) const {
  if (x.empty()) throw ShapeError(std::string(op) + ": tensor is empty");
  if (!x.all_finite()) throw InvalidArgument(std::string(op) + ": tensor contains NaN or Inf");
}

WeightScheme Context::normalize(const std::optional<WeightScheme>& scheme) const {
  if (!scheme || scheme->config() == WeightScheme::Config::kStatic) return static_scheme();
  scheme->validate(size_, rank_);
  return *scheme;
}

WeightScheme Context::machine_scheme(const std::optional<WeightScheme>& scheme) const {
  if (!scheme || scheme->config() == WeightScheme::Config::kStatic) {
    return row_scheme(machine_topology_, machine_rank());
  }
  scheme->validate(machine_size(), machine_rank());
  return *scheme;
}

CompletionPtr Context::run(std::function<void(Engine&, CompletionPtr)> op) {
  auto c = std::make_shared<Completion>();
  runtime_->post([op = std::move(op), c](Engine& e) { op(e, c); });
  runtime_->wait(*c);
  c->rethrow_if_error();
  return c;
}

CommHandle Context::launch(CollectiveRequest req) {
  auto c = std::make_shared<Completion>();
  req.done = c;
  CommHandle h{next_handle_++, req.name};
  runtime_->post([r = std::move(req)](Engine& e) mutable { e.submit(std::move(r)); });
  handles_.emplace(h.id, std::move(c));
  return h;
}

Tensor Context::wait(const CommHandle& handle) {
  auto it = handles_.find(handle.id);
  if (it == handles_.end()) {
    throw UsageError("wait on unknown or already consumed handle " + std::to_string(handle.id) +
                     " ('" + handle.name + "')");
  }
  auto c = std::move(it->second);
  handles_.erase(it);
  runtime_->wait(*c);
  c->rethrow_if_error();
  return std::move(c->result);
}

bool Context::poll(const CommHandle& handle) const {
  auto it = handles_.find(handle.id);
  if (it == handles_.end()) throw UsageError("poll on unknown handle " + std::to_string(handle.id));
  return it->second->done.load(std::memory_order_acquire);
}

CommHandle Context::allreduce_nonblocking(const Tensor& x, const std::string& name) {
  check_tensor(x, "allreduce");
  CollectiveRequest req;
  req.kind = OpKind::kAllreduce;
  req.name = name;
  req.tensor = x;
  return launch(std::move(req));
}

CommHandle Context::neighbor_allreduce_nonblocking(const Tensor& x, const std::string& name,
                                                   const std::optional<WeightScheme>& scheme) {
  check_tensor(x, "neighbor_allreduce");
  CollectiveRequest req;
  req.kind = OpKind::kNeighbor;
  req.name = name;
  req.tensor = x;
  req.scheme = normalize(scheme);
  return launch(std::move(req));
}

CommHandle Context::hierarchical_neighbor_allreduce_nonblocking(
    const Tensor& x, const std::string& name, const std::optional<WeightScheme>& scheme) {
  check_tensor(x, "hierarchical_neighbor_allreduce");
  CollectiveRequest req;
  req.kind = OpKind::kHierarchical;
  req.name = name;
  req.tensor = x;
  req.local_size = local_size_;
  req.machine_scheme = machine_scheme(scheme);
  return launch(std::move(req));
}

Tensor Context::allreduce(const Tensor& x, const std::string& name) {
  return wait(allreduce_nonblocking(x, name));
}

Tensor Context::neighbor_allreduce(const Tensor& x, const std::string& name,
                                   const std::optional<WeightScheme>& scheme) {
  return wait(neighbor_allreduce_nonblocking(x, name, scheme));
}

Tensor Context::hierarchical_neighbor_allreduce(const Tensor& x, const std::string& name,
                                                const std::optional<WeightScheme>& scheme) {
  return wait(hierarchical_neighbor_allreduce_nonblocking(x, name, scheme));
}

std::vector<Tensor> Context::allgather(const Tensor& x, const std::string& name) {
  check_tensor(x, "allgather");
  CollectiveRequest req;
  req.kind = OpKind::kAllgather;
  req.name = name;
  req.tensor = x;
  auto c = std::make_shared<Completion>();
  req.done = c;
  runtime_->post([r = std::move(req)](Engine& e) mutable { e.submit(std::move(r)); });
  runtime_->wait(*c);
  c->rethrow_if_error();
  return std::move(c->gathered);
}

void Context::barrier() {
  run([](Engine& e, CompletionPtr c) { e.barrier(std::move(c)); });
}

void Context::send(int dst, std::uint32_t tag, const std::string& name, const Tensor& x) {
  if (dst < 0 || dst >= size_) throw InvalidArgument("send: destination rank " + std::to_string(dst) + " out of range");
  auto env = make_envelope(MsgKind::kDirect, rank_, dst, tag, name, x);
  run([env = std::move(env)](Engine& e, CompletionPtr c) mutable { e.send_direct(std::move(env), std::move(c)); });
}

Envelope Context::recv_match(std::function<bool(const Envelope&)> pred) {
  auto c = run([pred = std::move(pred)](Engine& e, CompletionPtr c) mutable {
    e.recv_match(std::move(pred), std::move(c));
  });
  return std::move(*c->envelope);
}

Envelope Context::recv(int src, std::uint32_t tag) {
  return recv_match([src, tag](const Envelope& e) {
    return static_cast<int>(e.src) == src && e.round_tag == tag;
  });
}

bool Context::win_create(const Tensor& x, const std::string& name, bool zero_init) {
  if (name.empty()) throw UsageError("window name must not be empty");
  if (x.empty()) throw ShapeError("win_create: tensor is empty");
  auto ns = topology_.neighbors(rank_);
  run([x, name, zero_init, ns](Engine& e, CompletionPtr c) {
    e.win_create(name, x, zero_init, ns, std::move(c));
  });
  barrier();
  return true;
}

bool Context::win_free(const std::string& name) {
  run([name](Engine& e, CompletionPtr c) { e.win_free(name, std::move(c)); });
  barrier();
  return true;
}

bool Context::window_write(bool accumulate, const Tensor& x, const std::string& name,
                           std::optional<double> self_weight,
                           const std::optional<std::map<int, double>>& dst_weights, bool require_mutex) {
  check_tensor(x, accumulate ? "win_accumulate" : "win_put");
  WindowWrite w;
  w.accumulate = accumulate;
  w.name = name;
  w.tensor = x;
  w.self_weight = self_weight;
  w.dst_weights = dst_weights;
  w.require_mutex = require_mutex;
  run([w = std::move(w)](Engine& e, CompletionPtr c) mutable {
    w.done = std::move(c);
    e.win_write(std::move(w));
  });
  return true;
}

bool Context::win_put(const Tensor& x, const std::string& name, std::optional<double> self_weight,
                      const std::optional<std::map<int, double>>& dst_weights, bool require_mutex) {
  return window_write(false, x, name, self_weight, dst_weights, require_mutex);
}

bool Context::win_accumulate(const Tensor& x, const std::string& name, std::optional<double> self_weight,
                             const std::optional<std::map<int, double>>& dst_weights, bool require_mutex) {
  return window_write(true, x, name, self_weight, dst_weights, require_mutex);
}

bool Context::win_get(const std::string& name, const std::optional<Tensor>& x,
                      const std::optional<std::map<int, double>>& src_weights) {
  if (x) check_tensor(*x, "win_get");
  run([name, x, src_weights](Engine& e, CompletionPtr c) { e.win_get(name, x, src_weights, std::move(c)); });
  return true;
}

Tensor Context::win_update(const std::string& name, std::optional<double> self_weight,
                           const std::optional<std::map<int, double>>& src_weights) {
  auto c = run([name, self_weight, src_weights](Engine& e, CompletionPtr c) {
    e.win_update(name, self_weight, src_weights, std::move(c));
  });
  return std::move(c->result);
}

Tensor Context::win_update_then_collect(const std::string& name) {
  auto c = run([name](Engine& e, CompletionPtr c) { e.win_collect(name, std::move(c)); });
  return std::move(c->result);
}

bool Context::mutex_acquire(const std::string& name, int target) {
  run([name, target](Engine& e, CompletionPtr c) { e.mutex_acquire(name, target, std::move(c)); });
  return true;
}

bool Context::mutex_release(const std::string& name, int target) {
  run([name, target](Engine& e, CompletionPtr c) { e.mutex_release(name, target, std::move(c)); });
  return true;
}

std::vector<Tensor> Context::win_snapshot(const std::string& name) {
  auto c = run([name](Engine& e, CompletionPtr c) { e.win_snapshot(name, std::move(c)); });
  std::vector<Tensor> out;
  out.push_back(std::move(c->result));
  for (auto& t : c->gathered) out.push_back(std::move(t));
  return out;
}

EngineCounters Context::counters() {
  auto out = std::make_shared<EngineCounters>();
  run([out](Engine& e, CompletionPtr c) {
    *out = e.counters();
    e.complete(c);
  });
  return *out;
}

}  // namespace defog
