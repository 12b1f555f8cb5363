#include "defog/engine.hpp"

#include <algorithm>
#include <climits>
#include <utility>

namespace defog {

namespace {

std::vector<double> scaled(double s, const std::vector<double>& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = s * x[i];
  return out;
}

void axpy(double a, const std::vector<double>& x, std::vector<double>& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

double weight_or_one(const std::optional<std::map<int, double>>& m, int r) {
  if (!m) return 1.0;
  auto it = m->find(r);
  return it == m->end() ? 1.0 : it->second;
}

int mod(int a, int n) { return ((a % n) + n) % n; }

}  // namespace

// One executing (possibly fused) collective batch.
struct Engine::Exec {
  Engine& eng;
  ExecutionPlan plan;
  std::vector<CollectiveRequest> items;
  std::vector<double> x;
  std::vector<std::pair<int, std::vector<double>>> got;  // arrival order
  bool finished = false;

  // ring state (allreduce / allgather)
  std::vector<std::vector<double>> contrib;
  int ring_received = 0;

  // hierarchical state
  int stage = 0;
  std::vector<double> machine_avg;

  Exec(Engine& e, ExecutionPlan p, std::vector<CollectiveRequest> reqs)
      : eng(e), plan(std::move(p)), items(std::move(reqs)) {
    std::size_t total = 0;
    for (const auto& it : items) total += it.tensor.size();
    x.reserve(total);
    for (const auto& it : items) x.insert(x.end(), it.tensor.values().begin(), it.tensor.values().end());
  }

  int rank() const { return eng.cfg_.rank; }
  int n() const { return eng.cfg_.size; }

  void send_data(int dst, std::vector<double> payload) {
    eng.send(make_envelope(MsgKind::kData, rank(), dst, plan.exec_id, items[0].name,
                           std::move(payload)));
  }

  bool has(int src) const {
    for (const auto& g : got)
      if (g.first == src) return true;
    return false;
  }
  std::vector<double> take(int src) {
    for (auto it = got.begin(); it != got.end(); ++it) {
      if (it->first != src) continue;
      auto v = std::move(it->second);
      got.erase(it);
      return v;
    }
    return {};
  }

  void complete(const std::vector<double>& result) {
    std::size_t off = 0;
    for (auto& it : items) {
      const std::size_t len = it.tensor.size();
      std::vector<double> part(result.begin() + off, result.begin() + off + len);
      off += len;
      it.done->result = Tensor(it.tensor.shape(), std::move(part));
      eng.finish(it.done);
    }
    finished = true;
  }

  void start() {
    switch (plan.kind) {
      case OpKind::kAllreduce:
      case OpKind::kAllgather:
        contrib.resize(n());
        contrib[rank()] = x;
        if (n() > 1) send_data((rank() + 1) % n(), x);
        break;
      case OpKind::kNeighbor: {
        const auto& scheme = items[0].scheme;
        auto sends = plan.sends;
        std::sort(sends.begin(), sends.end(), [&](int a, int b) {
          return mod(a - rank(), n()) < mod(b - rank(), n());
        });
        for (int dst : sends) {
          double s = weight_or_one(scheme.dst_weights, dst);
          send_data(dst, s == 1.0 ? x : scaled(s, x));
        }
        break;
      }
      case OpKind::kHierarchical: {
        const int leader = rank() / plan.local_size * plan.local_size;
        if (rank() != leader) send_data(leader, x);
        break;
      }
    }
  }

  void progress() {
    switch (plan.kind) {
      case OpKind::kAllreduce:
      case OpKind::kAllgather: progress_ring(); break;
      case OpKind::kNeighbor: progress_neighbor(); break;
      case OpKind::kHierarchical: progress_hierarchical(); break;
    }
  }

  // Ring allgather: at step s the tensor of rank (rank - 1 - s) arrives from
  // the predecessor and is forwarded to the successor until every rank has all n.
  void progress_ring() {
    const int prev = mod(rank() - 1, n());
    const int next = (rank() + 1) % n();
    while (has(prev) && ring_received < n() - 1) {
      auto v = take(prev);
      const int owner = mod(rank() - 1 - ring_received, n());
      ++ring_received;
      if (ring_received < n() - 1) send_data(next, v);
      contrib[owner] = std::move(v);
    }
    if (ring_received < n() - 1) return;
    if (plan.kind == OpKind::kAllgather) {
      auto& it = items[0];
      for (int r = 0; r < n(); ++r) it.done->gathered.emplace_back(it.tensor.shape(), std::move(contrib[r]));
      eng.finish(it.done);
      finished = true;
      return;
    }
    std::vector<double> sum = contrib[0];
    for (int r = 1; r < n(); ++r)
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += contrib[r][i];
    const double nn = n();
    for (auto& v : sum) v /= nn;
    complete(sum);
  }

  void progress_neighbor() {
    for (int src : plan.recvs)
      if (!has(src)) return;
    const auto& scheme = items[0].scheme;
    std::vector<double> result = scaled(scheme.self_weight.value_or(1.0), x);
    auto recvs = plan.recvs;
    std::sort(recvs.begin(), recvs.end());
    for (int src : recvs) axpy(weight_or_one(scheme.src_weights, src), take(src), result);
    complete(result);
  }

  void progress_hierarchical() {
    const int L = plan.local_size;
    const int leader = rank() / L * L;
    if (rank() != leader) {
      if (has(leader)) complete(take(leader));
      return;
    }
    if (stage == 0) {
      for (int l = 1; l < L; ++l)
        if (!has(leader + l)) return;
      machine_avg = x;
      for (int l = 1; l < L; ++l) {
        auto v = take(leader + l);
        for (std::size_t i = 0; i < v.size(); ++i) machine_avg[i] += v[i];
      }
      const double ll = L;
      for (auto& v : machine_avg) v /= ll;
      const int machines = n() / L;
      const int m = rank() / L;
      const auto& ms = items[0].machine_scheme;
      auto sends = plan.sends;
      std::sort(sends.begin(), sends.end(), [&](int a, int b) {
        return mod(a - m, machines) < mod(b - m, machines);
      });
      for (int dm : sends) {
        double s = weight_or_one(ms.dst_weights, dm);
        send_data(dm * L, s == 1.0 ? machine_avg : scaled(s, machine_avg));
      }
      stage = 1;
    }
    if (stage == 1) {
      for (int sm : plan.recvs)
        if (!has(sm * L)) return;
      const auto& ms = items[0].machine_scheme;
      std::vector<double> result = scaled(ms.self_weight.value_or(1.0), machine_avg);
      auto recvs = plan.recvs;
      std::sort(recvs.begin(), recvs.end());
      for (int sm : recvs) axpy(weight_or_one(ms.src_weights, sm), take(sm * L), result);
      for (int l = 1; l < L; ++l) send_data(leader + l, result);
      complete(result);
    }
  }
};

Engine::Engine(EngineConfig cfg, EngineHost& host) : cfg_(cfg), host_(host) {
  if (cfg_.size < 1 || cfg_.rank < 0 || cfg_.rank >= cfg_.size) {
    throw InvalidArgument("invalid rank " + std::to_string(cfg_.rank) + " for size " +
                          std::to_string(cfg_.size));
  }
  if (cfg_.rank == 0) {
    coordinator_ = std::make_unique<Coordinator>(cfg_.size, cfg_.fusion_bytes, cfg_.topology_check);
  }
}

Engine::~Engine() = default;

void Engine::send(Envelope env) {
  if (static_cast<int>(env.dst) != cfg_.rank) {
    ++counters_.messages_sent;
    ++counters_.by_kind[static_cast<std::size_t>(env.kind)];
    if (carries_tensor(env.kind)) {
      ++counters_.tensor_messages;
      counters_.tensor_bytes += env.payload_bytes();
    }
    if (env.kind == MsgKind::kData) {
      ++counters_.data_messages;
      counters_.data_bytes += env.payload_bytes();
    }
  }
  host_.send(std::move(env));
}

void Engine::finish(const CompletionPtr& c, ErrorCode code, std::string msg) {
  if (code == ErrorCode::kOk && deferred_) {
    code = ErrorCode::kTransport;
    msg = *deferred_;
    deferred_.reset();
  }
  c->code = code;
  c->message = std::move(msg);
  c->done.store(true, std::memory_order_release);
  host_.notify();
}

void Engine::deferred_error(const std::string& msg) {
  if (!deferred_) deferred_ = "rank " + std::to_string(cfg_.rank) + ": " + msg;
}

// ---------------------------------------------------------------- collectives

void Engine::submit(CollectiveRequest req) {
  const std::uint32_t id = next_req_++;
  NegotiationRequest nr;
  nr.req_id = id;
  nr.kind = req.kind;
  nr.shape = req.tensor.shape();
  nr.local_size = req.local_size;
  nr.scheme = req.scheme;
  nr.machine_scheme = req.machine_scheme;
  send(make_envelope(MsgKind::kNegotiate, cfg_.rank, 0, id, req.name, encode_request(nr)));
  pending_.emplace(id, std::move(req));
}

void Engine::on_negotiate(Envelope env) {
  if (!coordinator_) {
    deferred_error("negotiation message received by a non-coordinator rank");
    return;
  }
  coordinator_->submit(static_cast<int>(env.src), env.name, decode_request(env.round_tag, env.payload));
}

bool Engine::wants_flush() const { return coordinator_ && coordinator_->has_ready(); }

void Engine::flush() {
  if (!coordinator_ || !coordinator_->has_ready()) return;
  coordinator_->flush([this](int r, const ExecutionPlan& plan) {
    send(make_envelope(MsgKind::kNegotiateReply, cfg_.rank, r, plan.exec_id, plan.message,
                       encode_plan(plan)));
  });
}

void Engine::on_plan(Envelope env) {
  ExecutionPlan plan = decode_plan(env.round_tag, env.name, env.payload);
  if (plan.status != ErrorCode::kOk) {
    for (auto id : plan.req_ids) {
      auto it = pending_.find(id);
      if (it == pending_.end()) continue;
      finish(it->second.done, plan.status, plan.message);
      pending_.erase(it);
    }
    return;
  }
  std::vector<CollectiveRequest> items;
  for (auto id : plan.req_ids) {
    auto it = pending_.find(id);
    if (it == pending_.end()) {
      deferred_error("execution plan references unknown request " + std::to_string(id));
      return;
    }
    items.push_back(std::move(it->second));
    pending_.erase(it);
  }
  ++counters_.batches_executed;
  counters_.requests_executed += items.size();
  const std::uint32_t id = plan.exec_id;
  auto exec = std::make_unique<Exec>(*this, std::move(plan), std::move(items));
  auto lo = inbox_.lower_bound({id, INT_MIN});
  while (lo != inbox_.end() && lo->first.first == id) {
    for (auto& e : lo->second) exec->got.emplace_back(lo->first.second, std::move(e.payload));
    lo = inbox_.erase(lo);
  }
  exec->start();
  exec->progress();
  if (!exec->finished) execs_.emplace(id, std::move(exec));
}

void Engine::on_data(Envelope env) {
  auto it = execs_.find(env.round_tag);
  if (it == execs_.end()) {
    inbox_[{env.round_tag, static_cast<int>(env.src)}].push_back(std::move(env));
    return;
  }
  it->second->got.emplace_back(static_cast<int>(env.src), std::move(env.payload));
  it->second->progress();
  if (it->second->finished) execs_.erase(it);
}

void Engine::barrier(CompletionPtr done) {
  if (cfg_.size == 1) {
    finish(done);
    return;
  }
  const std::uint32_t epoch = ++barrier_epoch_;
  for (int r = 0; r < cfg_.size; ++r)
    if (r != cfg_.rank) send(make_envelope(MsgKind::kBarrier, cfg_.rank, r, epoch, "", std::vector<double>{}));
  if (barrier_arrivals_[epoch] == cfg_.size - 1) {
    barrier_arrivals_.erase(epoch);
    finish(done);
  } else {
    barrier_waiters_[epoch] = std::move(done);
  }
}

void Engine::on_barrier(const Envelope& env) {
  const std::uint32_t epoch = env.round_tag;
  if (++barrier_arrivals_[epoch] < cfg_.size - 1) return;
  auto it = barrier_waiters_.find(epoch);
  if (it == barrier_waiters_.end()) return;
  barrier_arrivals_.erase(epoch);
  auto c = std::move(it->second);
  barrier_waiters_.erase(it);
  finish(c);
}

// --------------------------------------------------------- point to point

void Engine::send_direct(Envelope env, CompletionPtr done) {
  if (static_cast<int>(env.dst) < 0 || static_cast<int>(env.dst) >= cfg_.size) {
    finish(done, ErrorCode::kInvalidArgument, "destination rank " + std::to_string(env.dst) + " out of range");
    return;
  }
  env.kind = MsgKind::kDirect;
  env.src = static_cast<std::uint32_t>(cfg_.rank);
  if (env.dims.empty()) env.dims = {static_cast<std::int64_t>(env.payload.size())};
  send(std::move(env));
  finish(done);
}

void Engine::recv_match(EnvelopePredicate pred, CompletionPtr done) {
  for (auto it = mailbox_.begin(); it != mailbox_.end(); ++it) {
    if (!pred(*it)) continue;
    done->envelope = std::move(*it);
    mailbox_.erase(it);
    finish(done);
    return;
  }
  matchers_.emplace_back(std::move(pred), std::move(done));
}

void Engine::on_direct(Envelope env) {
  for (auto it = matchers_.begin(); it != matchers_.end(); ++it) {
    if (!it->first(env)) continue;
    auto done = std::move(it->second);
    matchers_.erase(it);
    done->envelope = std::move(env);
    finish(done);
    return;
  }
  mailbox_.push_back(std::move(env));
}

// -------------------------------------------------------------------- windows

WindowState& Engine::window(const std::string& name) {
  auto it = windows_.find(name);
  if (it == windows_.end()) throw UsageError("unknown window '" + name + "'");
  return it->second;
}

void Engine::win_create(const std::string& name, const Tensor& tensor, bool zero_init,
                        const NeighborSets& neighbors, CompletionPtr done) {
  try {
    if (windows_.count(name)) throw UsageError("window '" + name + "' already exists");
    if (tensor.empty()) throw ShapeError("window '" + name + "' needs a non-empty tensor");
    WindowState ws;
    ws.local = tensor;
    ws.in_neighbors = neighbors.in_neighbors;
    ws.out_neighbors = neighbors.out_neighbors;
    for (int j : ws.in_neighbors) ws.buffers.emplace(j, zero_init ? Tensor(tensor.shape(), 0.0) : tensor);
    windows_.emplace(name, std::move(ws));
    finish(done);
  } catch (const Error& e) {
    fail(done, e);
  }
}

void Engine::win_free(const std::string& name, CompletionPtr done) {
  try {
    window(name);
    windows_.erase(name);
    finish(done);
  } catch (const Error& e) {
    fail(done, e);
  }
}

void Engine::win_write(WindowWrite req) {
  try {
    auto& ws = window(req.name);
    if (req.tensor.shape() != ws.local.shape()) {
      throw ShapeError("window '" + req.name + "' holds " + shape_to_string(ws.local.shape()) +
                       " but got " + shape_to_string(req.tensor.shape()));
    }
    std::map<int, double> dst;
    if (req.dst_weights) {
      dst = *req.dst_weights;
    } else {
      for (int j : ws.out_neighbors) dst[j] = 1.0;
    }
    for (const auto& [j, w] : dst) {
      if (!ws.out_neighbors.count(j)) {
        throw UsageError("rank " + std::to_string(j) + " is not an out-neighbor of rank " +
                         std::to_string(cfg_.rank) + " for window '" + req.name + "'");
      }
    }
    if (dst.empty()) {
      finish(req.done);
      return;
    }
    const auto& x = req.tensor.values();
    ws.local = req.self_weight ? Tensor(req.tensor.shape(), scaled(*req.self_weight, x)) : req.tensor;
    const MsgKind kind = req.accumulate ? MsgKind::kWindowAccumulate : MsgKind::kWindowPut;
    if (!req.require_mutex) {
      for (const auto& [j, s] : dst) {
        auto env = make_envelope(kind, cfg_.rank, j, 0, req.name, scaled(s, x));
        env.dims = req.tensor.shape();
        send(std::move(env));
      }
      finish(req.done);
      return;
    }
    for (const auto& [j, s] : dst) ws.unsent.emplace_back(j, Tensor(req.tensor.shape(), scaled(s, x)));
    auto remaining = std::make_shared<int>(static_cast<int>(dst.size()));
    for (const auto& [j, s] : dst) {
      const int target = j;
      acquire(req.name, target, [this, name = req.name, target, kind, remaining, done = req.done] {
        auto it = windows_.find(name);
        if (it != windows_.end()) {
          auto& pend = it->second.unsent;
          auto p = std::find_if(pend.begin(), pend.end(), [&](const auto& e) { return e.first == target; });
          if (p != pend.end()) {
            send(make_envelope(kind, cfg_.rank, target, 0, name, p->second));
            pend.erase(p);
          }
        }
        release(name, target);
        if (--*remaining == 0) finish(done);
      });
    }
  } catch (const Error& e) {
    fail(req.done, e);
  }
}

void Engine::on_window_write(Envelope env) {
  auto it = windows_.find(env.name);
  if (it == windows_.end()) {
    deferred_error("write to unknown window '" + env.name + "' from rank " + std::to_string(env.src));
    return;
  }
  auto buf = it->second.buffers.find(static_cast<int>(env.src));
  if (buf == it->second.buffers.end() || buf->second.size() != env.payload.size()) {
    deferred_error("window '" + env.name + "' has no matching buffer for rank " +
                   std::to_string(env.src));
    return;
  }
  auto data = buf->second.data();
  if (env.kind == MsgKind::kWindowPut) {
    std::copy(env.payload.begin(), env.payload.end(), data.begin());
  } else {
    for (std::size_t i = 0; i < data.size(); ++i) data[i] += env.payload[i];
  }
}

void Engine::win_get(const std::string& name, const std::optional<Tensor>& publish,
                     const std::optional<std::map<int, double>>& src_weights, CompletionPtr done) {
  try {
    auto& ws = window(name);
    if (publish) {
      if (publish->shape() != ws.local.shape()) throw ShapeError("window '" + name + "' shape mismatch");
      ws.local = *publish;
    }
    std::map<int, double> src;
    if (src_weights) {
      src = *src_weights;
    } else {
      for (int j : ws.in_neighbors) src[j] = 1.0;
    }
    for (const auto& [j, w] : src) {
      if (!ws.in_neighbors.count(j)) {
        throw UsageError("rank " + std::to_string(j) + " is not an in-neighbor of rank " +
                         std::to_string(cfg_.rank) + " for window '" + name + "'");
      }
    }
    if (src.empty()) {
      finish(done);
      return;
    }
    const std::uint32_t id = next_get_++;
    GetState gs{name, src, static_cast<int>(src.size()), std::move(done)};
    gets_.emplace(id, std::move(gs));
    for (const auto& [j, w] : src) send(make_envelope(MsgKind::kWindowGetRequest, cfg_.rank, j, id, name, std::vector<double>{}));
  } catch (const Error& e) {
    fail(done, e);
  }
}

void Engine::on_get_request(const Envelope& env) {
  auto it = windows_.find(env.name);
  if (it == windows_.end()) {
    deferred_error("get on unknown window '" + env.name + "' from rank " + std::to_string(env.src));
    return;
  }
  send(make_envelope(MsgKind::kWindowGetReply, cfg_.rank, static_cast<int>(env.src), env.round_tag,
                     env.name, it->second.local));
}

void Engine::on_get_reply(Envelope env) {
  auto it = gets_.find(env.round_tag);
  if (it == gets_.end()) return;
  auto& gs = it->second;
  auto w = windows_.find(gs.name);
  if (w != windows_.end()) {
    auto buf = w->second.buffers.find(static_cast<int>(env.src));
    if (buf != w->second.buffers.end() && buf->second.size() == env.payload.size()) {
      const double r = gs.weights[static_cast<int>(env.src)];
      auto data = buf->second.data();
      for (std::size_t i = 0; i < data.size(); ++i) data[i] = r * env.payload[i];
    }
  }
  if (--gs.outstanding == 0) {
    auto done = std::move(gs.done);
    gets_.erase(it);
    finish(done);
  }
}

void Engine::win_update(const std::string& name, std::optional<double> self_weight,
                        const std::optional<std::map<int, double>>& src_weights, CompletionPtr done) {
  try {
    const auto& ws = window(name);
    const double uniform = 1.0 / (static_cast<double>(ws.in_neighbors.size()) + 1.0);
    std::map<int, double> src;
    if (src_weights) {
      src = *src_weights;
    } else {
      for (int j : ws.in_neighbors) src[j] = uniform;
    }
    for (const auto& [j, w] : src)
      if (!ws.buffers.count(j))
        throw UsageError("rank " + std::to_string(j) + " has no buffer in window '" + name + "'");
    std::vector<double> result = scaled(self_weight.value_or(uniform), ws.local.values());
    for (const auto& [j, w] : src) axpy(w, ws.buffers.at(j).values(), result);
    done->result = Tensor(ws.local.shape(), std::move(result));
    finish(done);
  } catch (const Error& e) {
    fail(done, e);
  }
}

void Engine::win_collect(const std::string& name, CompletionPtr done) {
  try {
    window(name);
    acquire(name, cfg_.rank, [this, name, done] {
      auto it = windows_.find(name);
      if (it == windows_.end()) {
        finish(done, ErrorCode::kUsage, "window '" + name + "' was freed during collect");
        return;
      }
      auto& ws = it->second;
      std::vector<double> sum = ws.local.values();
      for (auto& [j, buf] : ws.buffers) {
        axpy(1.0, buf.values(), sum);
        std::fill(buf.data().begin(), buf.data().end(), 0.0);
      }
      ws.local = Tensor(ws.local.shape(), std::move(sum));
      done->result = ws.local;
      release(name, cfg_.rank);
      finish(done);
    });
  } catch (const Error& e) {
    fail(done, e);
  }
}

void Engine::win_snapshot(const std::string& name, CompletionPtr done) {
  try {
    const auto& ws = window(name);
    done->result = ws.local;
    for (const auto& [j, buf] : ws.buffers) done->gathered.push_back(buf);
    finish(done);
  } catch (const Error& e) {
    fail(done, e);
  }
}

// ---------------------------------------------------------------------- mutex

void Engine::acquire(const std::string& name, int target, std::function<void()> on_grant) {
  grant_waiters_[{name, target}].push_back(std::move(on_grant));
  if (target == cfg_.rank) {
    auto& ws = window(name);
    if (!ws.holder) {
      ws.holder = cfg_.rank;
      grant(name, cfg_.rank);
    } else {
      ws.waiters.push_back(cfg_.rank);
    }
  } else {
    send(make_envelope(MsgKind::kMutexAcquire, cfg_.rank, target, 0, name, std::vector<double>{}));
  }
}

void Engine::release(const std::string& name, int target) {
  if (target == cfg_.rank) {
    owner_release(name, cfg_.rank);
  } else {
    send(make_envelope(MsgKind::kMutexRelease, cfg_.rank, target, 0, name, std::vector<double>{}));
  }
}

void Engine::grant(const std::string& name, int from) {
  auto it = grant_waiters_.find({name, from});
  if (it == grant_waiters_.end() || it->second.empty()) {
    deferred_error("unexpected mutex grant for window '" + name + "' from rank " + std::to_string(from));
    return;
  }
  auto cb = std::move(it->second.front());
  it->second.pop_front();
  if (it->second.empty()) grant_waiters_.erase(it);
  cb();
}

void Engine::on_mutex_acquire(const Envelope& env) {
  auto it = windows_.find(env.name);
  const int requester = static_cast<int>(env.src);
  if (it == windows_.end()) {
    deferred_error("mutex request on unknown window '" + env.name + "' from rank " +
                   std::to_string(requester));
    return;
  }
  auto& ws = it->second;
  if (!ws.holder) {
    ws.holder = requester;
    send(make_envelope(MsgKind::kMutexGrant, cfg_.rank, requester, 0, env.name, std::vector<double>{}));
  } else {
    ws.waiters.push_back(requester);
  }
}

void Engine::owner_release(const std::string& name, int releaser) {
  auto it = windows_.find(name);
  if (it == windows_.end() || it->second.holder != releaser) {
    const std::string msg = "rank " + std::to_string(releaser) + " released the mutex of window '" +
                            name + "' without holding it";
    if (releaser == cfg_.rank) throw UsageError(msg);
    deferred_error(msg);
    return;
  }
  auto& ws = it->second;
  ws.holder.reset();
  if (ws.waiters.empty()) return;
  const int next = ws.waiters.front();
  ws.waiters.pop_front();
  ws.holder = next;
  if (next == cfg_.rank) {
    grant(name, cfg_.rank);
  } else {
    send(make_envelope(MsgKind::kMutexGrant, cfg_.rank, next, 0, name, std::vector<double>{}));
  }
}

void Engine::on_mutex_release(const Envelope& env) { owner_release(env.name, static_cast<int>(env.src)); }

void Engine::mutex_acquire(const std::string& name, int target, CompletionPtr done) {
  try {
    window(name);
    if (target < 0 || target >= cfg_.size) throw UsageError("mutex target out of range");
    acquire(name, target, [this, name, target, done] {
      held_.insert({name, target});
      finish(done);
    });
  } catch (const Error& e) {
    fail(done, e);
  }
}

void Engine::mutex_release(const std::string& name, int target, CompletionPtr done) {
  try {
    if (!held_.count({name, target})) {
      throw UsageError("mutex of window '" + name + "' on rank " + std::to_string(target) +
                       " is not held by rank " + std::to_string(cfg_.rank));
    }
    held_.erase({name, target});
    release(name, target);
    finish(done);
  } catch (const Error& e) {
    fail(done, e);
  }
}

// ------------------------------------------------------------------- dispatch

void Engine::on_envelope(Envelope env) {
  switch (env.kind) {
    case MsgKind::kNegotiate: on_negotiate(std::move(env)); break;
    case MsgKind::kNegotiateReply: on_plan(std::move(env)); break;
    case MsgKind::kData: on_data(std::move(env)); break;
    case MsgKind::kBarrier: on_barrier(env); break;
    case MsgKind::kWindowPut:
    case MsgKind::kWindowAccumulate: on_window_write(std::move(env)); break;
    case MsgKind::kWindowGetRequest: on_get_request(env); break;
    case MsgKind::kWindowGetReply: on_get_reply(std::move(env)); break;
    case MsgKind::kMutexAcquire: on_mutex_acquire(env); break;
    case MsgKind::kMutexRelease: on_mutex_release(env); break;
    case MsgKind::kMutexGrant: grant(env.name, static_cast<int>(env.src)); break;
    case MsgKind::kDirect: on_direct(std::move(env)); break;
    case MsgKind::kShutdown: break;
  }
}

}  // namespace defog
