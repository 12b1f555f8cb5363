#include "defog/sim.hpp"

#include <algorithm>
#include <cstring>

#include "defog/context.hpp"
#include "defog/runtime.hpp"

namespace defog {

namespace {

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

struct SimWorld::Host : EngineHost {
  SimWorld& world;
  int rank;
  Host(SimWorld& w, int r) : world(w), rank(r) {}
  void send(Envelope env) override { world.deliver(std::move(env)); }
  double now() const override { return world.now_; }
  void notify() override { world.notify(rank); }
};

class SimRuntime final : public Runtime {
 public:
  SimRuntime(SimWorld& w, int rank) : w_(w), rank_(rank) {}
  int rank() const override { return rank_; }
  int size() const override { return w_.size_; }
  int local_size() const override {
    auto it = w_.cfg_.rank_local_size.find(rank_);
    if (it != w_.cfg_.rank_local_size.end()) return it->second;
    return w_.cfg_.local_size > 0 ? w_.cfg_.local_size : w_.size_;
  }
  const char* backend() const override { return "sim"; }
  void post(std::function<void(Engine&)> task) override { w_.post(rank_, std::move(task)); }
  void wait(const Completion& c) override {
    if (c.done.load(std::memory_order_acquire)) return;
    w_.block(rank_, [&c] { return c.done.load(std::memory_order_acquire); });
  }
  double now() const override { return w_.now_; }
  void compute(double seconds) override { w_.compute(rank_, seconds); }

 private:
  SimWorld& w_;
  int rank_;
};

SimWorld::SimWorld(int size, SimConfig config) : size_(size), cfg_(std::move(config)), rng_(cfg_.seed) {
  if (size_ < 1) throw InvalidArgument("simulated world needs at least one rank");
  if (cfg_.local_size < 0 || (cfg_.local_size > 0 && size_ % cfg_.local_size != 0)) {
    throw ConfigError("local size " + std::to_string(cfg_.local_size) + " does not divide size " +
                      std::to_string(size_));
  }
  if (cfg_.latency < 0 || cfg_.bandwidth < 0 || cfg_.jitter < 0) {
    throw InvalidArgument("simulator delays and bandwidth must be nonnegative");
  }
  for (const auto& [edge, lat] : cfg_.edge_latency) {
    if (edge.first < 0 || edge.first >= size_ || edge.second < 0 || edge.second >= size_ || lat < 0)
      throw InvalidArgument("invalid per-edge latency override");
  }
  EngineConfig ec;
  ec.size = size_;
  ec.fusion_bytes = cfg_.fusion_bytes;
  ec.topology_check = cfg_.topology_check;
  for (int r = 0; r < size_; ++r) {
    hosts_.push_back(std::make_unique<Host>(*this, r));
    ec.rank = r;
    engines_.push_back(std::make_unique<Engine>(ec, *hosts_.back()));
    slots_.push_back(std::make_unique<Slot>());
  }
  flush_scheduled_.assign(size_, 0);
  last_delivery_.assign(static_cast<std::size_t>(size_) * size_, 0.0);
  errors_.resize(size_);
}

SimWorld::~SimWorld() = default;

void SimWorld::push(Event ev) {
  ev.seq = seq_++;
  std::uint32_t slot;
  if (free_slots_.empty()) {
    slot = static_cast<std::uint32_t>(pool_.size());
    pool_.push_back(std::move(ev));
  } else {
    slot = free_slots_.back();
    free_slots_.pop_back();
    pool_[slot] = std::move(ev);
  }
  const Event& e = pool_[slot];
  heap_.push_back(Key{e.time, e.phase, e.seq, slot});
  std::push_heap(heap_.begin(), heap_.end(), EventAfter{});
}

void SimWorld::schedule_resume(int rank, double at) {
  auto& s = *slots_[rank];
  if (s.resume_pending) return;
  s.resume_pending = true;
  push(Event{at, 2, 0, rank, EventType::kResume, {}, {}});
}

double SimWorld::edge_latency(int src, int dst, MsgKind kind) const {
  if (src == dst) return 0.0;
  if (!carries_tensor(kind) && cfg_.control_latency >= 0) return cfg_.control_latency;
  auto it = cfg_.edge_latency.find({src, dst});
  return it == cfg_.edge_latency.end() ? cfg_.latency : it->second;
}

void SimWorld::deliver(Envelope env) {
  const int src = static_cast<int>(env.src);
  const int dst = static_cast<int>(env.dst);
  if (dst < 0 || dst >= size_) throw TransportError("send to invalid rank " + std::to_string(dst));
  double t = now_ + edge_latency(src, dst, env.kind);
  if (src != dst) {
    if (cfg_.bandwidth > 0 && carries_tensor(env.kind)) t += env.payload_bytes() / cfg_.bandwidth;
    if (cfg_.jitter > 0) t += std::uniform_real_distribution<double>(0.0, cfg_.jitter)(rng_);
  }
  double& last = last_delivery_[static_cast<std::size_t>(src) * size_ + dst];
  t = std::max(t, last);
  last = t;
  push(Event{t, 0, 0, dst, EventType::kDeliver, std::move(env), {}});
}

void SimWorld::post(int rank, std::function<void(Engine&)> task) {
  push(Event{now_, 0, 0, rank, EventType::kTask, {}, std::move(task)});
}

void SimWorld::notify(int rank) {
  auto& s = *slots_[rank];
  if (s.state == SlotState::kBlocked && s.pred && !s.resume_pending && s.pred()) schedule_resume(rank, now_);
}

void SimWorld::after_event(int rank) {
  if (!flush_scheduled_[rank] && engines_[rank]->wants_flush()) {
    flush_scheduled_[rank] = 1;
    push(Event{now_, 1, 0, rank, EventType::kFlush, {}, {}});
  }
  if (observer_) observer_(*this);
}

void SimWorld::block(int rank, std::function<bool()> pred) {
  auto& s = *slots_[rank];
  if (s.cancelled) throw CancelledError("rank " + std::to_string(rank) + " was cancelled after a deadlock");
  s.state = SlotState::kBlocked;
  s.pred = std::move(pred);
  drive(rank);
  if (s.cancelled) {
    throw CancelledError("deadlock: rank " + std::to_string(rank) +
                         " was waiting with no pending events at t=" + std::to_string(now_));
  }
}

void SimWorld::compute(int rank, double seconds) {
  if (!(seconds > 0)) return;
  auto& s = *slots_[rank];
  if (s.cancelled) throw CancelledError("rank " + std::to_string(rank) + " was cancelled after a deadlock");
  s.state = SlotState::kBlocked;
  s.pred = nullptr;
  schedule_resume(rank, now_ + seconds);
  drive(rank);
}

void SimWorld::record_error(int rank, std::exception_ptr e) {
  errors_[rank] = e;
  error_order_.emplace_back(now_, rank);
}

void SimWorld::drive(int self) {
  for (;;) {
    if (heap_.empty()) {
      std::vector<int> blocked;
      for (int r = 0; r < size_; ++r)
        if (slots_[r]->state == SlotState::kBlocked) blocked.push_back(r);
      if (blocked.empty()) {
        if (self >= 0) main_sem_.release();
        return;
      }
      ++deadlocks_;
      for (int r : blocked) {
        slots_[r]->cancelled = true;
        schedule_resume(r, now_);
      }
      continue;
    }
    std::pop_heap(heap_.begin(), heap_.end(), EventAfter{});
    const std::uint32_t slot = heap_.back().slot;
    heap_.pop_back();
    Event ev = std::move(pool_[slot]);
    pool_[slot].task = nullptr;
    free_slots_.push_back(slot);
    now_ = ev.time;
    ++events_;
    if (ev.type == EventType::kResume) {
      auto& s = *slots_[ev.rank];
      s.resume_pending = false;
      if (s.state != SlotState::kBlocked) continue;
      if (s.pred && !s.cancelled && !s.pred()) continue;
      s.state = SlotState::kRunning;
      s.pred = nullptr;
      if (ev.rank == self) return;
      s.sem.release();
      if (self < 0) {
        main_sem_.acquire();
        return;
      }
      if (slots_[self]->state == SlotState::kDone) return;
      slots_[self]->sem.acquire();
      return;
    }
    try {
      auto& eng = *engines_[ev.rank];
      switch (ev.type) {
        case EventType::kDeliver:
          if (cfg_.record_trace) {
            trace_.push_back(TraceEntry{now_, ev.env.kind, ev.env.src, ev.env.dst, ev.env.round_tag,
                                        ev.env.name,
                                        fnv1a(ev.env.payload.data(), ev.env.payload_bytes())});
          }
          eng.on_envelope(std::move(ev.env));
          break;
        case EventType::kTask: ev.task(eng); break;
        case EventType::kFlush:
          flush_scheduled_[ev.rank] = 0;
          eng.flush();
          break;
        case EventType::kResume: break;
      }
    } catch (...) {
      if (!fabric_error_) fabric_error_ = std::current_exception();
    }
    after_event(ev.rank);
  }
}

std::vector<const Envelope*> SimWorld::in_flight() const {
  std::vector<const Envelope*> out;
  for (const auto& key : heap_) {
    const auto& ev = pool_[key.slot];
    if (ev.type == EventType::kDeliver) out.push_back(&ev.env);
  }
  return out;
}

void SimWorld::run(const std::function<void(Context&)>& fn) {
  if (ran_) throw UsageError("a SimWorld runs only once");
  ran_ = true;
  std::vector<std::thread> threads;
  threads.reserve(size_);
  for (int r = 0; r < size_; ++r) {
    threads.emplace_back([this, r, &fn] {
      auto& slot = *slots_[r];
      slot.sem.acquire();
      try {
        Context ctx(std::make_unique<SimRuntime>(*this, r));
        fn(ctx);
      } catch (...) {
        record_error(r, std::current_exception());
      }
      slot.state = SlotState::kDone;
      drive(r);
    });
  }
  for (int r = 0; r < size_; ++r) schedule_resume(r, 0.0);
  drive(-1);
  for (auto& t : threads) t.join();
  if (fabric_error_) std::rethrow_exception(fabric_error_);
  // Prefer the root cause over cancellations it triggered.
  std::exception_ptr first_cancel;
  for (const auto& [t, r] : error_order_) {
    try {
      std::rethrow_exception(errors_[r]);
    } catch (const CancelledError&) {
      if (!first_cancel) first_cancel = errors_[r];
    } catch (...) {
      std::rethrow_exception(errors_[r]);
    }
  }
  if (first_cancel) std::rethrow_exception(first_cancel);
}

}  // namespace defog
