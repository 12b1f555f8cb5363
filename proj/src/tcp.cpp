#include "defog/tcp.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <iostream>
#include <mutex>
#include <thread>

#include "defog/envelope.hpp"
#include "defog/error.hpp"
#include "defog/runtime.hpp"

namespace defog {

namespace {

constexpr std::uint32_t kMagic = 0x47464544;  // "DEFG"

using Clock = std::chrono::steady_clock;

std::pair<std::string, int> split_host_port(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos || colon + 1 == s.size()) {
    throw ConfigError("peer address '" + s + "' is not host:port");
  }
  int port = 0;
  try {
    port = std::stoi(s.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("peer address '" + s + "' has an invalid port");
  }
  if (port < 0 || port > 65535) throw ConfigError("peer address '" + s + "' has an invalid port");
  return {s.substr(0, colon), port};
}

sockaddr_in resolve(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res) {
    throw TransportError("cannot resolve host '" + host + "'");
  }
  sockaddr_in addr = *reinterpret_cast<sockaddr_in*>(res->ai_addr);
  freeaddrinfo(res);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  return addr;
}

void write_all(int fd, const std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("socket write failed: ") + std::strerror(errno));
    }
    p += w;
    n -= static_cast<std::size_t>(w);
  }
}

// Returns false on a clean EOF before the first byte.
bool read_all(int fd, std::uint8_t* p, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, p + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw TransportError("connection closed in the middle of a frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("socket read failed: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

void set_nodelay(int fd) {
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s;
}

struct Handshake {
  std::uint32_t magic;
  std::uint32_t rank;
  std::uint32_t size;
};

}  // namespace

std::vector<std::string> parse_peer_list(const std::string& list) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto comma = list.find(',', start);
    const auto item = list.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!item.empty()) {
      split_host_port(item);
      out.push_back(item);
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

int tcp_listen(const std::string& host, int* port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw TransportError(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = resolve(host, *port);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 128) != 0) {
    const std::string err = std::strerror(errno);
    ::close(fd);
    throw TransportError("cannot listen on " + host + ":" + std::to_string(*port) + ": " + err);
  }
  socklen_t len = sizeof addr;
  getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  *port = ntohs(addr.sin_port);
  return fd;
}

class TcpRuntime final : public Runtime, public EngineHost {
 public:
  TcpRuntime(const TcpConfig& cfg, std::vector<int> fds)
      : cfg_(cfg), fds_(std::move(fds)), start_(Clock::now()) {
    EngineConfig ec;
    ec.rank = cfg.rank;
    ec.size = cfg.size;
    ec.fusion_bytes = cfg.fusion_bytes;
    ec.topology_check = cfg.topology_check;
    engine_ = std::make_unique<Engine>(ec, *this);
    closed_by_peer_.assign(cfg.size, 0);
    progress_ = std::thread([this] { progress_loop(); });
    for (int r = 0; r < cfg.size; ++r)
      if (fds_[r] >= 0) readers_.emplace_back([this, r] { reader_loop(r); });
  }

  ~TcpRuntime() override {
    if (finalized_) teardown();
    else teardown_abort();
  }

  int rank() const override { return cfg_.rank; }
  int size() const override { return cfg_.size; }
  int local_size() const override { return cfg_.local_size > 0 ? cfg_.local_size : cfg_.size; }
  const char* backend() const override { return "tcp"; }

  void post(std::function<void(Engine&)> task) override {
    Item it;
    it.type = ItemType::kTask;
    it.task = std::move(task);
    enqueue(std::move(it));
  }

  void wait(const Completion& c) override {
    std::unique_lock lk(app_mu_);
    app_cv_.wait(lk, [&] { return c.done.load(std::memory_order_acquire) || !fatal_.empty(); });
    if (!c.done.load(std::memory_order_acquire)) throw TransportError(fatal_);
  }

  double now() const override { return std::chrono::duration<double>(Clock::now() - start_).count(); }

  void compute(double seconds) override {
    if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
  }

  void finalize() override {
    if (finalized_) return;
    finalized_ = true;
    bool healthy = true;
    try {
      auto c = std::make_shared<Completion>();
      post([c](Engine& e) { e.barrier(c); });
      wait(*c);
      c->rethrow_if_error();
    } catch (...) {
      healthy = false;
    }
    if (healthy) {
      auto c = std::make_shared<Completion>();
      post([this, c](Engine& e) {
        for (int r = 0; r < cfg_.size; ++r)
          if (r != cfg_.rank) send(make_envelope(MsgKind::kShutdown, cfg_.rank, r, 0, "", std::vector<double>{}));
        for (int fd : fds_)
          if (fd >= 0) ::shutdown(fd, SHUT_WR);
        e.complete(c);
      });
      try {
        wait(*c);
      } catch (...) {
        healthy = false;
      }
    }
    if (healthy) teardown();
    else teardown_abort();
  }

  void abort() override {
    finalized_ = true;
    teardown_abort();
  }

  // EngineHost, called on the progress thread.
  void send(Envelope env) override {
    const int dst = static_cast<int>(env.dst);
    if (dst == cfg_.rank) {
      Item it;
      it.type = ItemType::kEnvelope;
      it.env = std::move(env);
      enqueue(std::move(it));
      return;
    }
    if (dst < 0 || dst >= cfg_.size) throw TransportError("send to invalid rank " + std::to_string(dst));
    const auto frame = encode_frame(env);
    write_all(fds_[dst], frame.data(), frame.size());
  }
  void notify() override {
    std::lock_guard lk(app_mu_);
    app_cv_.notify_all();
  }

 private:
  enum class ItemType { kEnvelope, kTask, kLost, kStop };
  struct Item {
    ItemType type = ItemType::kTask;
    Envelope env;
    std::function<void(Engine&)> task;
    std::string message;
  };

  void enqueue(Item it) {
    std::lock_guard lk(q_mu_);
    q_.push_back(std::move(it));
    if (q_.size() > cfg_.queue_warn && !warned_) {
      warned_ = true;
      std::cerr << "defog: rank " << cfg_.rank << " receive queue above " << cfg_.queue_warn
                << " envelopes\n";
    }
    q_cv_.notify_one();
  }

  void set_fatal(const std::string& msg) {
    std::lock_guard lk(app_mu_);
    if (fatal_.empty()) fatal_ = "rank " + std::to_string(cfg_.rank) + ": " + msg;
    app_cv_.notify_all();
  }

  void progress_loop() {
    std::deque<Item> batch;
    for (;;) {
      {
        std::unique_lock lk(q_mu_);
        q_cv_.wait(lk, [&] { return !q_.empty(); });
        batch.swap(q_);
      }
      for (auto& it : batch) {
        if (it.type == ItemType::kStop) return;
        try {
          switch (it.type) {
            case ItemType::kEnvelope: engine_->on_envelope(std::move(it.env)); break;
            case ItemType::kTask: it.task(*engine_); break;
            case ItemType::kLost: set_fatal(it.message); break;
            case ItemType::kStop: break;
          }
        } catch (const std::exception& e) {
          set_fatal(e.what());
        }
      }
      batch.clear();
      try {
        if (engine_->wants_flush()) engine_->flush();
      } catch (const std::exception& e) {
        set_fatal(e.what());
      }
    }
  }

  void reader_loop(int peer) {
    const int fd = fds_[peer];
    try {
      for (;;) {
        std::array<std::uint8_t, kFramePrefix> prefix;
        if (!read_all(fd, prefix.data(), prefix.size())) break;
        const std::uint32_t len = frame_body_length(prefix);
        if (len >= kMaxFrameBytes) throw TransportError("oversized frame");
        std::vector<std::uint8_t> body(len);
        if (len > 0 && !read_all(fd, body.data(), len)) throw TransportError("truncated frame");
        Envelope env = decode_frame_body(body);
        if (env.kind == MsgKind::kShutdown) {
          closed_by_peer_[peer] = 1;
          continue;
        }
        Item it;
        it.type = ItemType::kEnvelope;
        it.env = std::move(env);
        enqueue(std::move(it));
      }
      if (!closed_by_peer_[peer] && !stopping_) {
        lost(peer, "connection to rank " + std::to_string(peer) + " closed unexpectedly");
      }
    } catch (const std::exception& e) {
      if (!stopping_) lost(peer, "connection to rank " + std::to_string(peer) + " failed: " + e.what());
    }
  }

  void lost(int peer, std::string msg) {
    (void)peer;
    Item it;
    it.type = ItemType::kLost;
    it.message = std::move(msg);
    enqueue(std::move(it));
  }

  void teardown_abort() {
    stopping_ = true;
    for (int fd : fds_)
      if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
    teardown();
  }

  // After a clean finalize readers exit on the peers' EOF.
  void teardown() {
    if (torn_down_) return;
    torn_down_ = true;
    for (auto& t : readers_) t.join();
    stopping_ = true;
    Item stop;
    stop.type = ItemType::kStop;
    enqueue(std::move(stop));
    progress_.join();
    for (int fd : fds_)
      if (fd >= 0) ::close(fd);
  }

  TcpConfig cfg_;
  std::vector<int> fds_;
  Clock::time_point start_;
  std::unique_ptr<Engine> engine_;
  std::thread progress_;
  std::vector<std::thread> readers_;
  std::vector<char> closed_by_peer_;
  std::atomic<bool> stopping_{false};
  bool finalized_ = false;
  bool torn_down_ = false;

  std::mutex q_mu_;
  std::condition_variable q_cv_;
  std::deque<Item> q_;
  bool warned_ = false;

  std::mutex app_mu_;
  std::condition_variable app_cv_;
  std::string fatal_;
};

namespace {

std::vector<int> build_mesh(const TcpConfig& cfg, int listen_fd) {
  const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                           std::chrono::duration<double>(cfg.connect_timeout));
  std::vector<int> fds(cfg.size, -1);
  auto close_all = [&] {
    for (int& fd : fds)
      if (fd >= 0) ::close(fd), fd = -1;
  };
  // Dial every lower rank; their listen backlog accepts us even before they call accept.
  std::vector<int> unreachable;
  for (int r = 0; r < cfg.rank; ++r) {
    const auto [host, port] = split_host_port(cfg.peers[r]);
    const sockaddr_in addr = resolve(host, port);
    for (;;) {
      const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
      if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0) {
        set_nodelay(fd);
        Handshake h{kMagic, static_cast<std::uint32_t>(cfg.rank), static_cast<std::uint32_t>(cfg.size)};
        write_all(fd, reinterpret_cast<const std::uint8_t*>(&h), sizeof h);
        fds[r] = fd;
        break;
      }
      ::close(fd);
      if (Clock::now() >= deadline) {
        unreachable.push_back(r);
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }
  if (!unreachable.empty()) {
    close_all();
    throw TransportError("rank " + std::to_string(cfg.rank) + ": peer rank(s) " + join(unreachable) +
                         " unreachable after " + std::to_string(cfg.connect_timeout) + " s");
  }
  int expected = cfg.size - 1 - cfg.rank;
  while (expected > 0) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    pollfd p{listen_fd, POLLIN, 0};
    if (left <= 0 || ::poll(&p, 1, static_cast<int>(left)) <= 0) break;
    const int fd = ::accept4(listen_fd, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    Handshake h{};
    try {
      if (!read_all(fd, reinterpret_cast<std::uint8_t*>(&h), sizeof h)) throw TransportError("eof");
    } catch (const TransportError&) {
      ::close(fd);
      continue;
    }
    const int r = static_cast<int>(h.rank);
    if (h.magic != kMagic || static_cast<int>(h.size) != cfg.size || r <= cfg.rank || r >= cfg.size ||
        fds[r] >= 0) {
      ::close(fd);
      close_all();
      throw TransportError("rank " + std::to_string(cfg.rank) + ": bad handshake from a peer (rank " +
                           std::to_string(r) + ", size " + std::to_string(h.size) + ")");
    }
    set_nodelay(fd);
    fds[r] = fd;
    --expected;
  }
  std::vector<int> missing;
  for (int r = cfg.rank + 1; r < cfg.size; ++r)
    if (fds[r] < 0) missing.push_back(r);
  if (!missing.empty()) {
    close_all();
    throw TransportError("rank " + std::to_string(cfg.rank) + ": peer rank(s) " + join(missing) +
                         " did not connect within " + std::to_string(cfg.connect_timeout) + " s");
  }
  return fds;
}

}  // namespace

std::unique_ptr<Context> tcp_connect(const TcpConfig& config) {
  if (config.size < 1 || config.rank < 0 || config.rank >= config.size) {
    throw ConfigError("invalid rank " + std::to_string(config.rank) + " for size " + std::to_string(config.size));
  }
  if (static_cast<int>(config.peers.size()) != config.size && config.size > 1) {
    throw ConfigError("peer list has " + std::to_string(config.peers.size()) + " entries for size " +
                      std::to_string(config.size));
  }
  std::vector<int> fds(config.size, -1);
  if (config.size > 1) {
    int listen_fd = config.listen_fd;
    if (listen_fd < 0) {
      auto [host, port] = split_host_port(config.peers[config.rank]);
      listen_fd = tcp_listen(host == "localhost" ? "127.0.0.1" : host, &port);
    }
    try {
      fds = build_mesh(config, listen_fd);
    } catch (...) {
      ::close(listen_fd);
      throw;
    }
    ::close(listen_fd);
  } else if (config.listen_fd >= 0) {
    ::close(config.listen_fd);
  }
  auto ctx = std::make_unique<Context>(std::make_unique<TcpRuntime>(config, std::move(fds)));
  ctx->barrier();
  return ctx;
}

}  // namespace defog
