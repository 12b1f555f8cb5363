#pragma once

#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "defog/tcp.hpp"

namespace defog::test {

// Runs fn on n ranks, each with its own TCP runtime and sockets, inside this
// process. Listen sockets are opened up front on free ports. Returns the
// per-rank exceptions (null when the rank finished cleanly).
inline std::vector<std::exception_ptr> run_tcp(int n, const std::function<void(Context&)>& fn,
                                               int local_size = 0, double timeout = 20.0) {
  std::vector<int> fds(n);
  std::vector<std::string> peers(n);
  for (int r = 0; r < n; ++r) {
    int port = 0;
    fds[r] = tcp_listen("127.0.0.1", &port);
    peers[r] = "127.0.0.1:" + std::to_string(port);
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> threads;
  for (int r = 0; r < n; ++r) {
    threads.emplace_back([&, r] {
      try {
        TcpConfig cfg;
        cfg.rank = r;
        cfg.size = n;
        cfg.peers = peers;
        cfg.listen_fd = fds[r];
        cfg.local_size = local_size;
        cfg.connect_timeout = timeout;
        auto ctx = tcp_connect(cfg);
        try {
          fn(*ctx);
        } catch (...) {
          ctx->abort();
          throw;
        }
        ctx->finalize();
      } catch (...) {
        errors[r] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  return errors;
}

inline void rethrow_first(const std::vector<std::exception_ptr>& errors) {
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace defog::test
