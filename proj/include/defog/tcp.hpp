#pragma once

#include <memory>
#include <string>
#include <vector>

#include "defog/context.hpp"

namespace defog {

struct TcpConfig {
  int rank = 0;
  int size = 1;
  std::vector<std::string> peers;  // host:port for every rank
  int listen_fd = -1;              // listening socket handed over (closed after setup); -1 = bind peers[rank]
  double connect_timeout = 30.0;   // seconds for the whole mesh to come up
  std::size_t fusion_bytes = std::size_t{2} << 20;
  bool topology_check = true;
  int local_size = 0;              // processes per machine; 0 = single machine
  std::size_t queue_warn = 1 << 16;  // queued envelopes before a high-watermark warning
};

// Connects to every peer (lower ranks are dialed, higher ranks are accepted),
// starts the reader and progress threads and passes the startup barrier.
// Throws TransportError naming the ranks that could not be reached.
std::unique_ptr<Context> tcp_connect(const TcpConfig& config);

// Parses "host:port,host:port,...".
std::vector<std::string> parse_peer_list(const std::string& list);

// Opens a listening socket on host:port (port 0 picks a free port) and
// returns the descriptor; the chosen port is written to *port.
int tcp_listen(const std::string& host, int* port);

}  // namespace defog
