#pragma once

#include <functional>
#include <string>
#include <vector>

#include "defog/context.hpp"

namespace defog {

// Settings a launcher hands to each process through the environment:
//   DEFOG_BACKEND       sim | tcp (default: tcp when DEFOG_PEERS is set, else sim)
//   DEFOG_RANK          this process's rank (tcp)
//   DEFOG_SIZE          number of ranks
//   DEFOG_PEERS         host:port per rank, comma separated (tcp)
//   DEFOG_LISTEN_FD     inherited listening socket (tcp, optional)
//   DEFOG_LOCAL_SIZE    processes per machine (0 = one machine)
//   DEFOG_FUSION_BYTES  fusion buffer capacity in bytes
//   DEFOG_TOPO_CHECK    0 disables the negotiation topology check
struct LaunchEnv {
  std::string backend = "sim";
  int rank = 0;
  int size = 1;
  std::vector<std::string> peers;
  int listen_fd = -1;
  int local_size = 0;
  std::size_t fusion_bytes = std::size_t{2} << 20;
  bool topology_check = true;
  double connect_timeout = 30.0;
};

// Reads the DEFOG_* variables. Throws ConfigError on malformed values.
LaunchEnv read_launch_env();

// Runs fn for every rank owned by this process: all ranks of an in-process
// simulated world for the sim backend, the single rank of this process for
// tcp. Errors raised by fn propagate after the runtime is shut down.
void launch(const LaunchEnv& env, const std::function<void(Context&)>& fn);

}  // namespace defog
