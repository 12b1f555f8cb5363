#include "defog/launch.hpp"

#include <charconv>
#include <cstdlib>

#include "defog/error.hpp"
#include "defog/sim.hpp"
#include "defog/tcp.hpp"

namespace defog {

namespace {

const char* get(const char* key) {
  const char* v = std::getenv(key);
  return v != nullptr && *v != '\0' ? v : nullptr;
}

template <typename T>
T parse_number(const char* key, const char* text) {
  T value{};
  const char* end = text + std::char_traits<char>::length(text);
  auto [ptr, ec] = std::from_chars(text, end, value);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(std::string(key) + ": expected an integer, got '" + text + "'");
  return value;
}

}  // namespace

LaunchEnv read_launch_env() {
  LaunchEnv env;
  if (const char* v = get("DEFOG_PEERS")) {
    env.peers = parse_peer_list(v);
    env.backend = "tcp";
  }
  if (const char* v = get("DEFOG_BACKEND")) env.backend = v;
  if (env.backend != "sim" && env.backend != "tcp")
    throw ConfigError("DEFOG_BACKEND: unknown backend '" + env.backend + "' (expected sim or tcp)");
  if (const char* v = get("DEFOG_SIZE")) env.size = parse_number<int>("DEFOG_SIZE", v);
  else if (!env.peers.empty()) env.size = static_cast<int>(env.peers.size());
  if (const char* v = get("DEFOG_RANK")) env.rank = parse_number<int>("DEFOG_RANK", v);
  if (const char* v = get("DEFOG_LISTEN_FD")) env.listen_fd = parse_number<int>("DEFOG_LISTEN_FD", v);
  if (const char* v = get("DEFOG_LOCAL_SIZE")) env.local_size = parse_number<int>("DEFOG_LOCAL_SIZE", v);
  if (const char* v = get("DEFOG_FUSION_BYTES"))
    env.fusion_bytes = parse_number<std::size_t>("DEFOG_FUSION_BYTES", v);
  if (const char* v = get("DEFOG_TOPO_CHECK")) env.topology_check = parse_number<int>("DEFOG_TOPO_CHECK", v) != 0;

  if (env.size < 1) throw ConfigError("DEFOG_SIZE must be positive");
  if (env.rank < 0 || env.rank >= env.size)
    throw ConfigError("DEFOG_RANK " + std::to_string(env.rank) + " outside [0, " + std::to_string(env.size) + ")");
  if (env.local_size < 0) throw ConfigError("DEFOG_LOCAL_SIZE must be non-negative");
  if (env.backend == "tcp" && env.size > 1 && static_cast<int>(env.peers.size()) != env.size)
    throw ConfigError("DEFOG_PEERS lists " + std::to_string(env.peers.size()) + " addresses for " +
                      std::to_string(env.size) + " ranks");
  return env;
}

void launch(const LaunchEnv& env, const std::function<void(Context&)>& fn) {
  if (env.backend == "sim") {
    SimConfig cfg;
    cfg.local_size = env.local_size;
    cfg.fusion_bytes = env.fusion_bytes;
    cfg.topology_check = env.topology_check;
    SimWorld world(env.size, cfg);
    world.run(fn);
    return;
  }
  TcpConfig cfg;
  cfg.rank = env.rank;
  cfg.size = env.size;
  cfg.peers = env.peers;
  cfg.listen_fd = env.listen_fd;
  cfg.local_size = env.local_size;
  cfg.fusion_bytes = env.fusion_bytes;
  cfg.topology_check = env.topology_check;
  cfg.connect_timeout = env.connect_timeout;
  auto ctx = tcp_connect(cfg);
  try {
    fn(*ctx);
  } catch (...) {
    ctx->abort();
    throw;
  }
  ctx->finalize();
}

}  // namespace defog
