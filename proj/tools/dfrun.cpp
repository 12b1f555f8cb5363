// dfrun: starts N ranks of a program with the DEFOG_* environment set.
#include <arpa/inet.h>
#include <netinet/in.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

namespace {

// Opens a listening socket on 127.0.0.1 (port 0 = any free port) that the
// child inherits, so no port can be stolen between selection and use.
int open_listener(int port, int* bound) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) return -1;
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  socklen_t len = sizeof addr;
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), len) != 0 || ::listen(fd, 128) != 0 ||
      ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
    ::close(fd);
    return -1;
  }
  *bound = ntohs(addr.sin_port);
  return fd;
}

int exit_code(int status) {
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
  return 1;
}

[[noreturn]] void exec_child(const std::vector<std::string>& command) {
  std::vector<char*> argv;
  for (const auto& a : command) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  ::execvp(argv[0], argv.data());
  std::cerr << "dfrun: cannot execute " << command[0] << ": " << std::strerror(errno) << "\n";
  ::_exit(127);
}

volatile std::sig_atomic_t g_signal = 0;

void on_signal(int sig) { g_signal = sig; }

// Each rank leads its own process group so helpers it spawned die with it.
void kill_groups(const std::vector<pid_t>& pids, int sig) {
  for (pid_t p : pids)
    if (p > 0) ::kill(-p, sig);
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> command;
  int split = argc;
  for (int i = 1; i < argc; ++i)
    if (std::string(argv[i]) == "--") {
      split = i;
      break;
    }
  for (int i = split + 1; i < argc; ++i) command.emplace_back(argv[i]);

  CLI::App app{"Start N ranks of a defog program"};
  int n = 1;
  std::string backend = "tcp";
  int base_port = 0;
  int local_size = 0;
  double grace = 5.0;
  app.add_option("-n,--np", n, "number of ranks")->required()->check(CLI::Range(1, 4096));
  app.add_option("--backend", backend, "sim runs every rank inside one process")
      ->check(CLI::IsMember({"sim", "tcp"}));
  app.add_option("--base-port", base_port, "rank r listens on base-port + r (0 = free ports)")
      ->check(CLI::Range(0, 65535));
  app.add_option("--local-size", local_size, "ranks per emulated machine")->check(CLI::NonNegativeNumber);
  app.add_option("--grace", grace, "seconds to wait for the other ranks after one fails");
  app.footer("usage: dfrun -n N [options] -- program [args...]");
  try {
    app.parse(split, argv);
    if (command.empty()) throw CLI::ValidationError("missing program after --");
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  ::setenv("DEFOG_BACKEND", backend.c_str(), 1);
  ::setenv("DEFOG_SIZE", std::to_string(n).c_str(), 1);
  ::setenv("DEFOG_LOCAL_SIZE", std::to_string(local_size).c_str(), 1);
  ::unsetenv("DEFOG_LISTEN_FD");

  if (backend == "sim") {
    ::unsetenv("DEFOG_PEERS");
    ::setenv("DEFOG_RANK", "0", 1);
    exec_child(command);
  }

  std::vector<int> fds(n, -1);
  std::string peers;
  for (int r = 0; r < n; ++r) {
    int port = 0;
    if (base_port == 0) {
      fds[r] = open_listener(0, &port);
      if (fds[r] < 0) {
        std::cerr << "dfrun: cannot open a listening socket: " << std::strerror(errno) << "\n";
        return 1;
      }
    } else {
      port = base_port + r;
    }
    peers += (r ? "," : "") + std::string("127.0.0.1:") + std::to_string(port);
  }
  ::setenv("DEFOG_PEERS", peers.c_str(), 1);

  std::vector<pid_t> pids(n, -1);
  for (int r = 0; r < n; ++r) {
    pid_t pid = ::fork();
    if (pid < 0) {
      std::cerr << "dfrun: fork failed: " << std::strerror(errno) << "\n";
      kill_groups(pids, SIGKILL);
      return 1;
    }
    if (pid == 0) {
      ::setpgid(0, 0);
      for (int q = 0; q < n; ++q)
        if (q != r && fds[q] >= 0) ::close(fds[q]);
      ::setenv("DEFOG_RANK", std::to_string(r).c_str(), 1);
      if (fds[r] >= 0) ::setenv("DEFOG_LISTEN_FD", std::to_string(fds[r]).c_str(), 1);
      exec_child(command);
    }
    ::setpgid(pid, pid);
    pids[r] = pid;
  }
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  for (int fd : fds)
    if (fd >= 0) ::close(fd);

  int result = 0;
  int running = n;
  auto deadline = std::chrono::steady_clock::time_point::max();
  bool killed = false;
  while (running > 0) {
    int status = 0;
    pid_t pid = ::waitpid(-1, &status, WNOHANG);
    if (pid > 0) {
      --running;
      int code = exit_code(status);
      if (code != 0 && result == 0) {
        result = code;
        for (int r = 0; r < n; ++r)
          if (pids[r] == pid) std::cerr << "dfrun: rank " << r << " exited with status " << code << "\n";
        deadline = std::chrono::steady_clock::now() +
                   std::chrono::milliseconds(static_cast<long>(grace * 1000));
      }
      continue;
    }
    if (pid < 0) break;
    if (g_signal != 0) {
      kill_groups(pids, g_signal);
      if (result == 0) result = 128 + g_signal;
      deadline = std::min(deadline, std::chrono::steady_clock::now() +
                                        std::chrono::milliseconds(static_cast<long>(grace * 1000)));
      g_signal = 0;
    }
    if (!killed && std::chrono::steady_clock::now() > deadline) {
      std::cerr << "dfrun: killing remaining ranks\n";
      kill_groups(pids, SIGKILL);
      killed = true;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  if (result != 0) kill_groups(pids, SIGKILL);
  return result;
}
