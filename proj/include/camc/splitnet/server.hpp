// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "camc/channel.hpp"
#include "camc/models.hpp"
#include "camc/splitnet/socket.hpp"

namespace camc::splitnet {

struct ServerConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  /// Channel noise applied to each decoded embedding; +inf disables it.
  double transmission_snr_db = channel::kInfiniteSnr;
  std::uint64_t seed = 1;
  /// Idle connections are dropped after this long; zero waits forever.
  Millis idle_timeout{0};
};

struct ServerStats {
  std::uint64_t connections = 0;
  std::uint64_t results = 0;
  std::uint64_t errors = 0;
};

/// Hosts the classifier. Each connection gets its own thread and its own
/// copy of the model, so nothing mutable is shared between connections.
class Server {
 public:
  Server(const models::Model& mcnet, std::uint32_t model_hash, ServerConfig cfg);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts accepting in the background.
  void start();
  /// Blocks in the accept loop until stop() is called from elsewhere.
  void serve();
  void stop();

  std::uint16_t port() const { return port_; }
  ServerStats stats() const;

 private:
  struct Connection {
    Socket sock;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  void accept_loop();
  void handle(Connection& c, std::uint64_t index);
  void reap(bool all);

  const models::Model mcnet_;
  std::uint32_t model_hash_;
  ServerConfig cfg_;
  std::size_t n_ = 0, m_ = 0;

  std::unique_ptr<Listener> listener_;
  std::uint16_t port_ = 0;
  std::thread acceptor_;
  std::atomic<bool> stopping_{false};
  std::mutex mu_;
  std::list<std::unique_ptr<Connection>> conns_;
  std::atomic<std::uint64_t> n_conn_{0}, n_results_{0}, n_errors_{0};
};

}  // namespace camc::splitnet
