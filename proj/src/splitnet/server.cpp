// SPDX-License-Identifier: Apache-2.0
#include "camc/splitnet/server.hpp"

#include <cmath>

#include "camc/log.hpp"

namespace camc::splitnet {

namespace {

constexpr Millis kPoll{100};

std::string describe(const Hello& h) {
  return "N=" + std::to_string(h.n) + " M=" + std::to_string(h.m) + " model_hash=" + std::to_string(h.model_hash);
}

}  // namespace

Server::Server(const models::Model& mcnet, std::uint32_t model_hash, ServerConfig cfg)
    : mcnet_(mcnet), model_hash_(model_hash), cfg_(std::move(cfg)) {
  if (mcnet_.input_shape().size() != 1) throw std::invalid_argument("server: classifier input must be rank 1");
  n_ = mcnet_.input_shape()[0];
  m_ = mcnet_.output_shape().at(0);
  if (n_ > 0xffff || m_ > 0xffff) throw std::invalid_argument("server: N and M must fit in 16 bits");
}

Server::~Server() { stop(); }

void Server::start() {
  listener_ = std::make_unique<Listener>(cfg_.host, cfg_.port);
  port_ = listener_->port();
  acceptor_ = std::thread([this] { accept_loop(); });
}

void Server::serve() {
  if (!listener_) {
    listener_ = std::make_unique<Listener>(cfg_.host, cfg_.port);
    port_ = listener_->port();
  }
  accept_loop();
}

void Server::stop() {
  stopping_ = true;
  if (acceptor_.joinable()) acceptor_.join();
  {
    std::lock_guard lock(mu_);
    for (auto& c : conns_) c->sock.shutdown();
  }
  reap(true);
  if (listener_) listener_->close();
}

ServerStats Server::stats() const { return {n_conn_.load(), n_results_.load(), n_errors_.load()}; }

void Server::reap(bool all) {
  std::list<std::unique_ptr<Connection>> finished;
  {
    std::lock_guard lock(mu_);
    for (auto it = conns_.begin(); it != conns_.end();) {
      if (all || (*it)->done) {
        finished.push_back(std::move(*it));
        it = conns_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& c : finished)
    if (c->thread.joinable()) c->thread.join();
}

void Server::accept_loop() {
  log::info("server listening on " + cfg_.host + ":" + std::to_string(port_));
  while (!stopping_) {
    std::optional<Socket> s;
    try {
      s = listener_->accept(kPoll);
    } catch (const SocketError& e) {
      log::warn(std::string("accept failed: ") + e.what());
      continue;
    }
    reap(false);
    if (!s) continue;
    const std::uint64_t index = n_conn_++;
    auto conn = std::make_unique<Connection>();
    conn->sock = std::move(*s);
    Connection& ref = *conn;
    std::lock_guard lock(mu_);
    conns_.push_back(std::move(conn));
    ref.thread = std::thread([this, &ref, index] { handle(ref, index); });
  }
}

void Server::handle(Connection& c, std::uint64_t index) {
  // Copy per connection: the forward pass records into per-model state.
  models::Model mcnet = mcnet_;
  nc::Rng rng(cfg_.seed ^ (index * 0x9e3779b97f4a7c15ull));
  const Hello mine{static_cast<std::uint16_t>(n_), static_cast<std::uint16_t>(m_), model_hash_};
  bool greeted = false;

  auto reject = [&](ErrorCode code, const std::string& reason) {
    ++n_errors_;
    log::warn("connection " + std::to_string(index) + ": " + reason);
    try {
      write_frame(c.sock, ErrorMsg{code, reason});
    } catch (const std::exception&) {
      // peer may already be gone
    }
  };

  // Reading waits in short slices so stop() is noticed promptly.
  auto next_frame = [&]() -> std::optional<Message> {
    Millis idle{0};
    while (!stopping_) {
      if (c.sock.wait_readable(kPoll)) return read_frame(c.sock, Millis{5000});
      idle += kPoll;
      if (cfg_.idle_timeout.count() > 0 && idle >= cfg_.idle_timeout) throw TimeoutError("idle timeout");
    }
    return std::nullopt;
  };

  try {
    while (auto msg = next_frame()) {
      if (!greeted) {
        const auto* h = std::get_if<Hello>(&*msg);
        if (h == nullptr) {
          reject(ErrorCode::Protocol, "expected HELLO, got " + to_string(type_of(*msg)));
          break;
        }
        if (*h != mine) {
          reject(ErrorCode::Handshake, "handshake mismatch: device " + describe(*h) + ", server " + describe(mine));
          break;
        }
        write_frame(c.sock, mine);
        greeted = true;
        continue;
      }
      const auto* e = std::get_if<EmbeddingMsg>(&*msg);
      if (e == nullptr) {
        reject(ErrorCode::Protocol, "expected EMBEDDING, got " + to_string(type_of(*msg)));
        break;
      }
      if (e->values.size() != n_) {
        reject(ErrorCode::Dimension,
               "embedding has n=" + std::to_string(e->values.size()) + ", negotiated N=" + std::to_string(n_));
        break;
      }
      models::Tensor z({1, n_});
      std::copy(e->values.begin(), e->values.end(), z.data());
      if (!std::isinf(cfg_.transmission_snr_db)) {
        const auto w = channel::draw_noise(z.span(), cfg_.transmission_snr_db, rng);
        for (std::size_t i = 0; i < n_; ++i) z[i] += w[i];
      }
      ResultMsg r;
      r.seq = e->seq;
      r.probs = models::classify(mcnet, z).vec();
      r.argmax = static_cast<std::uint16_t>(models::argmax(r.probs));
      write_frame(c.sock, r);
      ++n_results_;
    }
  } catch (const PeerClosed&) {
    // normal end of session
  } catch (const WireError& e) {
    reject(ErrorCode::Malformed, e.what());
  } catch (const TimeoutError& e) {
    reject(ErrorCode::Protocol, e.what());
  } catch (const std::exception& e) {
    reject(ErrorCode::Internal, e.what());
  }
  c.sock.shutdown();
  c.done = true;
}

}  // namespace camc::splitnet
