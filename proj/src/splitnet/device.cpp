// SPDX-License-Identifier: Apache-2.0
#include "camc/splitnet/device.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <map>

namespace camc::splitnet {

namespace {

using Clock = std::chrono::steady_clock;

std::string describe(const Hello& h) {
  return "N=" + std::to_string(h.n) + " M=" + std::to_string(h.m) + " model_hash=" + std::to_string(h.model_hash);
}

}  // namespace

Device::Device(std::size_t n, std::size_t m, std::uint32_t model_hash, DeviceConfig cfg)
    : n_(n), m_(m), cfg_(std::move(cfg)) {
  if (n == 0 || n > 0xffff || m == 0 || m > 0xffff) throw std::invalid_argument("device: N and M must be in [1, 65535]");
  if (cfg_.window == 0) throw std::invalid_argument("device: window must be positive");
  sock_ = connect_tcp(cfg_.host, cfg_.port, cfg_.timeout);
  const Hello mine{static_cast<std::uint16_t>(n), static_cast<std::uint16_t>(m), model_hash};
  write_frame(sock_, mine);
  const Message reply = read_frame(sock_, cfg_.timeout);
  if (const auto* e = std::get_if<ErrorMsg>(&reply)) throw HandshakeError("handshake rejected: " + e->reason);
  const auto* h = std::get_if<Hello>(&reply);
  if (h == nullptr) throw HandshakeError("handshake: expected HELLO, got " + to_string(type_of(reply)));
  if (*h != mine) throw HandshakeError("handshake mismatch: device " + describe(mine) + ", server " + describe(*h));
}

DeviceReport Device::run_embeddings(const models::Tensor& z) {
  if (z.rank() != 2 || z.dim(1) != n_)
    throw nc::ShapeError("device: embeddings must be [frames, " + std::to_string(n_) + "], got " + nc::shape_str(z.shape()));
  const std::size_t frames = z.dim(0);
  DeviceReport rep;
  rep.results.resize(frames);
  nc::Rng rng(cfg_.seed);

  struct Pending {
    std::vector<std::uint8_t> bytes;
    Clock::time_point sent;
    bool retried = false;
  };
  std::map<std::uint32_t, Pending> outstanding;
  std::size_t next = 0, resolved = 0;

  auto send = [&](Pending& p) {
    sock_.send_all(p.bytes);
    p.sent = Clock::now();
    rep.bytes_sent += p.bytes.size();
  };

  while (resolved < frames) {
    while (next < frames && outstanding.size() < cfg_.window) {
      EmbeddingMsg e;
      e.seq = static_cast<std::uint32_t>(next);
      const auto row = z.span().subspan(next * n_, n_);
      e.values.assign(row.begin(), row.end());
      if (!std::isinf(cfg_.transmission_snr_db)) {
        const auto w = channel::draw_noise(row, cfg_.transmission_snr_db, rng);
        for (std::size_t i = 0; i < n_; ++i) e.values[i] += w[i];
      }
      Pending p{encode_frame(e), {}, false};
      rep.embedding_frame_bytes = p.bytes.size();
      send(outstanding.emplace(e.seq, std::move(p)).first->second);
      ++next;
    }

    // Oldest outstanding send decides how long we may wait.
    auto oldest = outstanding.begin();
    for (auto it = outstanding.begin(); it != outstanding.end(); ++it)
      if (it->second.sent < oldest->second.sent) oldest = it;
    const auto waited = std::chrono::duration_cast<Millis>(Clock::now() - oldest->second.sent);
    const Millis budget = std::max(Millis{1}, cfg_.timeout - waited);

    if (!sock_.wait_readable(budget)) {
      if (!oldest->second.retried) {
        oldest->second.retried = true;
        ++rep.retransmits;
        send(oldest->second);
      } else {
        rep.results[oldest->first].seq = oldest->first;
        ++rep.failed;
        ++resolved;
        outstanding.erase(oldest);
      }
      continue;
    }
    const Message msg = read_frame(sock_, cfg_.timeout);
    if (const auto* e = std::get_if<ErrorMsg>(&msg)) throw RemoteError(e->code, e->reason);
    const auto* r = std::get_if<ResultMsg>(&msg);
    if (r == nullptr) throw ProtocolError("device: expected RESULT, got " + to_string(type_of(msg)));
    rep.bytes_received += kHeaderSize + 6 + 4 * r->probs.size() + kTrailerSize;
    const auto it = outstanding.find(r->seq);
    if (it == outstanding.end()) continue;  // duplicate answer to a retransmit
    if (r->probs.size() != m_)
      throw ProtocolError("device: RESULT carries " + std::to_string(r->probs.size()) + " probabilities, expected " +
                          std::to_string(m_));
    rep.results[r->seq] = {r->seq, true, r->argmax, r->probs};
    outstanding.erase(it);
    ++resolved;
  }
  return rep;
}

models::Tensor encode_frames(models::Model& sscnet, const models::Tensor& ap) {
  if (ap.rank() != 3) throw nc::ShapeError("encode_frames: expected [frames, L, 2], got " + nc::shape_str(ap.shape()));
  const std::size_t frames = ap.dim(0), len = ap.dim(1), n = sscnet.output_shape().at(0);
  models::Tensor z({frames, n});
  models::Tensor one({1, len, ap.dim(2)});
  for (std::size_t f = 0; f < frames; ++f) {
    const auto src = ap.span().subspan(f * one.size(), one.size());
    std::copy(src.begin(), src.end(), one.data());
    const models::Tensor e = models::encode(sscnet, one);
    std::copy(e.span().begin(), e.span().end(), z.data() + f * n);
  }
  return z;
}

DeviceReport Device::run(models::Model& sscnet, const models::Tensor& ap) {
  return run_embeddings(encode_frames(sscnet, ap));
}

double transmission_ratio(std::size_t frame_length, std::size_t embedding_frame_bytes) {
  return static_cast<double>(8 * frame_length) / static_cast<double>(embedding_frame_bytes);
}

}  // namespace camc::splitnet
