#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <atomic>
#include <memory>
#include <string>
#include <vector>

#include "rbi/transcript.hpp"
#include "rbi/wire.hpp"

namespace rbi {

struct ChannelStats {
  std::uint64_t frames_sent = 0;
  std::uint64_t frames_received = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;
};

// Reliable, in-order, framed message port.
class Channel {
 public:
  virtual ~Channel() = default;

  void send(const Frame& frame);
  Frame receive();

  const ChannelStats& stats() const { return stats_; }

 protected:
  virtual void do_send(const Frame& frame) = 0;
  virtual Frame do_receive() = 0;

 private:
  ChannelStats stats_;
};

// A reactive party: consumes one frame, appends its replies.
class FrameHandler {
 public:
  virtual ~FrameHandler() = default;
  virtual void on_frame(const Frame& in, std::vector<Frame>& out) = 0;
};

// Runs handler.on_frame, converting library errors into a single kError reply.
// Returns false when the handler failed (the session should be closed).
bool serve_frame(FrameHandler& handler, const Frame& in, std::vector<Frame>& out);

// In-process transport to a reactive peer. Frames sent by the caller are
// queued; receive() feeds them to the peer one at a time until it has produced
// a reply. No threads involved, so runs are deterministic.
class LoopbackChannel final : public Channel {
 public:
  explicit LoopbackChannel(FrameHandler& peer) : peer_(peer) {}

 protected:
  void do_send(const Frame& frame) override;
  Frame do_receive() override;

 private:
  FrameHandler& peer_;
  std::deque<Frame> to_peer_;
  std::deque<Frame> from_peer_;
};

// Records every frame crossing the wrapped channel.
class RecordingChannel final : public Channel {
 public:
  RecordingChannel(Channel& inner, Transcript& transcript) : inner_(inner), transcript_(transcript) {}

 protected:
  void do_send(const Frame& frame) override;
  Frame do_receive() override;

 private:
  Channel& inner_;
  Transcript& transcript_;
};

// Delays every outgoing frame to simulate network latency.
class LatencyChannel final : public Channel {
 public:
  LatencyChannel(Channel& inner, std::chrono::microseconds per_message)
      : inner_(inner), delay_(per_message) {}

 protected:
  void do_send(const Frame& frame) override;
  Frame do_receive() override;

 private:
  Channel& inner_;
  std::chrono::microseconds delay_;
};

class TcpChannel final : public Channel {
 public:
  explicit TcpChannel(int fd);
  ~TcpChannel() override;
  TcpChannel(const TcpChannel&) = delete;
  TcpChannel& operator=(const TcpChannel&) = delete;

  static std::unique_ptr<TcpChannel> connect(const std::string& host, std::uint16_t port);
  void shutdown();

 protected:
  void do_send(const Frame& frame) override;
  Frame do_receive() override;

 private:
  int fd_ = -1;
};

class TcpListener {
 public:
  // Port 0 picks an ephemeral port; see port().
  TcpListener(const std::string& host, std::uint16_t port);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  // Blocks; returns nullptr once close() has been called.
  std::unique_ptr<TcpChannel> accept();
  void close();

 private:
  std::atomic<int> fd_{-1};
  std::uint16_t port_ = 0;
};

// "host:port" -> (host, port); throws UsageError.
std::pair<std::string, std::uint16_t> split_host_port(const std::string& address);

// Serves one connection with the given handler until the peer disconnects or
// the handler fails. Returns the handler's error message, empty on a clean close.
std::string serve_connection(Channel& channel, FrameHandler& handler);

}  // namespace rbi
