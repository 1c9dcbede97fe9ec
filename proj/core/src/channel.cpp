#include "rbi/channel.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <thread>

#include "rbi/error.hpp"

namespace rbi {

void Channel::send(const Frame& frame) {
  do_send(frame);
  ++stats_.frames_sent;
  stats_.bytes_sent += kFrameHeaderSize + frame.payload.size();
}

Frame Channel::receive() {
  Frame f = do_receive();
  ++stats_.frames_received;
  stats_.bytes_received += kFrameHeaderSize + f.payload.size();
  return f;
}

bool serve_frame(FrameHandler& handler, const Frame& in, std::vector<Frame>& out) {
  const auto mark = out.size();
  try {
    handler.on_frame(in, out);
    return true;
  } catch (const Error& e) {
    out.resize(mark);
    out.push_back(encode_error(e.what()));
    return false;
  }
}

void LoopbackChannel::do_send(const Frame& frame) { to_peer_.push_back(frame); }

Frame LoopbackChannel::do_receive() {
  std::vector<Frame> out;
  while (from_peer_.empty()) {
    if (to_peer_.empty()) throw ChannelError("loopback: peer has nothing to say");
    Frame in = std::move(to_peer_.front());
    to_peer_.pop_front();
    out.clear();
    if (!serve_frame(peer_, in, out)) to_peer_.clear();
    for (auto& f : out) from_peer_.push_back(std::move(f));
  }
  Frame f = std::move(from_peer_.front());
  from_peer_.pop_front();
  return f;
}

void RecordingChannel::do_send(const Frame& frame) {
  inner_.send(frame);
  transcript_.append(Direction::kSent, frame);
}

Frame RecordingChannel::do_receive() {
  Frame f = inner_.receive();
  transcript_.append(Direction::kReceived, f);
  return f;
}

void LatencyChannel::do_send(const Frame& frame) {
  if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
  inner_.send(frame);
}

Frame LatencyChannel::do_receive() { return inner_.receive(); }

namespace {

void write_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const auto k = ::send(fd, data, n, MSG_NOSIGNAL);
    if (k < 0) {
      if (errno == EINTR) continue;
      throw ChannelError(std::string("send: ") + std::strerror(errno));
    }
    data += k;
    n -= static_cast<std::size_t>(k);
  }
}

// Returns false on clean EOF before the first byte.
bool read_all(int fd, std::uint8_t* data, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const auto k = ::recv(fd, data + got, n - got, 0);
    if (k < 0) {
      if (errno == EINTR) continue;
      throw ChannelError(std::string("recv: ") + std::strerror(errno));
    }
    if (k == 0) {
      if (got == 0) return false;
      throw ChannelError("connection closed mid-frame");
    }
    got += static_cast<std::size_t>(k);
  }
  return true;
}

class ClosedChannel : public ChannelError {
 public:
  ClosedChannel() : ChannelError("connection closed by peer") {}
};

}  // namespace

TcpChannel::TcpChannel(int fd) : fd_(fd) {
  const int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

TcpChannel::~TcpChannel() {
  if (fd_ >= 0) ::close(fd_);
}

void TcpChannel::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

std::unique_ptr<TcpChannel> TcpChannel::connect(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const auto service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw ChannelError("resolve " + host + ": " + ::gai_strerror(rc));
  }
  std::string last = "no addresses";
  for (auto* ai = res; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
      ::freeaddrinfo(res);
      return std::make_unique<TcpChannel>(fd);
    }
    last = std::strerror(errno);
    ::close(fd);
  }
  ::freeaddrinfo(res);
  throw ChannelError("connect " + host + ":" + service + ": " + last);
}

void TcpChannel::do_send(const Frame& frame) {
  const auto bytes = encode_frame(frame);
  write_all(fd_, bytes.data(), bytes.size());
}

Frame TcpChannel::do_receive() {
  std::uint8_t header[kFrameHeaderSize];
  if (!read_all(fd_, header, sizeof header)) throw ClosedChannel();
  const std::uint32_t len = (std::uint32_t{header[0]} << 24) | (std::uint32_t{header[1]} << 16) |
                            (std::uint32_t{header[2]} << 8) | header[3];
  if (len > kMaxPayload) throw ProtocolViolation("frame exceeds maximum payload size");
  Frame f;
  f.type = static_cast<MessageType>(header[4]);
  f.payload.resize(len);
  if (len > 0 && !read_all(fd_, f.payload.data(), len)) {
    throw ChannelError("connection closed mid-frame");
  }
  return f;
}

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const auto service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw ChannelError("resolve " + host + ": " + ::gai_strerror(rc));
  }
  std::string last = "no addresses";
  for (auto* ai = res; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 16) == 0) {
      fd_ = fd;
      break;
    }
    last = std::strerror(errno);
    ::close(fd);
  }
  ::freeaddrinfo(res);
  if (fd_ < 0) throw ChannelError("listen " + host + ":" + service + ": " + last);

  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  if (addr.ss_family == AF_INET) {
    port_ = ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
  } else {
    port_ = ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port);
  }
}

TcpListener::~TcpListener() { close(); }

std::unique_ptr<TcpChannel> TcpListener::accept() {
  while (true) {
    const int listen_fd = fd_;
    if (listen_fd < 0) return nullptr;
    const int fd = ::accept(listen_fd, nullptr, nullptr);
    if (fd >= 0) return std::make_unique<TcpChannel>(fd);
    if (errno == EINTR || errno == ECONNABORTED) continue;
    if (fd_ < 0 || errno == EINVAL || errno == EBADF) return nullptr;
    throw ChannelError(std::string("accept: ") + std::strerror(errno));
  }
}

void TcpListener::close() {
  const int fd = fd_.exchange(-1);
  if (fd < 0) return;
  ::shutdown(fd, SHUT_RDWR);
  ::close(fd);
}

std::pair<std::string, std::uint16_t> split_host_port(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon + 1 == address.size()) {
    throw UsageError("expected host:port, got '" + address + "'");
  }
  std::string host = address.substr(0, colon);
  if (host.size() >= 2 && host.front() == '[' && host.back() == ']') {
    host = host.substr(1, host.size() - 2);
  }
  if (host.empty()) host = "127.0.0.1";
  unsigned port = 0;
  const char* first = address.data() + colon + 1;
  const char* last = address.data() + address.size();
  const auto [p, ec] = std::from_chars(first, last, port);
  if (ec != std::errc() || p != last || port > 65535) {
    throw UsageError("bad port in '" + address + "'");
  }
  return {host, static_cast<std::uint16_t>(port)};
}

std::string serve_connection(Channel& channel, FrameHandler& handler) {
  std::vector<Frame> out;
  while (true) {
    Frame in;
    try {
      in = channel.receive();
    } catch (const ClosedChannel&) {
      return {};
    }
    out.clear();
    const bool ok = serve_frame(handler, in, out);
    for (const auto& f : out) channel.send(f);
    if (!ok) return decode_error(out.back());
  }
}

}  // namespace rbi
