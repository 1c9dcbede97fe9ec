#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rbi/channel.hpp"
#include "rbi/compare.hpp"
#include "rbi/detector.hpp"
#include "rbi/integral.hpp"
#include "rbi/rbi_codec.hpp"
#include "rbi/rng.hpp"
#include "rbi/transcript.hpp"
#include "rbi/wire.hpp"

namespace rbi {

inline constexpr std::int64_t kMaxBlind = std::int64_t{1} << 20;

// Bob's private view of one stage for one window: true and fake weak
// classifiers in a random order, each with a blind s_n.
struct ObfuscatedStage {
  std::vector<QuantizedWeak> slots;
  std::vector<std::int64_t> blinds;
  // Index into the original stage, or -1 for a fake.
  std::vector<int> origin;
  std::int64_t threshold = 0;

  std::size_t size() const { return slots.size(); }
  // Bob's operand in the final comparison. Alice's sum of blinded leaves
  // exceeds it exactly when the stage passes.
  std::int64_t final_operand() const;
};

// Fakes get a random two-rectangle feature inside the window, a threshold
// drawn from the stage's own threshold range and zero leaf values.
QuantizedWeak make_fake_classifier(const QuantizedStage& stage, int window_width,
                                   int window_height, Rng& rng);

ObfuscatedStage inject_fakes(const QuantizedStage& stage, int k, int window_width,
                             int window_height, Rng& rng);

// Response matrix of one stage: values[n * M + m] = F_m(n).
std::vector<std::int64_t> stage_responses(const ObfuscatedStage& stage,
                                          std::span<const PlaneIntegral> planes);

struct ServerConfig {
  std::shared_ptr<const QuantizedCascade> cascade;
  std::string cascade_id;  // empty: the cascade name
  int k_fakes = 0;
  // Fresh permutation, fakes and blinds for every window. Turning this off
  // reuses one obfuscation per stage for the whole session.
  bool reshuffle = true;
  Seed seed{};
};

struct ServerCounters {
  std::uint64_t windows = 0;
  std::uint64_t stage_runs = 0;
  std::uint64_t slot_runs = 0;
  std::uint64_t integral_builds = 0;
  std::uint64_t feature_lookups = 0;
  std::uint64_t comparisons = 0;
  std::uint64_t transfers = 0;
  std::uint64_t integral_ns = 0;
  std::uint64_t response_ns = 0;
  std::uint64_t compare_ns = 0;
};

// Bob. Reacts to one frame at a time; owns all of its secrets.
class BobSession final : public FrameHandler {
 public:
  explicit BobSession(ServerConfig config);
  ~BobSession() override;

  void on_frame(const Frame& in, std::vector<Frame>& out) override;

  const ServerCounters& counters() const { return counters_; }
  HelloAckMsg announcement() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  ServerCounters counters_;
};

struct ClientConfig {
  std::string cascade_id;  // empty: whatever the server runs
  int planes = kDefaultPlaneCount;
  StageMode mode = StageMode::kShortCircuit;
  CompareOptions compare;
  Seed seed{};
  // When set and in debug mode, window pixels and plane permutations are
  // logged as local records for the audit.
  Transcript* secrets = nullptr;
};

struct WindowVerdict {
  std::uint64_t window_id = 0;
  bool accepted = false;
  int stages_run = 0;
  // 1-based index of the first failing stage, or the stage count.
  int stage_reached = 0;
};

struct ClientCounters {
  std::uint64_t windows = 0;
  std::uint64_t stages = 0;
  std::uint64_t comparisons = 0;
  std::uint64_t transfers = 0;
  std::uint64_t factorize_ns = 0;
  std::uint64_t recombine_ns = 0;
  std::uint64_t compare_ns = 0;
  std::uint64_t wait_ns = 0;  // upload plus waiting for stage responses
};

// Alice. The constructor runs the handshake.
class AliceSession {
 public:
  AliceSession(Channel& channel, ClientConfig config);
  ~AliceSession();

  int window_width() const { return ack_.window_width; }
  int window_height() const { return ack_.window_height; }
  int stage_count() const { return static_cast<int>(ack_.announced.size()); }
  const std::vector<std::uint16_t>& announced() const { return ack_.announced; }
  const ClientConfig& config() const { return config_; }
  const ClientCounters& counters() const { return counters_; }
  Rng& rng() { return rng_; }

  // window must be exactly window_width() x window_height().
  WindowVerdict run_window(const GrayImage& window, std::uint64_t window_id);

 private:
  Channel& channel_;
  ClientConfig config_;
  Rng rng_;
  std::unique_ptr<ComparisonClient> compare_;
  HelloAckMsg ack_;
  std::uint32_t next_id_ = 0;
  ClientCounters counters_;
};

// Runs one window under a fresh random id.
WindowVerdict alice_run_window(AliceSession& session, const GrayImage& window);

struct SecureScan {
  std::vector<Detection> detections;  // grouped like detect()
  std::vector<Detection> raw;
  std::vector<std::uint64_t> submission_ids;  // in submission order
  std::vector<std::uint32_t> submission_order;  // window indices, same order
  std::size_t windows = 0;
};

// Enumerates windows as the plain detector does, submits them in a random
// order under random ids and groups the accepted boxes. With several
// sessions the windows are dealt round-robin, one thread per session.
SecureScan alice_detect_secure(const GrayImage& img, const DetectParams& params,
                               std::span<AliceSession* const> sessions);
SecureScan alice_detect_secure(const GrayImage& img, const DetectParams& params,
                               AliceSession& session);

// Accepts connections until listener.close(); one thread and one BobSession
// per connection. on_session_end receives each session's counters.
void serve(TcpListener& listener, const ServerConfig& config,
           const std::function<void(std::uint64_t session, const ServerCounters&,
                                    const ChannelStats&, const std::string& error)>& on_session_end);

}  // namespace rbi
