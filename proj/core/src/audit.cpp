#include "rbi/audit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <unordered_map>
#include <unordered_set>

#include "rbi/error.hpp"
#include "rbi/rbi_codec.hpp"

namespace rbi {
namespace {

constexpr std::uint64_t kPrime = (std::uint64_t{1} << 61) - 1;

std::uint64_t mod_reduce(unsigned __int128 x) {
  std::uint64_t r = static_cast<std::uint64_t>(x & kPrime) + static_cast<std::uint64_t>(x >> 61);
  r = (r & kPrime) + (r >> 61);
  return r >= kPrime ? r - kPrime : r;
}

std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
  return mod_reduce(static_cast<unsigned __int128>(a) * b);
}

std::uint64_t sub(std::uint64_t a, std::uint64_t b) { return a >= b ? a - b : a + kPrime - b; }

std::uint64_t to_field(std::int64_t v) {
  const auto m = static_cast<std::int64_t>(kPrime);
  std::int64_t r = v % m;
  if (r < 0) r += m;
  return static_cast<std::uint64_t>(r);
}

std::uint64_t inverse(std::uint64_t a) {
  std::uint64_t result = 1;
  std::uint64_t e = kPrime - 2;
  while (e != 0) {
    if (e & 1U) result = mul(result, a);
    a = mul(a, a);
    e >>= 1;
  }
  return result;
}

// Row-echelon basis built one equation at a time.
class Eliminator {
 public:
  explicit Eliminator(int columns) : cols_(columns), pivot_row_(static_cast<std::size_t>(columns), -1) {}

  void add(std::vector<std::uint64_t> row) {
    // Last entry is the right-hand side.
    for (int c = 0; c < cols_; ++c) {
      if (row[static_cast<std::size_t>(c)] == 0) continue;
      const int p = pivot_row_[static_cast<std::size_t>(c)];
      if (p < 0) {
        const auto inv = inverse(row[static_cast<std::size_t>(c)]);
        for (auto& v : row) v = mul(v, inv);
        pivot_row_[static_cast<std::size_t>(c)] = static_cast<int>(basis_.size());
        basis_.push_back(std::move(row));
        return;
      }
      const auto f = row[static_cast<std::size_t>(c)];
      const auto& b = basis_[static_cast<std::size_t>(p)];
      for (std::size_t k = static_cast<std::size_t>(c); k < row.size(); ++k) {
        if (b[k] != 0) row[k] = sub(row[k], mul(f, b[k]));
      }
    }
    if (row.back() != 0) consistent_ = false;
  }

  int rank() const { return static_cast<int>(basis_.size()); }
  bool consistent() const { return consistent_; }

 private:
  int cols_;
  std::vector<int> pivot_row_;
  std::vector<std::vector<std::uint64_t>> basis_;
  bool consistent_ = true;
};

struct WindowRecord {
  std::optional<WindowBasesMsg> bases;
  std::optional<SecretWindowRecord> secret;
  std::optional<StageResponsesMsg> first_stage;
  int stages = 0;
  std::size_t order = 0;
};

std::vector<BitPlane> unpack(const WindowBasesMsg& msg, int w, int h) {
  const BitPlane probe(w, h);
  const auto bytes = probe.serialized_size();
  if (msg.packed.size() != bytes * msg.planes) throw CorruptBaseImages("plane payload size");
  std::vector<BitPlane> planes;
  const std::span<const std::uint8_t> packed(msg.packed);
  for (std::size_t m = 0; m < msg.planes; ++m) {
    planes.push_back(BitPlane::deserialize(packed.subspan(m * bytes, bytes), w, h));
  }
  return planes;
}

std::uint64_t fnv(std::span<const std::uint8_t> b) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto c : b) h = (h ^ c) * 1099511628211ULL;
  return h;
}

}  // namespace

RankResult modular_rank(const std::vector<std::vector<std::int64_t>>& rows,
                        const std::vector<std::int64_t>& rhs, int columns) {
  Eliminator e(columns);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<std::uint64_t> row(static_cast<std::size_t>(columns) + 1);
    for (int c = 0; c < columns; ++c) row[static_cast<std::size_t>(c)] = to_field(rows[i][static_cast<std::size_t>(c)]);
    row.back() = to_field(rhs[i]);
    e.add(std::move(row));
  }
  return {e.rank(), e.consistent()};
}

AuditReport audit_transcript(const Transcript& transcript) {
  if (!transcript.debug()) throw AuditUnavailable("transcript was not recorded in debug mode");

  AuditReport rep;
  std::unordered_map<std::uint64_t, WindowRecord> windows;
  std::optional<HelloAckMsg> ack;
  for (const auto& e : transcript.entries()) {
    const Frame f{e.type, e.payload};
    switch (e.type) {
      case MessageType::kHelloAck:
        ack = decode_hello_ack(f);
        break;
      case MessageType::kWindowBases: {
        auto msg = decode_window_bases(f);
        auto& w = windows[msg.window_id];
        if (!w.bases) w.order = windows.size();
        w.bases = std::move(msg);
        break;
      }
      case MessageType::kStageResponses: {
        auto msg = decode_stage_responses(f);
        auto& w = windows[msg.window_id];
        ++w.stages;
        if (msg.stage == 0) w.first_stage = std::move(msg);
        break;
      }
      case MessageType::kSecretWindow: {
        auto rec = decode_secret_window(f);
        windows[rec.window_id].secret = std::move(rec);
        break;
      }
      default:
        break;
    }
  }

  std::vector<const WindowRecord*> ordered;
  for (const auto& [id, w] : windows) {
    if (w.bases) ordered.push_back(&w);
    if (w.secret) ++rep.secret_windows;
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const WindowRecord* a, const WindowRecord* b) { return a->order < b->order; });
  rep.windows = ordered.size();

  // Magnitude leak.
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (const auto* w : ordered) {
    if (!w->secret) continue;
    rep.magnitude_available = true;
    const auto& sec = w->secret->window;
    const auto planes = unpack(*w->bases, sec.width, sec.height);
    const auto& perm = w->secret->permutation;
    if (perm.size() != planes.size()) throw CorruptBaseImages("permutation does not match planes");
    for (int i = 0; i < sec.width * sec.height; ++i) {
      int count = 0;
      for (std::size_t m = 0; m < planes.size(); ++m) {
        if (!planes[m].test(i)) continue;
        if (perm[m] == 0) {
          ++rep.decoy_bits;
        } else {
          ++count;
        }
      }
      const double x = count;
      const double y = sec.pixels[static_cast<std::size_t>(i)];
      sx += x;
      sy += y;
      sxx += x * x;
      syy += y * y;
      sxy += x * y;
      ++rep.count_histogram[count];
      ++rep.pixels;
    }
  }
  if (rep.pixels > 0) {
    const double n = static_cast<double>(rep.pixels);
    const double vx = sxx - sx * sx / n;
    const double vy = syy - sy * sy / n;
    if (vx > 1e-9 && vy > 1e-9) {
      rep.correlation = (sxy - sx * sy / n) / std::sqrt(vx * vy);
      rep.magnitude_signal = std::abs(rep.correlation) > 1e-6;
    }
  }

  // Plaintext scan.
  std::unordered_map<std::uint64_t, std::vector<std::span<const std::uint8_t>>> probes;
  for (const auto* w : ordered) {
    if (!w->secret) continue;
    rep.plaintext_available = true;
    const std::span<const std::uint8_t> px(w->secret->window.pixels);
    const auto len = std::min(kPlaintextProbe, px.size());
    for (std::size_t i = 0; i + len <= px.size(); ++i) {
      const auto sub = px.subspan(i, len);
      std::unordered_set<std::uint8_t> distinct(sub.begin(), sub.end());
      // Runs of a few byte values turn up in any binary payload.
      if (distinct.size() < 4) {
        ++rep.substrings_skipped;
        continue;
      }
      ++rep.substrings_checked;
      probes[fnv(sub)].push_back(sub);
    }
  }
  if (!probes.empty()) {
    const auto len = probes.begin()->second.front().size();
    for (const auto& e : transcript.entries()) {
      if (e.direction == Direction::kLocal) continue;
      ++rep.payloads_scanned;
      const std::span<const std::uint8_t> p(e.payload);
      for (std::size_t i = 0; i + len <= p.size() && !rep.plaintext_found; ++i) {
        const auto it = probes.find(fnv(p.subspan(i, len)));
        if (it == probes.end()) continue;
        for (const auto& s : it->second) {
          if (std::equal(s.begin(), s.end(), p.begin() + static_cast<std::ptrdiff_t>(i))) {
            rep.plaintext_found = true;
          }
        }
      }
    }
  }

  // Stage progression.
  std::size_t total_stages = 0;
  for (const auto* w : ordered) {
    ++rep.stages_histogram[w->stages];
    total_stages += static_cast<std::size_t>(w->stages);
  }
  if (!ordered.empty()) rep.mean_stages = static_cast<double>(total_stages) / ordered.size();

  // Filter recovery from the first windows' stage-0 equations.
  int w = 0, h = 0;
  if (ack) {
    w = ack->window_width;
    h = ack->window_height;
  } else {
    for (const auto* r : ordered) {
      if (r->secret) {
        w = r->secret->window.width;
        h = r->secret->window.height;
        break;
      }
    }
  }
  std::vector<const WindowRecord*> eq;
  for (const auto* r : ordered) {
    if (r->first_stage && static_cast<int>(eq.size()) < kRankWindows) eq.push_back(r);
  }
  if (w > 0 && !eq.empty()) {
    const auto planes_m = eq.front()->bases->planes;
    const auto slots = eq.front()->first_stage->values.size() / std::max<std::size_t>(planes_m, 1);
    bool shapes_agree = planes_m > 0;
    for (const auto* r : eq) {
      if (r->bases->planes != planes_m || r->first_stage->values.size() != slots * planes_m) {
        shapes_agree = false;
      }
    }
    if (shapes_agree) {
      rep.rank_available = true;
      rep.rank_windows = static_cast<int>(eq.size());
      rep.unknowns = w * h;
      rep.slots = static_cast<int>(slots);
      rep.min_rank = rep.unknowns;
      std::vector<std::vector<BitPlane>> unpacked;
      for (const auto* r : eq) unpacked.push_back(unpack(*r->bases, w, h));
      for (std::size_t n = 0; n < slots; ++n) {
        Eliminator e(rep.unknowns);
        for (std::size_t k = 0; k < eq.size(); ++k) {
          for (std::size_t m = 0; m < planes_m; ++m) {
            std::vector<std::uint64_t> row(static_cast<std::size_t>(rep.unknowns) + 1, 0);
            for (int i = 0; i < rep.unknowns; ++i) row[static_cast<std::size_t>(i)] = unpacked[k][m].test(i) ? 1 : 0;
            row.back() = to_field(eq[k]->first_stage->values[n * planes_m + m]);
            e.add(std::move(row));
          }
        }
        rep.min_rank = std::min(rep.min_rank, e.rank());
        if (e.consistent()) ++rep.consistent_slots;
      }
    }
  }
  return rep;
}

std::string AuditReport::text() const {
  std::string out;
  char line[256];
  auto add = [&](const char* s) {
    out += s;
    out += '\n';
  };
  std::snprintf(line, sizeof line, "windows: %zu (%zu with client secrets)", windows, secret_windows);
  add(line);

  if (!magnitude_available) {
    add("magnitude: unavailable (no client secrets in transcript)");
  } else if (!magnitude_signal) {
    std::snprintf(line, sizeof line, "no magnitude signal: set-plane count constant over %zu pixels",
                  pixels);
    add(line);
  } else {
    std::snprintf(line, sizeof line,
                  "magnitude leak: pearson r = %.4f between set-plane count and pixel value over %zu pixels",
                  correlation, pixels);
    add(line);
  }
  if (magnitude_available) {
    std::string hist = "set-plane count histogram:";
    for (const auto& [c, n] : count_histogram) hist += " " + std::to_string(c) + ":" + std::to_string(n);
    add(hist.c_str());
    std::snprintf(line, sizeof line, "plane 0 decoys %s: %zu bits", decoy_bits > 0 ? "present" : "absent",
                  decoy_bits);
    add(line);
  }

  if (!plaintext_available) {
    add("plaintext scan: unavailable (no client secrets in transcript)");
  } else if (plaintext_found) {
    std::snprintf(line, sizeof line, "PLAINTEXT WINDOW BYTES FOUND in transcript payloads");
    add(line);
  } else {
    std::snprintf(line, sizeof line,
                  "no plaintext window bytes: %zu payloads, %zu %zu-byte substrings checked, %zu low-entropy skipped",
                  payloads_scanned, substrings_checked, kPlaintextProbe, substrings_skipped);
    add(line);
  }

  std::string hist = "stages revealed per window:";
  for (const auto& [s, n] : stages_histogram) hist += " " + std::to_string(s) + ":" + std::to_string(n);
  add(hist.c_str());
  std::snprintf(line, sizeof line, "mean stages revealed: %.3f", mean_stages);
  add(line);

  if (!rank_available) {
    add("filter recovery: unavailable (no stage-0 responses)");
  } else if (filters_recoverable()) {
    std::snprintf(line, sizeof line, "filter bank recoverable: rank %d/%d (%d slots, %d windows)", min_rank,
                  unknowns, slots, rank_windows);
    add(line);
  } else if (alignment_ambiguity()) {
    std::snprintf(line, sizeof line,
                  "alignment ambiguity: %d/%d slots inconsistent across %d windows (rank %d/%d)",
                  slots - consistent_slots, slots, rank_windows, min_rank, unknowns);
    add(line);
  } else {
    std::snprintf(line, sizeof line, "filter bank partially constrained: rank %d/%d after %d windows", min_rank,
                  unknowns, rank_windows);
    add(line);
  }
  return out;
}

}  // namespace rbi
