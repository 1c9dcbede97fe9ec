#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>

#include "rbi/transcript.hpp"

namespace rbi {

struct AuditReport {
  std::size_t windows = 0;
  std::size_t secret_windows = 0;

  // Set-plane count vs pixel value over planes with nonzero weight.
  bool magnitude_available = false;
  bool magnitude_signal = false;
  double correlation = 0.0;
  std::size_t pixels = 0;
  std::map<int, std::size_t> count_histogram;
  std::size_t decoy_bits = 0;

  // Plaintext window bytes in any payload.
  bool plaintext_available = false;
  bool plaintext_found = false;
  std::size_t payloads_scanned = 0;
  std::size_t substrings_checked = 0;
  std::size_t substrings_skipped = 0;

  // Stage responses received per window.
  std::map<int, std::size_t> stages_histogram;
  double mean_stages = 0.0;

  // Rank of the stacked (plane, response) equations for first-stage slots.
  bool rank_available = false;
  int rank_windows = 0;
  int unknowns = 0;
  int min_rank = 0;
  int slots = 0;
  int consistent_slots = 0;

  bool filters_recoverable() const {
    return rank_available && slots > 0 && consistent_slots == slots && min_rank == unknowns;
  }
  bool alignment_ambiguity() const { return rank_available && consistent_slots < slots; }

  std::string text() const;
};

inline constexpr std::size_t kPlaintextProbe = 64;
inline constexpr int kRankWindows = 3;

// Throws AuditUnavailable unless the transcript was recorded in debug mode.
AuditReport audit_transcript(const Transcript& transcript);

// Rank over GF(2^61 - 1) of the augmented and plain systems; exposed for tests.
struct RankResult {
  int rank = 0;
  bool consistent = true;
};
RankResult modular_rank(const std::vector<std::vector<std::int64_t>>& rows,
                        const std::vector<std::int64_t>& rhs, int columns);

}  // namespace rbi
