#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mmvap/va.hpp"

namespace mmvap {

// Two speakers x four projection bins over the next 2 s at 50 Hz.
constexpr size_t kVapStates = 256;
constexpr size_t kVapBins = 4;
constexpr size_t kProjectionFrames = 100;

/// Frame spans of the four bins (0-200, 200-600, 600-1200, 1200-2000 ms).
constexpr std::array<size_t, kVapBins> bin_frame_counts() { return {10, 20, 30, 40}; }

constexpr std::array<size_t, kVapBins> bin_frame_offsets() { return {0, 10, 30, 60}; }

struct VapState {
  uint8_t index = 0;

  /// Bit layout: speaker-major, bin-minor. bit(s, b) = index >> (4*s + b) & 1.
  bool bit(Speaker s, size_t bin) const {
    return (index >> (4 * static_cast<size_t>(s) + bin)) & 1u;
  }
};

inline std::array<std::array<bool, kVapBins>, 2> decode_state(unsigned index) {
  if (index >= kVapStates) throw Error(ErrorCode::OutOfRange, "VAP state index > 255");
  std::array<std::array<bool, kVapBins>, 2> bins{};
  for (size_t s = 0; s < 2; ++s)
    for (size_t b = 0; b < kVapBins; ++b) bins[s][b] = (index >> (4 * s + b)) & 1u;
  return bins;
}

inline VapState state_from_bits(const std::array<std::array<bool, kVapBins>, 2>& bins) {
  unsigned idx = 0;
  for (size_t s = 0; s < 2; ++s)
    for (size_t b = 0; b < kVapBins; ++b)
      if (bins[s][b]) idx |= 1u << (4 * s + b);
  return VapState{static_cast<uint8_t>(idx)};
}

/// Index permutation induced by swapping speakers A and B.
inline uint8_t swap_speakers(uint8_t index) {
  return static_cast<uint8_t>(((index & 0x0F) << 4) | (index >> 4));
}

/// Bin label is 1 when at least half the bin's frames contain speech.
inline VapState encode_window(const std::vector<uint8_t>& future_a,
                              const std::vector<uint8_t>& future_b) {
  if (future_a.size() != kProjectionFrames || future_b.size() != kProjectionFrames)
    throw Error(ErrorCode::WrongLength, "projection window must be exactly 100 frames");
  std::array<std::array<bool, kVapBins>, 2> bins{};
  const auto counts = bin_frame_counts();
  const auto offsets = bin_frame_offsets();
  for (size_t s = 0; s < 2; ++s) {
    const auto& f = (s == 0) ? future_a : future_b;
    for (size_t b = 0; b < kVapBins; ++b) {
      size_t active = 0;
      for (size_t i = 0; i < counts[b]; ++i)
        if (f[offsets[b] + i]) ++active;
      bins[s][b] = 2 * active >= counts[b];
    }
  }
  return state_from_bits(bins);
}

struct SessionLabels {
  std::vector<uint8_t> states;  // one per frame
  std::vector<uint8_t> valid;   // 1 where a full 2 s future exists
};

/// Label at frame t encodes frames (t, t+100]; the trailing 100 frames have no
/// full future and are masked invalid.
inline SessionLabels labels_for_session(const DyadVa& dyad) {
  const size_t n = dyad.n_frames();
  if (n < kProjectionFrames) throw Error(ErrorCode::SessionTooShort, "session shorter than 2 s");
  SessionLabels out;
  out.states.assign(n, 0);
  out.valid.assign(n, 0);
  std::vector<uint8_t> wa(kProjectionFrames), wb(kProjectionFrames);
  for (size_t t = 0; t + kProjectionFrames < n; ++t) {
    for (size_t i = 0; i < kProjectionFrames; ++i) {
      wa[i] = dyad.a.frames[t + 1 + i];
      wb[i] = dyad.b.frames[t + 1 + i];
    }
    out.states[t] = encode_window(wa, wb).index;
    out.valid[t] = 1;
  }
  return out;
}

struct VapDistribution {
  std::array<double, kVapStates> probs{};
};

inline void validate(const VapDistribution& dist) {
  double sum = 0.0;
  for (double p : dist.probs) {
    if (p < -1e-12) throw Error(ErrorCode::InvalidDistribution, "negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw Error(ErrorCode::InvalidDistribution, "probabilities do not sum to 1");
}

/// Marginal probability that the non-active speaker is speaking in both of the
/// 600-1200 and 1200-2000 ms bins.
inline double shift_probability(const VapDistribution& dist, Speaker active) {
  validate(dist);
  Speaker listener = other(active);
  double p = 0.0;
  for (size_t i = 0; i < kVapStates; ++i) {
    VapState st{static_cast<uint8_t>(i)};
    if (st.bit(listener, 2) && st.bit(listener, 3)) p += dist.probs[i];
  }
  return p;
}

}  // namespace mmvap
