#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mmvap/error.hpp"

namespace mmvap {

constexpr double kFrameRateHz = 50.0;
constexpr double kFrameDurS = 1.0 / kFrameRateHz;

enum class Speaker : uint8_t { A = 0, B = 1 };

inline Speaker other(Speaker s) { return s == Speaker::A ? Speaker::B : Speaker::A; }

inline char speaker_char(Speaker s) { return s == Speaker::A ? 'a' : 'b'; }

struct WordAlignment {
  std::string word;
  double start_s = 0.0;
  double end_s = 0.0;
};

/// Binary voice activity at 50 Hz; frame i covers [i*20ms, (i+1)*20ms).
struct VaStream {
  std::vector<uint8_t> frames;

  size_t size() const { return frames.size(); }
  bool active(size_t i) const { return frames[i] != 0; }
  double duration_s() const { return static_cast<double>(frames.size()) * kFrameDurS; }

  /// Any active frame with index in [lo, hi)?
  bool any_active(size_t lo, size_t hi) const {
    hi = std::min(hi, frames.size());
    for (size_t i = lo; i < hi; ++i)
      if (frames[i]) return true;
    return false;
  }
};

struct DyadVa {
  VaStream a;
  VaStream b;

  DyadVa() = default;
  DyadVa(VaStream va, VaStream vb) : a(std::move(va)), b(std::move(vb)) {
    if (a.size() != b.size())
      throw Error(ErrorCode::ShapeMismatch, "DyadVa channels differ in length");
  }

  size_t n_frames() const { return a.size(); }
  double duration_s() const { return a.duration_s(); }
  const VaStream& channel(Speaker s) const { return s == Speaker::A ? a : b; }
};

inline size_t frames_for_duration(double duration_s) {
  return static_cast<size_t>(std::ceil(duration_s * kFrameRateHz - 1e-9));
}

/// Frame is active iff its midpoint lies inside any [start, end) word interval.
inline VaStream va_from_words(const std::vector<WordAlignment>& words, double duration_s) {
  for (const auto& w : words) {
    if (w.end_s > duration_s + 1e-9)
      throw Error(ErrorCode::WordBeyondDuration,
                  "word '" + w.word + "' ends at " + std::to_string(w.end_s) +
                      " beyond session duration " + std::to_string(duration_s));
  }
  VaStream out;
  out.frames.assign(frames_for_duration(duration_s), 0);
  for (const auto& w : words) {
    // First frame whose midpoint (i + 0.5)*dt >= start, last with midpoint < end.
    long first = static_cast<long>(std::ceil(w.start_s * kFrameRateHz - 0.5 - 1e-9));
    long last = static_cast<long>(std::ceil(w.end_s * kFrameRateHz - 0.5 - 1e-9));  // exclusive
    first = std::max(first, 0L);
    last = std::min(last, static_cast<long>(out.frames.size()));
    for (long i = first; i < last; ++i) out.frames[static_cast<size_t>(i)] = 1;
  }
  return out;
}

enum class IntervalKind : uint8_t { MutualSilence, Overlap, SoloA, SoloB };

inline const char* to_string(IntervalKind k) {
  switch (k) {
    case IntervalKind::MutualSilence: return "mutual_silence";
    case IntervalKind::Overlap: return "overlap";
    case IntervalKind::SoloA: return "solo_a";
    case IntervalKind::SoloB: return "solo_b";
  }
  return "?";
}

struct Interval {
  double start_s = 0.0;
  double end_s = 0.0;
  IntervalKind kind = IntervalKind::MutualSilence;
  // Frame indices, [first, last).
  size_t first_frame = 0;
  size_t last_frame = 0;
};

inline IntervalKind frame_kind(bool a, bool b) {
  if (a && b) return IntervalKind::Overlap;
  if (a) return IntervalKind::SoloA;
  if (b) return IntervalKind::SoloB;
  return IntervalKind::MutualSilence;
}

/// Partition the timeline into maximal runs of identical per-frame state.
inline std::vector<Interval> classify_intervals(const DyadVa& dyad) {
  std::vector<Interval> out;
  const size_t n = dyad.n_frames();
  size_t i = 0;
  while (i < n) {
    IntervalKind k = frame_kind(dyad.a.active(i), dyad.b.active(i));
    size_t j = i + 1;
    while (j < n && frame_kind(dyad.a.active(j), dyad.b.active(j)) == k) ++j;
    out.push_back({static_cast<double>(i) * kFrameDurS, static_cast<double>(j) * kFrameDurS, k, i, j});
    i = j;
  }
  return out;
}

struct WindowActivity {
  bool a_active = false;
  bool b_active = false;
};

inline WindowActivity window_speakers(const DyadVa& dyad, double t_start, double t_end) {
  if (t_start < -1e-9 || t_end > dyad.duration_s() + 1e-9 || !(t_start < t_end))
    throw Error(ErrorCode::OutOfRange, "window outside session");
  size_t lo = static_cast<size_t>(std::max(0.0, std::floor(t_start * kFrameRateHz + 1e-9)));
  size_t hi = static_cast<size_t>(std::ceil(t_end * kFrameRateHz - 1e-9));
  return {dyad.a.any_active(lo, hi), dyad.b.any_active(lo, hi)};
}

/// Run-length encoding for the debug JSON export.
struct VaRun {
  double start_s;
  double end_s;
  bool active;
};

inline std::vector<VaRun> run_length_encode(const VaStream& va) {
  std::vector<VaRun> out;
  size_t i = 0;
  while (i < va.size()) {
    bool v = va.active(i);
    size_t j = i + 1;
    while (j < va.size() && va.active(j) == v) ++j;
    out.push_back({static_cast<double>(i) * kFrameDurS, static_cast<double>(j) * kFrameDurS, v});
    i = j;
  }
  return out;
}

}  // namespace mmvap
