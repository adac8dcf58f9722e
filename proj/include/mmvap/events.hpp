#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mmvap/va.hpp"

namespace mmvap {

enum class EventKind : uint8_t { Hold, Shift, OverlapShift };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::Hold: return "hold";
    case EventKind::Shift: return "shift";
    case EventKind::OverlapShift: return "overlap_shift";
  }
  return "?";
}

struct TurnEvent {
  EventKind kind = EventKind::Hold;
  Speaker prev_speaker = Speaker::A;
  Speaker next_speaker = Speaker::A;
  double fto_s = 0.0;        // negative for overlap
  double gap_start_s = 0.0;  // end of previous speech (overlap onset for overlap_shift)
  double gap_end_s = 0.0;    // start of next speech (overlap end for overlap_shift)
  std::string session_id;
};

constexpr size_t kEventWindowFrames = 50;  // 1 s of context each side

namespace detail {

inline std::optional<Speaker> sole_speaker(const DyadVa& dyad, size_t lo, size_t hi) {
  bool a = dyad.a.any_active(lo, hi);
  bool b = dyad.b.any_active(lo, hi);
  if (a == b) return std::nullopt;
  return a ? Speaker::A : Speaker::B;
}

}  // namespace detail

/// Holds and shifts at mutual silences longer than min_fto. A silence qualifies
/// when exactly one speaker is active in the 1 s before and the 1 s after it,
/// the pre speaker is active in the frame adjacent to the silence onset, and
/// the post speaker is active in the frame at the silence end. Silences whose
/// context windows extend past the session edges are dropped.
inline std::vector<TurnEvent> extract_gap_events(const DyadVa& dyad, double min_fto_s) {
  if (min_fto_s < 0.0) throw Error(ErrorCode::OutOfRange, "min_fto must be >= 0");
  std::vector<TurnEvent> out;
  const size_t n = dyad.n_frames();
  for (const Interval& iv : classify_intervals(dyad)) {
    if (iv.kind != IntervalKind::MutualSilence) continue;
    double dur = static_cast<double>(iv.last_frame - iv.first_frame) * kFrameDurS;
    if (!(dur > min_fto_s + 1e-12)) continue;
    if (iv.first_frame < kEventWindowFrames || iv.last_frame + kEventWindowFrames > n) continue;
    auto pre = detail::sole_speaker(dyad, iv.first_frame - kEventWindowFrames, iv.first_frame);
    auto post = detail::sole_speaker(dyad, iv.last_frame, iv.last_frame + kEventWindowFrames);
    if (!pre || !post) continue;
    if (!dyad.channel(*pre).active(iv.first_frame - 1)) continue;
    if (!dyad.channel(*post).active(iv.last_frame)) continue;
    TurnEvent ev;
    ev.kind = (*pre == *post) ? EventKind::Hold : EventKind::Shift;
    ev.prev_speaker = *pre;
    ev.next_speaker = *post;
    ev.gap_start_s = iv.start_s;
    ev.gap_end_s = iv.end_s;
    ev.fto_s = iv.end_s - iv.start_s;
    out.push_back(ev);
  }
  return out;
}

/// Shifts initiated inside overlapping speech. An overlap longer than
/// min_overlap counts when exactly one speaker was active in the 1 s before
/// its onset and the interrupting speaker holds the floor alone for the full
/// 1 s after the overlap ends (backchannels are excluded).
inline std::vector<TurnEvent> extract_overlap_shifts(const DyadVa& dyad,
                                                     double min_overlap_s = 0.25) {
  std::vector<TurnEvent> out;
  const size_t n = dyad.n_frames();
  for (const Interval& iv : classify_intervals(dyad)) {
    if (iv.kind != IntervalKind::Overlap) continue;
    double dur = static_cast<double>(iv.last_frame - iv.first_frame) * kFrameDurS;
    if (!(dur > min_overlap_s + 1e-12)) continue;
    if (iv.first_frame < kEventWindowFrames || iv.last_frame + kEventWindowFrames > n) continue;
    auto pre = detail::sole_speaker(dyad, iv.first_frame - kEventWindowFrames, iv.first_frame);
    if (!pre) continue;
    Speaker interrupter = other(*pre);
    // Sole active throughout the post window: the previous speaker is silent
    // and the interrupter speaks from the first post-overlap frame onward.
    if (dyad.channel(*pre).any_active(iv.last_frame, iv.last_frame + kEventWindowFrames)) continue;
    if (!dyad.channel(interrupter).active(iv.last_frame)) continue;
    TurnEvent ev;
    ev.kind = EventKind::OverlapShift;
    ev.prev_speaker = *pre;
    ev.next_speaker = interrupter;
    ev.gap_start_s = iv.start_s;
    ev.gap_end_s = iv.end_s;
    ev.fto_s = -dur;
    ev.session_id.clear();
    out.push_back(ev);
  }
  return out;
}

struct EventGroup {
  double min_fto_s = 0.0;
  std::vector<TurnEvent> events;

  size_t count(EventKind k) const {
    size_t c = 0;
    for (const auto& e : events)
      if (e.kind == k) ++c;
    return c;
  }
  size_t n_shifts() const { return count(EventKind::Shift) + count(EventKind::OverlapShift); }
  size_t n_holds() const { return count(EventKind::Hold); }
};

/// One group per threshold; membership is fto > threshold. A negative
/// threshold additionally admits every overlap_shift.
inline std::vector<EventGroup> group_by_min_fto(const std::vector<TurnEvent>& events,
                                                const std::vector<double>& thresholds) {
  std::vector<EventGroup> out;
  for (double thr : thresholds) {
    EventGroup g;
    g.min_fto_s = thr;
    for (const auto& e : events) {
      bool member = e.fto_s > thr + 1e-12;
      if (thr < 0.0 && e.kind == EventKind::OverlapShift) member = true;
      if (member) g.events.push_back(e);
    }
    out.push_back(std::move(g));
  }
  return out;
}

struct GroupStatistics {
  double min_fto_s = 0.0;
  size_t n_shifts = 0;
  size_t n_holds = 0;
  double shifts_per_min = 0.0;
  double holds_per_min = 0.0;
  std::optional<double> shift_proportion;  // #shifts / #holds; absent when holds == 0
};

inline std::vector<GroupStatistics> corpus_statistics(const std::vector<EventGroup>& groups,
                                                      double total_minutes) {
  if (!(total_minutes > 0.0)) throw Error(ErrorCode::OutOfRange, "total_minutes must be > 0");
  std::vector<GroupStatistics> out;
  for (const auto& g : groups) {
    GroupStatistics s;
    s.min_fto_s = g.min_fto_s;
    s.n_shifts = g.n_shifts();
    s.n_holds = g.n_holds();
    s.shifts_per_min = static_cast<double>(s.n_shifts) / total_minutes;
    s.holds_per_min = static_cast<double>(s.n_holds) / total_minutes;
    if (s.n_holds > 0)
      s.shift_proportion = static_cast<double>(s.n_shifts) / static_cast<double>(s.n_holds);
    else if (s.n_shifts == 0)
      s.shift_proportion = 0.0;
    out.push_back(s);
  }
  return out;
}

}  // namespace mmvap
