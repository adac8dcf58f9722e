#pragma once

#include "mmvap/eval.hpp"
#include "mmvap/train.hpp"

namespace mmvap {

/// Events a given anchor scores: gap events for the mutual-silence and
/// end-of-turn anchors; for the pre-overlap anchor, overlap-shifts (scored
/// before the overlap onset) compared against holds scored at end-of-turn.
inline std::vector<std::pair<TurnEvent, WindowAnchor>> events_for_anchor(const SessionData& s,
                                                                         WindowAnchor anchor,
                                                                         double min_fto_s) {
  std::vector<std::pair<TurnEvent, WindowAnchor>> out;
  if (anchor == WindowAnchor::PreOverlap) {
    for (const auto& e : s.overlap_events) out.emplace_back(e, WindowAnchor::PreOverlap);
    for (const auto& e : s.gap_events)
      if (e.kind == EventKind::Hold && e.fto_s > min_fto_s + 1e-12)
        out.emplace_back(e, WindowAnchor::EndOfTurn);
  } else {
    for (const auto& e : s.gap_events)
      if (e.fto_s > min_fto_s + 1e-12) out.emplace_back(e, anchor);
  }
  return out;
}

/// Scores one event: the model is run on a causal context slice ending at the
/// window end, and the 10 shift probabilities of the window are summed.
inline ScoredEvent score_one_event(const nn::MmVapModel& model, const SessionData& s,
                                   const TurnEvent& e, WindowAnchor anchor) {
  EventWindow w = event_window(e, anchor, static_cast<double>(s.n_frames()) * kFrameDurS);
  long end = std::lround(w.t1 * kFrameRateHz);
  if (end > static_cast<long>(s.n_frames()))
    throw Error(ErrorCode::WindowOutOfSession, "window past end of streams");
  long start = std::max<long>(0, end - model.config().context_frames);
  long len = end - start;
  nn::ModelInput in;
  auto slice = [&](const nn::Mat& m) { return nn::Mat(m.middleRows(start, len)); };
  in.audio_a = slice(s.audio[0]);
  in.audio_b = slice(s.audio[1]);
  in.video_a = slice(s.video[0]);
  in.video_b = slice(s.video[1]);
  nn::Mat probs = model.infer(in);
  EventWindow local{w.t0 - static_cast<double>(start) * kFrameDurS,
                    w.t1 - static_cast<double>(start) * kFrameDurS};
  ScoredEvent se;
  se.score = score_event(probs, local, e.prev_speaker);
  se.is_shift = e.kind != EventKind::Hold;
  se.fto_s = e.fto_s;
  se.kind = e.kind;
  se.session_id = s.session_id;
  return se;
}

/// Scores every qualifying event of the given sessions, parallel over events.
inline std::vector<ScoredEvent> score_sessions(const nn::MmVapModel& model,
                                               const std::vector<const SessionData*>& sessions,
                                               WindowAnchor anchor, double min_fto_s,
                                               size_t n_threads = 0) {
  std::vector<std::pair<const SessionData*, std::pair<TurnEvent, WindowAnchor>>> work;
  for (const SessionData* s : sessions)
    for (const auto& ea : events_for_anchor(*s, anchor, min_fto_s)) work.emplace_back(s, ea);

  std::vector<ScoredEvent> out(work.size());
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::string error_msg;
  std::mutex err_mu;
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= work.size() || failed.load()) return;
      try {
        out[i] = score_one_event(model, *work[i].first, work[i].second.first,
                                 work[i].second.second);
      } catch (const std::exception& ex) {
        std::lock_guard<std::mutex> lk(err_mu);
        error_msg = ex.what();
        failed.store(true);
        return;
      }
    }
  };
  size_t hw = n_threads == 0 ? static_cast<size_t>(std::thread::hardware_concurrency()) : n_threads;
  size_t nt = std::max<size_t>(1, std::min(hw, work.size()));
  std::vector<std::thread> threads;
  for (size_t i = 0; i + 1 < nt; ++i) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (failed.load()) throw Error(ErrorCode::OutOfRange, "event scoring failed: " + error_msg);
  return out;
}

/// Per-session balanced accuracy at a fixed threshold; sessions where either
/// class is missing are skipped.
inline std::vector<std::pair<std::string, double>> per_session_bacc(
    const std::vector<ScoredEvent>& events, double thr) {
  std::map<std::string, std::vector<ScoredEvent>> by_session;
  for (const auto& e : events) by_session[e.session_id].push_back(e);
  std::vector<std::pair<std::string, double>> out;
  for (const auto& [sid, evs] : by_session) {
    try {
      out.emplace_back(sid, balanced_accuracy_at(evs, thr));
    } catch (const Error&) {
      continue;
    }
  }
  return out;
}

/// Full single-fold evaluation: thresholds from validation scores, metrics on
/// test scores, FTO curve, always-hold baseline, and significance tests.
inline EvalReport evaluate_fold(const nn::MmVapModel& model,
                                const std::vector<const SessionData*>& val_sessions,
                                const std::vector<const SessionData*>& test_sessions,
                                WindowAnchor anchor, double min_fto_s, size_t n_threads = 0) {
  std::vector<ScoredEvent> val = score_sessions(model, val_sessions, anchor, min_fto_s, n_threads);
  std::vector<ScoredEvent> test =
      score_sessions(model, test_sessions, anchor, min_fto_s, n_threads);
  EvalReport r = assemble_report(val, test);
  r.fusion = to_string(model.config().fusion);
  r.anchor = to_string(anchor);
  r.min_fto_s = min_fto_s;
  r.curve = fto_curve({FoldScores{val, test}}, default_fto_thresholds());

  // Paired t-test of per-session balanced accuracy against the always-hold
  // baseline's 0.5; degenerate (zero-variance) differences leave the field
  // unset.
  auto per_session = per_session_bacc(test, r.thr_bacc);
  if (per_session.size() >= 2) {
    std::vector<double> model_vals, base_vals;
    for (const auto& [sid, b] : per_session) {
      model_vals.push_back(b);
      base_vals.push_back(0.5);
    }
    try {
      r.significance.paired_t_p = paired_t_test(model_vals, base_vals).p;
    } catch (const Error&) {
    }
  }
  // MWU on the raw test score distributions, shifts vs holds.
  std::vector<double> shift_scores, hold_scores;
  for (const auto& e : test) (e.is_shift ? shift_scores : hold_scores).push_back(e.score);
  if (!shift_scores.empty() && !hold_scores.empty())
    r.significance.mwu_p = mann_whitney_u(shift_scores, hold_scores).p;
  return r;
}

}  // namespace mmvap
