#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "mmvap/corpus_io.hpp"
#include "mmvap/events.hpp"
#include "mmvap/features.hpp"
#include "mmvap/stats.hpp"
#include "mmvap/vap.hpp"

namespace mmvap {

// ---------------------------------------------------------------------------
// Deterministic number formatting (shortest round-trip) for text artifacts
// ---------------------------------------------------------------------------

inline std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error(ErrorCode::IoError, "number formatting failed");
  return {buf, ptr};
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw Error(ErrorCode::SchemaViolation, "bad number: '" + s + "'");
  return v;
}

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Events CSV
// ---------------------------------------------------------------------------

inline constexpr const char* kEventsCsvHeader =
    "session_id,kind,prev_speaker,next_speaker,fto_s,gap_start_s,gap_end_s";

inline void write_events_csv(const fs::path& path, const std::vector<TurnEvent>& events) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << kEventsCsvHeader << "\n";
  for (const auto& e : events)
    out << e.session_id << ',' << to_string(e.kind) << ',' << speaker_char(e.prev_speaker) << ','
        << speaker_char(e.next_speaker) << ',' << fmt_double(e.fto_s) << ','
        << fmt_double(e.gap_start_s) << ',' << fmt_double(e.gap_end_s) << "\n";
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

inline std::vector<TurnEvent> read_events_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::string line;
  if (!std::getline(in, line) || line != kEventsCsvHeader)
    throw Error(ErrorCode::SchemaViolation, "bad events CSV header in " + path.string());
  std::vector<TurnEvent> out;
  auto parse_kind = [](const std::string& s) {
    if (s == "hold") return EventKind::Hold;
    if (s == "shift") return EventKind::Shift;
    if (s == "overlap_shift") return EventKind::OverlapShift;
    throw Error(ErrorCode::SchemaViolation, "bad event kind: '" + s + "'");
  };
  auto parse_speaker = [](const std::string& s) {
    if (s == "a") return Speaker::A;
    if (s == "b") return Speaker::B;
    throw Error(ErrorCode::SchemaViolation, "bad speaker: '" + s + "'");
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = detail::split(line, ',');
    if (f.size() != 7) throw Error(ErrorCode::SchemaViolation, "bad events CSV row");
    TurnEvent e;
    e.session_id = f[0];
    e.kind = parse_kind(f[1]);
    e.prev_speaker = parse_speaker(f[2]);
    e.next_speaker = parse_speaker(f[3]);
    e.fto_s = parse_double(f[4]);
    e.gap_start_s = parse_double(f[5]);
    e.gap_end_s = parse_double(f[6]);
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Event windows and scoring
// ---------------------------------------------------------------------------

enum class WindowAnchor : uint8_t { MutualSilence, EndOfTurn, PreOverlap };

inline const char* to_string(WindowAnchor a) {
  switch (a) {
    case WindowAnchor::MutualSilence: return "mutual_silence";
    case WindowAnchor::EndOfTurn: return "end_of_turn";
    case WindowAnchor::PreOverlap: return "pre_overlap";
  }
  return "?";
}

inline WindowAnchor anchor_from_string(const std::string& s) {
  if (s == "mutual_silence") return WindowAnchor::MutualSilence;
  if (s == "end_of_turn") return WindowAnchor::EndOfTurn;
  if (s == "pre_overlap") return WindowAnchor::PreOverlap;
  throw Error(ErrorCode::ConfigError, "unknown anchor: '" + s + "'");
}

constexpr double kScoreWindowS = 0.2;
constexpr size_t kScoreWindowFrames = 10;

struct EventWindow {
  double t0 = 0.0;
  double t1 = 0.0;
};

/// The 200 ms scoring window for an event. Mutual-silence anchors at the start
/// of the gap looking forward; end-of-turn looks back from the gap onset;
/// pre-overlap looks back from the overlap onset.
inline EventWindow event_window(const TurnEvent& e, WindowAnchor anchor, double session_dur_s) {
  if ((anchor == WindowAnchor::PreOverlap) != (e.kind == EventKind::OverlapShift))
    throw Error(ErrorCode::OutOfRange, "event kind incompatible with anchor");
  EventWindow w;
  switch (anchor) {
    case WindowAnchor::MutualSilence: w = {e.gap_start_s, e.gap_start_s + kScoreWindowS}; break;
    case WindowAnchor::EndOfTurn: w = {e.gap_start_s - kScoreWindowS, e.gap_start_s}; break;
    case WindowAnchor::PreOverlap: w = {e.gap_start_s - kScoreWindowS, e.gap_start_s}; break;
  }
  if (w.t0 < -1e-9 || w.t1 > session_dur_s + 1e-9)
    throw Error(ErrorCode::WindowOutOfSession, "scoring window outside session");
  return w;
}

/// Summed shift probability of the active (previous) speaker's partner over
/// the 10 frames of the window, from per-frame 256-way distributions.
inline double score_event(const Eigen::MatrixXd& probs, const EventWindow& w, Speaker active) {
  long start = std::lround(w.t0 * kFrameRateHz);
  if (start < 0 || static_cast<Eigen::Index>(start + kScoreWindowFrames) > probs.rows())
    throw Error(ErrorCode::OutOfRange, "scoring window outside model output");
  if (probs.cols() != static_cast<Eigen::Index>(kVapStates))
    throw Error(ErrorCode::ShapeMismatch, "expected 256 columns of probabilities");
  double score = 0.0;
  for (size_t f = 0; f < kScoreWindowFrames; ++f) {
    VapDistribution d;
    for (size_t s = 0; s < kVapStates; ++s)
      d.probs[s] = probs(start + static_cast<long>(f), static_cast<Eigen::Index>(s));
    score += shift_probability(d, active);
  }
  return score;
}

/// A scored hold/shift decision point; fto/kind are kept so events can be
/// regrouped by minimum FTO without the original streams.
struct ScoredEvent {
  double score = 0.0;
  bool is_shift = false;
  double fto_s = 0.0;
  EventKind kind = EventKind::Hold;
  std::string session_id;
};

inline bool in_fto_group(const ScoredEvent& e, double min_fto_s) {
  if (min_fto_s < 0.0 && e.kind == EventKind::OverlapShift) return true;
  return e.fto_s > min_fto_s + 1e-12;
}

// ---------------------------------------------------------------------------
// Confusion counts and metrics
// ---------------------------------------------------------------------------

struct ConfusionCounts {
  size_t tp = 0, fp = 0, fn = 0, tn = 0;
  size_t p() const { return tp + fn; }
  size_t n() const { return tn + fp; }
};

/// Predicted shift iff score > threshold.
inline ConfusionCounts counts_at_threshold(const std::vector<ScoredEvent>& events, double thr) {
  ConfusionCounts c;
  for (const auto& e : events) {
    bool pred = e.score > thr;
    if (e.is_shift)
      pred ? ++c.tp : ++c.fn;
    else
      pred ? ++c.fp : ++c.tn;
  }
  return c;
}

inline double f1(const ConfusionCounts& c) {
  double den = static_cast<double>(2 * c.tp + c.fp + c.fn);
  if (den == 0.0) throw Error(ErrorCode::UndefinedF1, "no positives in truth or prediction");
  return 2.0 * static_cast<double>(c.tp) / den;
}

inline double weighted_f1(double f1_shift, double f1_hold, double rho_s, double rho_h) {
  if (std::abs(rho_s + rho_h - 1.0) > 1e-9 || rho_s < 0.0 || rho_h < 0.0)
    throw Error(ErrorCode::BadProportions, "proportions must be non-negative and sum to 1");
  return rho_s * f1_shift + rho_h * f1_hold;
}

inline double balanced_accuracy(const ConfusionCounts& c) {
  if (c.p() == 0 || c.n() == 0) throw Error(ErrorCode::EmptyClass, "need both classes");
  return 0.5 * (static_cast<double>(c.tp) / static_cast<double>(c.p()) +
                static_cast<double>(c.tn) / static_cast<double>(c.n()));
}

/// Hold-as-positive counts, by relabeling.
inline ConfusionCounts hold_positive(const ConfusionCounts& c) { return {c.tn, c.fn, c.fp, c.tp}; }

inline double weighted_f1_at(const std::vector<ScoredEvent>& events, double thr) {
  ConfusionCounts c = counts_at_threshold(events, thr);
  double total = static_cast<double>(c.p() + c.n());
  double rho_s = static_cast<double>(c.p()) / total;
  return weighted_f1(f1(c), f1(hold_positive(c)), rho_s, 1.0 - rho_s);
}

inline double balanced_accuracy_at(const std::vector<ScoredEvent>& events, double thr) {
  return balanced_accuracy(counts_at_threshold(events, thr));
}

// ---------------------------------------------------------------------------
// Threshold selection
// ---------------------------------------------------------------------------

struct ThresholdChoice {
  double for_f1 = 0.0;
  double for_bacc = 0.0;
  double best_f1 = 0.0;
  double best_bacc = 0.0;
  bool degenerate = false;  // all validation scores identical
};

/// Scans every midpoint between adjacent distinct sorted scores plus one
/// threshold below and one above all scores; picks the argmax of each metric
/// with ties broken toward the lowest threshold.
inline ThresholdChoice select_thresholds(const std::vector<ScoredEvent>& val) {
  bool any_shift = false, any_hold = false;
  for (const auto& e : val) (e.is_shift ? any_shift : any_hold) = true;
  if (!any_shift || !any_hold)
    throw Error(ErrorCode::SingleClassValidation, "validation set has a single class");

  std::vector<double> scores;
  scores.reserve(val.size());
  for (const auto& e : val) scores.push_back(e.score);
  std::sort(scores.begin(), scores.end());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());

  std::vector<double> candidates;
  candidates.push_back(scores.front() - 1.0);
  for (size_t i = 0; i + 1 < scores.size(); ++i)
    candidates.push_back(0.5 * (scores[i] + scores[i + 1]));
  candidates.push_back(scores.back() + 1.0);

  ThresholdChoice out;
  out.degenerate = scores.size() == 1;
  out.best_f1 = -1.0;
  out.best_bacc = -1.0;
  for (double thr : candidates) {
    double wf1 = weighted_f1_at(val, thr);
    double bacc = balanced_accuracy_at(val, thr);
    if (wf1 > out.best_f1 + 1e-15) {
      out.best_f1 = wf1;
      out.for_f1 = thr;
    }
    if (bacc > out.best_bacc + 1e-15) {
      out.best_bacc = bacc;
      out.for_bacc = thr;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// FTO curve
// ---------------------------------------------------------------------------

struct FoldScores {
  std::vector<ScoredEvent> val;
  std::vector<ScoredEvent> test;
};

struct FtoCurvePoint {
  double min_fto_s = 0.0;
  double mean_bacc = 0.0;
  double stderr_bacc = 0.0;
  size_t n_events = 0;  // test events pooled over contributing folds
  size_t n_folds = 0;
};

inline std::vector<double> default_fto_thresholds() {
  std::vector<double> out;
  for (int i = 0; i <= 6; ++i) out.push_back(0.25 * i);
  return out;
}

/// Balanced accuracy per minimum-FTO group, averaged over folds with the
/// standard error. Each group re-selects its threshold on that fold's
/// validation events; folds where either split is single-class for the group
/// are skipped, and groups with no contributing folds are omitted.
inline std::vector<FtoCurvePoint> fto_curve(const std::vector<FoldScores>& folds,
                                            const std::vector<double>& thresholds) {
  std::vector<FtoCurvePoint> out;
  for (double thr : thresholds) {
    std::vector<double> baccs;
    size_t n_events = 0;
    for (const auto& fold : folds) {
      std::vector<ScoredEvent> val, test;
      for (const auto& e : fold.val)
        if (in_fto_group(e, thr)) val.push_back(e);
      for (const auto& e : fold.test)
        if (in_fto_group(e, thr)) test.push_back(e);
      if (val.empty() || test.empty()) continue;
      double chosen;
      try {
        chosen = select_thresholds(val).for_bacc;
      } catch (const Error&) {
        continue;  // single-class validation group
      }
      try {
        baccs.push_back(balanced_accuracy_at(test, chosen));
      } catch (const Error&) {
        continue;  // single-class test group
      }
      n_events += test.size();
    }
    if (baccs.empty()) continue;
    FtoCurvePoint p;
    p.min_fto_s = thr;
    p.n_folds = baccs.size();
    p.n_events = n_events;
    double mean = std::accumulate(baccs.begin(), baccs.end(), 0.0) / static_cast<double>(baccs.size());
    p.mean_bacc = mean;
    if (baccs.size() > 1) {
      double ss = 0.0;
      for (double b : baccs) ss += (b - mean) * (b - mean);
      p.stderr_bacc = std::sqrt(ss / static_cast<double>(baccs.size() - 1)) /
                      std::sqrt(static_cast<double>(baccs.size()));
    }
    out.push_back(p);
  }
  return out;
}

inline constexpr const char* kFtoCsvHeader = "min_fto,mean_bacc,stderr,n_events";

inline void write_fto_csv(const fs::path& path, const std::vector<FtoCurvePoint>& curve) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << kFtoCsvHeader << "\n";
  for (const auto& p : curve)
    out << fmt_double(p.min_fto_s) << ',' << fmt_double(p.mean_bacc) << ','
        << fmt_double(p.stderr_bacc) << ',' << p.n_events << "\n";
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

inline std::vector<FtoCurvePoint> read_fto_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::string line;
  if (!std::getline(in, line) || line != kFtoCsvHeader)
    throw Error(ErrorCode::SchemaViolation, "bad FTO CSV header in " + path.string());
  std::vector<FtoCurvePoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = detail::split(line, ',');
    if (f.size() != 4) throw Error(ErrorCode::SchemaViolation, "bad FTO CSV row");
    FtoCurvePoint p;
    p.min_fto_s = parse_double(f[0]);
    p.mean_bacc = parse_double(f[1]);
    p.stderr_bacc = parse_double(f[2]);
    p.n_events = static_cast<size_t>(std::stoull(f[3]));
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation report
// ---------------------------------------------------------------------------

struct SignificanceBlock {
  std::optional<double> paired_t_p;  // model vs baseline, per-session balanced accuracy
  std::optional<double> mwu_p;       // model vs baseline score distributions
};

struct EvalReport {
  int schema_version = 1;
  std::string fusion;
  std::string subset;
  std::string anchor;
  double min_fto_s = 0.25;
  size_t n_shifts = 0;
  size_t n_holds = 0;
  double thr_f1 = 0.0;
  double thr_bacc = 0.0;
  double f1_shift = 0.0;
  double f1_hold = 0.0;
  double f1_weighted = 0.0;
  double bacc = 0.0;
  double rho_s = 0.0;
  double rho_h = 0.0;
  ConfusionCounts counts_f1;
  ConfusionCounts counts_bacc;
  double baseline_f1_weighted = 0.0;
  double baseline_bacc = 0.5;
  std::vector<FtoCurvePoint> curve;
  SignificanceBlock significance;
};

using ojson = nlohmann::ordered_json;

inline ojson to_json(const ConfusionCounts& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
}

inline ConfusionCounts confusion_from_json(const ojson& j) {
  return {j.at("tp").get<size_t>(), j.at("fp").get<size_t>(), j.at("fn").get<size_t>(),
          j.at("tn").get<size_t>()};
}

inline ojson to_json(const EvalReport& r) {
  ojson j;
  j["schema_version"] = r.schema_version;
  j["fusion"] = r.fusion;
  j["subset"] = r.subset;
  j["anchor"] = r.anchor;
  j["min_fto_s"] = r.min_fto_s;
  j["n_shifts"] = r.n_shifts;
  j["n_holds"] = r.n_holds;
  j["thresholds"] = {{"for_f1", r.thr_f1}, {"for_bacc", r.thr_bacc}};
  j["f1_shift"] = r.f1_shift;
  j["f1_hold"] = r.f1_hold;
  j["f1_weighted"] = r.f1_weighted;
  j["balanced_accuracy"] = r.bacc;
  j["rho_s"] = r.rho_s;
  j["rho_h"] = r.rho_h;
  j["confusion_f1"] = to_json(r.counts_f1);
  j["confusion_bacc"] = to_json(r.counts_bacc);
  j["baseline"] = {{"f1_weighted", r.baseline_f1_weighted},
                   {"balanced_accuracy", r.baseline_bacc}};
  j["fto_curve"] = ojson::array();
  for (const auto& p : r.curve)
    j["fto_curve"].push_back({{"min_fto_s", p.min_fto_s},
                              {"mean_bacc", p.mean_bacc},
                              {"stderr", p.stderr_bacc},
                              {"n_events", p.n_events},
                              {"n_folds", p.n_folds}});
  j["significance"] = ojson::object();
  j["significance"]["paired_t_p"] =
      r.significance.paired_t_p ? ojson(*r.significance.paired_t_p) : ojson(nullptr);
  j["significance"]["mwu_p"] = r.significance.mwu_p ? ojson(*r.significance.mwu_p) : ojson(nullptr);
  return j;
}

inline EvalReport report_from_json(const ojson& j) {
  EvalReport r;
  r.schema_version = j.at("schema_version").get<int>();
  if (r.schema_version != 1)
    throw Error(ErrorCode::SchemaViolation, "unsupported report schema version");
  r.fusion = j.at("fusion").get<std::string>();
  r.subset = j.at("subset").get<std::string>();
  r.anchor = j.at("anchor").get<std::string>();
  r.min_fto_s = j.at("min_fto_s").get<double>();
  r.n_shifts = j.at("n_shifts").get<size_t>();
  r.n_holds = j.at("n_holds").get<size_t>();
  r.thr_f1 = j.at("thresholds").at("for_f1").get<double>();
  r.thr_bacc = j.at("thresholds").at("for_bacc").get<double>();
  r.f1_shift = j.at("f1_shift").get<double>();
  r.f1_hold = j.at("f1_hold").get<double>();
  r.f1_weighted = j.at("f1_weighted").get<double>();
  r.bacc = j.at("balanced_accuracy").get<double>();
  r.rho_s = j.at("rho_s").get<double>();
  r.rho_h = j.at("rho_h").get<double>();
  r.counts_f1 = confusion_from_json(j.at("confusion_f1"));
  r.counts_bacc = confusion_from_json(j.at("confusion_bacc"));
  r.baseline_f1_weighted = j.at("baseline").at("f1_weighted").get<double>();
  r.baseline_bacc = j.at("baseline").at("balanced_accuracy").get<double>();
  for (const auto& pj : j.at("fto_curve")) {
    FtoCurvePoint p;
    p.min_fto_s = pj.at("min_fto_s").get<double>();
    p.mean_bacc = pj.at("mean_bacc").get<double>();
    p.stderr_bacc = pj.at("stderr").get<double>();
    p.n_events = pj.at("n_events").get<size_t>();
    p.n_folds = pj.at("n_folds").get<size_t>();
    r.curve.push_back(p);
  }
  const auto& sig = j.at("significance");
  if (!sig.at("paired_t_p").is_null())
    r.significance.paired_t_p = sig.at("paired_t_p").get<double>();
  if (!sig.at("mwu_p").is_null()) r.significance.mwu_p = sig.at("mwu_p").get<double>();
  return r;
}

inline void write_report(const fs::path& path, const EvalReport& r) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << to_json(r).dump(2) << "\n";
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

inline EvalReport read_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  ojson j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("bad report JSON: ") + e.what());
  }
  return report_from_json(j);
}

/// Fills the metric block of a report from test-set scores using thresholds
/// chosen on validation scores.
inline EvalReport assemble_report(const std::vector<ScoredEvent>& val,
                                  const std::vector<ScoredEvent>& test) {
  EvalReport r;
  ThresholdChoice thr = select_thresholds(val);
  r.thr_f1 = thr.for_f1;
  r.thr_bacc = thr.for_bacc;
  r.counts_f1 = counts_at_threshold(test, thr.for_f1);
  r.counts_bacc = counts_at_threshold(test, thr.for_bacc);
  r.n_shifts = r.counts_f1.p();
  r.n_holds = r.counts_f1.n();
  double total = static_cast<double>(r.n_shifts + r.n_holds);
  r.rho_s = static_cast<double>(r.n_shifts) / total;
  r.rho_h = 1.0 - r.rho_s;
  r.f1_shift = f1(r.counts_f1);
  r.f1_hold = f1(hold_positive(r.counts_f1));
  r.f1_weighted = weighted_f1(r.f1_shift, r.f1_hold, r.rho_s, r.rho_h);
  r.bacc = balanced_accuracy(r.counts_bacc);
  // Always-hold baseline: every event predicted hold.
  ConfusionCounts base{0, 0, r.n_shifts, r.n_holds};
  double base_f1s = r.n_shifts > 0 ? f1(base) : 0.0;
  r.baseline_f1_weighted = weighted_f1(base_f1s, f1(hold_positive(base)), r.rho_s, r.rho_h);
  r.baseline_bacc = balanced_accuracy(base);
  return r;
}

// ---------------------------------------------------------------------------
// FAU event analysis
// ---------------------------------------------------------------------------

enum class FauCondition : uint8_t {
  SpeakerBeforeHold,
  ListenerBeforeHold,
  FutureSpeakerBeforeShift,
  CurrentSpeakerBeforeShift,
  RandomSpeech,
  RandomSilence,
};

constexpr size_t kFauConditions = 6;
constexpr size_t kFauEventConditions = 4;

inline const char* to_string(FauCondition c) {
  switch (c) {
    case FauCondition::SpeakerBeforeHold: return "speaker_before_hold";
    case FauCondition::ListenerBeforeHold: return "listener_before_hold";
    case FauCondition::FutureSpeakerBeforeShift: return "future_speaker_before_shift";
    case FauCondition::CurrentSpeakerBeforeShift: return "current_speaker_before_shift";
    case FauCondition::RandomSpeech: return "random_speech";
    case FauCondition::RandomSilence: return "random_silence";
  }
  return "?";
}

/// The control an event condition is tested against: conditions measured on a
/// participant who is speaking during the window compare to random speech,
/// the silent-participant conditions to random silence.
inline FauCondition matching_control(FauCondition c) {
  switch (c) {
    case FauCondition::SpeakerBeforeHold:
    case FauCondition::CurrentSpeakerBeforeShift: return FauCondition::RandomSpeech;
    default: return FauCondition::RandomSilence;
  }
}

struct FauCell {
  double median = 0.0;
  double p = 1.0;
  bool suppressed = false;
  size_t n = 0;
};

struct FauAnalysis {
  std::vector<std::string> fau_names;           // 17 rows
  // cells[f][c]: event conditions carry an MWU p vs their control; control
  // conditions have p = 1 and are never suppressed.
  std::array<std::vector<FauCell>, kFauConditions> cells;
};

/// Per-session input: voice activity plus the raw (unnormalized, 30 fps) FAU
/// tracks of both participants.
struct FauSessionInput {
  std::string session_id;
  DyadVa dyad;
  std::array<RawVisualTrack, 2> raw;
};

namespace detail {

/// Turn intervals (seconds) of one channel: maximal active runs with silences
/// of at most bridge_s merged, so within-turn word pauses do not split turns.
inline std::vector<std::pair<double, double>> turn_intervals(const VaStream& va,
                                                             double bridge_s = 0.1) {
  std::vector<std::pair<double, double>> out;
  const size_t bridge = static_cast<size_t>(std::llround(bridge_s * kFrameRateHz));
  size_t i = 0;
  while (i < va.size()) {
    if (!va.active(i)) {
      ++i;
      continue;
    }
    size_t j = i;
    size_t last_active = i;
    while (j < va.size()) {
      if (va.active(j)) {
        last_active = j;
        ++j;
      } else {
        size_t k = j;
        while (k < va.size() && !va.active(k)) ++k;
        if (k - j <= bridge && k < va.size()) {
          j = k;
        } else {
          break;
        }
      }
    }
    out.emplace_back(static_cast<double>(i) * kFrameDurS,
                     static_cast<double>(last_active + 1) * kFrameDurS);
    i = last_active + 1;
  }
  return out;
}

/// Max raw FAU intensity per channel over raw frames with timestamps inside
/// [t0, t1]; false when the window contains no raw frame.
inline bool max_faus_in_window(const RawVisualTrack& raw, double t0, double t1,
                               std::array<double, kFauCount>& out) {
  bool any = false;
  out.fill(0.0);
  for (size_t f = 0; f < raw.timestamps.size(); ++f) {
    double t = raw.timestamps[f];
    if (t < t0 - 1e-9 || t > t1 + 1e-9) continue;
    if (raw.gap[f]) continue;
    for (size_t a = 0; a < kFauCount; ++a)
      out[a] = std::max(out[a], raw.values[f][kFauOffset + a]);
    any = true;
  }
  return any;
}

}  // namespace detail

constexpr size_t kMinFauEvents = 10;
constexpr double kFauSuppressionAlpha = 0.05;

/// Fig.-5-style analysis: per FAU and condition, the median over events of the
/// maximum raw intensity in the 200 ms window before the gap (or overlap)
/// onset, with an MWU test against per-session count-matched random speech /
/// silence controls. Only gap events with FTO > min_fto_s participate.
inline FauAnalysis fau_event_analysis(const std::vector<FauSessionInput>& sessions, uint64_t seed,
                                      double min_fto_s = 0.25) {
  // samples[condition][fau] -> values
  std::array<std::array<std::vector<double>, kFauCount>, kFauConditions> samples;

  for (size_t si = 0; si < sessions.size(); ++si) {
    const auto& s = sessions[si];
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + si);

    std::vector<TurnEvent> events;
    for (const auto& e : extract_gap_events(s.dyad, 0.0))
      if (e.fto_s > min_fto_s + 1e-12) events.push_back(e);

    size_t n_used = 0;
    for (const auto& e : events) {
      double t1 = e.gap_start_s;
      double t0 = t1 - kScoreWindowS;
      if (t0 < 0.0) continue;
      std::array<double, kFauCount> prev_max{}, next_max{};
      if (!detail::max_faus_in_window(s.raw[static_cast<size_t>(e.prev_speaker)], t0, t1, prev_max))
        continue;
      if (!detail::max_faus_in_window(s.raw[static_cast<size_t>(e.next_speaker)], t0, t1, next_max))
        continue;
      FauCondition speaking_cond, silent_cond;
      if (e.kind == EventKind::Hold) {
        speaking_cond = FauCondition::SpeakerBeforeHold;
        silent_cond = FauCondition::ListenerBeforeHold;
      } else {
        speaking_cond = FauCondition::CurrentSpeakerBeforeShift;
        silent_cond = FauCondition::FutureSpeakerBeforeShift;
      }
      std::array<double, kFauCount> silent_max =
          e.kind == EventKind::Hold
              ? std::array<double, kFauCount>{}
              : next_max;
      if (e.kind == EventKind::Hold) {
        // Listener = the non-speaking participant (prev == next for holds).
        if (!detail::max_faus_in_window(s.raw[static_cast<size_t>(other(e.prev_speaker))], t0, t1,
                                        silent_max))
          continue;
      }
      for (size_t a = 0; a < kFauCount; ++a) {
        samples[static_cast<size_t>(speaking_cond)][a].push_back(prev_max[a]);
        samples[static_cast<size_t>(silent_cond)][a].push_back(silent_max[a]);
      }
      ++n_used;
    }

    // Count-matched random controls, sampled on each channel's raw frame grid.
    std::array<std::vector<double>, 2> speech_starts, silence_starts;
    for (size_t ch = 0; ch < 2; ++ch) {
      auto turns = detail::turn_intervals(s.dyad.channel(ch == 0 ? Speaker::A : Speaker::B));
      const auto& ts = s.raw[ch].timestamps;
      for (double t : ts) {
        double lo = t - 1.0, hi = t + kScoreWindowS + 1.0;
        if (lo < 0.0 || hi > s.dyad.duration_s()) continue;
        bool inside_turn = false, touches_turn = false;
        for (const auto& [a, b] : turns) {
          if (lo >= a - 1e-9 && hi <= b + 1e-9) inside_turn = true;
          if (hi > a + 1e-9 && lo < b - 1e-9) touches_turn = true;
        }
        if (inside_turn) speech_starts[ch].push_back(t);
        if (!touches_turn) silence_starts[ch].push_back(t);
      }
    }
    auto draw_controls = [&](const std::array<std::vector<double>, 2>& starts, FauCondition cond) {
      for (size_t k = 0; k < n_used; ++k) {
        size_t ch = rng() & 1;
        if (starts[ch].empty()) ch ^= 1;
        if (starts[ch].empty()) return;
        double t0 = starts[ch][rng() % starts[ch].size()];
        std::array<double, kFauCount> mx{};
        if (!detail::max_faus_in_window(s.raw[ch], t0, t0 + kScoreWindowS, mx)) continue;
        for (size_t a = 0; a < kFauCount; ++a)
          samples[static_cast<size_t>(cond)][a].push_back(mx[a]);
      }
    };
    draw_controls(speech_starts, FauCondition::RandomSpeech);
    draw_controls(silence_starts, FauCondition::RandomSilence);
  }

  for (size_t c = 0; c < kFauConditions; ++c)
    if (samples[c][0].size() < kMinFauEvents)
      throw Error(ErrorCode::InsufficientEvents,
                  std::string("fewer than 10 samples for condition ") +
                      to_string(static_cast<FauCondition>(c)));

  FauAnalysis out;
  out.fau_names = fau_column_names();
  for (size_t c = 0; c < kFauConditions; ++c) {
    out.cells[c].resize(kFauCount);
    for (size_t a = 0; a < kFauCount; ++a) {
      FauCell& cell = out.cells[c][a];
      std::vector<double> v = samples[c][a];
      cell.n = v.size();
      std::sort(v.begin(), v.end());
      cell.median = (v.size() % 2 == 1)
                        ? v[v.size() / 2]
                        : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
      if (c < kFauEventConditions) {
        auto control = static_cast<size_t>(matching_control(static_cast<FauCondition>(c)));
        cell.p = mann_whitney_u(samples[c][a], samples[control][a]).p;
        cell.suppressed = cell.p > kFauSuppressionAlpha;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// FAU heatmap TSV
// ---------------------------------------------------------------------------

inline void write_fau_tsv(const fs::path& path, const FauAnalysis& a) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "fau";
  for (size_t c = 0; c < kFauConditions; ++c)
    out << '\t' << to_string(static_cast<FauCondition>(c));
  out << "\n";
  for (size_t f = 0; f < a.fau_names.size(); ++f) {
    out << a.fau_names[f];
    for (size_t c = 0; c < kFauConditions; ++c) {
      const FauCell& cell = a.cells[c][f];
      out << '\t' << (cell.suppressed ? std::string("ns") : fmt_double(cell.median));
    }
    out << "\n";
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

/// Reads the heatmap back; suppressed cells come back with median 0 and the
/// flag set, so write(read(x)) is byte-identical to write(x).
inline FauAnalysis read_fau_tsv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::EmptyFile, path.string());
  auto header = detail::split(line, '\t');
  if (header.size() != kFauConditions + 1 || header[0] != "fau")
    throw Error(ErrorCode::SchemaViolation, "bad FAU TSV header in " + path.string());
  for (size_t c = 0; c < kFauConditions; ++c)
    if (header[c + 1] != to_string(static_cast<FauCondition>(c)))
      throw Error(ErrorCode::SchemaViolation, "bad FAU TSV column: " + header[c + 1]);
  FauAnalysis out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = detail::split(line, '\t');
    if (f.size() != kFauConditions + 1)
      throw Error(ErrorCode::SchemaViolation, "bad FAU TSV row");
    out.fau_names.push_back(f[0]);
    for (size_t c = 0; c < kFauConditions; ++c) {
      FauCell cell;
      if (f[c + 1] == "ns") {
        cell.suppressed = true;
        cell.p = 1.0;
      } else {
        cell.median = parse_double(f[c + 1]);
      }
      out.cells[c].push_back(cell);
    }
  }
  return out;
}

}  // namespace mmvap
