#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mmvap/corpus_io.hpp"
#include "mmvap/wav.hpp"

namespace mmvap {

struct GapDistribution {
  double mean_s = 0.4;
  double sd_s = 0.15;
};

struct SyntheticCorpusConfig {
  size_t n_sessions = 10;
  double session_duration_s = 120.0;
  double mean_turn_s = 4.0;
  GapDistribution gap;
  double overlap_rate = 0.1;
  double visual_cue_lead_s = 0.5;
  double visual_cue_strength = 0.0;
  uint64_t seed = 1;

  void validate() const {
    if (n_sessions == 0 || session_duration_s <= 0.0 || mean_turn_s <= 0.0 ||
        gap.mean_s <= 0.0 || gap.sd_s < 0.0 || visual_cue_lead_s <= 0.0)
      throw Error(ErrorCode::ConfigError, "all durations must be > 0");
    if (overlap_rate < 0.0 || overlap_rate > 1.0)
      throw Error(ErrorCode::ConfigError, "overlap_rate must be in [0,1]");
  }
};

/// The FAU channel that carries the planted pre-shift cue (AU45_r, the last
/// FAU in the layout). It never carries speech-gated intensity.
constexpr size_t kCueFauIndex = kFauCount - 1;
constexpr double kFauSilenceBase = 0.05;
/// Speech-gated FAU intensity is the same constant for every participant and
/// channel, so that on a cue-free corpus the event-window FAU distributions
/// are exactly tied with their random controls.
constexpr double kFauSpeechLevel = 0.5;

namespace detail {

struct SynthTurn {
  Speaker speaker;
  double start_s;
  double end_s;
  bool shift_onto;      // this turn begins a speaker change
  double solid_head = 0.0;  // leading stretch tiled without word pauses
  double solid_tail = 0.0;  // trailing stretch tiled without word pauses
};

// Cue interval for a shift onto `turn`: a linear ramp reaching full amplitude
// lead_s after its start, then held until the new speaker's speech onset.
struct CueInterval {
  double ramp_start;
  double ramp_end;
  double hold_end;
};

inline double cue_value(const std::vector<CueInterval>& cues, double t, double strength) {
  double v = 0.0;
  for (const auto& c : cues) {
    if (t < c.ramp_start || t >= c.hold_end) continue;
    double x = (t < c.ramp_end) ? (t - c.ramp_start) / (c.ramp_end - c.ramp_start) : 1.0;
    v = std::max(v, x * strength);
  }
  return v;
}

}  // namespace detail

/// Generates a deterministic desk-scale corpus: manifests, word-aligned
/// transcripts tiled inside alternating turns, 16 kHz noise audio gated by
/// voice activity, and 30 fps visual CSVs where one FAU channel of the next
/// speaker ramps up before each shift.
inline std::vector<SessionManifest> generate_synthetic_corpus(const SyntheticCorpusConfig& cfg,
                                                              const fs::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + out_dir.string());

  std::vector<SessionManifest> manifests;
  for (size_t si = 0; si < cfg.n_sessions; ++si) {
    // Per-session stream so sessions can be generated independently.
    std::mt19937_64 rng(cfg.seed * 1000003ULL + si);
    std::normal_distribution<double> turn_len(cfg.mean_turn_s, cfg.mean_turn_s / 3.0);
    std::normal_distribution<double> gap_len(cfg.gap.mean_s, cfg.gap.sd_s);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> overlap_len(0.3, 0.6);

    const double duration = cfg.session_duration_s;
    const double margin = 1.5;  // keeps event context windows inside the session

    std::vector<detail::SynthTurn> turns;
    Speaker cur = (unit(rng) < 0.5) ? Speaker::A : Speaker::B;
    double t = 0.6 + 0.4 * unit(rng);
    bool first = true;
    double pending_head = 0.0;
    while (true) {
      double len = std::max(1.2, turn_len(rng));
      if (t + len > duration - margin) break;
      turns.push_back({cur, t, t + len, !first && turns.back().speaker != cur, pending_head, 0.0});
      first = false;
      pending_head = 0.0;
      bool shift = unit(rng) < 0.5;
      Speaker next = shift ? other(cur) : cur;
      double next_start;
      if (shift && unit(rng) < cfg.overlap_rate) {
        double ov = overlap_len(rng);
        next_start = t + len - ov;  // interrupt before the turn ends
        // Word pauses would fragment the mutual-activity run, so tile the
        // overlapping stretch of both turns without pauses.
        turns.back().solid_tail = ov + 0.1;
        pending_head = ov + 0.2;
      } else {
        next_start = t + len + std::max(0.05, gap_len(rng));
      }
      cur = next;
      t = next_start;
    }

    // Cue intervals on each speaker's channel for shifts onto that speaker.
    std::array<std::vector<detail::CueInterval>, 2> cues;
    for (size_t i = 1; i < turns.size(); ++i) {
      if (turns[i].speaker == turns[i - 1].speaker) continue;
      double prev_end = turns[i - 1].end_s;
      double onset = turns[i].start_s;
      double anchor = std::min(prev_end, onset);
      detail::CueInterval c{anchor - cfg.visual_cue_lead_s, anchor, std::max(anchor, onset) + 0.02};
      if (c.ramp_start < 0.0) continue;
      cues[static_cast<size_t>(turns[i].speaker)].push_back(c);
    }

    // Words tiled inside turns.
    std::array<std::vector<WordAlignment>, 2> words;
    std::uniform_real_distribution<double> word_len(0.18, 0.32);
    std::uniform_real_distribution<double> word_pause(0.0, 0.08);
    size_t widx = 0;
    for (const auto& turn : turns) {
      auto& out = words[static_cast<size_t>(turn.speaker)];
      double w = turn.start_s;
      while (w < turn.end_s - 0.05) {
        double len = std::min(word_len(rng), turn.end_s - w);
        out.push_back({"w" + std::to_string(widx++), w, w + len});
        bool in_solid = w + len < turn.start_s + turn.solid_head ||
                        w + len > turn.end_s - turn.solid_tail;
        w += len + (in_solid ? 0.0 : word_pause(rng));
      }
      // A pause-free tail must reach the turn boundary exactly.
      if (turn.solid_tail > 0.0 && !out.empty() && out.back().end_s < turn.end_s)
        out.back().end_s = turn.end_s;
    }

    // Session directory and manifest.
    std::string sid = "synth_" + std::to_string(si);
    fs::path sdir = out_dir / ("session_" + std::to_string(si));
    fs::create_directories(sdir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + sdir.string());

    SessionManifest m;
    m.session_id = sid;
    m.duration_s = duration;
    for (size_t ch = 0; ch < 2; ++ch) {
      std::string pid = sid + (ch == 0 ? "_a" : "_b");
      m.channels[ch].participant_id = pid;
      m.channels[ch].audio_path = sdir / (pid + ".wav");
      m.channels[ch].transcript_path = sdir / (pid + "_words.json");
      m.channels[ch].visual_csv_path = sdir / (pid + ".csv");
      write_transcript(m.channels[ch].transcript_path, words[ch]);
    }
    fs::path mpath = sdir / ("session_" + std::to_string(si) + ".json");
    write_manifest(mpath, m);
    m.manifest_path = mpath;

    // Audio: band-limited noise gated by the channel's voice activity.
    for (size_t ch = 0; ch < 2; ++ch) {
      size_t n_samples = static_cast<size_t>(std::llround(duration * kAudioRateHz));
      AudioBuffer buf;
      buf.samples.assign(n_samples, 0.0);
      std::normal_distribution<double> noise(0.0, 1.0);
      double lp = 0.0;
      size_t word_i = 0;
      const auto& ws = words[ch];
      for (size_t k = 0; k < n_samples; ++k) {
        double tk = static_cast<double>(k) / kAudioRateHz;
        while (word_i < ws.size() && ws[word_i].end_s <= tk) ++word_i;
        bool voiced = word_i < ws.size() && ws[word_i].start_s <= tk && tk < ws[word_i].end_s;
        lp = 0.9 * lp + 0.1 * noise(rng);
        buf.samples[k] = voiced ? 0.5 * lp : 0.0;
      }
      write_wav(m.channels[ch].audio_path, buf);
    }

    // Visual CSVs at 30 fps. FAU intensities are deterministic functions of
    // the speaker's own voice activity plus the planted cue channel.
    for (size_t ch = 0; ch < 2; ++ch) {
      std::array<double, 3> head_pos_base = {20.0 * (unit(rng) - 0.5), 20.0 * (unit(rng) - 0.5),
                                             400.0 + 100.0 * unit(rng)};
      std::array<double, 3> head_rot_base = {0.2 * (unit(rng) - 0.5), 0.2 * (unit(rng) - 0.5),
                                             0.2 * (unit(rng) - 0.5)};
      double gaze_phase = 2.0 * M_PI * unit(rng);

      size_t n_frames = static_cast<size_t>(std::llround(duration * 30.0));
      RawVisualTrack track;
      track.timestamps.resize(n_frames);
      track.values.resize(n_frames);
      track.gap.assign(n_frames, 0);

      const auto& ws = words[ch];
      size_t word_i = 0;
      for (size_t f = 0; f < n_frames; ++f) {
        double tf = static_cast<double>(f) / 30.0;
        while (word_i < ws.size() && ws[word_i].end_s <= tf) ++word_i;
        bool voiced = word_i < ws.size() && ws[word_i].start_s <= tf && tf < ws[word_i].end_s;

        auto& v = track.values[f];
        track.timestamps[f] = tf;
        for (size_t a = 0; a < kFauCount; ++a)
          v[kFauOffset + a] = kFauSilenceBase + (voiced ? kFauSpeechLevel : 0.0);
        v[kFauOffset + kCueFauIndex] =
            kFauSilenceBase + detail::cue_value(cues[ch], tf, cfg.visual_cue_strength);

        double wob = 0.05 * std::sin(0.7 * tf + gaze_phase);
        for (size_t g = 0; g < 2; ++g) {
          double gx = wob, gy = -0.1 + wob * 0.5, gz = -std::sqrt(std::max(0.0, 1.0 - gx * gx - gy * gy));
          v[kGazeOffset + 3 * g + 0] = gx;
          v[kGazeOffset + 3 * g + 1] = gy;
          v[kGazeOffset + 3 * g + 2] = gz;
        }
        for (size_t i = 0; i < 3; ++i) {
          v[kHeadPosOffset + i] = head_pos_base[i] + 2.0 * std::sin(0.3 * tf + gaze_phase + i);
          v[kHeadRotOffset + i] = head_rot_base[i] + 0.02 * std::sin(0.4 * tf + gaze_phase - i);
        }
        for (size_t l = 0; l < 15; ++l) {
          v[kLandmarkOffset + 2 * l + 0] = 120.0 + 6.0 * static_cast<double>(l) + wob * 10.0;
          v[kLandmarkOffset + 2 * l + 1] = 90.0 + 4.0 * static_cast<double>(l) - wob * 10.0;
        }
        v[kConfidenceIndex] = 0.98;
      }
      write_visual_csv(m.channels[ch].visual_csv_path, track);
    }

    manifests.push_back(std::move(m));
  }
  return manifests;
}

}  // namespace mmvap
