#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <fftw3.h>
#include <json.hpp>

#include "mmvap/corpus_io.hpp"
#include "mmvap/error.hpp"
#include "mmvap/wav.hpp"

namespace mmvap {

using Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Visual feature pipeline
// ---------------------------------------------------------------------------

enum class FeatureSubset { Gaze, Pose, Faus, Landmarks, All };

inline const char* to_string(FeatureSubset s) {
  switch (s) {
    case FeatureSubset::Gaze: return "gaze";
    case FeatureSubset::Pose: return "pose";
    case FeatureSubset::Faus: return "faus";
    case FeatureSubset::Landmarks: return "landmarks";
    case FeatureSubset::All: return "all";
  }
  return "?";
}

inline FeatureSubset subset_from_string(const std::string& s) {
  if (s == "gaze") return FeatureSubset::Gaze;
  if (s == "pose") return FeatureSubset::Pose;
  if (s == "faus") return FeatureSubset::Faus;
  if (s == "landmarks") return FeatureSubset::Landmarks;
  if (s == "all") return FeatureSubset::All;
  throw Error(ErrorCode::ConfigError, "unknown feature subset '" + s + "'");
}

inline size_t subset_dims(FeatureSubset s) {
  switch (s) {
    case FeatureSubset::Gaze: return 6;
    case FeatureSubset::Pose: return 6;
    case FeatureSubset::Faus: return kFauCount;
    case FeatureSubset::Landmarks: return 30;
    case FeatureSubset::All: return kVisualDims;
  }
  return 0;
}

struct FeatureTrack {
  double frame_rate = 30.0;
  MatrixXd values;  // frames x channels
  std::vector<std::string> channel_names;
  std::vector<uint8_t> gap_mask;

  size_t n_frames() const { return static_cast<size_t>(values.rows()); }
  size_t n_channels() const { return static_cast<size_t>(values.cols()); }
};

inline FeatureTrack track_from_raw(const RawVisualTrack& raw) {
  FeatureTrack t;
  t.frame_rate = raw.frame_rate;
  t.channel_names = visual_channel_names();
  t.values.resize(static_cast<Eigen::Index>(raw.n_frames()), kVisualDims);
  for (size_t f = 0; f < raw.n_frames(); ++f)
    for (size_t c = 0; c < kVisualDims; ++c)
      t.values(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(c)) = raw.values[f][c];
  t.gap_mask = raw.gap;
  return t;
}

constexpr double kMaxGapFraction = 0.10;

/// Linear interpolation across gap runs; leading/trailing gaps hold the
/// nearest valid value. Rejects tracks with more than 10% gap frames.
inline FeatureTrack fill_gaps(FeatureTrack track) {
  const size_t n = track.n_frames();
  if (n == 0) return track;
  size_t n_gaps = 0;
  for (auto g : track.gap_mask) n_gaps += g;
  if (static_cast<double>(n_gaps) > kMaxGapFraction * static_cast<double>(n))
    throw Error(ErrorCode::TrackingTooSparse,
                std::to_string(n_gaps) + " of " + std::to_string(n) + " frames are gaps");
  if (n_gaps == 0) return track;
  if (n_gaps == n) throw Error(ErrorCode::TrackingTooSparse, "no valid frames");

  for (Eigen::Index c = 0; c < track.values.cols(); ++c) {
    long prev_valid = -1;
    for (size_t i = 0; i <= n; ++i) {
      bool valid = (i < n) && !track.gap_mask[i];
      if (!valid && i < n) continue;
      long cur = (i < n) ? static_cast<long>(i) : -1;
      if (prev_valid >= 0 && cur >= 0 && cur > prev_valid + 1) {
        double v0 = track.values(prev_valid, c), v1 = track.values(cur, c);
        for (long k = prev_valid + 1; k < cur; ++k) {
          double frac = static_cast<double>(k - prev_valid) / static_cast<double>(cur - prev_valid);
          track.values(k, c) = v0 + frac * (v1 - v0);
        }
      } else if (prev_valid < 0 && cur >= 0) {
        for (long k = 0; k < cur; ++k) track.values(k, c) = track.values(cur, c);
      } else if (cur < 0 && prev_valid >= 0) {
        for (long k = prev_valid + 1; k < static_cast<long>(n); ++k)
          track.values(k, c) = track.values(prev_valid, c);
      }
      if (cur >= 0) prev_valid = cur;
    }
  }
  std::fill(track.gap_mask.begin(), track.gap_mask.end(), 0);
  return track;
}

/// Per-channel (x - min) / (max - min) over the participant's full session;
/// constant channels map to 0.
inline FeatureTrack minmax_scale(FeatureTrack track) {
  for (Eigen::Index c = 0; c < track.values.cols(); ++c) {
    double lo = track.values.col(c).minCoeff();
    double hi = track.values.col(c).maxCoeff();
    if (hi - lo < 1e-12)
      track.values.col(c).setZero();
    else
      track.values.col(c) = (track.values.col(c).array() - lo) / (hi - lo);
  }
  return track;
}

/// Subtract the participant-level mean from the gaze and head pose channels.
inline FeatureTrack zero_mean_pose_gaze(FeatureTrack track) {
  auto zero_mean = [&](size_t offset, size_t count) {
    for (size_t i = 0; i < count; ++i) {
      Eigen::Index c = static_cast<Eigen::Index>(offset + i);
      track.values.col(c).array() -= track.values.col(c).mean();
    }
  };
  zero_mean(kGazeOffset, 6);
  zero_mean(kHeadPosOffset, 3);
  zero_mean(kHeadRotOffset, 3);
  return track;
}

/// Upsample 30 Hz tracks to the 50 Hz pipeline rate. Output frame k sits at
/// k/50 s, linearly interpolated between the bracketing input frames. With
/// strict_causal the last seen value is held instead of blending forward.
inline FeatureTrack resample_to_50hz(const FeatureTrack& track, bool strict_causal = false) {
  if (std::abs(track.frame_rate - 30.0) > 1e-9)
    throw Error(ErrorCode::RateMismatch, "resample_to_50hz expects a 30 Hz track");
  const size_t n_in = track.n_frames();
  if (n_in == 0) throw Error(ErrorCode::EmptyFile, "empty track");
  double duration = static_cast<double>(n_in) / 30.0;
  size_t n_out = static_cast<size_t>(std::ceil(duration * 50.0 - 1e-9));

  FeatureTrack out;
  out.frame_rate = 50.0;
  out.channel_names = track.channel_names;
  out.gap_mask.assign(n_out, 0);
  out.values.resize(static_cast<Eigen::Index>(n_out), track.values.cols());
  for (size_t k = 0; k < n_out; ++k) {
    double pos = static_cast<double>(k) * 30.0 / 50.0;  // fractional input index
    size_t i = std::min(static_cast<size_t>(pos), n_in - 1);
    double frac = pos - static_cast<double>(i);
    size_t j = std::min(i + 1, n_in - 1);
    if (strict_causal) frac = 0.0;
    out.values.row(static_cast<Eigen::Index>(k)) =
        (1.0 - frac) * track.values.row(static_cast<Eigen::Index>(i)) +
        frac * track.values.row(static_cast<Eigen::Index>(j));
  }
  return out;
}

/// Keep only the subset's channels, in layout order. Confidence is excluded
/// from every named subset; "all" keeps the full 60-dim layout.
inline FeatureTrack select_subset(const FeatureTrack& track, FeatureSubset subset) {
  if (track.n_channels() != kVisualDims)
    throw Error(ErrorCode::ShapeMismatch, "select_subset expects the full 60-channel track");
  if (subset == FeatureSubset::All) return track;
  size_t offset = 0, count = subset_dims(subset);
  switch (subset) {
    case FeatureSubset::Gaze: offset = kGazeOffset; break;
    case FeatureSubset::Pose: offset = kHeadPosOffset; break;  // head pos + rot, contiguous
    case FeatureSubset::Faus: offset = kFauOffset; break;
    case FeatureSubset::Landmarks: offset = kLandmarkOffset; break;
    case FeatureSubset::All: break;
  }
  FeatureTrack out;
  out.frame_rate = track.frame_rate;
  out.gap_mask = track.gap_mask;
  out.values = track.values.middleCols(static_cast<Eigen::Index>(offset),
                                       static_cast<Eigen::Index>(count));
  out.channel_names.assign(track.channel_names.begin() + static_cast<long>(offset),
                           track.channel_names.begin() + static_cast<long>(offset + count));
  return out;
}

/// Full per-participant visual pipeline at the stage order used throughout.
inline FeatureTrack prepare_visual(const RawVisualTrack& raw, FeatureSubset subset,
                                   bool strict_causal = false) {
  FeatureTrack t = track_from_raw(raw);
  t = fill_gaps(std::move(t));
  t = minmax_scale(std::move(t));
  t = zero_mean_pose_gaze(std::move(t));
  t = resample_to_50hz(t, strict_causal);
  return select_subset(t, subset);
}

// ---------------------------------------------------------------------------
// Audio features
// ---------------------------------------------------------------------------

constexpr size_t kAudioFeatureDims = 256;

struct AudioFeatureSeq {
  double frame_rate = 50.0;
  MatrixXd values;  // frames x 256

  size_t n_frames() const { return static_cast<size_t>(values.rows()); }
};

class AudioFeatureExtractor {
 public:
  virtual ~AudioFeatureExtractor() = default;
  virtual AudioFeatureSeq extract(const AudioBuffer& audio) const = 0;
};

/// Deterministic stand-in for the pretrained extractor: 40-band log-mel
/// energies (25 ms window, 20 ms hop) projected to 256 dims by a fixed
/// seeded random matrix.
class LogMelStandin : public AudioFeatureExtractor {
 public:
  static constexpr size_t kMelBands = 40;
  static constexpr size_t kWindow = 400;  // 25 ms @ 16 kHz
  static constexpr size_t kHop = 320;     // 20 ms @ 16 kHz
  static constexpr size_t kFft = 512;
  static constexpr uint64_t kDefaultSeed = 7340033;

  explicit LogMelStandin(uint64_t seed = kDefaultSeed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(kMelBands)));
    projection_.resize(kMelBands, kAudioFeatureDims);
    for (Eigen::Index i = 0; i < projection_.rows(); ++i)
      for (Eigen::Index j = 0; j < projection_.cols(); ++j) projection_(i, j) = dist(rng);
    build_mel_filters();
  }

  AudioFeatureSeq extract(const AudioBuffer& audio) const override {
    if (audio.sample_rate != kAudioRateHz)
      throw Error(ErrorCode::BadSampleRate, "expected 16 kHz audio");
    const auto& pcm = audio.samples;
    size_t n_frames = (pcm.size() + kHop - 1) / kHop;

    std::vector<double> in(kFft);
    std::vector<std::complex<double>> spec(kFft / 2 + 1);
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(kFft), in.data(),
                                          reinterpret_cast<fftw_complex*>(spec.data()),
                                          FFTW_ESTIMATE);

    MatrixXd mel(n_frames, kMelBands);
    for (size_t t = 0; t < n_frames; ++t) {
      size_t start = t * kHop;
      for (size_t i = 0; i < kFft; ++i) {
        double s = (i < kWindow && start + i < pcm.size()) ? pcm[start + i] : 0.0;
        // Hann window over the 25 ms frame
        double w = (i < kWindow)
                       ? 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / (kWindow - 1))
                       : 0.0;
        in[i] = s * w;
      }
      fftw_execute(plan);
      for (size_t b = 0; b < kMelBands; ++b) {
        double e = 0.0;
        for (size_t k = 0; k < kFft / 2 + 1; ++k) e += filters_[b][k] * std::norm(spec[k]);
        mel(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(b)) = std::log(e + 1e-10);
      }
    }
    fftw_destroy_plan(plan);

    AudioFeatureSeq out;
    out.values = mel * projection_;
    return out;
  }

 private:
  void build_mel_filters() {
    auto hz_to_mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
    auto mel_to_hz = [](double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); };
    double mel_lo = hz_to_mel(0.0), mel_hi = hz_to_mel(8000.0);
    std::vector<double> centers(kMelBands + 2);
    for (size_t i = 0; i < centers.size(); ++i) {
      double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (kMelBands + 1);
      centers[i] = mel_to_hz(mel);
    }
    filters_.assign(kMelBands, std::vector<double>(kFft / 2 + 1, 0.0));
    for (size_t b = 0; b < kMelBands; ++b) {
      double lo = centers[b], mid = centers[b + 1], hi = centers[b + 2];
      for (size_t k = 0; k < kFft / 2 + 1; ++k) {
        double hz = static_cast<double>(k) * kAudioRateHz / kFft;
        if (hz > lo && hz < mid)
          filters_[b][k] = (hz - lo) / (mid - lo);
        else if (hz >= mid && hz < hi)
          filters_[b][k] = (hi - hz) / (hi - mid);
      }
    }
  }

  MatrixXd projection_;
  std::vector<std::vector<double>> filters_;
};

// ---------------------------------------------------------------------------
// Precomputed audio feature files
// ---------------------------------------------------------------------------

inline void write_audio_features(const fs::path& bin_path, const AudioFeatureSeq& feats,
                                 const std::string& session_id, const std::string& channel) {
  std::ofstream out(bin_path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + bin_path.string());
  for (Eigen::Index r = 0; r < feats.values.rows(); ++r)
    for (Eigen::Index c = 0; c < feats.values.cols(); ++c) {
      float v = static_cast<float>(feats.values(r, c));
      out.write(reinterpret_cast<const char*>(&v), sizeof(float));
    }
  json sidecar = {{"frame_rate", feats.frame_rate},
                  {"dims", kAudioFeatureDims},
                  {"session_id", session_id},
                  {"channel", channel}};
  std::ofstream side(bin_path.string() + ".json");
  side << sidecar.dump(2) << "\n";
}

inline AudioFeatureSeq read_audio_features(const fs::path& bin_path) {
  std::ifstream side_in(bin_path.string() + ".json");
  if (!side_in) throw Error(ErrorCode::MissingFile, bin_path.string() + ".json");
  json sidecar;
  side_in >> sidecar;
  size_t dims = sidecar.at("dims").get<size_t>();
  if (dims != kAudioFeatureDims)
    throw Error(ErrorCode::ShapeMismatch, "feature file dims != 256");

  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, bin_path.string());
  in.seekg(0, std::ios::end);
  size_t bytes = static_cast<size_t>(in.tellg());
  in.seekg(0);
  size_t n_frames = bytes / (sizeof(float) * dims);
  AudioFeatureSeq out;
  out.frame_rate = sidecar.at("frame_rate").get<double>();
  out.values.resize(static_cast<Eigen::Index>(n_frames), static_cast<Eigen::Index>(dims));
  for (size_t r = 0; r < n_frames; ++r)
    for (size_t c = 0; c < dims; ++c) {
      float v;
      in.read(reinterpret_cast<char*>(&v), sizeof(float));
      out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  return out;
}

/// Extractor plugin that replays features precomputed by an external model.
class PrecomputedExtractor : public AudioFeatureExtractor {
 public:
  explicit PrecomputedExtractor(fs::path bin_path) : path_(std::move(bin_path)) {}
  AudioFeatureSeq extract(const AudioBuffer&) const override { return read_audio_features(path_); }

 private:
  fs::path path_;
};

}  // namespace mmvap
