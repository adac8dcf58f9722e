#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmvap/error.hpp"
#include "mmvap/va.hpp"

namespace mmvap {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Session manifests
// ---------------------------------------------------------------------------

struct ChannelSpec {
  std::string participant_id;
  fs::path audio_path;
  fs::path transcript_path;
  fs::path visual_csv_path;
};

struct SessionManifest {
  std::string session_id;
  double duration_s = 0.0;
  std::array<ChannelSpec, 2> channels;
  fs::path manifest_path;
};

inline SessionManifest parse_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("manifest JSON: ") + e.what());
  }

  auto require = [&](const json& obj, const char* field) -> const json& {
    if (!obj.contains(field))
      throw Error(ErrorCode::SchemaViolation, std::string("missing field '") + field + "'");
    return obj.at(field);
  };

  SessionManifest m;
  m.manifest_path = path;
  m.session_id = require(j, "session_id").get<std::string>();
  m.duration_s = require(j, "duration_s").get<double>();
  if (!(m.duration_s > 0.0))
    throw Error(ErrorCode::SchemaViolation, "field 'duration_s' must be > 0");
  const json& channels = require(j, "channels");
  if (!channels.is_array() || channels.size() != 2)
    throw Error(ErrorCode::ChannelCountNot2,
                "expected 2 channels, got " + std::to_string(channels.size()));
  fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  for (size_t i = 0; i < 2; ++i) {
    const json& c = channels[i];
    m.channels[i].participant_id = require(c, "participant_id").get<std::string>();
    m.channels[i].audio_path = resolve(require(c, "audio").get<std::string>());
    m.channels[i].transcript_path = resolve(require(c, "transcript").get<std::string>());
    m.channels[i].visual_csv_path = resolve(require(c, "visual_csv").get<std::string>());
  }
  if (m.channels[0].participant_id == m.channels[1].participant_id)
    throw Error(ErrorCode::SchemaViolation, "field 'participant_id' must be distinct per channel");
  return m;
}

inline void write_manifest(const fs::path& path, const SessionManifest& m) {
  json j;
  j["session_id"] = m.session_id;
  j["duration_s"] = m.duration_s;
  j["channels"] = json::array();
  for (const auto& c : m.channels) {
    j["channels"].push_back({{"participant_id", c.participant_id},
                             {"audio", c.audio_path.filename().string()},
                             {"transcript", c.transcript_path.filename().string()},
                             {"visual_csv", c.visual_csv_path.filename().string()}});
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

/// Collect session manifests from a corpus directory (session_*.json or any
/// *.json file containing a session_id field).
inline std::vector<SessionManifest> load_corpus(const fs::path& dir) {
  if (!fs::exists(dir)) throw Error(ErrorCode::MissingFile, dir.string());
  std::vector<fs::path> paths;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json" &&
        entry.path().filename().string().rfind("session_", 0) == 0)
      paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<SessionManifest> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(parse_manifest(p));
  return out;
}

// ---------------------------------------------------------------------------
// Word-aligned transcripts
// ---------------------------------------------------------------------------

struct Transcript {
  std::vector<WordAlignment> words;          // sorted by start
  std::vector<std::string> overlap_warnings;  // intra-channel overlapping words
};

inline Transcript parse_transcript(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("transcript JSON: ") + e.what());
  }
  if (!j.is_array()) throw Error(ErrorCode::SchemaViolation, "transcript must be a JSON array");

  Transcript t;
  for (const auto& e : j) {
    if (!e.contains("word") || !e.contains("start_s") || !e.contains("end_s"))
      throw Error(ErrorCode::SchemaViolation, "transcript entry needs word/start_s/end_s");
    WordAlignment w;
    w.word = e.at("word").get<std::string>();
    w.start_s = e.at("start_s").get<double>();
    w.end_s = e.at("end_s").get<double>();
    if (w.start_s < 0.0)
      throw Error(ErrorCode::SchemaViolation, "field 'start_s' must be >= 0");
    if (!(w.end_s > w.start_s))
      throw Error(ErrorCode::NonMonotonicTimes,
                  "word '" + w.word + "' has end_s <= start_s");
    t.words.push_back(std::move(w));
  }
  std::stable_sort(t.words.begin(), t.words.end(),
                   [](const WordAlignment& a, const WordAlignment& b) { return a.start_s < b.start_s; });
  for (size_t i = 1; i < t.words.size(); ++i) {
    if (t.words[i].start_s < t.words[i - 1].end_s - 1e-9)
      t.overlap_warnings.push_back("overlapping words '" + t.words[i - 1].word + "' and '" +
                                   t.words[i].word + "'");
  }
  return t;
}

inline void write_transcript(const fs::path& path, const std::vector<WordAlignment>& words) {
  json j = json::array();
  for (const auto& w : words)
    j.push_back({{"word", w.word}, {"start_s", w.start_s}, {"end_s", w.end_s}});
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Visual feature CSVs (OpenFace column layout)
// ---------------------------------------------------------------------------

// Internal channel layout of the 60-dim feature vector.
constexpr size_t kVisualDims = 60;
constexpr size_t kFauCount = 17;
constexpr size_t kFauOffset = 0;
constexpr size_t kGazeOffset = 17;   // 6 dims, two 3-d gaze vectors
constexpr size_t kHeadPosOffset = 23;  // 3 dims
constexpr size_t kHeadRotOffset = 26;  // 3 dims
constexpr size_t kLandmarkOffset = 29;  // 30 dims, 15 (x, y) pairs
constexpr size_t kConfidenceIndex = 59;

inline const std::vector<std::string>& fau_column_names() {
  static const std::vector<std::string> names = {
      "AU01_r", "AU02_r", "AU04_r", "AU05_r", "AU06_r", "AU07_r", "AU09_r", "AU10_r", "AU12_r",
      "AU14_r", "AU15_r", "AU17_r", "AU20_r", "AU23_r", "AU25_r", "AU26_r", "AU45_r"};
  return names;
}

/// CSV column name for each internal channel index.
inline std::vector<std::string> visual_channel_names() {
  std::vector<std::string> names;
  names.reserve(kVisualDims);
  for (const auto& n : fau_column_names()) names.push_back(n);
  for (const char* n : {"gaze_0_x", "gaze_0_y", "gaze_0_z", "gaze_1_x", "gaze_1_y", "gaze_1_z"})
    names.push_back(n);
  for (const char* n : {"pose_Tx", "pose_Ty", "pose_Tz"}) names.push_back(n);
  for (const char* n : {"pose_Rx", "pose_Ry", "pose_Rz"}) names.push_back(n);
  for (int i = 0; i < 15; ++i) {
    names.push_back("x_" + std::to_string(i));
    names.push_back("y_" + std::to_string(i));
  }
  names.push_back("confidence");
  return names;
}

struct RawVisualTrack {
  double frame_rate = 30.0;
  std::vector<double> timestamps;
  std::vector<std::array<double, kVisualDims>> values;
  std::vector<uint8_t> gap;  // 1 = row was missing or unparseable

  size_t n_frames() const { return values.size(); }
  size_t n_gaps() const {
    size_t c = 0;
    for (auto g : gap) c += g;
    return c;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim spaces
    size_t b = field.find_first_not_of(" \t\r");
    size_t e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace detail

inline RawVisualTrack parse_visual_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::string header;
  if (!std::getline(in, header) || header.empty())
    throw Error(ErrorCode::EmptyFile, path.string());

  auto cols = detail::split_csv_line(header);
  auto col_index = [&](const std::string& name) -> size_t {
    auto it = std::find(cols.begin(), cols.end(), name);
    if (it == cols.end()) throw Error(ErrorCode::MissingColumn, name);
    return static_cast<size_t>(it - cols.begin());
  };

  size_t ts_col = col_index("timestamp");
  col_index("frame");
  std::array<size_t, kVisualDims> chan_col{};
  auto names = visual_channel_names();
  for (size_t i = 0; i < kVisualDims; ++i) chan_col[i] = col_index(names[i]);

  RawVisualTrack track;
  std::string line;
  size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    std::array<double, kVisualDims> vals{};
    bool ok = fields.size() >= cols.size();
    double ts = 0.0;
    if (ok) {
      try {
        ts = std::stod(fields[ts_col]);
        for (size_t i = 0; i < kVisualDims; ++i) {
          vals[i] = std::stod(fields[chan_col[i]]);
          if (!std::isfinite(vals[i])) ok = false;
        }
        if (!std::isfinite(ts)) ok = false;
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) {
      vals.fill(0.0);
      ts = track.timestamps.empty() ? static_cast<double>(row) / track.frame_rate
                                    : track.timestamps.back() + 1.0 / track.frame_rate;
    }
    track.timestamps.push_back(ts);
    track.values.push_back(vals);
    track.gap.push_back(ok ? 0 : 1);
    ++row;
  }
  if (track.values.empty()) throw Error(ErrorCode::EmptyFile, path.string());
  return track;
}

inline void write_visual_csv(const fs::path& path, const RawVisualTrack& track) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  auto names = visual_channel_names();
  // Header follows the extractor's layout: bookkeeping columns first.
  out << "frame,timestamp,confidence";
  for (const char* n : {"gaze_0_x", "gaze_0_y", "gaze_0_z", "gaze_1_x", "gaze_1_y", "gaze_1_z",
                        "pose_Tx", "pose_Ty", "pose_Tz", "pose_Rx", "pose_Ry", "pose_Rz"})
    out << ',' << n;
  for (const auto& n : fau_column_names()) out << ',' << n;
  for (int i = 0; i < 15; ++i) out << ",x_" << i << ",y_" << i;
  out << '\n';
  out.precision(6);
  out << std::fixed;
  for (size_t f = 0; f < track.n_frames(); ++f) {
    const auto& v = track.values[f];
    out << (f + 1) << ',' << track.timestamps[f] << ',' << v[kConfidenceIndex];
    for (size_t i = 0; i < 6; ++i) out << ',' << v[kGazeOffset + i];
    for (size_t i = 0; i < 3; ++i) out << ',' << v[kHeadPosOffset + i];
    for (size_t i = 0; i < 3; ++i) out << ',' << v[kHeadRotOffset + i];
    for (size_t i = 0; i < kFauCount; ++i) out << ',' << v[kFauOffset + i];
    for (size_t i = 0; i < 30; ++i) out << ',' << v[kLandmarkOffset + i];
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

}  // namespace mmvap
