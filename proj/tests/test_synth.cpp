#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include "mmvap/events.hpp"
#include "mmvap/synth.hpp"
#include "mmvap/va.hpp"

using namespace mmvap;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("mmvap_synth_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

SyntheticCorpusConfig small_config(uint64_t seed = 7) {
  SyntheticCorpusConfig cfg;
  cfg.n_sessions = 2;
  cfg.session_duration_s = 60.0;
  cfg.seed = seed;
  return cfg;
}

DyadVa dyad_of(const SessionManifest& m) {
  DyadVa d;
  d.a = va_from_words(parse_transcript(m.channels[0].transcript_path).words, m.duration_s);
  d.b = va_from_words(parse_transcript(m.channels[1].transcript_path).words, m.duration_s);
  return d;
}

}  // namespace

TEST_CASE("same seed produces byte-identical corpora") {
  TempDir t1, t2, t3;
  auto cfg = small_config();
  generate_synthetic_corpus(cfg, t1.path);
  generate_synthetic_corpus(cfg, t2.path);
  cfg.seed = 8;
  generate_synthetic_corpus(cfg, t3.path);

  size_t n_files = 0;
  bool any_difference_vs_other_seed = false;
  for (const auto& ent : fs::recursive_directory_iterator(t1.path)) {
    if (!ent.is_regular_file()) continue;
    ++n_files;
    fs::path rel = fs::relative(ent.path(), t1.path);
    REQUIRE(slurp(ent.path()) == slurp(t2.path / rel));
    if (slurp(ent.path()) != slurp(t3.path / rel)) any_difference_vs_other_seed = true;
  }
  CHECK(n_files == 2 * (1 + 2 * 3));  // per session: manifest + 2x (wav, words, csv)
  CHECK(any_difference_vs_other_seed);
}

TEST_CASE("generated manifests load back and point at existing files") {
  TempDir tmp;
  auto manifests = generate_synthetic_corpus(small_config(), tmp.path);
  REQUIRE(manifests.size() == 2);

  auto corpus = load_corpus(tmp.path);
  REQUIRE(corpus.size() == 2);
  for (const auto& m : corpus) {
    CHECK(m.duration_s == doctest::Approx(60.0));
    for (const auto& ch : m.channels) {
      CHECK(fs::exists(ch.audio_path));
      CHECK(fs::exists(ch.transcript_path));
      CHECK(fs::exists(ch.visual_csv_path));
      CHECK(parse_transcript(ch.transcript_path).overlap_warnings.empty());
      RawVisualTrack v = parse_visual_csv(ch.visual_csv_path);
      CHECK(v.n_frames() == 1800);  // 60 s at 30 fps
      CHECK(v.n_gaps() == 0);
    }
  }
}

TEST_CASE("generated dialogue yields both holds and shifts") {
  TempDir tmp;
  auto cfg = small_config(21);
  cfg.n_sessions = 4;
  cfg.overlap_rate = 0.5;
  auto manifests = generate_synthetic_corpus(cfg, tmp.path);
  size_t shifts = 0, holds = 0, overlaps = 0;
  for (const auto& m : manifests) {
    DyadVa d = dyad_of(m);
    for (const auto& e : extract_gap_events(d, 0.0))
      (e.kind == EventKind::Shift ? shifts : holds)++;
    overlaps += extract_overlap_shifts(d).size();
  }
  CHECK(shifts > 5);
  CHECK(holds > 5);
  CHECK(overlaps >= 1);  // overlap_rate 0.1 over ~4x10 shifts
}

TEST_CASE("audio is gated by the words and silent elsewhere") {
  TempDir tmp;
  auto manifests = generate_synthetic_corpus(small_config(3), tmp.path);
  const auto& ch = manifests[0].channels[0];
  AudioBuffer buf = read_wav(ch.audio_path);
  CHECK(buf.sample_rate == kAudioRateHz);
  CHECK(buf.samples.size() == 60 * kAudioRateHz);
  auto words = parse_transcript(ch.transcript_path).words;
  REQUIRE_FALSE(words.empty());
  // Mid-word sample is (almost surely) nonzero; pre-session sample is zero.
  size_t mid = static_cast<size_t>((words[5].start_s + words[5].end_s) / 2.0 * kAudioRateHz);
  CHECK(buf.samples[mid] != 0.0);
  CHECK(buf.samples[0] == 0.0);
}

TEST_CASE("cue channel ramps ahead of shifts and stays flat without a cue") {
  TempDir with_cue, no_cue;
  auto cfg = small_config(5);
  cfg.visual_cue_strength = 2.0;
  auto manifests = generate_synthetic_corpus(cfg, with_cue.path);
  cfg.visual_cue_strength = 0.0;
  auto flat = generate_synthetic_corpus(cfg, no_cue.path);

  // Without a cue, AU45_r is the constant silence base on every frame.
  for (const auto& ch : flat[0].channels) {
    RawVisualTrack v = parse_visual_csv(ch.visual_csv_path);
    for (const auto& row : v.values)
      REQUIRE(row[kFauOffset + kCueFauIndex] == doctest::Approx(kFauSilenceBase).epsilon(1e-9));
  }

  // With a cue, the next speaker's AU45_r reaches full strength at the shift
  // gap start while the previous speaker's stays near base.
  size_t checked = 0;
  for (const auto& m : manifests) {
    DyadVa d = dyad_of(m);
    std::array<RawVisualTrack, 2> tracks = {parse_visual_csv(m.channels[0].visual_csv_path),
                                            parse_visual_csv(m.channels[1].visual_csv_path)};
    for (const auto& e : extract_gap_events(d, 0.25)) {
      if (e.kind != EventKind::Shift) continue;
      auto peak_near = [&](Speaker s) {
        double best = 0.0;
        const auto& tr = tracks[static_cast<size_t>(s)];
        for (size_t f = 0; f < tr.n_frames(); ++f)
          if (tr.timestamps[f] >= e.gap_start_s - 0.2 && tr.timestamps[f] <= e.gap_start_s)
            best = std::max(best, tr.values[f][kFauOffset + kCueFauIndex]);
        return best;
      };
      CHECK(peak_near(e.next_speaker) > 1.5);
      CHECK(peak_near(e.prev_speaker) < kFauSilenceBase + 0.6);
      ++checked;
    }
  }
  CHECK(checked > 3);
}

TEST_CASE("configuration validation") {
  SyntheticCorpusConfig cfg;
  cfg.n_sessions = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.overlap_rate = 1.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.gap.sd_s = -0.1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK_NOTHROW(SyntheticCorpusConfig{}.validate());
}
