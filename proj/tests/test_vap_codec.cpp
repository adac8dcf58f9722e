#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "mmvap/vap.hpp"

using namespace mmvap;

TEST_CASE("bin spans are 10/20/30/40 frames starting at 0/10/30/60") {
  auto counts = bin_frame_counts();
  auto offsets = bin_frame_offsets();
  CHECK(counts == std::array<size_t, 4>{10, 20, 30, 40});
  CHECK(offsets == std::array<size_t, 4>{0, 10, 30, 60});
  size_t total = 0;
  for (size_t b = 0; b < 4; ++b) {
    CHECK(offsets[b] == total);
    total += counts[b];
  }
  CHECK(total == kProjectionFrames);
}

TEST_CASE("state round-trip is the identity on all 256 states") {
  for (unsigned i = 0; i < 256; ++i) {
    auto bins = decode_state(i);
    CHECK(state_from_bits(bins).index == i);
  }
  CHECK_THROWS_AS((void)decode_state(256), Error);
}

TEST_CASE("bit layout is speaker-major, bin-minor") {
  auto bins = decode_state(0x31);  // A bins {0}, B bins {0,1}
  CHECK(bins[0] == std::array<bool, 4>{true, false, false, false});
  CHECK(bins[1] == std::array<bool, 4>{true, true, false, false});
  VapState st{0x31};
  CHECK(st.bit(Speaker::A, 0));
  CHECK(st.bit(Speaker::B, 1));
  CHECK_FALSE(st.bit(Speaker::A, 1));
}

TEST_CASE("swap_speakers is an involution that exchanges nibbles") {
  for (unsigned i = 0; i < 256; ++i) {
    uint8_t s = swap_speakers(static_cast<uint8_t>(i));
    CHECK(swap_speakers(s) == i);
    auto orig = decode_state(i);
    auto swapped = decode_state(s);
    CHECK(orig[0] == swapped[1]);
    CHECK(orig[1] == swapped[0]);
  }
}

TEST_CASE("encode_window applies the half-filled majority rule") {
  std::vector<uint8_t> a(100, 0), b(100, 0);
  // A: exactly 5 of the first bin's 10 frames -> bin set (>= 50%).
  for (size_t i = 0; i < 5; ++i) a[i] = 1;
  // B: 9 of bin 1's 20 frames -> below half, unset.
  for (size_t i = 10; i < 19; ++i) b[i] = 1;
  VapState st = encode_window(a, b);
  CHECK(st.bit(Speaker::A, 0));
  CHECK_FALSE(st.bit(Speaker::B, 1));
  CHECK_FALSE(st.bit(Speaker::A, 1));

  CHECK_THROWS_AS((void)encode_window(std::vector<uint8_t>(99, 0), b), Error);
}

TEST_CASE("encode_window random oracle") {
  std::mt19937_64 rng(11);
  auto counts = bin_frame_counts();
  auto offsets = bin_frame_offsets();
  for (int iter = 0; iter < 500; ++iter) {
    std::vector<uint8_t> a(100), b(100);
    for (auto& v : a) v = rng() & 1;
    for (auto& v : b) v = rng() & 1;
    VapState st = encode_window(a, b);
    for (size_t s = 0; s < 2; ++s) {
      const auto& f = s == 0 ? a : b;
      for (size_t bin = 0; bin < 4; ++bin) {
        double active = 0;
        for (size_t i = 0; i < counts[bin]; ++i) active += f[offsets[bin] + i];
        bool expect = active / static_cast<double>(counts[bin]) >= 0.5;
        REQUIRE(st.bit(s == 0 ? Speaker::A : Speaker::B, bin) == expect);
      }
    }
  }
}

TEST_CASE("labels_for_session masks the trailing 2 s and matches per-window encoding") {
  std::mt19937_64 rng(23);
  DyadVa dyad;
  for (int i = 0; i < 400; ++i) {
    dyad.a.frames.push_back(rng() % 4 == 0);
    dyad.b.frames.push_back(rng() % 4 == 0);
  }
  SessionLabels labels = labels_for_session(dyad);
  REQUIRE(labels.states.size() == 400);
  for (size_t t = 0; t < 400; ++t) {
    bool has_future = t + 100 < 400;
    CHECK(static_cast<bool>(labels.valid[t]) == has_future);
    if (!has_future) continue;
    std::vector<uint8_t> wa(dyad.a.frames.begin() + t + 1, dyad.a.frames.begin() + t + 101);
    std::vector<uint8_t> wb(dyad.b.frames.begin() + t + 1, dyad.b.frames.begin() + t + 101);
    REQUIRE(labels.states[t] == encode_window(wa, wb).index);
  }

  DyadVa tiny;
  tiny.a.frames.assign(99, 0);
  tiny.b.frames.assign(99, 0);
  CHECK_THROWS_AS((void)labels_for_session(tiny), Error);
}

TEST_CASE("shift probability of the uniform distribution is 1/4") {
  VapDistribution uniform;
  for (auto& p : uniform.probs) p = 1.0 / 256.0;
  CHECK(shift_probability(uniform, Speaker::A) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(shift_probability(uniform, Speaker::B) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("shift probability sums exactly the listener bin-2+3 states") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  VapDistribution d;
  double sum = 0.0;
  for (auto& p : d.probs) {
    p = u(rng);
    sum += p;
  }
  for (auto& p : d.probs) p /= sum;
  for (Speaker active : {Speaker::A, Speaker::B}) {
    double expect = 0.0;
    for (size_t i = 0; i < 256; ++i) {
      auto bins = decode_state(static_cast<unsigned>(i));
      size_t listener = active == Speaker::A ? 1 : 0;
      if (bins[listener][2] && bins[listener][3]) expect += d.probs[i];
    }
    CHECK(shift_probability(d, active) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("invalid distributions are rejected") {
  VapDistribution d;
  d.probs[0] = 0.5;  // sums to 0.5
  CHECK_THROWS_AS((void)shift_probability(d, Speaker::A), Error);
  VapDistribution neg;
  for (auto& p : neg.probs) p = 1.0 / 255.0;
  neg.probs[3] = -1.0 / 255.0;
  CHECK_THROWS_AS(validate(neg), Error);
}
