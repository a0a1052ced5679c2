#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "a2s/kern.hpp"
#include "a2s/spectrogram.hpp"
#include "a2s/synth.hpp"
#include "test_support.hpp"

namespace a2s {
namespace {

kern::KernDocument doc_of(const std::string& text) { return kern::preprocess(kern::parse_kern(text)); }

const kern::TempoMark kSixty{"test", 60.0};

double peak(const AudioClip& c) {
  double p = 0.0;
  for (const double v : c.samples) p = std::max(p, std::abs(v));
  return p;
}

TEST(Synth, QuarterAtSixtyIsOneSecond) {
  EXPECT_EQ(render(doc_of("**kern\n4a\n*-\n"), kSixty).samples.size(), 22050u);
}

TEST(Synth, LengthMatchesScoreDuration) {
  const auto d = doc_of("**kern\t**kern\n4.c\t8r\n8d\t4.e\n=\t=\n16f\t2g\n8.g\t.\n4a\t.\n*-\t*-\n");
  const kern::TempoMark tempo{"t", 97.3};
  const double seconds = 4.0 * 60.0 / 97.3;
  const auto c = render(d, tempo);
  EXPECT_LE(std::abs(static_cast<double>(c.samples.size()) - seconds * kSampleRate), 1.0);
}

TEST(Synth, WholeNoteA4PeaksAtItsBin) {
  const auto s = stft_logfreq(render(doc_of("**kern\n1a\n*-\n"), kSixty));
  ASSERT_GT(s.frames, 10u);
  for (std::size_t t = 1; t + 1 < s.frames; ++t) {
    std::size_t best = 0;
    for (std::size_t b = 1; b < s.bins; ++b) {
      if (s.at(t, b) > s.at(t, best)) best = b;
    }
    EXPECT_EQ(best, 132u) << t;
  }
}

TEST(Synth, TieHasNoReattack) {
  const auto tied = render(doc_of("**kern\n[2a\n2a]\n*-\n"), kSixty);
  const auto whole = render(doc_of("**kern\n1a\n*-\n"), kSixty);
  ASSERT_EQ(tied.samples.size(), 4u * 22050u);
  EXPECT_EQ(tied.samples, whole.samples);
  const auto repeated = render(doc_of("**kern\n2a\n2a\n*-\n"), kSixty);
  EXPECT_NE(repeated.samples, whole.samples);
}

TEST(Synth, RestsAreSilent) {
  const auto c = render(doc_of("**kern\t**kern\n2r\t4r\n.\t4r\n*-\t*-\n"), kSixty);
  EXPECT_EQ(c.samples.size(), 2u * 22050u);
  EXPECT_EQ(peak(c), 0.0);
}

TEST(Synth, PeakIsNormalized) {
  const auto c = render(doc_of("**kern\t**kern\t**kern\n4C\t4e\t4g\n4D\t4f\t4a\n*-\t*-\t*-\n"), kSixty);
  EXPECT_NEAR(peak(c), 0.9, 1e-12);
}

TEST(Synth, Deterministic) {
  const auto d = doc_of("**kern\t**kern\n4C\t8e\n.\t8f\n*-\t*-\n");
  EXPECT_EQ(render(d, kSixty).samples, render(d, kSixty).samples);
}

TEST(Synth, Errors) {
  const auto d = doc_of("**kern\t**kern\n4C\t4c\n*-\t*-\n");
  const std::vector<SynthVoiceSpec> one(1);
  EXPECT_EQ(test::error_of([&] { render(d, kSixty, one); }), Errc::VoiceCountMismatch);
  std::vector<SynthVoiceSpec> bad(2);
  bad[1].harmonic_amplitudes = {0.5, 0.9};
  EXPECT_EQ(test::error_of([&] { render(d, kSixty, bad); }), Errc::InvalidConfig);
}

}  // namespace
}  // namespace a2s
