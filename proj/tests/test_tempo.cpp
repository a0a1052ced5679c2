#include <gtest/gtest.h>

#include <set>

#include "a2s/tempo.hpp"
#include "test_support.hpp"

namespace a2s::kern {
namespace {

TEST(Tempo, TableHasTwentyTwoDistinctLabels) {
  std::set<std::string> labels;
  for (const auto& e : kTempoTable) labels.insert(normalize_tempo_label(e.label));
  EXPECT_EQ(labels.size(), 22u);
}

TEST(Tempo, LookupIgnoresCaseAndSpacing) {
  EXPECT_EQ(lookup_tempo("allegro  MODERATO"), 120);
  EXPECT_EQ(lookup_tempo(" Largo "), 50);
  EXPECT_FALSE(lookup_tempo("Grave"));
}

TEST(Tempo, NoJitterIsExact) {
  const auto t = assign_tempo("Presto", std::nullopt);
  EXPECT_EQ(t.quarter_bpm, 186.0);
  EXPECT_EQ(t.label, "Presto");
}

TEST(Tempo, JitterIsSeededAndBounded) {
  const auto a = assign_tempo("Adagio", 77);
  EXPECT_EQ(a.quarter_bpm, assign_tempo("Adagio", 77).quarter_bpm);
  EXPECT_NE(a.quarter_bpm, assign_tempo("Adagio", 78).quarter_bpm);
  for (std::uint64_t s = 0; s < 200; ++s) {
    const double bpm = assign_tempo("Adagio", s).quarter_bpm;
    EXPECT_GE(bpm, 71.0 * 0.94);
    EXPECT_LE(bpm, 71.0 * 1.06);
  }
}

TEST(Tempo, UnknownLabel) {
  EXPECT_EQ(test::error_of([] { assign_tempo("Grave", std::nullopt); }), Errc::UnknownTempoLabel);
}

}  // namespace
}  // namespace a2s::kern
