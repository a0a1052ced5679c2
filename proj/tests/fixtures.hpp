#pragma once

// Hand-built kern documents covering ties, fermatas, continuations, barlines,
// rests and one to four voices.

#include <string>
#include <vector>

#include "a2s/kern.hpp"

namespace a2s::test {

struct Fixture {
  std::string name;
  std::string text;
};

inline const std::vector<Fixture>& kern_fixtures() {
  static const std::vector<Fixture> kFixtures{
      {"single_note", "**kern\n4c\n=\n*-\n"},
      {"scale", "**kern\n8c\n8d\n8e\n8f\n=\n8g\n8a\n8b\n8cc\n=\n*-\n"},
      {"rests", "**kern\n4r\n4c\n2r\n=\n1r;\n=\n*-\n"},
      {"dotted", "**kern\n4.c\n8d\n2.e\n4f\n=\n*-\n"},
      {"tie_pair", "**kern\n2c\n[2d\n=\n4d]\n4e\n2f\n=\n*-\n"},
      {"tie_chain", "**kern\n[2g\n2g_\n=\n2g_\n2g]\n=\n*-\n"},
      {"fermata_end", "**kern\n4c\n4d\n2e;\n==\n*-\n"},
      {"accidentals", "**kern\n4c#\n4e-\n4f#\n4b-\n=\n4BB-\n4C#\n2GG#\n=\n*-\n"},
      {"low_high", "**kern\n4CC\n4C\n4c\n4ccc\n=\n*-\n"},
      {"duo_homophonic", "**kern\t**kern\n4C\t4e\n4D\t4f\n=\t=\n2E\t2g\n=\t=\n*-\t*-\n"},
      {"duo_continuations", "**kern\t**kern\n2C\t4c\n.\t8d\n.\t8e\n=\t=\n4.D\t2f\n8E\t.\n4F\t4g;\n=\t=\n*-\t*-\n"},
      {"duo_ties", "**kern\t**kern\n2C\t[2c\n=\t=\n2C\t2c]\n=\t=\n[1E\t4r\n.\t2d\n.\t4e\n=\t=\n1E]\t1f;\n==\t==\n*-\t*-\n"},
      {"duo_rests", "**kern\t**kern\n4r\t4c\n4G\t4r\n=\t=\n2r\t2r\n=\t=\n*-\t*-\n"},
      {"trio", "**kern\t**kern\t**kern\n4C\t4e\t4g\n4D\t4f\t4a\n=\t=\t=\n2E\t2g\t2cc;\n=\t=\t=\n*-\t*-\t*-\n"},
      {"trio_mixed", "**kern\t**kern\t**kern\n2GG\t4d\t8b\n.\t.\t8cc\n.\t4e\t[4dd\n=\t=\t=\n2C\t2e\t2dd]\n=\t=\t=\n*-\t*-\t*-\n"},
      {"quartet_chorale",
       "**kern\t**kern\t**kern\t**kern\n4C\t4G\t4e\t4cc\n4F\t4A\t4f\t4cc\n=\t=\t=\t=\n4G\t4G\t4d\t4b\n4C;\t4G;\t4e;\t4cc;\n==\t==\t==\t==\n*-\t*-\t*-\t*-\n"},
      {"quartet_moving",
       "**kern\t**kern\t**kern\t**kern\n2C\t4G\t8e\t8g\n.\t.\t8f\t8a\n.\t4A\t4g\t[4b\n=\t=\t=\t=\n1F\t2A\t2a\t4b]\n.\t.\t.\t4cc\n.\t2B-\t2g\t2dd;\n=\t=\t=\t=\n*-\t*-\t*-\t*-\n"},
      {"quartet_rests",
       "**kern\t**kern\t**kern\t**kern\n4r\t4r\t4r\t4c\n4C\t4r\t4e\t4g\n=\t=\t=\t=\n2r\t2G\t2r\t2cc\n=\t=\t=\t=\n*-\t*-\t*-\t*-\n"},
      {"sixteenths", "**kern\t**kern\n4C\t16c\n.\t16d\n.\t16e\n.\t16f\n4G\t4g\n=\t=\n*-\t*-\n"},
      {"whole_notes", "**kern\n1c\n=\n1d\n=\n1e;\n=\n*-\n"},
      {"leading_barline", "**kern\t**kern\n=0\t=0\n4C\t4c\n=1\t=1\n4D\t4d\n=2\t=2\n*-\t*-\n"},
      {"no_final_barline", "**kern\t**kern\n4C\t4e\n=\t=\n4D\t4f\n*-\t*-\n"},
      {"interpretations",
       "!!!OMD: Allegro\n**kern\t**kern\n*clefF4\t*clefG2\n*k[b-]\t*k[b-]\n*M2/4\t*M2/4\n4F\t4a\n4C\t4b-\n=\t=\n2F;\t2cc;\n=\t=\n*-\t*-\n"},
      {"chords_and_split",
       "**kern\t**kern\n4C 4G\t4e 4c\n*\t*^\n4D\t4f\t4a\n*\t*v\t*v\n=\t=\n2E\t2g\n=\t=\n*-\t*-\n"},
  };
  return kFixtures;
}

inline std::vector<kern::KernDocument> preprocessed_fixtures() {
  std::vector<kern::KernDocument> out;
  for (const auto& f : kern_fixtures()) out.push_back(kern::preprocess(kern::parse_kern(f.text, f.name)));
  return out;
}

}  // namespace a2s::test
