#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "a2s/codec.hpp"
#include "fixtures.hpp"
#include "test_support.hpp"

namespace a2s {
namespace {

using test::error_of;

kern::KernDocument doc_of(const std::string& text) { return kern::preprocess(kern::parse_kern(text)); }

std::shared_ptr<const Vocabulary> vocab_of(const std::vector<kern::KernDocument>& docs) {
  return std::make_shared<const Vocabulary>(build_vocabulary(docs));
}

std::vector<Token> ids(const Vocabulary& v, std::initializer_list<const char*> texts) {
  std::vector<Token> out;
  for (const char* t : texts) out.push_back(*v.find(t));
  return out;
}

TEST(Vocabulary, MinimalCorpus) {
  const auto v = build_vocabulary(std::vector{doc_of("**kern\n4c\n=\n*-\n")});
  std::vector<std::string> texts;
  for (Token t = 0; t < v.size(); ++t) texts.push_back(v.text(t));
  EXPECT_EQ(texts, (std::vector<std::string>{"<eps>", "\t", "\n", ".", "=", "[", "]", ";", "4", "C4"}));
  EXPECT_EQ(v.index(Symbol::of(SymbolKind::Blank)), 0u);
}

TEST(Vocabulary, CanonicalOrderIndependentOfCorpusOrder) {
  auto docs = test::preprocessed_fixtures();
  const auto a = build_vocabulary(docs);
  std::reverse(docs.begin(), docs.end());
  const auto b = build_vocabulary(docs);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.hash(), b.hash());
  for (Token t = 9; t < a.size(); ++t) EXPECT_TRUE(symbol_less(a.symbol(t - 1), a.symbol(t)));
}

TEST(Vocabulary, Errors) {
  EXPECT_EQ(error_of([] { build_vocabulary(std::vector<kern::KernDocument>{}); }), Errc::EmptyCorpus);
  const auto v = build_vocabulary(std::vector{doc_of("**kern\n4c\n*-\n")});
  EXPECT_EQ(error_of([&] { v.index(*parse_symbol("D4")); }), Errc::OutOfVocabulary);
}

TEST(Vocabulary, FileRoundTrip) {
  const auto v = build_vocabulary(test::preprocessed_fixtures());
  std::ostringstream out;
  write_vocabulary(out, v);
  EXPECT_EQ(out.str().substr(0, 12), "<eps>\n\\t\n\\n\n");
  std::istringstream in(out.str());
  EXPECT_EQ(read_vocabulary(in), v);
}

TEST(Symbols, TextRoundTrip) {
  const auto v = build_vocabulary(test::preprocessed_fixtures());
  for (const auto& s : v.symbols()) {
    const auto back = parse_symbol(symbol_text(s));
    ASSERT_TRUE(back) << symbol_text(s);
    EXPECT_EQ(*back, s);
  }
  EXPECT_FALSE(parse_symbol("H4"));
  EXPECT_FALSE(parse_symbol("3"));
  EXPECT_FALSE(parse_symbol(""));
}

TEST(Encode, FourVoiceRow) {
  const auto d = doc_of("**kern\t**kern\t**kern\t**kern\n4c\t4c\t4c\t4c\n=\t=\t=\t=\n*-\t*-\t*-\t*-\n");
  const auto v = vocab_of({d});
  const auto seq = encode(d, v);
  EXPECT_EQ(seq.tokens, ids(*v, {"4", "C4", "\t", "4", "C4", "\t", "4", "C4", "\t", "4", "C4", "\n", "=", "\n"}));
  EXPECT_EQ(segment_words(seq).size(), 5u);
}

TEST(Encode, TiesAndFermatas) {
  const auto d = doc_of("**kern\n[4c\n4c_\n4c];\n2r;\n*-\n");
  const auto v = vocab_of({d});
  EXPECT_EQ(encode(d, v).tokens,
            ids(*v, {"[", "4", "C4", "\n", "[", "4", "C4", "]", "\n", "4", "C4", ";", "]", "\n", "2", "r", ";", "\n"}));
}

TEST(Encode, NeverEmitsBlank) {
  const auto docs = test::preprocessed_fixtures();
  const auto v = vocab_of(docs);
  for (const auto& d : docs) {
    const auto seq = encode(d, v);
    EXPECT_EQ(std::count(seq.tokens.begin(), seq.tokens.end(), Vocabulary::kBlank), 0);
  }
}

TEST(Encode, OutOfVocabulary) {
  const auto v = vocab_of({doc_of("**kern\n4c\n*-\n")});
  EXPECT_EQ(error_of([&] { encode(doc_of("**kern\n4d\n*-\n"), v); }), Errc::OutOfVocabulary);
}

TEST(Encode, RequiresPreprocessing) {
  const auto v = vocab_of({doc_of("**kern\n4c\n*-\n")});
  EXPECT_EQ(error_of([&] { encode(kern::parse_kern("**kern\n4c 4c\n*-\n"), v); }), Errc::MalformedSpine);
}

TEST(Decode, RoundTripsEveryFixture) {
  const auto docs = test::preprocessed_fixtures();
  ASSERT_GE(docs.size(), 20u);
  const auto v = vocab_of(docs);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto back = decode(encode(docs[i], v));
    EXPECT_TRUE(kern::structurally_equal(back, docs[i])) << test::kern_fixtures()[i].name;
  }
}

TEST(Decode, WordCountMatchesCells) {
  const auto docs = test::preprocessed_fixtures();
  const auto v = vocab_of(docs);
  for (const auto& d : docs) {
    std::size_t expected = 0;
    for (const auto& row : d.rows) expected += row.kind == kern::RowKind::Barline ? 1 : row.cells.size();
    EXPECT_EQ(segment_words(encode(d, v)).size(), expected);
  }
}

TEST(Decode, EmptyCellsFailAtZero) {
  const auto v = vocab_of({doc_of("**kern\n4c\n*-\n")});
  try {
    decode(ids(*v, {"\t", "\t", "\n"}), *v);
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.code(), Errc::SyntaxError);
    EXPECT_EQ(e.position(), 0u);
  }
}

TEST(Decode, TruncationKeepsCompleteRows) {
  const auto d = doc_of("**kern\t**kern\n4c\t4d\n=\t=\n4e\t4f\n*-\t*-\n");
  const auto v = vocab_of({d});
  auto tokens = encode(d, v).tokens;
  tokens.pop_back();
  try {
    decode(tokens, *v);
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.position(), tokens.size());
    ASSERT_EQ(e.partial().rows.size(), 2u);
    EXPECT_EQ(e.partial().spines.size(), 2u);
    EXPECT_TRUE(kern::structurally_equal(e.partial(), [&] {
      auto p = d;
      p.rows.pop_back();
      return p;
    }()));
  }
}

TEST(Decode, Malformations) {
  const auto v = vocab_of({doc_of("**kern\n[4c\n4c]\n4r;\n=\n*-\n")});
  const auto fails_at = [&](std::initializer_list<const char*> t) {
    try {
      decode(ids(*v, t), *v);
    } catch (const DecodeError& e) {
      return static_cast<long>(e.position());
    }
    return -1L;
  };
  EXPECT_EQ(fails_at({"4", "C4", "\t", "4", "C4", "\n", "4", "C4", "\n"}), 6);
  EXPECT_EQ(fails_at({"C4", "\n"}), 0);
  EXPECT_EQ(fails_at({"4", "\n"}), 1);
  EXPECT_EQ(fails_at({"[", "4", "r", "\n"}), 0);
  EXPECT_EQ(fails_at({"=", "4"}), 1);
  EXPECT_EQ(fails_at({"4", "C4", "4", "\n"}), 2);
  EXPECT_EQ(fails_at({"=", "\n"}), 0);
  EXPECT_EQ(fails_at({"4", "C4", ";", ";", "\n"}), 3);
  EXPECT_EQ(fails_at({"<eps>", "\n"}), 0);
  EXPECT_THROW(decode(std::vector<Token>{}, *v), DecodeError);
  EXPECT_THROW(decode(std::vector<Token>{static_cast<Token>(v->size())}, *v), DecodeError);
}

TEST(SegmentWords, Basics) {
  const auto v = vocab_of({doc_of("**kern\n4c\n=\n*-\n")});
  EXPECT_EQ(segment_words(TokenSequence{v, ids(*v, {"=", "\n"})}), (std::vector<WordSpan>{{0, 1}}));
  EXPECT_TRUE(segment_words(TokenSequence{v, {}}).empty());
  EXPECT_EQ(segment_words(TokenSequence{v, ids(*v, {"\t", "4", "C4", "\t", "\n", "."})}),
            (std::vector<WordSpan>{{1, 3}, {5, 6}}));
}

}  // namespace
}  // namespace a2s
