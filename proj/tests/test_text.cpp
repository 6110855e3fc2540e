#include <gtest/gtest.h>

#include <random>
#include <string>

#include "factorizer/binary_io.hpp"
#include "factorizer/symbols.hpp"
#include "factorizer/triplet.hpp"
#include "factorizer/utf8.hpp"

namespace fz = factorizer;

TEST(Utf8, DecodesMultiByteScalars) {
  const std::string s = "a\xC3\xA9\xE2\x82\xAC\xF0\x9F\x98\x80";  // a é € 😀
  std::size_t pos = 0;
  std::vector<char32_t> got;
  while (pos < s.size()) {
    const auto d = fz::utf8::decode(s, pos);
    ASSERT_TRUE(d.valid);
    got.push_back(d.scalar);
    pos += d.length;
  }
  EXPECT_EQ(got, (std::vector<char32_t>{U'a', U'é', U'€', U'😀'}));
}

TEST(Utf8, RejectsOverlongSurrogateAndTruncated) {
  for (const std::string bad : {"\xC0\xAF", "\xED\xA0\x80", "\xE2\x82", "\xFF", "\x80"}) {
    const auto d = fz::utf8::decode(bad, 0);
    EXPECT_FALSE(d.valid) << bad.size();
    EXPECT_EQ(d.length, 1u);
    EXPECT_FALSE(fz::utf8::is_valid(bad));
  }
}

TEST(Utf8, AppendRoundTripsEveryPlane) {
  for (char32_t c : {U'\0', U'A', U'߿', U'ࠀ', U'�', U'\U00010000', U'\U0010FFFF'}) {
    std::string s;
    fz::utf8::append(s, c);
    const auto d = fz::utf8::decode(s, 0);
    EXPECT_TRUE(d.valid);
    EXPECT_EQ(d.scalar, c);
    EXPECT_EQ(d.length, s.size());
  }
}

TEST(Utf8, WhitespaceIncludesUnicodeSeparators) {
  for (char32_t c : {U' ', U'\t', U'\n', U' ', U' ', U'　', U' '}) {
    EXPECT_TRUE(fz::utf8::is_whitespace(c));
  }
  for (char32_t c : {U'a', U'​', U'-'}) EXPECT_FALSE(fz::utf8::is_whitespace(c));
}

TEST(BoundedWord, SymbolsCarryMarkersAtTheEdges) {
  const auto w = fz::BoundedWord::full("ab");
  EXPECT_EQ(w.symbols(), (fz::SymbolString{fz::kBow, 'a', 'b', fz::kEow}));
  EXPECT_EQ(w.size(), 4u);
  EXPECT_EQ(fz::BoundedWord::from_symbols(w.symbols()), w);
  const fz::BoundedWord interior{"ab", false, false};
  EXPECT_EQ(interior.symbols(), (fz::SymbolString{'a', 'b'}));
}

TEST(BoundedWord, OrdersBySymbols) {
  // Markers sort after every byte.
  EXPECT_LT((fz::BoundedWord{"a", false, false}), (fz::BoundedWord{"a", false, true}));
  EXPECT_LT((fz::BoundedWord{"z", false, false}), (fz::BoundedWord{"a", true, false}));
}

TEST(Display, MarkersAndEscapes) {
  EXPECT_EQ(fz::to_display(fz::BoundedWord::full("ab")), "\xE2\x90\xA3" "ab" "\xE2\x90\xA3");
  EXPECT_EQ(fz::to_display(fz::BoundedWord{"a b", false, false}), "a\\x20b");
  EXPECT_EQ(fz::to_display(fz::BoundedWord{"\\", false, false}), "\\\\");
  EXPECT_EQ(fz::to_display(fz::BoundedWord{"\xFF", false, false}), "\\xFF");
  EXPECT_EQ(fz::to_display(fz::BoundedWord{"\xC3\xA9", false, false}), "\xC3\xA9");
}

TEST(Display, RoundTripsRandomBytes) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_int_distribution<int> len(1, 8);
  for (int i = 0; i < 2000; ++i) {
    fz::BoundedWord w;
    const int n = len(rng);
    for (int k = 0; k < n; ++k) w.bytes.push_back(static_cast<char>(byte(rng)));
    w.bow = (i & 1) != 0;
    w.eow = (i & 2) != 0;
    EXPECT_EQ(fz::from_display(fz::to_display(w)), w);
  }
  // A literal U+2423 inside the bytes must not be read back as a marker.
  const fz::BoundedWord glyph{"\xE2\x90\xA3", false, false};
  EXPECT_EQ(fz::from_display(fz::to_display(glyph)), glyph);
}

TEST(Display, RejectsBadEscape) {
  EXPECT_THROW(fz::from_display("a\\q"), fz::FormatError);
  EXPECT_THROW(fz::from_display("a\\x4"), fz::FormatError);
}

TEST(Triplet, FormatsAndOrders) {
  const auto t = fz::make_triplet({96, 42, 127});
  EXPECT_EQ(t.to_string(), "96,42,127");
  EXPECT_LT(fz::make_triplet({0, 5, 5}), fz::make_triplet({1, 0, 0}));
  EXPECT_EQ(t[0], 96);
  EXPECT_EQ(t[2], 127);
}

TEST(BinaryIo, RoundTripsScalarsAndVarints) {
  fz::io::Writer w;
  w.u8(7);
  w.u16(0xBEEF);
  w.u32(0xDEADBEEF);
  w.u64(0x0123456789ABCDEFull);
  w.f64(-2.5);
  w.varint(0);
  w.varint(300);
  w.varint(~0ull);
  w.string("hello");
  fz::io::Reader r(w.buffer());
  EXPECT_EQ(r.u8(), 7);
  EXPECT_EQ(r.u16(), 0xBEEF);
  EXPECT_EQ(r.u32(), 0xDEADBEEFu);
  EXPECT_EQ(r.u64(), 0x0123456789ABCDEFull);
  EXPECT_EQ(r.f64(), -2.5);
  EXPECT_EQ(r.varint(), 0u);
  EXPECT_EQ(r.varint(), 300u);
  EXPECT_EQ(r.varint(), ~0ull);
  EXPECT_EQ(r.string(), "hello");
  EXPECT_TRUE(r.at_end());
  EXPECT_THROW(r.u8(), fz::FormatError);
}

TEST(BinaryIo, LittleEndianLayout) {
  fz::io::Writer w;
  w.u32(0x01020304);
  EXPECT_EQ(w.buffer(), std::string("\x04\x03\x02\x01", 4));
}

TEST(BinaryIo, HeaderErrorsNameVersions) {
  fz::io::Writer w;
  w.bytes("MAGICXYZ");
  w.u32(9);
  fz::io::Reader r(w.buffer());
  try {
    fz::io::expect_header(r, "MAGICXYZ", 1, "thing");
    FAIL() << "expected a version error";
  } catch (const fz::FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('9'), std::string::npos) << msg;
    EXPECT_NE(msg.find('1'), std::string::npos) << msg;
  }
  fz::io::Reader bad("NOTMAGIC\x01\0\0\0");
  EXPECT_THROW(fz::io::expect_header(bad, "MAGICXYZ", 1, "thing"), fz::FormatError);
}
