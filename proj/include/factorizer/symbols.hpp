#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "factorizer/error.hpp"
#include "factorizer/utf8.hpp"

namespace factorizer {

// Words are sequences over 256 byte values plus two boundary markers. The
// decoder additionally uses a padding symbol, which doubles as the
// end-of-sequence marker for subwords that do not end a word.
using Symbol = std::uint16_t;
using SymbolString = std::vector<Symbol>;

inline constexpr Symbol kBow = 256;
inline constexpr Symbol kEow = 257;
inline constexpr Symbol kPad = 258;
inline constexpr int kAlphabetSize = 258;
inline constexpr int kDecoderSymbols = 259;

/// A word or subword: raw bytes plus optional beginning/end-of-word markers.
/// A full word carries both markers, an interior subword neither.
struct BoundedWord {
  std::string bytes;
  bool bow = false;
  bool eow = false;

  static BoundedWord full(std::string_view word) { return {std::string(word), true, true}; }

  std::size_t size() const { return bytes.size() + (bow ? 1 : 0) + (eow ? 1 : 0); }

  SymbolString symbols() const {
    SymbolString out;
    out.reserve(size());
    if (bow) out.push_back(kBow);
    for (unsigned char c : bytes) out.push_back(c);
    if (eow) out.push_back(kEow);
    return out;
  }

  /// Inverse of symbols(); markers are only accepted at the edges.
  static BoundedWord from_symbols(std::span<const Symbol> symbols) {
    BoundedWord word;
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      const Symbol s = symbols[i];
      if (s == kBow) {
        require(i == 0, "beginning-of-word marker must be the first symbol");
        word.bow = true;
      } else if (s == kEow) {
        require(i + 1 == symbols.size(), "end-of-word marker must be the last symbol");
        word.eow = true;
      } else {
        require(s < 256, "symbol outside the byte alphabet");
        word.bytes.push_back(static_cast<char>(s));
      }
    }
    return word;
  }

  friend bool operator==(const BoundedWord&, const BoundedWord&) = default;
  friend auto operator<=>(const BoundedWord& a, const BoundedWord& b) {
    return a.symbols() <=> b.symbols();
  }
};

namespace detail {

inline constexpr std::string_view kMarkerGlyph = "\xE2\x90\xA3";  // U+2423

inline void append_hex_escape(std::string& out, unsigned char c) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  out += "\\x";
  out.push_back(kHex[c >> 4]);
  out.push_back(kHex[c & 0xF]);
}

inline int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

}  // namespace detail

/// Human-readable rendering of a subword. Markers print as U+2423, printable
/// ASCII and valid multi-byte UTF-8 print verbatim, everything else (space,
/// controls, invalid bytes, a literal U+2423, backslash) is escaped.
inline std::string to_display(const BoundedWord& word) {
  std::string out;
  if (word.bow) out += detail::kMarkerGlyph;
  const std::string_view bytes = word.bytes;
  std::size_t i = 0;
  while (i < bytes.size()) {
    const auto c = static_cast<unsigned char>(bytes[i]);
    if (c == '\\') {
      out += "\\\\";
      ++i;
    } else if (c > 0x20 && c < 0x7F) {
      out.push_back(static_cast<char>(c));
      ++i;
    } else if (c >= 0x80) {
      const auto decoded = utf8::decode(bytes, i);
      if (decoded.valid && decoded.scalar != 0x2423) {
        out.append(bytes.substr(i, decoded.length));
        i += decoded.length;
      } else {
        for (std::size_t k = 0; k < decoded.length; ++k) {
          detail::append_hex_escape(out, static_cast<unsigned char>(bytes[i + k]));
        }
        i += decoded.length;
      }
    } else {
      detail::append_hex_escape(out, c);
      ++i;
    }
  }
  if (word.eow) out += detail::kMarkerGlyph;
  return out;
}

/// Parses the output of to_display().
inline BoundedWord from_display(std::string_view text) {
  BoundedWord word;
  if (text.starts_with(detail::kMarkerGlyph)) {
    word.bow = true;
    text.remove_prefix(detail::kMarkerGlyph.size());
  }
  if (text.ends_with(detail::kMarkerGlyph)) {
    word.eow = true;
    text.remove_suffix(detail::kMarkerGlyph.size());
  }
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '\\') {
      word.bytes.push_back(text[i]);
      continue;
    }
    if (i + 1 < text.size() && text[i + 1] == '\\') {
      word.bytes.push_back('\\');
      ++i;
    } else if (i + 3 < text.size() && text[i + 1] == 'x' && detail::hex_value(text[i + 2]) >= 0 &&
               detail::hex_value(text[i + 3]) >= 0) {
      word.bytes.push_back(
          static_cast<char>(detail::hex_value(text[i + 2]) * 16 + detail::hex_value(text[i + 3])));
      i += 3;
    } else {
      throw FormatError("malformed escape sequence in subword '" + std::string(text) + "'");
    }
  }
  return word;
}

}  // namespace factorizer
