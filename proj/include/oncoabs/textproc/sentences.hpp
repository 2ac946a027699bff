#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "oncoabs/textproc/normalize.hpp"

namespace oncoabs::text {

struct SentenceSpan {
  std::string doc_id;
  std::size_t sentence_index = 0;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
};

/// Tokens ending in '.' that do not end a sentence. Measurement units such as
/// "cm." are deliberately absent: in report prose they usually end one.
inline constexpr std::array<std::string_view, 12> kAbbreviations = {
    "dr.", "drs.", "no.", "nos.", "vs.", "mr.", "mrs.", "ms.", "st.", "e.g.", "i.e.", "approx."};

namespace detail {

inline bool is_abbreviation(std::string_view text, std::size_t dot) {
  std::size_t b = dot;
  while (b > 0 && !is_space(text[b - 1])) --b;
  const std::string_view word = text.substr(b, dot + 1 - b);
  for (auto a : kAbbreviations)
    if (word == a) return true;
  return false;
}

}  // namespace detail

/// Splits normalized text on '.', '!', '?', ';' followed by whitespace or the
/// end of text. Spans are in the coordinates of `text`, ordered, and exclude
/// surrounding whitespace.
inline std::vector<SentenceSpan> split_sentences(std::string_view text, std::string_view doc_id = {}) {
  std::vector<SentenceSpan> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto skip_space = [&] {
    while (i < n && is_space(text[i])) ++i;
  };
  skip_space();
  std::size_t start = i;
  while (i < n) {
    const char c = text[i];
    const bool terminal = c == '.' || c == '!' || c == '?' || c == ';';
    if (terminal && (i + 1 == n || is_space(text[i + 1])) && !(c == '.' && detail::is_abbreviation(text, i))) {
      out.push_back({std::string(doc_id), out.size(), start, i + 1});
      ++i;
      skip_space();
      start = i;
      continue;
    }
    ++i;
  }
  if (start < n) {
    std::size_t end = n;
    while (end > start && is_space(text[end - 1])) --end;
    if (end > start) out.push_back({std::string(doc_id), out.size(), start, end});
  }
  return out;
}

}  // namespace oncoabs::text
