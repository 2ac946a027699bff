#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace oncoabs::text {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

/// Normalized text plus, for every normalized byte, the byte offset in the
/// source it came from.
struct NormalizedText {
  std::string text;
  std::vector<std::size_t> source_offsets;

  /// Source byte range covering normalized range [begin, end).
  std::pair<std::size_t, std::size_t> to_source(std::size_t begin, std::size_t end) const {
    if (begin >= end) {
      const std::size_t at = begin < source_offsets.size() ? source_offsets[begin] : source_end;
      return {at, at};
    }
    return {source_offsets[begin], source_offsets[end - 1] + 1};
  }

  std::size_t source_end = 0;
};

/// ASCII-lowercases, collapses whitespace runs to one space, and trims both
/// ends. Non-ASCII bytes pass through unchanged.
inline NormalizedText normalize_with_offsets(std::string_view src) {
  NormalizedText out;
  out.text.reserve(src.size());
  out.source_offsets.reserve(src.size());
  out.source_end = src.size();
  bool pending_space = false;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const char c = src[i];
    if (is_space(c)) {
      if (!out.text.empty() && !pending_space) {
        pending_space = true;
        out.source_offsets.push_back(i);  // provisional slot for the space
      }
      continue;
    }
    if (pending_space) {
      out.text.push_back(' ');
      pending_space = false;
    }
    out.text.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c);
    out.source_offsets.push_back(i);
  }
  if (pending_space) out.source_offsets.pop_back();
  return out;
}

inline std::string normalize(std::string_view src) { return normalize_with_offsets(src).text; }

/// Byte length of the UTF-8 sequence starting with `lead` (1 for invalid leads).
inline std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

/// Splits a word into UTF-8 characters.
inline std::vector<std::string_view> utf8_chars(std::string_view word) {
  std::vector<std::string_view> out;
  for (std::size_t i = 0; i < word.size();) {
    std::size_t n = std::min(utf8_length(static_cast<unsigned char>(word[i])), word.size() - i);
    out.push_back(word.substr(i, n));
    i += n;
  }
  return out;
}

}  // namespace oncoabs::text
