#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oncoabs/textproc/normalize.hpp"
#include "oncoabs/textproc/vocab.hpp"

namespace oncoabs::text {

/// A token and its byte range in the text it was cut from.
struct Token {
  TokenId id = kUnk;
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Longest-match-first segmentation of each space-separated word of already
/// normalized text. Characters with no unit become [UNK]. Offsets are shifted
/// by `base_offset`.
inline std::vector<Token> tokenize_normalized(const Vocab& vocab, std::string_view norm, std::size_t base_offset = 0) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < norm.size()) {
    if (norm[i] == ' ') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < norm.size() && norm[j] != ' ') ++j;
    const std::string_view word = norm.substr(i, j - i);
    const auto chars = utf8_chars(word);
    std::vector<std::size_t> starts;  // byte offset of each character within word
    std::size_t off = 0;
    for (auto c : chars) {
      starts.push_back(off);
      off += c.size();
    }
    starts.push_back(word.size());
    std::size_t s = 0;
    while (s < chars.size()) {
      const std::size_t longest = std::min(chars.size(), s + vocab.max_unit_chars());
      bool matched = false;
      for (std::size_t e = longest; e > s; --e) {
        auto id = vocab.find(word.substr(starts[s], starts[e] - starts[s]));
        if (id && !Vocab::is_special(*id)) {
          out.push_back({*id, base_offset + i + starts[s], base_offset + i + starts[e]});
          s = e;
          matched = true;
          break;
        }
      }
      if (!matched) {
        out.push_back({kUnk, base_offset + i + starts[s], base_offset + i + starts[s + 1]});
        ++s;
      }
    }
    i = j;
  }
  return out;
}

/// Normalizes `text` and tokenizes it; offsets refer to the normalized text.
inline std::vector<Token> tokenize(const Vocab& vocab, std::string_view text) {
  return tokenize_normalized(vocab, normalize(text));
}

/// Inverse of tokenize for tokens without [UNK]: adjacent tokens are joined,
/// a gap in offsets becomes one space.
inline std::string decode(const Vocab& vocab, std::span<const Token> tokens) {
  std::string out;
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    if (k > 0 && tokens[k].begin != tokens[k - 1].end) out.push_back(' ');
    out += vocab.unit(tokens[k].id);
  }
  return out;
}

}  // namespace oncoabs::text
