#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "oncoabs/common/error.hpp"
#include "oncoabs/common/hash.hpp"
#include "oncoabs/textproc/normalize.hpp"

namespace oncoabs::text {

using TokenId = std::uint32_t;

/// Special tokens occupy ids [0, kSpecialCount).
enum Special : TokenId { kPad = 0, kUnk, kCls, kSep, kMask, kPathMarker, kRadMarker, kOpMarker, kSpecialCount };

inline constexpr std::array<std::string_view, kSpecialCount> kSpecialNames = {
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[PATH]", "[RAD]", "[OP]"};

/// Subword vocabulary: special tokens, then base characters in byte order,
/// then merged units in merge order.
class Vocab {
 public:
  static constexpr int kFormatVersion = 1;

  Vocab() { rebuild({}, {}); }

  Vocab(std::vector<std::string> base_chars, std::vector<std::pair<std::string, std::string>> merges) {
    rebuild(std::move(base_chars), std::move(merges));
  }

  std::size_t size() const noexcept { return units_.size(); }
  const std::string& unit(TokenId id) const { return units_.at(id); }
  const std::vector<std::string>& units() const noexcept { return units_; }
  const std::vector<std::pair<std::string, std::string>>& merges() const noexcept { return merges_; }
  std::size_t base_count() const noexcept { return base_count_; }
  std::size_t max_unit_chars() const noexcept { return max_unit_chars_; }

  static bool is_special(TokenId id) noexcept { return id < kSpecialCount; }

  std::optional<TokenId> find(std::string_view unit) const {
    auto it = index_.find(std::string(unit));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Merge rank of a merged unit, or nullopt for specials and base characters.
  std::optional<std::size_t> merge_rank(std::string_view unit) const {
    auto it = ranks_.find(std::string(unit));
    if (it == ranks_.end()) return std::nullopt;
    return it->second;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["format"] = kFormatVersion;
    nlohmann::ordered_json specials = nlohmann::ordered_json::object();
    for (TokenId i = 0; i < kSpecialCount; ++i) specials[std::string(kSpecialNames[i])] = i;
    j["specials"] = specials;
    j["units"] = units_;
    nlohmann::ordered_json merges = nlohmann::ordered_json::array();
    for (const auto& [a, b] : merges_) merges.push_back({a, b});
    j["merges"] = merges;
    return j;
  }

  std::string serialize() const { return to_json().dump(); }

  static Vocab from_json(const nlohmann::json& j) {
    if (!j.contains("format") || j["format"].get<int>() != kFormatVersion)
      throw FormatError("vocab: unsupported format version");
    const auto units = j.at("units").get<std::vector<std::string>>();
    std::vector<std::pair<std::string, std::string>> merges;
    for (const auto& m : j.at("merges")) merges.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
    std::vector<std::string> base;
    const std::size_t base_end = units.size() - merged_unit_count(merges);
    for (std::size_t i = kSpecialCount; i < base_end; ++i) base.push_back(units[i]);
    Vocab v(std::move(base), std::move(merges));
    if (v.units_ != units) throw FormatError("vocab: unit list inconsistent with merges");
    return v;
  }

  /// Content hash used to bind checkpoints and datasets to this vocabulary.
  std::uint64_t hash() const { return fnv1a(serialize()); }

 private:
  static std::size_t merged_unit_count(const std::vector<std::pair<std::string, std::string>>& merges) {
    std::set<std::string> seen;
    for (const auto& [a, b] : merges) seen.insert(a + b);
    return seen.size();
  }

  void rebuild(std::vector<std::string> base, std::vector<std::pair<std::string, std::string>> merges) {
    units_.clear();
    index_.clear();
    ranks_.clear();
    for (auto s : kSpecialNames) add_unit(std::string(s));
    std::sort(base.begin(), base.end());
    base.erase(std::unique(base.begin(), base.end()), base.end());
    for (auto& c : base) add_unit(c);
    base_count_ = base.size();
    merges_ = std::move(merges);
    for (std::size_t r = 0; r < merges_.size(); ++r) {
      std::string u = merges_[r].first + merges_[r].second;
      if (!index_.count(u)) {
        ranks_.emplace(u, r);
        add_unit(u);
      }
    }
    max_unit_chars_ = 1;
    for (std::size_t i = kSpecialCount; i < units_.size(); ++i)
      max_unit_chars_ = std::max(max_unit_chars_, utf8_chars(units_[i]).size());
  }

  void add_unit(std::string u) {
    index_.emplace(u, static_cast<TokenId>(units_.size()));
    units_.push_back(std::move(u));
  }

  std::vector<std::string> units_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::unordered_map<std::string, TokenId> index_;
  std::unordered_map<std::string, std::size_t> ranks_;
  std::size_t base_count_ = 0;
  std::size_t max_unit_chars_ = 1;
};

/// Greedy pair-merge vocabulary learning over whitespace-separated words of
/// the normalized texts. Each step merges the most frequent adjacent pair
/// (ties: lexicographically smallest pair) until `target_size` units exist or
/// no pair occurs at least twice.
inline Vocab learn_vocab(std::span<const std::string> texts, std::size_t target_size) {
  std::map<std::string, std::uint64_t> word_freq;
  for (const auto& t : texts) {
    const std::string norm = normalize(t);
    std::size_t i = 0;
    while (i < norm.size()) {
      std::size_t j = norm.find(' ', i);
      if (j == std::string::npos) j = norm.size();
      if (j > i) ++word_freq[norm.substr(i, j - i)];
      i = j + 1;
    }
  }

  // Symbols are interned as integers; `names` maps them back to strings.
  std::vector<std::string> names;
  std::unordered_map<std::string, std::uint32_t> ids;
  auto intern = [&](const std::string& s) {
    auto [it, fresh] = ids.emplace(s, static_cast<std::uint32_t>(names.size()));
    if (fresh) names.push_back(s);
    return it->second;
  };

  struct Word {
    std::vector<std::uint32_t> symbols;
    std::uint64_t freq;
  };
  std::vector<Word> words;
  std::set<std::string> base;
  for (const auto& [w, f] : word_freq) {
    Word word{{}, f};
    for (auto ch : utf8_chars(w)) {
      base.insert(std::string(ch));
      word.symbols.push_back(intern(std::string(ch)));
    }
    words.push_back(std::move(word));
  }

  const std::size_t floor = kSpecialCount + base.size();
  if (target_size < floor)
    throw ConfigError("target_size", "must be at least " + std::to_string(floor) +
                                         " (special tokens + distinct characters), got " +
                                         std::to_string(target_size));

  std::vector<std::pair<std::string, std::string>> merges;
  std::set<std::string> units(base.begin(), base.end());
  std::size_t size = floor;
  std::unordered_map<std::uint64_t, std::uint64_t> counts;
  while (size < target_size) {
    counts.clear();
    for (const auto& w : words)
      for (std::size_t k = 0; k + 1 < w.symbols.size(); ++k)
        counts[(std::uint64_t{w.symbols[k]} << 32) | w.symbols[k + 1]] += w.freq;
    std::uint64_t best_count = 0;
    std::uint64_t best_key = 0;
    for (const auto& [key, c] : counts) {
      if (c < best_count) continue;
      if (c > best_count) {
        best_count = c;
        best_key = key;
        continue;
      }
      const auto& a = names[key >> 32];
      const auto& b = names[key & 0xffffffffu];
      const auto& ba = names[best_key >> 32];
      const auto& bb = names[best_key & 0xffffffffu];
      if (std::tie(a, b) < std::tie(ba, bb)) best_key = key;
    }
    if (best_count < 2) break;
    const std::uint32_t left = static_cast<std::uint32_t>(best_key >> 32);
    const std::uint32_t right = static_cast<std::uint32_t>(best_key & 0xffffffffu);
    const std::string merged = names[left] + names[right];
    merges.emplace_back(names[left], names[right]);
    const std::uint32_t mid = intern(merged);
    if (units.insert(merged).second) ++size;
    for (auto& w : words) {
      std::vector<std::uint32_t> next;
      next.reserve(w.symbols.size());
      for (std::size_t k = 0; k < w.symbols.size(); ++k) {
        if (k + 1 < w.symbols.size() && w.symbols[k] == left && w.symbols[k + 1] == right) {
          next.push_back(mid);
          ++k;
        } else {
          next.push_back(w.symbols[k]);
        }
      }
      w.symbols = std::move(next);
    }
  }
  return Vocab(std::vector<std::string>(base.begin(), base.end()), std::move(merges));
}

inline void save_vocab(const std::filesystem::path& path, const Vocab& v) { write_file(path, v.serialize()); }

inline Vocab load_vocab(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError("vocabulary " + path.string(), "build-vocab");
  try {
    return Vocab::from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("vocab " + path.string() + ": " + e.what());
  }
}

}  // namespace oncoabs::text
