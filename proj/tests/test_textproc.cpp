#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "oncoabs/corpus/entailment.hpp"
#include "oncoabs/textproc/assemble.hpp"
#include "oncoabs/textproc/normalize.hpp"
#include "oncoabs/textproc/sentences.hpp"
#include "oncoabs/textproc/tokenize.hpp"
#include "oncoabs/textproc/vocab.hpp"
#include "support/fixtures.hpp"

using namespace oncoabs;
using namespace oncoabs::text;

TEST(Normalize, LowercasesAndCollapsesWhitespace) {
  EXPECT_EQ(normalize("Invasive  Ductal\nCarcinoma"), "invasive ductal carcinoma");
  EXPECT_EQ(normalize(""), "");
  EXPECT_EQ(normalize("  \t "), "");
  EXPECT_EQ(normalize("  a \n\n b  "), "a b");
}

TEST(Normalize, OffsetsMapBackToSource) {
  const std::string src = "Invasive  Ductal\nCarcinoma";
  const auto n = normalize_with_offsets(src);
  const auto pos = n.text.find("carcinoma");
  ASSERT_NE(pos, std::string::npos);
  auto [b, e] = n.to_source(pos, pos + 9);
  EXPECT_EQ(src.substr(b, e - b), "Carcinoma");
  ASSERT_EQ(n.source_offsets.size(), n.text.size());
}

TEST(Normalize, OffsetRoundTripOnCorpus) {
  for (const auto& p : fixture::small_corpus().patients)
    for (const auto& d : p.documents) {
      const auto n = normalize_with_offsets(d.text);
      std::size_t i = 0;
      while (i < n.text.size()) {
        std::size_t j = n.text.find(' ', i);
        if (j == std::string::npos) j = n.text.size();
        auto [b, e] = n.to_source(i, j);
        ASSERT_EQ(normalize(std::string_view(d.text).substr(b, e - b)), n.text.substr(i, j - i));
        i = j + 1;
      }
    }
}

TEST(Sentences, SplitsOnTerminators) {
  EXPECT_EQ(split_sentences("tumor is 2 cm. margins are clear.").size(), 2u);
  EXPECT_EQ(split_sentences("seen by dr. smith today.").size(), 1u);
  EXPECT_EQ(split_sentences("a; b! c? d").size(), 4u);
  EXPECT_EQ(split_sentences("measures 2.5 cm").size(), 1u);
  EXPECT_TRUE(split_sentences("").empty());
}

TEST(Sentences, SpansAreOrderedAndCoverText) {
  const std::string t = "one two. three;  four";
  const auto spans = split_sentences(t);
  ASSERT_EQ(spans.size(), 3u);
  std::string rebuilt;
  for (std::size_t k = 0; k < spans.size(); ++k) {
    if (k) {
      EXPECT_LE(spans[k - 1].char_end, spans[k].char_start);
    }
    rebuilt += t.substr(spans[k].char_start, spans[k].char_end - spans[k].char_start);
  }
  std::string compact;
  for (char c : t)
    if (!is_space(c)) compact += c;
  std::string rebuilt_compact;
  for (char c : rebuilt)
    if (!is_space(c)) rebuilt_compact += c;
  EXPECT_EQ(rebuilt_compact, compact);
}

TEST(Sentences, RecoverPlantedSentences) {
  const auto& b = fixture::small_corpus();
  std::size_t docs = 0;
  for (const auto& p : b.patients)
    for (const auto& d : p.documents) {
      const auto* planted = fixture::planted_for(b, d.doc_id);
      ASSERT_NE(planted, nullptr);
      const auto n = normalize_with_offsets(d.text);
      const auto spans = split_sentences(n.text);
      ASSERT_EQ(spans.size(), planted->sentence_count()) << d.doc_id;
      for (std::size_t k = 0; k < spans.size(); ++k) {
        auto [s, e] = n.to_source(spans[k].char_start, spans[k].char_end);
        EXPECT_EQ(s, planted->sentences[k].char_start);
        EXPECT_EQ(e, planted->sentences[k].char_end);
      }
      ++docs;
    }
  EXPECT_GT(docs, 100u);
}

namespace {

// Reference pair-merge learner: plain strings, full recount every step.
std::vector<std::pair<std::string, std::string>> oracle_merges(const std::vector<std::string>& words, std::size_t n_steps) {
  std::map<std::string, int> freq;
  for (const auto& w : words) ++freq[w];
  std::vector<std::pair<std::vector<std::string>, int>> segs;
  for (const auto& [w, f] : freq) {
    std::vector<std::string> s;
    for (char c : w) s.emplace_back(1, c);
    segs.emplace_back(s, f);
  }
  std::vector<std::pair<std::string, std::string>> merges;
  for (std::size_t step = 0; step < n_steps; ++step) {
    std::map<std::pair<std::string, std::string>, int> counts;
    for (const auto& [s, f] : segs)
      for (std::size_t i = 0; i + 1 < s.size(); ++i) counts[{s[i], s[i + 1]}] += f;
    std::pair<std::string, std::string> best;
    int best_count = 0;
    for (const auto& [pair, c] : counts)  // std::map iterates pairs in lexicographic order
      if (c > best_count) {
        best = pair;
        best_count = c;
      }
    if (best_count < 2) break;
    merges.push_back(best);
    for (auto& [s, f] : segs) {
      std::vector<std::string> next;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (i + 1 < s.size() && s[i] == best.first && s[i + 1] == best.second) {
          next.push_back(best.first + best.second);
          ++i;
        } else {
          next.push_back(s[i]);
        }
      }
      s = next;
    }
  }
  return merges;
}

// Reference segmentation: at each position try every unit and keep the longest match.
std::vector<std::string> oracle_segment(const Vocab& v, const std::string& word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    std::string best;
    for (std::size_t id = kSpecialCount; id < v.size(); ++id) {
      const auto& u = v.unit(static_cast<TokenId>(id));
      if (u.size() > best.size() && word.compare(i, u.size(), u) == 0) best = u;
    }
    if (best.empty()) best = word.substr(i, 1);
    out.push_back(best);
    i += best.size();
  }
  return out;
}

}  // namespace

TEST(Vocab, MergesMatchBruteForceOracle) {
  const std::vector<std::string> texts = {"low", "lower", "lowest"};
  const Vocab v = learn_vocab(texts, 1000);
  EXPECT_EQ(v.merges(), oracle_merges(texts, 1000));
  EXPECT_FALSE(v.merges().empty());
  EXPECT_EQ(v.merges().front(), (std::pair<std::string, std::string>{"l", "o"}));
}

TEST(Vocab, MergesMatchOracleOnCorpusWords) {
  std::vector<std::string> words;
  for (const auto& t : fixture::all_texts(fixture::small_corpus())) {
    const auto n = normalize(t);
    std::size_t i = 0;
    while (i < n.size() && words.size() < 3000) {
      std::size_t j = n.find(' ', i);
      if (j == std::string::npos) j = n.size();
      words.push_back(n.substr(i, j - i));
      i = j + 1;
    }
  }
  std::string joined;
  for (const auto& w : words) joined += w + " ";
  std::set<char> chars(joined.begin(), joined.end());
  chars.erase(' ');
  const std::size_t target = kSpecialCount + chars.size() + 60;
  const Vocab v = learn_vocab(std::vector<std::string>{joined}, target);
  EXPECT_EQ(v.merges(), oracle_merges(words, 60));
}

TEST(Vocab, SpecialsFirstAndCharactersCovered) {
  const Vocab& v = fixture::small_vocab();
  for (TokenId i = 0; i < kSpecialCount; ++i) EXPECT_EQ(v.unit(i), kSpecialNames[i]);
  for (const auto& t : fixture::all_texts(fixture::small_corpus()))
    for (char c : normalize(t))
      if (c != ' ') {
        ASSERT_TRUE(v.find(std::string(1, c)).has_value()) << c;
      }
}

TEST(Vocab, ZeroMergeBoundary) {
  const std::vector<std::string> texts = {"low", "lower", "lowest"};
  const std::size_t floor = kSpecialCount + std::string("lowerst").size();
  const Vocab v = learn_vocab(texts, floor);
  EXPECT_TRUE(v.merges().empty());
  EXPECT_EQ(v.size(), floor);
  const auto toks = tokenize(v, "lowest");
  ASSERT_EQ(toks.size(), 6u);
  for (const auto& t : toks) EXPECT_EQ(v.unit(t.id).size(), 1u);
}

TEST(Vocab, TargetTooSmallIsConfigError) {
  const std::vector<std::string> texts = {"low", "lower"};
  try {
    learn_vocab(texts, 3);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "target_size");
  }
}

TEST(Vocab, DeterministicAndSerializable) {
  const auto texts = fixture::all_texts(fixture::small_corpus());
  const Vocab a = learn_vocab(texts, 400);
  const Vocab b = learn_vocab(texts, 400);
  EXPECT_EQ(a.serialize(), b.serialize());
  const Vocab c = Vocab::from_json(nlohmann::json::parse(a.serialize()));
  EXPECT_EQ(c.serialize(), a.serialize());
  EXPECT_EQ(c.hash(), a.hash());
}

TEST(Vocab, RejectsWrongFormat) {
  auto j = nlohmann::json::parse(fixture::small_vocab().serialize());
  j["format"] = 99;
  EXPECT_THROW(Vocab::from_json(j), FormatError);
}

TEST(Tokenize, LongestMatchAgreesWithOracle) {
  const std::vector<std::string> texts = {"low", "lower", "lowest"};
  const Vocab v = learn_vocab(texts, 1000);
  for (std::string w : {"lowest", "lower", "low", "slow", "owe", "wollew"}) {
    std::vector<std::string> got;
    for (const auto& t : tokenize(v, w)) got.push_back(v.unit(t.id));
    if (w.find_first_not_of("lowerst") == std::string::npos) {
      EXPECT_EQ(got, oracle_segment(v, w)) << w;
    }
  }
}

TEST(Tokenize, UnseenWordOfSeenCharactersHasNoUnk) {
  const Vocab& v = fixture::small_vocab();
  for (const auto& t : tokenize(v, "carcinomatosis neoplasmic tumorous")) EXPECT_NE(t.id, kUnk);
}

TEST(Tokenize, UnknownCharacterBecomesUnk) {
  const Vocab& v = fixture::small_vocab();
  const auto toks = tokenize(v, "tumor \xE2\x82\xAC");  // euro sign never appears in the corpus
  ASSERT_FALSE(toks.empty());
  EXPECT_EQ(toks.back().id, kUnk);
  EXPECT_EQ(toks.back().end - toks.back().begin, 3u);
}

TEST(Tokenize, DecodeRoundTripOnGeneratedSentences) {
  const auto& b = fixture::small_corpus();
  const Vocab& v = fixture::small_vocab();
  std::size_t checked = 0;
  for (const auto& p : b.patients)
    for (const auto& d : p.documents) {
      const auto n = normalize(d.text);
      for (const auto& s : split_sentences(n)) {
        if (checked == 1000) break;
        const std::string sent = n.substr(s.char_start, s.char_end - s.char_start);
        const auto toks = tokenize(v, sent);
        ASSERT_TRUE(std::none_of(toks.begin(), toks.end(), [](const Token& t) { return t.id == kUnk; }));
        EXPECT_EQ(decode(v, toks), sent);
        ++checked;
      }
    }
  EXPECT_EQ(checked, 1000u);
}

namespace {

corpus::Patient two_doc_patient() {
  corpus::Patient p;
  p.patient_id = "X1";
  p.documents.push_back({"X1-D01", "X1", corpus::DocumentKind::Pathology, 100, "Adenocarcinoma of the Liver. Margins clear."});
  p.documents.push_back({"X1-D02", "X1", corpus::DocumentKind::Radiology, 160, "Mass in the liver."});
  return p;
}

}  // namespace

TEST(Assemble, WindowArithmetic) {
  const auto p = two_doc_patient();
  const Vocab& v = fixture::small_vocab();
  const auto narrow = assemble_input(p, {30, 30}, 100, corpus::KindSet::all(), v);
  EXPECT_EQ(narrow.doc_ids, std::vector<std::string>{"X1-D01"});
  const auto wide = assemble_input(p, {30, 90}, 100, corpus::KindSet::all(), v);
  EXPECT_EQ(wide.doc_ids, (std::vector<std::string>{"X1-D01", "X1-D02"}));
  EXPECT_EQ(wide.window_start, 70);
  EXPECT_EQ(wide.window_end, 190);
  EXPECT_THROW(assemble_input(p, {30, 30}, 500, corpus::KindSet::all(), v), EmptyInputError);
  EXPECT_THROW(assemble_input(p, {30, 90}, 100, corpus::KindSet{corpus::DocumentKind::Operative}, v), EmptyInputError);
}

TEST(Assemble, LayoutMarkersAndSeparators) {
  const auto p = two_doc_patient();
  const Vocab& v = fixture::small_vocab();
  const auto s = assemble_input(p, {30, 90}, 100, corpus::KindSet::all(), v);
  ASSERT_EQ(s.sentence_count(), 3u);
  EXPECT_EQ(s.ids[0], kCls);
  EXPECT_EQ(s.ids[1], kPathMarker);
  EXPECT_EQ(s.sentences[0].first, 2u);
  EXPECT_EQ(s.ids[s.sentences[1].second], kRadMarker);
  for (const auto& [b, e] : s.sentences) {
    EXPECT_EQ(s.ids[e - 1], kSep);
    for (std::size_t i = b; i + 1 < e; ++i) EXPECT_FALSE(Vocab::is_special(s.ids[i]));
  }
  EXPECT_EQ(s.provenance.size(), s.ids.size());
}

TEST(Assemble, ParseWindow) {
  EXPECT_EQ(parse_window("-30:90"), (Window{30, 90}));
  EXPECT_EQ(parse_window("30:30"), (Window{30, 30}));
  EXPECT_EQ(parse_window("0:0"), (Window{0, 0}));
  EXPECT_THROW(parse_window("abc"), std::invalid_argument);
  EXPECT_EQ(to_string(Window{30, 90}), "-30:90");
}

TEST(Assemble, ProvenanceExactAndChronological) {
  const auto& b = fixture::small_corpus();
  const Vocab& v = fixture::small_vocab();
  for (const auto& p : b.patients) {
    if (!p.registry) continue;
    const auto s = assemble_input(p, {30, 90}, p.registry->diagnosis_date, corpus::KindSet::all(), v);
    std::map<std::string, const corpus::ClinicalDocument*> docs;
    for (const auto& d : p.documents) docs[d.doc_id] = &d;
    int last_date = -1;
    for (std::size_t i = 0; i < s.ids.size(); ++i) {
      const auto& pv = s.provenance[i];
      if (pv.doc_index == kNoDocument) continue;
      const int date = s.doc_dates[pv.doc_index];
      ASSERT_GE(date, last_date);
      last_date = date;
      if (Vocab::is_special(s.ids[i])) continue;
      const auto& text = docs.at(s.doc_ids[pv.doc_index])->text;
      ASSERT_EQ(normalize(std::string_view(text).substr(pv.char_start, pv.char_end - pv.char_start)), v.unit(s.ids[i]));
    }
    ASSERT_EQ(s.sentence_sources.size(), s.sentence_count());
  }
}

TEST(Assemble, TruncationDropsWholeOldestSentences) {
  const auto& b = fixture::small_corpus();
  const Vocab& v = fixture::small_vocab();
  const corpus::Patient* p = nullptr;
  for (const auto& q : b.patients)
    if (q.registry) {
      p = &q;
      break;
    }
  ASSERT_NE(p, nullptr);
  const int dx = p->registry->diagnosis_date;
  const auto full = assemble_input(*p, {30, 90}, dx, corpus::KindSet::all(), v);
  ASSERT_GT(full.sentence_count(), 5u);
  const auto cut = assemble_input(*p, {30, 90}, dx, corpus::KindSet::all(), v, 5);
  ASSERT_EQ(cut.sentence_count(), 5u);
  EXPECT_EQ(cut.dropped_sentences, full.sentence_count() - 5);
  for (std::size_t k = 0; k < 5; ++k) {
    const auto& a = full.sentence_sources[full.sentence_count() - 5 + k];
    const auto& c = cut.sentence_sources[k];
    EXPECT_EQ(full.doc_ids[a.doc_index], cut.doc_ids[c.doc_index]);
    EXPECT_EQ(a.char_start, c.char_start);
    EXPECT_EQ(a.char_end, c.char_end);
    const auto fa = full.sentences[full.sentence_count() - 5 + k];
    const auto ca = cut.sentences[k];
    EXPECT_EQ(fa.second - fa.first, ca.second - ca.first);
  }
}

TEST(Assemble, PathologyOnlyInputMissesCrossDocumentSiteEvidence) {
  auto cfg = fixture::small_config(5);
  cfg.n_cancer_patients = 10;
  cfg.n_control_patients = 0;
  cfg.cross_doc_fraction = 1.0;
  const auto b = corpus::generate_corpus(cfg);
  const Vocab v = learn_vocab(fixture::all_texts(b), 400);
  auto facts_in = [&](const TokenSequence& s) {
    std::vector<corpus::Fact> facts;
    for (const auto& src : s.sentence_sources) {
      const auto* planted = fixture::planted_for(b, s.doc_ids[src.doc_index]);
      for (const auto& ps : planted->sentences)
        if (ps.char_start == src.char_start && ps.char_end == src.char_end)
          facts.insert(facts.end(), ps.facts.begin(), ps.facts.end());
    }
    return facts;
  };
  for (const auto& p : b.patients) {
    const auto& site = p.registry->label(corpus::AttributeKind::Site);
    const int dx = p.registry->diagnosis_date;
    const auto path_only = assemble_input(p, {30, 30}, dx, corpus::KindSet{corpus::DocumentKind::Pathology}, v);
    const auto all = assemble_input(p, {30, 30}, dx, corpus::KindSet::all(), v);
    EXPECT_FALSE(corpus::facts_entail(facts_in(path_only), corpus::AttributeKind::Site, site)) << p.patient_id;
    EXPECT_TRUE(corpus::facts_entail(facts_in(all), corpus::AttributeKind::Site, site)) << p.patient_id;
  }
}
