#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "oncoabs/common/error.hpp"
#include "oncoabs/common/rng.hpp"
#include "oncoabs/corpus/codes.hpp"
#include "oncoabs/corpus/types.hpp"

namespace oncoabs::corpus {

struct IntRange {
  int min = 0;
  int max = 0;
  bool operator==(const IntRange&) const = default;
};

struct GeneratorConfig {
  std::size_t n_cancer_patients = 2000;
  std::size_t n_control_patients = 500;
  std::size_t n_site_classes = 24;
  std::size_t n_histology_classes = 30;
  /// Site evidence split between a Radiology location and a Pathology
  /// malignancy confirmation.
  double cross_doc_fraction = 0.5;
  /// Per-slot probability of a negated or benign mention of another site.
  double negation_rate = 0.5;
  /// Probability that a mention uses a paraphrase outside the alias lexicon.
  double variation_rate = 0.6;
  /// Number of pre-diagnosis history documents (cancer) or total documents (controls).
  IntRange docs_per_patient{1, 4};
  /// History documents fall this many days before diagnosis.
  IntRange pre_diagnosis_history_days{31, 720};
  std::uint64_t seed = 1;

  /// The site-bearing sentence (pathology, or radiology for cross-document
  /// patients) names the primary and a second site; their roles follow from
  /// word order only.
  double role_swap_rate = 0.35;
  /// Resection lands 31-90 days after diagnosis instead of 7-30.
  double late_resection_rate = 0.5;
  double surgery_rate = 0.8;
  double undocumented_stage_rate = 0.15;
  /// Per history document, chance of a suspicious but unconfirmed finding.
  double prediagnostic_suspicion_rate = 0.6;
  double control_suspicion_rate = 0.1;
  IntRange sentences_per_document{5, 12};
  double zipf_exponent = 0.6;
  std::size_t n_pretrain_notes = 3000;
};

inline void validate(const GeneratorConfig& c) {
  auto prob = [](double p, const char* field) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(field, "must be a probability in [0, 1]");
  };
  prob(c.cross_doc_fraction, "cross_doc_fraction");
  prob(c.negation_rate, "negation_rate");
  prob(c.variation_rate, "variation_rate");
  prob(c.role_swap_rate, "role_swap_rate");
  prob(c.late_resection_rate, "late_resection_rate");
  prob(c.surgery_rate, "surgery_rate");
  prob(c.undocumented_stage_rate, "undocumented_stage_rate");
  prob(c.prediagnostic_suspicion_rate, "prediagnostic_suspicion_rate");
  prob(c.control_suspicion_rate, "control_suspicion_rate");
  if (c.n_cancer_patients < 1) throw ConfigError("n_cancer_patients", "must be at least 1");
  if (c.n_site_classes < 2) throw ConfigError("n_site_classes", "must be at least 2");
  if (c.n_site_classes > 310) throw ConfigError("n_site_classes", "must be at most 310");
  if (c.n_site_classes > site_table().size())
    throw ConfigError("n_site_classes", "built-in topography table has " + std::to_string(site_table().size()) + " codes");
  if (c.n_histology_classes < 1) throw ConfigError("n_histology_classes", "must be at least 1");
  if (c.n_histology_classes > 556) throw ConfigError("n_histology_classes", "must be at most 556");
  if (c.n_histology_classes > histology_table().size())
    throw ConfigError("n_histology_classes",
                      "built-in morphology table has " + std::to_string(histology_table().size()) + " codes");
  if (c.docs_per_patient.min < 1 || c.docs_per_patient.max < c.docs_per_patient.min)
    throw ConfigError("docs_per_patient", "need 1 <= min <= max");
  if (c.pre_diagnosis_history_days.min < 1 || c.pre_diagnosis_history_days.max < c.pre_diagnosis_history_days.min)
    throw ConfigError("pre_diagnosis_history_days", "need 1 <= min <= max");
  if (c.sentences_per_document.min < 5 || c.sentences_per_document.max > 40 ||
      c.sentences_per_document.max < c.sentences_per_document.min)
    throw ConfigError("sentences_per_document", "need 5 <= min <= max <= 40");
  if (!(c.zipf_exponent >= 0.0)) throw ConfigError("zipf_exponent", "must be non-negative");
}

struct CorpusBundle {
  GeneratorConfig config;
  std::vector<Patient> patients;
  LabelSpaces label_spaces;
  std::array<AliasLexicon, kAttributeCount> lexicon;  // populated for Site and Histology
  std::vector<EvidenceSpan> evidence;
  std::vector<PlantedDocument> planted;
  std::vector<PoolNote> pretrain_pool;
};

namespace gen {

struct Draft {
  std::string text;
  std::vector<Fact> facts;
};

struct DocDraft {
  DocumentKind kind;
  int date;
  std::vector<Draft> core;
};

inline std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

/// Fills "{a}", "{b}", ... placeholders.
inline std::string fill(std::string_view tmpl, std::initializer_list<std::pair<std::string_view, std::string>> vars) {
  std::string s(tmpl);
  for (const auto& [k, v] : vars) s = replace_all(std::move(s), k, v);
  return s;
}

inline constexpr std::array<std::string_view, 24> kFiller = {
    "specimen received in formalin labeled with the patient name",
    "comparison is made with the prior examination",
    "clinical history provided by the referring physician",
    "the patient tolerated the procedure well",
    "estimated blood loss was minimal",
    "technique: contrast enhanced images were obtained in the axial plane",
    "the findings were discussed with the care team",
    "electronically signed by dr. {name}",
    "sections were reviewed by dr. {name} who concurs",
    "no. of blocks submitted: {n}",
    "see synoptic report for additional details",
    "gross description follows in the addendum",
    "images are of diagnostic quality",
    "the patient was counseled regarding the results",
    "immunohistochemical stains have adequate controls",
    "frozen section was not requested",
    "the specimen measures {n} x {m} x 2 cm",
    "correlation with clinical findings is recommended",
    "procedure performed under general anesthesia",
    "the bony structures are intact",
    "no acute cardiopulmonary process",
    "follow-up imaging is scheduled in {n} months",
    "drains were placed and the wound was closed in layers",
    "sponge and needle counts were correct",
};

inline constexpr std::array<std::string_view, 8> kNames = {"smith", "patel", "nguyen", "garcia",
                                                          "okafor", "chen", "murphy", "rossi"};

/// Negated or benign mention of a site; entails nothing positive.
inline constexpr std::array<std::string_view, 8> kNegatedSite = {
    "no evidence of malignancy in the {s}",
    "the {s} is unremarkable",
    "benign cyst in the {s}, unchanged",
    "the {s} is negative for tumor",
    "no suspicious lesion is seen in the {s}",
    "stable benign nodule in the {s}",
    "biopsy of the {s} was benign",
    "no abnormal enhancement in the {s}",
};

/// Suspicious location without confirmed malignancy.
inline constexpr std::array<std::string_view, 5> kLocation = {
    "there is a {z} cm spiculated mass in the {s}, suspicious for malignancy",
    "irregular enhancing lesion in the {s} measuring {z} cm, suspicious for neoplasm",
    "a {z} cm hypermetabolic mass is identified in the {s}",
    "dominant {z} cm mass in the {s}, recommend tissue sampling",
    "ill-defined {z} cm lesion centered in the {s}, concerning for tumor",
};

/// A malignant-looking site beside a normal one; only word order tells which is which.
inline constexpr std::array<std::array<std::string_view, 2>, 3> kLocationBesideNormal = {{
    {"{z} cm mass in the {s} while the {o} appears normal", "the {o} appears normal while {z} cm mass in the {s}"},
    {"suspicious lesion in the {s} and no lesion in the {o}", "no lesion in the {o} and suspicious lesion in the {s}"},
    {"the {s} shows a {z} cm tumor, the {o} shows no tumor", "the {o} shows no tumor, the {s} shows a {z} cm tumor"},
}};

/// Hedged findings that precede a diagnosis or occur in controls.
inline constexpr std::array<std::string_view, 6> kPossible = {
    "indeterminate {z} cm nodule in the {s}, short interval follow-up recommended",
    "atypical cells in the {s}, cannot exclude neoplasm",
    "findings in the {s} are possibly neoplastic, clinical correlation advised",
    "a {z} cm lesion in the {s} is suspicious but not diagnostic",
    "equivocal area in the {s}, repeat imaging suggested",
    "atypia of undetermined significance in the {s}",
};

/// Names site and histology together.
inline constexpr std::array<std::string_view, 5> kAssertSite = {
    "{s}, core needle biopsy: {h}",
    "biopsy of the {s} shows {h}",
    "{h} involving the {s}",
    "sections of the {s} demonstrate {h}",
    "final diagnosis: {s}, {h}",
};

/// Confirms malignancy and histology without naming the site.
inline constexpr std::array<std::string_view, 4> kMalignancyOnly = {
    "core needle biopsy of the mass identified on imaging: {h}",
    "biopsy of the target lesion shows {h}",
    "the lesion sampled under image guidance is positive for {h}",
    "final diagnosis: {h} in the submitted cores",
};

/// Order-dependent templates: the word bags are symmetric in {s} and {o}.
/// The first of each pair puts the primary in the first slot.
inline constexpr std::array<std::array<std::string_view, 2>, 2> kRoleSwapBenign = {{
    {"{h} in the {s} and benign tissue in the {o}", "benign tissue in the {o} and {h} in the {s}"},
    {"tumor present in the {s} while tumor absent in the {o}", "tumor absent in the {o} while tumor present in the {s}"},
}};
inline constexpr std::array<std::array<std::string_view, 2>, 2> kRoleSwapMetastatic = {{
    {"primary tumor in the {s} with metastatic deposits in the {o}",
     "metastatic deposits in the {o} with primary tumor in the {s}"},
    {"{h} arising in the {s} and spreading to the {o}", "spreading to the {o} and {h} arising in the {s}"},
}};

inline std::string_view side_word(bool left) { return left ? "left" : "right"; }

/// Clock positions for a breast quadrant seen from the patient's side.
inline std::array<int, 2> clock_hours(Quadrant q, bool left) {
  const bool outer_is_low_hours = left;  // left outer quadrants sit at 1-5 o'clock
  switch (q) {
    case Quadrant::UpperOuter: return outer_is_low_hours ? std::array{1, 2} : std::array{10, 11};
    case Quadrant::UpperInner: return outer_is_low_hours ? std::array{10, 11} : std::array{1, 2};
    case Quadrant::LowerOuter: return outer_is_low_hours ? std::array{4, 5} : std::array{7, 8};
    case Quadrant::LowerInner: return outer_is_low_hours ? std::array{7, 8} : std::array{4, 5};
    case Quadrant::None: break;
  }
  return {12, 12};
}

class Generator {
 public:
  explicit Generator(const GeneratorConfig& c) : cfg_(c), rng_(c.seed) {
    validate(c);
    for (std::size_t i = 0; i < cfg_.n_site_classes; ++i) site_classes_.push_back(i);
    for (std::size_t i = 0; i < cfg_.n_histology_classes; ++i) hist_classes_.push_back(i);
    for (std::size_t r = 0; r < site_classes_.size(); ++r)
      site_weights_.push_back(1.0 / std::pow(static_cast<double>(r + 1), cfg_.zipf_exponent));
    for (std::size_t r = 0; r < hist_classes_.size(); ++r)
      hist_weights_.push_back(1.0 / std::pow(static_cast<double>(r + 1), cfg_.zipf_exponent));
  }

  CorpusBundle run() {
    CorpusBundle out;
    out.config = cfg_;
    build_label_spaces(out);
    build_lexicon(out);

    Rng patient_rng = rng_.fork(1);
    Rng pool_rng = rng_.fork(2);

    const std::size_t total = cfg_.n_cancer_patients + cfg_.n_control_patients;
    std::vector<bool> is_cancer(total, false);
    for (std::size_t i = 0; i < cfg_.n_cancer_patients; ++i) is_cancer[i] = true;
    patient_rng.shuffle(is_cancer);

    for (std::size_t i = 0; i < total; ++i) {
      Rng prng = patient_rng.fork(i);
      std::string pid = patient_id(i);
      if (is_cancer[i])
        emit_cancer_patient(prng, pid, out, true);
      else
        emit_control_patient(prng, pid, out, true);
    }

    // Unlabeled pool from extra synthetic patients whose notes are never labeled.
    std::size_t extra = 0;
    while (out.pretrain_pool.size() < cfg_.n_pretrain_notes) {
      Rng prng = pool_rng.fork(extra);
      CorpusBundle scratch;
      scratch.label_spaces = out.label_spaces;
      const std::string pid = "U" + pad(extra, 6);
      if (prng.bernoulli(0.75))
        emit_cancer_patient(prng, pid, scratch, false);
      else
        emit_control_patient(prng, pid, scratch, false);
      for (const auto& d : scratch.patients.front().documents) {
        if (out.pretrain_pool.size() >= cfg_.n_pretrain_notes) break;
        out.pretrain_pool.push_back({d.doc_id, d.kind, d.text});
      }
      ++extra;
    }
    return out;
  }

 private:
  static std::string pad(std::size_t v, int width) {
    std::string s = std::to_string(v);
    if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
    return s;
  }
  static std::string patient_id(std::size_t i) { return "P" + pad(i + 1, 6); }

  void build_label_spaces(CorpusBundle& out) const {
    auto set = [&](AttributeKind a, std::vector<std::string> classes) {
      classes.emplace_back(kNotDocumented);
      out.label_spaces[index(a)] = LabelSpace{a, std::move(classes)};
    };
    std::vector<std::string> sites, hists, t, n, m;
    for (auto i : site_classes_) sites.emplace_back(site_table()[i].code);
    for (auto i : hist_classes_) hists.emplace_back(histology_table()[i].code);
    for (std::size_t i = 0; i + 1 < kTClasses.size(); ++i) t.emplace_back(kTClasses[i]);
    for (std::size_t i = 0; i + 1 < kNClasses.size(); ++i) n.emplace_back(kNClasses[i]);
    for (std::size_t i = 0; i + 1 < kMClasses.size(); ++i) m.emplace_back(kMClasses[i]);
    set(AttributeKind::Site, sites);
    set(AttributeKind::Histology, hists);
    set(AttributeKind::ClinicalT, t);
    set(AttributeKind::ClinicalN, n);
    set(AttributeKind::ClinicalM, m);
    set(AttributeKind::PathT, t);
    set(AttributeKind::PathN, n);
    set(AttributeKind::PathM, m);
  }

  void build_lexicon(CorpusBundle& out) const {
    auto& site = out.lexicon[index(AttributeKind::Site)];
    for (auto i : site_classes_) {
      auto& v = site[std::string(site_table()[i].code)];
      for (auto a : site_table()[i].aliases) v.emplace_back(a);
    }
    auto& hist = out.lexicon[index(AttributeKind::Histology)];
    for (auto i : hist_classes_) {
      auto& v = hist[std::string(histology_table()[i].code)];
      for (auto a : histology_table()[i].aliases) v.emplace_back(a);
    }
  }

  std::string site_mention(Rng& r, std::size_t site, bool left) const {
    const auto& e = site_table()[site];
    if (r.bernoulli(cfg_.variation_rate)) {
      if (e.quadrant != Quadrant::None) {
        const auto hours = clock_hours(e.quadrant, left);
        return fill("{side} breast at {n} o'clock",
                    {{"{side}", std::string(side_word(left))}, {"{n}", std::to_string(r.pick(hours))}});
      }
      if (!e.paraphrases.empty())
        return fill(r.pick(e.paraphrases), {{"{side}", std::string(side_word(left))}});
    }
    return std::string(r.pick(e.aliases));
  }

  std::string hist_mention(Rng& r, std::size_t hist) const {
    const auto& e = histology_table()[hist];
    if (!e.paraphrases.empty() && r.bernoulli(cfg_.variation_rate)) return std::string(r.pick(e.paraphrases));
    return std::string(r.pick(e.aliases));
  }

  static std::string size_cm(Rng& r, double lo, double hi) {
    const int tenths = static_cast<int>(r.range(static_cast<std::int64_t>(lo * 10), static_cast<std::int64_t>(hi * 10)));
    return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
  }

  std::size_t other_site(Rng& r, std::size_t not_this, std::size_t nor_this = SIZE_MAX) const {
    if (site_classes_.size() < 3) nor_this = SIZE_MAX;
    std::size_t s;
    do {
      s = site_classes_[r.below(site_classes_.size())];
    } while (s == not_this || s == nor_this);
    return s;
  }

  /// A second site drawn from the same prior as the primary.
  std::size_t prior_site_except(Rng& r, std::size_t not_this) const {
    std::size_t s;
    do {
      s = site_classes_[r.categorical(site_weights_)];
    } while (s == not_this);
    return s;
  }

  Draft negated(Rng& r, std::size_t site) const {
    return {fill(r.pick(kNegatedSite), {{"{s}", site_mention(r, site, r.bernoulli(0.5))}}),
            {{AttributeKind::Site, std::string(site_table()[site].code), FactRole::Negated}}};
  }

  Draft possible(Rng& r, std::size_t site) const {
    return {fill(r.pick(kPossible), {{"{s}", site_mention(r, site, r.bernoulli(0.5))}, {"{z}", size_cm(r, 0.4, 2.5)}}),
            {{AttributeKind::Site, std::string(site_table()[site].code), FactRole::Possible}}};
  }

  void add_distractors(Rng& r, std::vector<Draft>& core, std::size_t true_site, int slots = 3,
                       std::size_t also_skip = SIZE_MAX) const {
    for (int k = 0; k < slots; ++k)
      if (r.bernoulli(cfg_.negation_rate)) core.push_back(negated(r, other_site(r, true_site, also_skip)));
  }

  static Fact asserted(AttributeKind a, std::string_view code) { return {a, std::string(code), FactRole::Asserted}; }

  static Draft clinical_t(Rng& r, const std::string& t) {
    std::string tok = "c" + lower(t);
    static constexpr std::array<std::string_view, 3> forms = {"clinical t category: {t}", "tumor is staged as {t} on imaging",
                                                              "the primary tumor is clinically {t}"};
    std::string s;
    if (t == "Tis")
      s = fill("findings compatible with carcinoma in situ, {t}", {{"{t}", tok}});
    else if (t == "T0")
      s = fill("no primary tumor identified on imaging, {t}", {{"{t}", tok}});
    else
      s = fill(r.pick(forms), {{"{t}", tok}});
    return {s, {asserted(AttributeKind::ClinicalT, t)}};
  }

  static Draft clinical_n(Rng& r, const std::string& n) {
    static constexpr std::array<std::string_view, 2> neg = {"no suspicious regional lymphadenopathy, cn0",
                                                            "regional lymph nodes are not enlarged, cn0"};
    static constexpr std::array<std::string_view, 2> pos = {
        "enlarged regional lymph nodes concerning for nodal metastasis, cn1",
        "multiple pathologically enlarged regional nodes, cn1"};
    return {std::string(n == "N0" ? r.pick(neg) : r.pick(pos)), {asserted(AttributeKind::ClinicalN, n)}};
  }

  static Draft clinical_m(Rng& r, const std::string& m) {
    static constexpr std::array<std::string_view, 2> neg = {"no evidence of distant metastatic disease, cm0",
                                                            "staging survey without distant spread, cm0"};
    static constexpr std::array<std::string_view, 2> pos = {"multiple distant lesions consistent with metastatic disease, cm1",
                                                            "widespread distant metastases are present, cm1"};
    return {std::string(m == "M0" ? r.pick(neg) : r.pick(pos)), {asserted(AttributeKind::ClinicalM, m)}};
  }

  static Draft path_t(Rng& r, const std::string& t) {
    std::string tok = "p" + lower(t);
    static constexpr std::array<std::string_view, 3> forms = {"pathologic stage: {t}", "primary tumor category {t}",
                                                              "the resected tumor is staged {t}"};
    return {fill(r.pick(forms), {{"{t}", tok}}), {asserted(AttributeKind::PathT, t)}};
  }

  static Draft path_n(Rng& r, const std::string& n) {
    const int examined = static_cast<int>(r.range(6, 24));
    if (n == "N0")
      return {fill("0 of {n} lymph nodes involved by tumor, pn0", {{"{n}", std::to_string(examined)}}),
              {asserted(AttributeKind::PathN, n)}};
    const int pos = static_cast<int>(r.range(1, std::min(examined, 8)));
    return {fill("{k} of {n} lymph nodes positive for metastatic carcinoma, pn1",
                 {{"{k}", std::to_string(pos)}, {"{n}", std::to_string(examined)}}),
            {asserted(AttributeKind::PathN, n)}};
  }

  static std::string lower(std::string s) {
    for (auto& c : s)
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return s;
  }

  std::string draw_t(Rng& r) const {
    static const std::vector<double> w = {0.08, 0.02, 0.30, 0.30, 0.18, 0.12};
    return std::string(kTClasses[r.categorical(w)]);
  }

  /// Finalizes drafts into a document: adds filler, shuffles, joins, records spans.
  void finalize(Rng& r, const DocDraft& d, const std::string& doc_id, const std::string& pid, Patient& patient,
                CorpusBundle& out, const RegistryRecord* reg, bool record) const {
    std::vector<Draft> sents = d.core;
    const int target = static_cast<int>(r.range(cfg_.sentences_per_document.min, cfg_.sentences_per_document.max));
    const int want = std::min(40, std::max(target, static_cast<int>(sents.size()) + 1));
    while (static_cast<int>(sents.size()) < want) {
      std::string f = fill(r.pick(kFiller), {{"{name}", std::string(r.pick(kNames))},
                                             {"{n}", std::to_string(r.range(2, 9))},
                                             {"{m}", std::to_string(r.range(2, 9))}});
      sents.push_back({std::move(f), {}});
    }
    r.shuffle(sents);

    ClinicalDocument doc{doc_id, pid, d.kind, d.date, {}};
    PlantedDocument planted{doc_id, {}};
    for (std::size_t i = 0; i < sents.size(); ++i) {
      if (i > 0) {
        const auto u = r.below(10);
        doc.text += u < 7 ? " " : (u < 9 ? "\n" : "  ");
      }
      std::string s = sents[i].text + ".";
      if (r.bernoulli(0.5) && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
      const std::size_t start = doc.text.size();
      doc.text += s;
      planted.sentences.push_back({start, doc.text.size(), sents[i].facts});
    }

    if (record) {
      if (reg) {
        for (std::size_t i = 0; i < planted.sentences.size(); ++i)
          for (const auto& f : planted.sentences[i].facts) {
            const auto& label = reg->label(f.attribute);
            const bool supports = (f.role == FactRole::Asserted && f.code == label) ||
                                  (f.attribute == AttributeKind::Site && f.role == FactRole::Location && f.code == label) ||
                                  (f.attribute == AttributeKind::Site && f.role == FactRole::Malignancy);
            if (supports && label != kNotDocumented)
              out.evidence.push_back(
                  {doc_id, f.attribute, planted.sentences[i].char_start, planted.sentences[i].char_end, i});
          }
      }
      out.planted.push_back(std::move(planted));
    }
    patient.documents.push_back(std::move(doc));
  }

  void emit_cancer_patient(Rng& r, const std::string& pid, CorpusBundle& out, bool record) const {
    const std::size_t site = site_classes_[r.categorical(site_weights_)];
    const std::size_t hist = hist_classes_[r.categorical(hist_weights_)];
    const bool left = r.bernoulli(0.5);
    const int dx = static_cast<int>(r.range(cfg_.pre_diagnosis_history_days.max + 10, cfg_.pre_diagnosis_history_days.max + 2500));
    const std::string site_code(site_table()[site].code);
    const std::string hist_code(histology_table()[hist].code);

    RegistryRecord reg;
    reg.patient_id = pid;
    reg.diagnosis_date = dx;
    reg.labels[index(AttributeKind::Site)] = site_code;
    reg.labels[index(AttributeKind::Histology)] = hist_code;

    const bool staged = !r.bernoulli(cfg_.undocumented_stage_rate);
    const std::string ct = draw_t(r);
    const std::string cn = r.bernoulli(0.4) ? "N1+" : "N0";
    const std::string cm = r.bernoulli(0.18) ? "M1" : "M0";
    reg.labels[index(AttributeKind::ClinicalT)] = staged ? ct : std::string(kNotDocumented);
    reg.labels[index(AttributeKind::ClinicalN)] = staged ? cn : std::string(kNotDocumented);
    reg.labels[index(AttributeKind::ClinicalM)] = staged ? cm : std::string(kNotDocumented);

    const bool cross = r.bernoulli(cfg_.cross_doc_fraction);
    const bool swap = r.bernoulli(cfg_.role_swap_rate);
    const std::size_t partner = prior_site_except(r, site);
    // Swap patients never see the partner negated, so only word order separates the two sites.
    const std::size_t skip = swap ? partner : SIZE_MAX;
    const bool surgery = r.bernoulli(cm == "M1" ? 0.2 : cfg_.surgery_rate);
    const bool late = r.bernoulli(cfg_.late_resection_rate);
    const int resection_day = dx + static_cast<int>(late ? r.range(31, 90) : r.range(7, 30));

    std::string pt(kNotDocumented), pn(kNotDocumented), pm(kNotDocumented);
    if (surgery) {
      pt = ct;
      if (ct != "Tis" && ct != "T0" && r.bernoulli(0.4)) {
        int k = ct[1] - '0' + (r.bernoulli(0.5) ? 1 : -1);
        k = std::clamp(k, 1, 4);
        pt = "T" + std::to_string(k);
      }
      pn = r.bernoulli(cn == "N1+" ? 0.85 : 0.15) ? "N1+" : "N0";
      if (r.bernoulli(0.5)) pm = "M0";
    }
    const bool met_biopsy = cm == "M1" && r.bernoulli(0.5);
    if (met_biopsy) pm = "M1";
    reg.labels[index(AttributeKind::PathT)] = pt;
    reg.labels[index(AttributeKind::PathN)] = pn;
    reg.labels[index(AttributeKind::PathM)] = pm;

    std::vector<DocDraft> docs;
    const std::size_t comorbid = other_site(r, site, skip);
    const bool has_comorbid = r.bernoulli(0.5);
    auto comorbid_mention = [&](std::vector<Draft>& core) {
      if (has_comorbid && r.bernoulli(0.6)) core.push_back(negated(r, comorbid));
    };

    // Pre-diagnosis history.
    const int n_hist = static_cast<int>(r.range(cfg_.docs_per_patient.min, cfg_.docs_per_patient.max));
    for (int k = 0; k < n_hist; ++k) {
      DocDraft d{r.bernoulli(0.6) ? DocumentKind::Radiology : DocumentKind::Pathology,
                 dx - static_cast<int>(r.range(cfg_.pre_diagnosis_history_days.min, cfg_.pre_diagnosis_history_days.max)),
                 {}};
      if (r.bernoulli(cfg_.prediagnostic_suspicion_rate)) d.core.push_back(possible(r, r.bernoulli(0.7) ? site : other_site(r, site)));
      if (r.bernoulli(0.3)) d.core.push_back(negated(r, site));
      comorbid_mention(d.core);
      add_distractors(r, d.core, site, 2, skip);
      docs.push_back(std::move(d));
    }

    // Workup imaging.
    {
      DocDraft d{DocumentKind::Radiology, dx - static_cast<int>(r.range(1, 30)), {}};
      if (swap && cross) {
        const auto& pair = r.pick(kLocationBesideNormal);
        d.core.push_back({fill(pair[r.below(2)], {{"{s}", site_mention(r, site, left)},
                                                  {"{o}", site_mention(r, partner, left)},
                                                  {"{z}", size_cm(r, 0.8, 6.0)}}),
                          {{AttributeKind::Site, site_code, FactRole::Location},
                           {AttributeKind::Site, std::string(site_table()[partner].code), FactRole::Negated}}});
      } else if (swap) {
        const bool first = r.bernoulli(0.5);
        const std::string a = site_mention(r, first ? site : partner, left);
        const std::string b = site_mention(r, first ? partner : site, left);
        d.core.push_back({fill("enhancing lesions in both the {a} and the {b}", {{"{a}", a}, {"{b}", b}}),
                          {{AttributeKind::Site, site_code, FactRole::Location},
                           {AttributeKind::Site, std::string(site_table()[partner].code), FactRole::Location}}});
      } else {
        d.core.push_back({fill(r.pick(kLocation), {{"{s}", site_mention(r, site, left)}, {"{z}", size_cm(r, 0.8, 6.0)}}),
                          {{AttributeKind::Site, site_code, FactRole::Location}}});
      }
      if (staged) {
        d.core.push_back(clinical_t(r, ct));
        d.core.push_back(clinical_n(r, cn));
        d.core.push_back(clinical_m(r, cm));
      }
      comorbid_mention(d.core);
      add_distractors(r, d.core, site, 3, skip);
      docs.push_back(std::move(d));
    }

    // Diagnostic pathology on the diagnosis day.
    {
      DocDraft d{DocumentKind::Pathology, dx, {}};
      const std::string h = hist_mention(r, hist);
      if (cross) {
        d.core.push_back({fill(r.pick(kMalignancyOnly), {{"{h}", h}}),
                          {{AttributeKind::Site, "", FactRole::Malignancy}, asserted(AttributeKind::Histology, hist_code)}});
      } else if (swap) {
        const auto& bank = cm == "M1" ? kRoleSwapMetastatic : kRoleSwapBenign;
        const auto& pair = r.pick(bank);
        const std::string_view tmpl = pair[r.below(2)];
        std::string text = fill(tmpl, {{"{s}", site_mention(r, site, left)},
                                       {"{o}", site_mention(r, partner, left)},
                                       {"{h}", h}});
        std::vector<Fact> facts{asserted(AttributeKind::Site, site_code)};
        if (tmpl.find("{h}") != std::string_view::npos) {
          facts.push_back(asserted(AttributeKind::Histology, hist_code));
        } else {
          d.core.push_back({fill("histologic type: {h}", {{"{h}", h}}), {asserted(AttributeKind::Histology, hist_code)}});
        }
        d.core.push_back({std::move(text), std::move(facts)});
      } else {
        d.core.push_back({fill(r.pick(kAssertSite), {{"{s}", site_mention(r, site, left)}, {"{h}", h}}),
                          {asserted(AttributeKind::Site, site_code), asserted(AttributeKind::Histology, hist_code)}});
      }
      if (met_biopsy)
        d.core.push_back({"biopsy of a distant lesion confirms metastatic carcinoma, pm1", {asserted(AttributeKind::PathM, "M1")}});
      comorbid_mention(d.core);
      add_distractors(r, d.core, site, 2, skip);
      docs.push_back(std::move(d));
    }

    // Resection: operative note and resection pathology on the same day.
    if (surgery) {
      DocDraft op{DocumentKind::Operative, resection_day, {}};
      if (cross || swap)
        op.core.push_back({"procedure: excision of the previously biopsied lesion", {}});
      else
        op.core.push_back({fill("procedure: resection of the tumor in the {s}", {{"{s}", site_mention(r, site, left)}}),
                           {{AttributeKind::Site, site_code, FactRole::Location}}});
      add_distractors(r, op.core, site, 1, skip);
      docs.push_back(std::move(op));

      DocDraft rp{DocumentKind::Pathology, resection_day, {}};
      const std::string h = hist_mention(r, hist);
      const std::string z = size_cm(r, 0.5, 7.0);
      if (cross || swap)
        rp.core.push_back({fill("resection specimen: residual {h}, {z} cm", {{"{h}", h}, {"{z}", z}}),
                           {{AttributeKind::Site, "", FactRole::Malignancy}, asserted(AttributeKind::Histology, hist_code)}});
      else
        rp.core.push_back({fill("{s}, resection: residual {h}, {z} cm", {{"{s}", site_mention(r, site, left)}, {"{h}", h}, {"{z}", z}}),
                           {asserted(AttributeKind::Site, site_code), asserted(AttributeKind::Histology, hist_code)}});
      rp.core.push_back(path_t(r, pt));
      rp.core.push_back(path_n(r, pn));
      if (pm == "M0") rp.core.push_back({"no distant metastasis identified in submitted tissue, pm0", {asserted(AttributeKind::PathM, "M0")}});
      comorbid_mention(rp.core);
      add_distractors(r, rp.core, site, 1, skip);
      docs.push_back(std::move(rp));
    }

    // Surveillance imaging.
    const int n_follow = static_cast<int>(r.range(0, 2));
    for (int k = 0; k < n_follow; ++k) {
      DocDraft d{DocumentKind::Radiology, dx + static_cast<int>(r.range(100, 400)), {}};
      d.core.push_back({"post-treatment changes without evidence of recurrence", {}});
      comorbid_mention(d.core);
      add_distractors(r, d.core, site, 2, skip);
      docs.push_back(std::move(d));
    }

    Patient p{pid, {}, std::nullopt};
    write_documents(r, pid, docs, p, out, &reg, record);
    p.registry = std::move(reg);
    out.patients.push_back(std::move(p));
  }

  void emit_control_patient(Rng& r, const std::string& pid, CorpusBundle& out, bool record) const {
    const int n = static_cast<int>(r.range(cfg_.docs_per_patient.min, cfg_.docs_per_patient.max)) + 1;
    const int base = static_cast<int>(r.range(cfg_.pre_diagnosis_history_days.max + 10, cfg_.pre_diagnosis_history_days.max + 2500));
    const std::size_t focus = site_classes_[r.categorical(site_weights_)];
    const std::size_t comorbid = other_site(r, focus);
    std::vector<DocDraft> docs;
    for (int k = 0; k < n; ++k) {
      // The first document is always pathology so every control has a pathology day.
      const DocumentKind kind = k == 0 ? DocumentKind::Pathology
                                       : (r.bernoulli(0.6) ? DocumentKind::Radiology : DocumentKind::Pathology);
      DocDraft d{kind, std::max(0, base + static_cast<int>(r.range(-700, 400))), {}};
      if (r.bernoulli(cfg_.control_suspicion_rate)) d.core.push_back(possible(r, focus));
      d.core.push_back(negated(r, focus));
      if (r.bernoulli(0.5)) d.core.push_back(negated(r, comorbid));
      add_distractors(r, d.core, focus, 2);
      docs.push_back(std::move(d));
    }
    Patient p{pid, {}, std::nullopt};
    write_documents(r, pid, docs, p, out, nullptr, record);
    out.patients.push_back(std::move(p));
  }

  void write_documents(Rng& r, const std::string& pid, std::vector<DocDraft>& docs, Patient& p, CorpusBundle& out,
                       const RegistryRecord* reg, bool record) const {
    std::stable_sort(docs.begin(), docs.end(), [](const DocDraft& a, const DocDraft& b) { return a.date < b.date; });
    for (std::size_t k = 0; k < docs.size(); ++k)
      finalize(r, docs[k], pid + "-D" + pad(k + 1, 2), pid, p, out, reg, record);
  }

  GeneratorConfig cfg_;
  Rng rng_;
  std::vector<std::size_t> site_classes_, hist_classes_;
  std::vector<double> site_weights_, hist_weights_;
};

}  // namespace gen

/// Deterministic synthetic corpus: a pure function of `config`.
inline CorpusBundle generate_corpus(const GeneratorConfig& config) { return gen::Generator(config).run(); }

}  // namespace oncoabs::corpus
