#pragma once

#include <array>
#include <string_view>
#include <vector>

namespace oncoabs::corpus {

/// Breast quadrant, used to derive clock-face paraphrases.
enum class Quadrant { None, UpperOuter, UpperInner, LowerOuter, LowerInner };

/// ICD-O-3 topography entry. `aliases` form the ontology lexicon;
/// `paraphrases` are surface forms deliberately absent from it.
/// "{side}" in a paraphrase is replaced by "left" or "right".
struct SiteEntry {
  std::string_view code;
  std::string_view name;
  std::vector<std::string_view> aliases;
  std::vector<std::string_view> paraphrases;
  Quadrant quadrant = Quadrant::None;
};

/// Ordered by default inclusion: the first n entries form an n-class space.
inline const std::vector<SiteEntry>& site_table() {
  static const std::vector<SiteEntry> table = {
      {"C50.4", "upper-outer quadrant of breast", {"upper outer quadrant of the breast", "breast upper outer quadrant"}, {}, Quadrant::UpperOuter},
      {"C50.2", "upper-inner quadrant of breast", {"upper inner quadrant of the breast", "breast upper inner quadrant"}, {}, Quadrant::UpperInner},
      {"C34.1", "upper lobe, lung", {"upper lobe of the lung", "lung upper lobe"}, {"{side} upper lobe", "apical segment of the {side} lung"}},
      {"C34.3", "lower lobe, lung", {"lower lobe of the lung", "lung lower lobe"}, {"{side} lower lobe", "basal segment of the {side} lung"}},
      {"C18.7", "sigmoid colon", {"sigmoid colon"}, {"sigmoid segment of the large bowel", "colon at 25 cm from the anal verge"}},
      {"C20.9", "rectum", {"rectum", "rectal wall"}, {"distal large bowel 6 cm from the anal verge", "anorectal segment"}},
      {"C61.9", "prostate gland", {"prostate", "prostate gland"}, {"prostatic apex", "{side} prostatic lobe"}},
      {"C22.0", "liver", {"liver", "hepatic parenchyma"}, {"hepatic segment 6", "{side} hepatic lobe"}},
      {"C22.1", "intrahepatic bile duct", {"intrahepatic bile duct", "intrahepatic biliary tree"}, {"peripheral biliary radicles", "biliary radicles within the hepatic hilum"}},
      {"C25.0", "head of pancreas", {"head of the pancreas", "pancreatic head"}, {"periampullary pancreas", "uncinate region"}},
      {"C67.9", "bladder", {"urinary bladder", "bladder"}, {"bladder dome", "vesical trigone"}},
      {"C73.9", "thyroid gland", {"thyroid gland", "thyroid"}, {"{side} thyroid lobe", "thyroid isthmus"}},
      {"C50.5", "lower-outer quadrant of breast", {"lower outer quadrant of the breast", "breast lower outer quadrant"}, {}, Quadrant::LowerOuter},
      {"C50.3", "lower-inner quadrant of breast", {"lower inner quadrant of the breast", "breast lower inner quadrant"}, {}, Quadrant::LowerInner},
      {"C64.9", "kidney", {"kidney", "renal parenchyma"}, {"{side} renal upper pole", "{side} renal cortex"}},
      {"C16.9", "stomach", {"stomach", "gastric wall"}, {"lesser curvature", "gastric antrum"}},
      {"C56.9", "ovary", {"ovary", "ovarian"}, {"{side} adnexa", "{side} adnexal mass"}},
      {"C53.9", "cervix uteri", {"cervix uteri", "uterine cervix"}, {"ectocervix", "transformation zone"}},
      {"C54.1", "endometrium", {"endometrium", "endometrial lining"}, {"uterine cavity lining", "endometrial curettings"}},
      {"C71.9", "brain", {"brain", "cerebral hemisphere"}, {"{side} frontal lobe", "{side} parietal lobe"}},
      {"C23.9", "gallbladder", {"gallbladder"}, {"gallbladder fundus", "cystic duct region"}},
      {"C15.5", "lower third of esophagus", {"lower third of the esophagus", "distal esophagus"}, {"gastroesophageal junction region", "esophagus at 38 cm from the incisors"}},
      {"C18.0", "cecum", {"cecum", "cecal wall"}, {"ileocecal valve region", "appendiceal orifice region"}},
      {"C02.9", "tongue", {"tongue", "oral tongue"}, {"{side} lateral tongue border", "tongue base"}},
      {"C32.0", "glottis", {"glottis", "vocal cord"}, {"{side} true vocal fold", "anterior commissure"}},
      {"C62.9", "testis", {"testis", "testicle"}, {"{side} testicular mass", "{side} scrotal contents"}},
      {"C44.5", "skin of trunk", {"skin of the trunk", "truncal skin"}, {"skin of the upper back", "skin of the chest wall"}},
      {"C11.9", "nasopharynx", {"nasopharynx"}, {"fossa of rosenmuller", "posterior nasal space"}},
      {"C07.9", "parotid gland", {"parotid gland", "parotid"}, {"{side} preauricular mass", "superficial lobe of the {side} parotid"}},
      {"C17.0", "duodenum", {"duodenum", "duodenal wall"}, {"second portion of the small bowel", "ampullary region of the small bowel"}},
      {"C24.0", "extrahepatic bile duct", {"extrahepatic bile duct", "common bile duct"}, {"distal biliary duct", "hilar biliary confluence"}},
      {"C74.0", "adrenal cortex", {"adrenal cortex", "adrenal gland"}, {"{side} adrenal mass", "{side} suprarenal region"}},
      {"C48.0", "retroperitoneum", {"retroperitoneum", "retroperitoneal space"}, {"{side} paraaortic soft tissue", "posterior abdominal soft tissue"}},
      {"C34.2", "middle lobe, lung", {"middle lobe of the lung", "lung middle lobe"}, {"right middle lobe", "lateral segment of the right middle lobe"}},
      {"C18.2", "ascending colon", {"ascending colon"}, {"hepatic flexure region", "right colon"}},
      {"C25.1", "body of pancreas", {"body of the pancreas", "pancreatic body"}, {"mid pancreas", "pancreatic neck region"}},
      {"C16.0", "cardia", {"gastric cardia", "cardia of the stomach"}, {"proximal stomach below the junction", "subcardial stomach"}},
      {"C50.9", "breast", {"breast", "breast tissue"}, {"{side} mammary tissue", "{side} retroareolar tissue"}},
  };
  return table;
}

/// ICD-O-3 morphology entry (4-digit code).
struct HistologyEntry {
  std::string_view code;
  std::vector<std::string_view> aliases;
  std::vector<std::string_view> paraphrases;
};

inline const std::vector<HistologyEntry>& histology_table() {
  static const std::vector<HistologyEntry> table = {
      {"8500", {"invasive ductal carcinoma", "infiltrating duct carcinoma"}, {"carcinoma of no special type"}},
      {"8140", {"adenocarcinoma"}, {"gland forming carcinoma"}},
      {"8070", {"squamous cell carcinoma"}, {"keratinizing malignant squamous neoplasm"}},
      {"8520", {"lobular carcinoma", "invasive lobular carcinoma"}, {"discohesive single file carcinoma"}},
      {"8046", {"non-small cell carcinoma"}, {"carcinoma, favor non-small cell type"}},
      {"8041", {"small cell carcinoma"}, {"high grade neuroendocrine carcinoma, small cell type"}},
      {"8170", {"hepatocellular carcinoma"}, {"malignant hepatocyte neoplasm"}},
      {"8160", {"cholangiocarcinoma"}, {"malignant bile duct neoplasm"}},
      {"8480", {"mucinous adenocarcinoma"}, {"colloid carcinoma"}},
      {"8490", {"signet ring cell carcinoma"}, {"poorly cohesive carcinoma with signet forms"}},
      {"8260", {"papillary adenocarcinoma"}, {"papillary gland forming carcinoma"}},
      {"8312", {"renal cell carcinoma"}, {"clear cytoplasm renal epithelial malignancy"}},
      {"8120", {"transitional cell carcinoma", "urothelial carcinoma"}, {"high grade urothelial neoplasm"}},
      {"8380", {"endometrioid adenocarcinoma"}, {"endometrioid type carcinoma"}},
      {"8441", {"serous cystadenocarcinoma"}, {"high grade serous carcinoma"}},
      {"8720", {"malignant melanoma"}, {"melanocytic malignancy"}},
      {"8090", {"basal cell carcinoma"}, {"basaloid skin carcinoma"}},
      {"9440", {"glioblastoma"}, {"grade 4 astrocytic neoplasm"}},
      {"8240", {"carcinoid tumor"}, {"well differentiated neuroendocrine tumor"}},
      {"8890", {"leiomyosarcoma"}, {"malignant smooth muscle neoplasm"}},
      {"8850", {"liposarcoma"}, {"malignant lipomatous neoplasm"}},
      {"8550", {"acinar cell carcinoma"}, {"acinar pattern carcinoma"}},
      {"8522", {"infiltrating duct and lobular carcinoma"}, {"mixed ductal and lobular type carcinoma"}},
      {"8211", {"tubular adenocarcinoma"}, {"tubule forming carcinoma"}},
      {"8020", {"undifferentiated carcinoma"}, {"carcinoma without line of differentiation"}},
      {"8032", {"spindle cell carcinoma"}, {"sarcomatoid carcinoma"}},
      {"8200", {"adenoid cystic carcinoma"}, {"cribriform salivary type carcinoma"}},
      {"8330", {"follicular adenocarcinoma"}, {"follicular carcinoma"}},
      {"8340", {"papillary carcinoma, follicular variant"}, {"follicular variant papillary neoplasm"}},
      {"8510", {"medullary carcinoma"}, {"syncytial growth carcinoma"}},
      {"8072", {"large cell nonkeratinizing squamous carcinoma"}, {"nonkeratinizing squamous neoplasm"}},
      {"8083", {"basaloid squamous cell carcinoma"}, {"basaloid squamous neoplasm"}},
      {"9400", {"astrocytoma"}, {"diffuse astrocytic neoplasm"}},
      {"8246", {"neuroendocrine carcinoma"}, {"poorly differentiated neuroendocrine neoplasm"}},
      {"9180", {"osteosarcoma"}, {"osteoid producing malignancy"}},
      {"8010", {"carcinoma"}, {"malignant epithelial neoplasm"}},
  };
  return table;
}

inline constexpr std::array<std::string_view, 7> kTClasses = {"Tis", "T0", "T1", "T2", "T3", "T4", "not-documented"};
inline constexpr std::array<std::string_view, 3> kNClasses = {"N0", "N1+", "not-documented"};
inline constexpr std::array<std::string_view, 3> kMClasses = {"M0", "M1", "not-documented"};

}  // namespace oncoabs::corpus
