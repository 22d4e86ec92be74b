#include "medlabel/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "medlabel/errors.hpp"
#include "medlabel/rng.hpp"

namespace medlabel {

using nlohmann::json;

bool is_valid_birads(int score) {
  for (int v : kBiradsValues)
    if (v == score) return true;
  return false;
}

int birads_class_index(int score) {
  for (int i = 0; i < kNumBiradsClasses; ++i)
    if (kBiradsValues[i] == score) return i;
  throw DataError("invalid BI-RADS score " + std::to_string(score));
}

int birads_class_value(int index) {
  if (index < 0 || index >= kNumBiradsClasses)
    throw DataError("BI-RADS class index out of range: " + std::to_string(index));
  return kBiradsValues[index];
}

namespace {

std::string trimmed(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

Report parse_report_line(const std::string& line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError("corpus line " + std::to_string(line_no) +
                    ": malformed JSON: " + e.what());
  }
  if (!j.is_object())
    throw DataError("corpus line " + std::to_string(line_no) +
                    ": expected a JSON object");
  Report r;
  try {
    r.id = j.at("id").get<std::string>();
    r.text = j.at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw DataError("corpus line " + std::to_string(line_no) +
                    ": missing or invalid id/text: " + e.what());
  }
  if (trimmed(r.text).empty())
    throw DataError("corpus line " + std::to_string(line_no) +
                    ": text is empty after trimming");
  if (j.contains("biopsy")) {
    if (!j["biopsy"].is_boolean())
      throw DataError("corpus line " + std::to_string(line_no) +
                      ": biopsy must be a boolean");
    r.biopsy_label = j["biopsy"].get<bool>();
  }
  if (j.contains("birads")) {
    if (!j["birads"].is_number_integer())
      throw DataError("corpus line " + std::to_string(line_no) +
                      ": birads must be an integer");
    int score = j["birads"].get<int>();
    if (!is_valid_birads(score))
      throw DataError("corpus line " + std::to_string(line_no) + ": birads " +
                      std::to_string(score) +
                      " outside the class domain {0,1,2,3,4,6}");
    r.birads_label = score;
  }
  if (j.contains("misparsed")) {
    if (!j["misparsed"].is_boolean())
      throw DataError("corpus line " + std::to_string(line_no) +
                      ": misparsed must be a boolean");
    r.misparsed = j["misparsed"].get<bool>();
  }
  return r;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path.string());
  Corpus corpus;
  corpus.provenance = Provenance::ingested;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trimmed(line).empty()) continue;
    Report r = parse_report_line(line, line_no);
    if (!seen.insert(r.id).second)
      throw DataError("corpus line " + std::to_string(line_no) +
                      ": duplicate report id '" + r.id + "'");
    corpus.reports.push_back(std::move(r));
  }
  return corpus;
}

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const Report& r : corpus.reports) {
    json j;
    j["id"] = r.id;
    j["text"] = r.text;
    if (r.biopsy_label) j["biopsy"] = *r.biopsy_label;
    if (r.birads_label) j["birads"] = *r.birads_label;
    if (r.misparsed) j["misparsed"] = *r.misparsed;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file: " + path.string());
  out << corpus_to_jsonl(corpus);
}

namespace {

// Two disjoint synthetic token inventories. Script B is drawn from the
// Hebrew block so the multibyte / right-to-left code path gets exercised;
// the words themselves are gibberish.
const std::vector<std::string>& filler_a() {
  static const std::vector<std::string> v = {
      "signal",   "margin",  "contour",  "parenchyma", "uptake",  "pattern",
      "scan",     "series",  "axial",    "contrast",   "region",  "tissue",
      "zone",     "focal",   "diffuse",  "minor",      "stable",  "prior",
      "sequence", "study",   "view",     "exam",       "slight",  "central"};
  return v;
}

const std::vector<std::string>& filler_b() {
  static const std::vector<std::string> v = {
      "דרמול", "קטילב", "ברסון", "גלפיד", "מרצוק", "טבלון", "שפרגל",
      "נקטום", "צילבר", "עגמיר", "פלדרון", "סחיפר", "זמקול", "רטיפס",
      "הדגיל", "כסמורן", "חלפיד", "מבצור", "תקליף", "נשגבון"};
  return v;
}

// Per-class signature descriptors, one per script, disjoint from the
// filler inventories. Indexed by dense BI-RADS class index.
struct Descriptors {
  const char* latin;
  const char* hebrew;
};

const Descriptors kDescriptors[kNumBiradsClasses] = {
    {"indistinct", "ערפלון"},  // 0
    {"pristine", "צלולית"},    // 1
    {"cystic", "שפירון"},      // 2
    {"lobular", "גבולון"},     // 3
    {"spiculated", "חשודן"},   // 4
    {"malignoid", "ממארון"},   // 6
};

const std::vector<std::string>& recommendation_phrases() {
  static const std::vector<std::string> v = {
      "biopsy is recommended",
      "recommend core biopsy sampling",
      "ביופסיה מומלצת לאלתר",
  };
  return v;
}

const std::vector<std::string>& negative_phrases() {
  static const std::vector<std::string> v = {
      "routine follow up advised",
      "no intervention indicated",
      "המשך מעקב שגרתי",
  };
  return v;
}

std::string birads_statement(int score, Rng& rng) {
  const std::string d = std::to_string(score);
  switch (rng.uniform_int(4)) {
    case 0: return "BI-RADS " + d;
    case 1: return "BI-RADS: " + d;
    case 2: return "BIRADS:" + d;
    default: return "בירדס " + d;
  }
}

std::string pick(const std::vector<std::string>& v, Rng& rng) {
  return v[rng.uniform_int(v.size())];
}

std::string make_findings(int class_index, Rng& rng) {
  std::vector<std::string> words;
  const int n_sentences = 3 + static_cast<int>(rng.uniform_int(2));
  std::vector<std::size_t> sentence_ends;
  for (int s = 0; s < n_sentences; ++s) {
    const int n_words = 5 + static_cast<int>(rng.uniform_int(4));
    for (int w = 0; w < n_words; ++w)
      words.push_back(rng.uniform() < 0.5 ? pick(filler_a(), rng)
                                          : pick(filler_b(), rng));
    if (rng.uniform() < 0.3) {
      words.push_back(std::to_string(3 + rng.uniform_int(27)));
      words.push_back("mm");
    }
    if (s == 0 && rng.uniform() < 0.3)
      words.push_back(std::to_string(2015 + rng.uniform_int(7)));
    sentence_ends.push_back(words.size());
  }
  // Signature descriptors are always present; position varies.
  const Descriptors& d = kDescriptors[class_index];
  words.insert(words.begin() + rng.uniform_int(words.size() + 1), d.latin);
  words.insert(words.begin() + rng.uniform_int(words.size() + 1), d.hebrew);

  std::string text;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (!text.empty()) text += ' ';
    text += words[i];
  }
  text += '.';
  return text;
}

}  // namespace

const std::vector<std::string>& default_biopsy_keywords() {
  static const std::vector<std::string> v = {"biopsy", "ביופסיה"};
  return v;
}

Corpus generate_synthetic_corpus(const GeneratorConfig& cfg) {
  if (cfg.n_reports < 1)
    throw UsageError("generator: n_reports must be >= 1");
  if (cfg.misparse_rate < 0.0 || cfg.misparse_rate > 1.0)
    throw UsageError("generator: misparse_rate must be in [0,1]");
  if (cfg.biopsy_positive_rate < 0.0 || cfg.biopsy_positive_rate > 1.0)
    throw UsageError("generator: biopsy_positive_rate must be in [0,1]");

  Rng root(cfg.seed);
  Corpus corpus;
  corpus.provenance = Provenance::synthetic;
  corpus.seed = cfg.seed;
  corpus.reports.reserve(cfg.n_reports);

  for (int i = 0; i < cfg.n_reports; ++i) {
    Rng rng = root.derive(1, static_cast<std::uint64_t>(i));
    Report r;
    {
      char buf[16];
      std::snprintf(buf, sizeof buf, "r%06d", i);
      r.id = buf;
    }
    const bool positive = rng.uniform() < cfg.biopsy_positive_rate;
    const int score = positive ? (rng.uniform() < 0.5 ? 4 : 6)
                               : static_cast<int>(rng.uniform_int(4));
    const bool truncated = rng.uniform() < cfg.misparse_rate;

    r.text = make_findings(birads_class_index(score), rng);
    if (!truncated) {
      std::string assessment = "Assessment: overall " +
                               birads_statement(score, rng) + " assigned. ";
      assessment += positive ? pick(recommendation_phrases(), rng)
                             : pick(negative_phrases(), rng);
      assessment += '.';
      r.text += '\n';
      r.text += assessment;
    }
    r.biopsy_label = positive;
    r.birads_label = score;
    r.misparsed = truncated;
    corpus.reports.push_back(std::move(r));
  }
  return corpus;
}

bool has_label(const Report& report, LabelKind kind) {
  return kind == LabelKind::biopsy ? report.biopsy_label.has_value()
                                   : report.birads_label.has_value();
}

int label_of(const Report& report, LabelKind kind) {
  if (!has_label(report, kind))
    throw DataError("report '" + report.id + "' lacks the requested label");
  return kind == LabelKind::biopsy ? (*report.biopsy_label ? 1 : 0)
                                   : *report.birads_label;
}

Corpus labeled_subset(const Corpus& corpus, LabelKind kind) {
  Corpus out;
  out.provenance = corpus.provenance;
  out.seed = corpus.seed;
  for (const Report& r : corpus.reports)
    if (has_label(r, kind)) out.reports.push_back(r);
  return out;
}

KFoldResult stratified_kfold(const Corpus& corpus, LabelKind kind, int k,
                             std::uint64_t seed) {
  if (k < 2) throw UsageError("stratified_kfold: k must be >= 2");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < corpus.reports.size(); ++i)
    by_class[label_of(corpus.reports[i], kind)].push_back(i);
  if (by_class.empty()) throw DataError("stratified_kfold: empty corpus");

  KFoldResult result;
  Rng root(seed);
  std::vector<std::vector<std::size_t>> fold_members(k);
  std::size_t next_fold = 0;
  for (auto& [cls, members] : by_class) {
    if (members.size() < static_cast<std::size_t>(k))
      result.warnings.push_back("class " + std::to_string(cls) + " has " +
                                std::to_string(members.size()) +
                                " members, fewer than k=" + std::to_string(k));
    Rng rng = root.derive(2, static_cast<std::uint64_t>(cls));
    shuffle(members, rng);
    for (std::size_t idx : members)
      fold_members[next_fold++ % k].push_back(idx);
  }

  result.folds.resize(k);
  for (int f = 0; f < k; ++f) {
    FoldSplit& split = result.folds[f];
    split.fold_index = f;
    std::vector<bool> in_valid(corpus.reports.size(), false);
    for (std::size_t idx : fold_members[f]) in_valid[idx] = true;
    for (std::size_t i = 0; i < corpus.reports.size(); ++i) {
      (in_valid[i] ? split.valid_ids : split.train_ids)
          .push_back(corpus.reports[i].id);
    }
  }
  return result;
}

double ClassWeights::at(int cls) const {
  auto it = weights.find(cls);
  if (it == weights.end())
    throw DataError("no class weight for class " + std::to_string(cls));
  return it->second;
}

ClassWeights class_weights(const std::vector<int>& labels) {
  if (labels.empty()) throw DataError("class_weights: empty label sequence");
  std::map<int, int> counts;
  for (int c : labels) ++counts[c];
  ClassWeights w;
  for (auto& [cls, n] : counts) w.weights[cls] = 1.0 / n;
  return w;
}

}  // namespace medlabel
