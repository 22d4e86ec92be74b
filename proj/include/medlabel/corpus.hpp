#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace medlabel {

// One clinical document. Text may mix two scripts, including a
// right-to-left one. BI-RADS scores take values {0,1,2,3,4,6}; there is
// no class 5 in this label space.
struct Report {
  std::string id;
  std::string text;
  std::optional<bool> biopsy_label;
  std::optional<int> birads_label;
  std::optional<bool> misparsed;  // assessment section lost during extraction
};

enum class Provenance { ingested, synthetic };

struct Corpus {
  std::vector<Report> reports;
  Provenance provenance = Provenance::ingested;
  std::optional<std::uint64_t> seed;

  std::size_t size() const { return reports.size(); }
};

// The six valid BI-RADS scores in this label space, in dense-index order.
inline constexpr int kBiradsValues[6] = {0, 1, 2, 3, 4, 6};
inline constexpr int kNumBiradsClasses = 6;

bool is_valid_birads(int score);
int birads_class_index(int score);   // score -> dense index in [0,6)
int birads_class_value(int index);   // dense index -> score

// JSON-lines corpus file: one object per line with fields
// id, text, biopsy, birads, misparsed. Unknown fields are ignored.
Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
std::string corpus_to_jsonl(const Corpus& corpus);

struct GeneratorConfig {
  int n_reports = 100;
  double misparse_rate = 0.0;
  double biopsy_positive_rate = 0.266;
  std::uint64_t seed = 42;
};

// Deterministic synthetic bilingual report corpus. Each report has a
// findings section mixing the two synthetic scripts; non-truncated reports
// also carry an assessment section that states the BI-RADS score and, for
// biopsy-positive cases, a recommendation phrase from a fixed keyword set.
// Ground-truth labels are attached regardless of truncation.
Corpus generate_synthetic_corpus(const GeneratorConfig& cfg);

// Recommendation keywords planted by the generator in positive assessments;
// also the default list for the keyword baseline.
const std::vector<std::string>& default_biopsy_keywords();

enum class LabelKind { biopsy, birads };

// Label value of a report: biopsy -> 0/1, birads -> the score itself.
// Throws DataError if the requested label is absent.
int label_of(const Report& report, LabelKind kind);
bool has_label(const Report& report, LabelKind kind);
Corpus labeled_subset(const Corpus& corpus, LabelKind kind);

struct FoldSplit {
  int fold_index = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> valid_ids;
};

struct KFoldResult {
  std::vector<FoldSplit> folds;
  std::vector<std::string> warnings;  // classes with fewer members than k
};

// Stratified k-fold split: per-class shuffle, then round-robin assignment.
// Valid sets partition the corpus and per-class fold counts stay within
// +-1 of the proportional share.
KFoldResult stratified_kfold(const Corpus& corpus, LabelKind kind, int k,
                             std::uint64_t seed);

struct ClassWeights {
  std::map<int, double> weights;  // class value -> 1 / count

  double at(int cls) const;
};

// Inverse-count class weights, unnormalized.
ClassWeights class_weights(const std::vector<int>& labels);

}  // namespace medlabel
