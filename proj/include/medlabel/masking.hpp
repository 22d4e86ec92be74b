#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "medlabel/rng.hpp"
#include "medlabel/vocab.hpp"

namespace medlabel {

struct Corpus;

// Corpus frequency table over non-special token ids, with a cumulative
// distribution for frequency-proportional sampling.
struct DomainTokenTable {
  std::vector<int> token_ids;          // ascending
  std::vector<std::int64_t> counts;    // parallel to token_ids, all > 0
  std::vector<double> cumulative;      // last entry == 1
  std::int64_t total = 0;

  int sample(Rng& rng) const;
};

// Exact token counts over the tokenized corpus, specials excluded.
DomainTokenTable build_domain_table(const Corpus& corpus, const Vocab& vocab);

enum class MaskAction { mask, replace_domain, replace_global, keep };

// Per-position corruption actions with recovery targets. Only positions
// selected for corruption appear; replacements are sampled at plan time.
struct MaskingPlan {
  struct Entry {
    int position;
    MaskAction action;
    int original_id;
    int replacement_id;  // only meaningful for replace_* actions
  };
  std::vector<Entry> entries;  // ascending by position
};

// Selection and replacement proportions: each eligible (non-[CLS]/[SEP]/
// [PAD]) position is selected i.i.d. with p=0.20; a selected position is
// masked w.p. 0.60, replaced w.p. 0.30 (two thirds of replacements drawn
// frequency-proportionally from the domain table, one third uniformly over
// the non-special vocabulary) and kept w.p. 0.10.
MaskingPlan sample_masking_plan(const TokenSequence& seq,
                                const DomainTokenTable& table,
                                const Vocab& vocab, Rng& rng);

struct MaskedSequence {
  TokenSequence corrupted;
  std::map<int, int> targets;  // selected position -> original id
};

MaskedSequence apply_plan(const TokenSequence& seq, const MaskingPlan& plan,
                          const Vocab& vocab);

// Empirical corruption rates, used by the `mask-stats` command.
struct MaskStats {
  std::int64_t eligible = 0;
  std::int64_t selected = 0;
  std::int64_t masked = 0;
  std::int64_t replaced_domain = 0;
  std::int64_t replaced_global = 0;
  std::int64_t kept = 0;

  double selected_rate() const;
  double mask_given_selected() const;
  double replace_given_selected() const;
  double keep_given_selected() const;
};

// Samples plans over the corpus (cycling as needed) until at least
// min_eligible eligible positions have been observed.
MaskStats compute_mask_stats(const Corpus& corpus, const Vocab& vocab,
                             const DomainTokenTable& table, int max_len,
                             std::int64_t min_eligible, std::uint64_t seed);

std::string format_mask_stats(const MaskStats& stats);

}  // namespace medlabel
