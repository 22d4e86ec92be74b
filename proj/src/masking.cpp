#include "medlabel/masking.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "medlabel/corpus.hpp"
#include "medlabel/errors.hpp"

namespace medlabel {

int DomainTokenTable::sample(Rng& rng) const {
  double u = rng.uniform();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  std::size_t idx = it - cumulative.begin();
  if (idx >= token_ids.size()) idx = token_ids.size() - 1;
  return token_ids[idx];
}

DomainTokenTable build_domain_table(const Corpus& corpus, const Vocab& vocab) {
  std::map<int, std::int64_t> counts;
  for (const Report& r : corpus.reports)
    for (int id : tokenize_stream(r.text, vocab))
      if (!vocab.is_special(id)) ++counts[id];
  if (counts.empty())
    throw DataError("build_domain_table: corpus has no non-special tokens");

  DomainTokenTable table;
  for (auto& [id, n] : counts) {
    table.token_ids.push_back(id);
    table.counts.push_back(n);
    table.total += n;
  }
  table.cumulative.reserve(table.counts.size());
  std::int64_t running = 0;
  for (std::int64_t n : table.counts) {
    running += n;
    table.cumulative.push_back(static_cast<double>(running) /
                               static_cast<double>(table.total));
  }
  table.cumulative.back() = 1.0;
  return table;
}

namespace {

// Uniform over non-special ids. Specials occupy a handful of ids, so
// rejection terminates immediately in practice.
int sample_global(const Vocab& vocab, Rng& rng) {
  for (;;) {
    int id = static_cast<int>(rng.uniform_int(vocab.size()));
    if (!vocab.is_special(id)) return id;
  }
}

}  // namespace

MaskingPlan sample_masking_plan(const TokenSequence& seq,
                                const DomainTokenTable& table,
                                const Vocab& vocab, Rng& rng) {
  MaskingPlan plan;
  for (int pos = 0; pos < seq.length; ++pos) {
    const int id = seq.ids[pos];
    if (id == vocab.cls_id || id == vocab.sep_id || id == vocab.pad_id)
      continue;
    if (rng.uniform() >= 0.20) continue;

    MaskingPlan::Entry e;
    e.position = pos;
    e.original_id = id;
    e.replacement_id = -1;
    const double u = rng.uniform();
    if (u < 0.60) {
      e.action = MaskAction::mask;
    } else if (u < 0.90) {
      const bool domain = rng.uniform() < 2.0 / 3.0;
      e.action = domain ? MaskAction::replace_domain : MaskAction::replace_global;
      e.replacement_id = domain ? table.sample(rng) : sample_global(vocab, rng);
    } else {
      e.action = MaskAction::keep;
    }
    plan.entries.push_back(e);
  }
  return plan;
}

MaskedSequence apply_plan(const TokenSequence& seq, const MaskingPlan& plan,
                          const Vocab& vocab) {
  MaskedSequence out;
  out.corrupted = seq;
  for (const MaskingPlan::Entry& e : plan.entries) {
    if (e.position < 0 || e.position >= seq.length)
      throw DataError("apply_plan: plan position " +
                      std::to_string(e.position) +
                      " outside sequence length " + std::to_string(seq.length));
    if (seq.ids[e.position] != e.original_id)
      throw DataError("apply_plan: plan does not match this sequence at "
                      "position " + std::to_string(e.position));
    switch (e.action) {
      case MaskAction::mask:
        out.corrupted.ids[e.position] = vocab.mask_id;
        break;
      case MaskAction::replace_domain:
      case MaskAction::replace_global:
        out.corrupted.ids[e.position] = e.replacement_id;
        break;
      case MaskAction::keep:
        break;
    }
    out.targets[e.position] = e.original_id;
  }
  return out;
}

double MaskStats::selected_rate() const {
  return eligible ? static_cast<double>(selected) / eligible : 0.0;
}
double MaskStats::mask_given_selected() const {
  return selected ? static_cast<double>(masked) / selected : 0.0;
}
double MaskStats::replace_given_selected() const {
  return selected
             ? static_cast<double>(replaced_domain + replaced_global) / selected
             : 0.0;
}
double MaskStats::keep_given_selected() const {
  return selected ? static_cast<double>(kept) / selected : 0.0;
}

MaskStats compute_mask_stats(const Corpus& corpus, const Vocab& vocab,
                             const DomainTokenTable& table, int max_len,
                             std::int64_t min_eligible, std::uint64_t seed) {
  if (corpus.reports.empty())
    throw DataError("compute_mask_stats: empty corpus");
  std::vector<TokenSequence> seqs;
  seqs.reserve(corpus.reports.size());
  for (const Report& r : corpus.reports)
    seqs.push_back(tokenize(r.text, vocab, max_len));

  MaskStats stats;
  Rng root(seed);
  std::uint64_t round = 0;
  while (stats.eligible < min_eligible) {
    for (std::size_t i = 0; i < seqs.size() && stats.eligible < min_eligible;
         ++i) {
      Rng rng = root.derive(3, round, i);
      const TokenSequence& seq = seqs[i];
      for (int pos = 0; pos < seq.length; ++pos) {
        int id = seq.ids[pos];
        if (id != vocab.cls_id && id != vocab.sep_id && id != vocab.pad_id)
          ++stats.eligible;
      }
      MaskingPlan plan = sample_masking_plan(seq, table, vocab, rng);
      for (const MaskingPlan::Entry& e : plan.entries) {
        ++stats.selected;
        switch (e.action) {
          case MaskAction::mask: ++stats.masked; break;
          case MaskAction::replace_domain: ++stats.replaced_domain; break;
          case MaskAction::replace_global: ++stats.replaced_global; break;
          case MaskAction::keep: ++stats.kept; break;
        }
      }
    }
    ++round;
  }
  return stats;
}

std::string format_mask_stats(const MaskStats& s) {
  char buf[512];
  auto overall = [&](std::int64_t n) {
    return s.eligible ? static_cast<double>(n) / s.eligible : 0.0;
  };
  std::snprintf(
      buf, sizeof buf,
      "eligible tokens      %lld\n"
      "selected             %.4f   (expect 0.200)\n"
      "mask | selected      %.4f   (expect 0.600)\n"
      "replace | selected   %.4f   (expect 0.300)\n"
      "keep | selected      %.4f   (expect 0.100)\n"
      "overall mask         %.4f   (expect 0.120)\n"
      "overall domain-repl  %.4f   (expect 0.040)\n"
      "overall global-repl  %.4f   (expect 0.020)\n"
      "overall keep         %.4f   (expect 0.020)\n",
      static_cast<long long>(s.eligible), s.selected_rate(),
      s.mask_given_selected(), s.replace_given_selected(),
      s.keep_given_selected(), overall(s.masked), overall(s.replaced_domain),
      overall(s.replaced_global), overall(s.kept));
  return buf;
}

}  // namespace medlabel
