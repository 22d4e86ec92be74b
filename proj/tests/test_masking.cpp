#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "medlabel/corpus.hpp"
#include "medlabel/errors.hpp"
#include "medlabel/masking.hpp"
#include "medlabel/rng.hpp"
#include "medlabel/vocab.hpp"

using namespace medlabel;

namespace {

Corpus corpus_from(std::vector<std::string> texts) {
  Corpus c;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    Report r;
    r.id = "t" + std::to_string(i);
    r.text = std::move(texts[i]);
    c.reports.push_back(std::move(r));
  }
  return c;
}

}  // namespace

TEST_CASE("domain table counts tokens exactly, specials excluded") {
  Corpus c = corpus_from({"a a b", "b c"});
  Vocab v = build_vocab(c, 8);  // 5 specials + {a,b,c}, no merges
  DomainTokenTable t = build_domain_table(c, v);

  REQUIRE(t.token_ids.size() == 3);
  CHECK(t.token_ids[0] == v.id_of("a"));
  CHECK(t.token_ids[1] == v.id_of("b"));
  CHECK(t.token_ids[2] == v.id_of("c"));
  CHECK(t.counts == std::vector<std::int64_t>{2, 2, 1});
  CHECK(t.total == 5);
  CHECK(t.cumulative.size() == 3);
  CHECK(t.cumulative[0] == doctest::Approx(0.4));
  CHECK(t.cumulative[1] == doctest::Approx(0.8));
  CHECK(t.cumulative.back() == 1.0);
  CHECK(std::is_sorted(t.token_ids.begin(), t.token_ids.end()));
}

TEST_CASE("domain table with only unknown tokens is an error") {
  Corpus known = corpus_from({"a a"});
  Vocab v = build_vocab(known, 6);
  Corpus unknown = corpus_from({"q q q"});
  CHECK_THROWS_AS(build_domain_table(unknown, v), DataError);
}

TEST_CASE("domain sampling follows corpus frequencies") {
  Corpus c = corpus_from({"a a b", "b c"});
  Vocab v = build_vocab(c, 8);
  DomainTokenTable t = build_domain_table(c, v);

  Rng rng(5);
  const int n = 100000;
  std::map<int, int> hits;
  for (int i = 0; i < n; ++i) ++hits[t.sample(rng)];
  for (auto& [id, _] : hits)
    CHECK(std::find(t.token_ids.begin(), t.token_ids.end(), id) !=
          t.token_ids.end());
  CHECK(hits[v.id_of("a")] / double(n) == doctest::Approx(0.4).epsilon(0.05));
  CHECK(hits[v.id_of("b")] / double(n) == doctest::Approx(0.4).epsilon(0.05));
  CHECK(hits[v.id_of("c")] / double(n) == doctest::Approx(0.2).epsilon(0.05));
}

TEST_CASE("plans only touch eligible positions and record originals") {
  Corpus c = corpus_from({"a a b b c"});
  Vocab v = build_vocab(c, 8);
  DomainTokenTable t = build_domain_table(c, v);
  TokenSequence seq = tokenize("a a b b c", v, 16);
  REQUIRE(seq.length == 7);  // CLS + 5 + SEP

  Rng rng(9);
  for (int trial = 0; trial < 500; ++trial) {
    MaskingPlan plan = sample_masking_plan(seq, t, v, rng);
    int last_pos = 0;
    for (const auto& e : plan.entries) {
      CHECK(e.position >= 1);
      CHECK(e.position <= 5);
      CHECK(e.position >= last_pos);
      last_pos = e.position + 1;
      CHECK(e.original_id == seq.ids[e.position]);
      if (e.action == MaskAction::replace_domain ||
          e.action == MaskAction::replace_global) {
        CHECK(e.replacement_id >= 0);
        CHECK(e.replacement_id < v.size());
        CHECK_FALSE(v.is_special(e.replacement_id));
      }
    }
  }
}

TEST_CASE("selection and action rates match the corruption scheme") {
  // 126 single-character words -> 126 eligible positions per plan.
  std::string text;
  const char* cycle[3] = {"a", "b", "c"};
  for (int i = 0; i < 126; ++i) {
    if (i) text += ' ';
    text += cycle[i % 3];
  }
  Corpus c = corpus_from({text});
  Vocab v = build_vocab(c, 8);
  DomainTokenTable t = build_domain_table(c, v);
  TokenSequence seq = tokenize(text, v, 128);
  REQUIRE(seq.length == 128);

  Rng rng(1234);
  std::int64_t eligible = 0, selected = 0, masked = 0, dom = 0, glob = 0,
               kept = 0;
  std::set<int> domain_ids(t.token_ids.begin(), t.token_ids.end());
  for (int trial = 0; trial < 2000; ++trial) {
    eligible += 126;
    MaskingPlan plan = sample_masking_plan(seq, t, v, rng);
    for (const auto& e : plan.entries) {
      ++selected;
      switch (e.action) {
        case MaskAction::mask: ++masked; break;
        case MaskAction::replace_domain:
          ++dom;
          CHECK(domain_ids.count(e.replacement_id) == 1);
          break;
        case MaskAction::replace_global: ++glob; break;
        case MaskAction::keep: ++kept; break;
      }
    }
  }
  double sel_rate = double(selected) / eligible;
  CHECK(sel_rate == doctest::Approx(0.20).epsilon(0.02));
  CHECK(double(masked) / selected == doctest::Approx(0.60).epsilon(0.02));
  CHECK(double(dom + glob) / selected == doctest::Approx(0.30).epsilon(0.04));
  CHECK(double(kept) / selected == doctest::Approx(0.10).epsilon(0.08));
  // Two thirds of replacements come from the domain table.
  CHECK(double(dom) / (dom + glob) ==
        doctest::Approx(2.0 / 3.0).epsilon(0.04));
}

TEST_CASE("plan sampling is deterministic in the rng seed") {
  Corpus c = corpus_from({"a b c a b c a b"});
  Vocab v = build_vocab(c, 8);
  DomainTokenTable t = build_domain_table(c, v);
  TokenSequence seq = tokenize(c.reports[0].text, v, 16);

  auto run = [&](std::uint64_t seed) {
    Rng rng(seed);
    std::vector<MaskingPlan> plans;
    for (int i = 0; i < 20; ++i)
      plans.push_back(sample_masking_plan(seq, t, v, rng));
    return plans;
  };
  auto a = run(77), b = run(77), other = run(78);
  REQUIRE(a.size() == b.size());
  bool identical = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].entries.size() == b[i].entries.size());
    for (std::size_t j = 0; j < a[i].entries.size(); ++j) {
      const auto &x = a[i].entries[j], &y = b[i].entries[j];
      CHECK(x.position == y.position);
      CHECK(x.action == y.action);
      CHECK(x.original_id == y.original_id);
      CHECK(x.replacement_id == y.replacement_id);
    }
  }
  // A different seed should produce a different plan stream somewhere.
  bool diverged = false;
  for (std::size_t i = 0; i < a.size() && !diverged; ++i) {
    if (a[i].entries.size() != other[i].entries.size()) diverged = true;
    else
      for (std::size_t j = 0; j < a[i].entries.size(); ++j)
        if (a[i].entries[j].position != other[i].entries[j].position ||
            a[i].entries[j].action != other[i].entries[j].action)
          diverged = true;
  }
  CHECK(diverged);
  CHECK(identical);
}

TEST_CASE("apply_plan performs each action and collects targets") {
  Corpus c = corpus_from({"a b c"});
  Vocab v = build_vocab(c, 8);
  TokenSequence seq = tokenize("a b c", v, 8);
  REQUIRE(seq.length == 5);

  MaskingPlan plan;
  plan.entries.push_back({1, MaskAction::mask, v.id_of("a"), -1});
  plan.entries.push_back(
      {2, MaskAction::replace_domain, v.id_of("b"), v.id_of("c")});
  plan.entries.push_back({3, MaskAction::keep, v.id_of("c"), -1});

  MaskedSequence m = apply_plan(seq, plan, v);
  CHECK(m.corrupted.ids[0] == v.cls_id);
  CHECK(m.corrupted.ids[1] == v.mask_id);
  CHECK(m.corrupted.ids[2] == v.id_of("c"));
  CHECK(m.corrupted.ids[3] == v.id_of("c"));  // kept unchanged
  CHECK(m.corrupted.ids[4] == v.sep_id);
  CHECK(m.corrupted.length == seq.length);

  REQUIRE(m.targets.size() == 3);
  CHECK(m.targets.at(1) == v.id_of("a"));
  CHECK(m.targets.at(2) == v.id_of("b"));
  CHECK(m.targets.at(3) == v.id_of("c"));
}

TEST_CASE("apply_plan validates positions and originals") {
  Corpus c = corpus_from({"a b"});
  Vocab v = build_vocab(c, 8);
  TokenSequence seq = tokenize("a b", v, 8);

  MaskingPlan bad_pos;
  bad_pos.entries.push_back({seq.length, MaskAction::mask, 0, -1});
  CHECK_THROWS_AS(apply_plan(seq, bad_pos, v), DataError);

  MaskingPlan bad_orig;
  bad_orig.entries.push_back({1, MaskAction::mask, v.id_of("b"), -1});
  CHECK_THROWS_AS(apply_plan(seq, bad_orig, v), DataError);
}

TEST_CASE("mask stats accumulate at least min_eligible positions") {
  GeneratorConfig gc;
  gc.n_reports = 20;
  gc.seed = 3;
  Corpus c = generate_synthetic_corpus(gc);
  Vocab v = build_vocab(c, 200);
  DomainTokenTable t = build_domain_table(c, v);

  MaskStats s = compute_mask_stats(c, v, t, 64, 5000, 11);
  CHECK(s.eligible >= 5000);
  CHECK(s.selected_rate() == doctest::Approx(0.20).epsilon(0.1));
  CHECK(s.selected == s.masked + s.replaced_domain + s.replaced_global + s.kept);

  MaskStats again = compute_mask_stats(c, v, t, 64, 5000, 11);
  CHECK(again.eligible == s.eligible);
  CHECK(again.selected == s.selected);
  CHECK(again.masked == s.masked);
  CHECK(again.replaced_domain == s.replaced_domain);
  CHECK(again.replaced_global == s.replaced_global);
  CHECK(again.kept == s.kept);

  Corpus empty;
  CHECK_THROWS_AS(compute_mask_stats(empty, v, t, 64, 100, 1), DataError);
}

TEST_CASE("mask stats report is human readable") {
  MaskStats s;
  s.eligible = 1000;
  s.selected = 200;
  s.masked = 120;
  s.replaced_domain = 40;
  s.replaced_global = 20;
  s.kept = 20;
  std::string out = format_mask_stats(s);
  CHECK(out.find("eligible tokens") != std::string::npos);
  CHECK(out.find("0.2000") != std::string::npos);
  CHECK(out.find("0.6000") != std::string::npos);
  CHECK(out.find("expect 0.120") != std::string::npos);
}
