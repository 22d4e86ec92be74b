#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "medlabel/birads_mask.hpp"
#include "medlabel/corpus.hpp"
#include "medlabel/errors.hpp"

using namespace medlabel;
namespace fs = std::filesystem;

TEST_CASE("score tails are stripped for every keyword variant") {
  MaskRuleSet rules = MaskRuleSet::defaults();

  auto mask = [&](const std::string& s) {
    return mask_birads_mentions(s, rules);
  };

  CHECK(mask("assessment BI-RADS 4 given").text == "assessment BI-RADS given");
  CHECK(mask("assessment BI-RADS 4 given").removed == 1);
  CHECK(mask("BI-RADS: 3").text == "BI-RADS");
  CHECK(mask("BIRADS:2 noted").text == "BIRADS noted");
  CHECK(mask("BI RADS - 6").text == "BI RADS");
  CHECK(mask("בירדס 5 בדוח").text == "בירדס בדוח");
  CHECK(mask("בירדס 5 בדוח").removed == 1);
}

TEST_CASE("matching ignores ASCII case") {
  MaskRuleSet rules = MaskRuleSet::defaults();
  MaskTextResult r = mask_birads_mentions("bi-rads 4 and Birads:2", rules);
  CHECK(r.text == "bi-rads and Birads");
  CHECK(r.removed == 2);
}

TEST_CASE("consecutive score tails all disappear") {
  MaskRuleSet rules = MaskRuleSet::defaults();
  MaskTextResult r = mask_birads_mentions("BIRADS 4 3 rest", rules);
  CHECK(r.removed == 2);
  CHECK(r.text == "BIRADS rest");
}

TEST_CASE("unanchored digits and non-score tails survive") {
  MaskRuleSet rules = MaskRuleSet::defaults();

  CHECK(mask_birads_mentions("the score 4 is fine", rules).removed == 0);
  CHECK(mask_birads_mentions("the score 4 is fine", rules).text ==
        "the score 4 is fine");
  CHECK(mask_birads_mentions("GRADE 4 lesion", rules).removed == 0);

  // 7 is outside the score range; 14 is not a single digit.
  CHECK(mask_birads_mentions("BI-RADS 7", rules).text == "BI-RADS 7");
  CHECK(mask_birads_mentions("BI-RADS 14", rules).text == "BI-RADS 14");
  // Too many separators between keyword and digit.
  CHECK(mask_birads_mentions("BI-RADS     4", rules).text == "BI-RADS     4");
  // Keyword without any score.
  CHECK(mask_birads_mentions("BI-RADS assessment pending", rules).text ==
        "BI-RADS assessment pending");
}

TEST_CASE("masking is idempotent") {
  MaskRuleSet rules = MaskRuleSet::defaults();
  const std::string samples[] = {
      "BI-RADS 4 and BIRADS:2 and בירדס 3",
      "no mention at all",
      "BI-RADS 4 3 2 stacked",
      "edge BI-RADS 4",
      "BI-RADS",
  };
  for (const std::string& s : samples) {
    MaskTextResult first = mask_birads_mentions(s, rules);
    MaskTextResult second = mask_birads_mentions(first.text, rules);
    CHECK(second.removed == 0);
    CHECK(second.text == first.text);
  }
}

TEST_CASE("every generated assessment mention is removed") {
  GeneratorConfig gc;
  gc.n_reports = 50;
  gc.misparse_rate = 0.0;
  gc.seed = 77;
  Corpus c = generate_synthetic_corpus(gc);
  MaskRuleSet rules = MaskRuleSet::defaults();

  int total_removed = 0;
  for (const Report& r : c.reports) {
    MaskTextResult masked = mask_birads_mentions(r.text, rules);
    CHECK(masked.removed >= 1);  // every non-truncated report states a score
    total_removed += masked.removed;
    MaskTextResult again = mask_birads_mentions(masked.text, rules);
    CHECK(again.removed == 0);
    CHECK(again.text == masked.text);
  }
  CHECK(total_removed >= 50);
}

TEST_CASE("rule files load line by line") {
  fs::path p = fs::temp_directory_path() / "medlabel-mask-rules-test.txt";
  {
    std::ofstream out(p);
    out << "BI-RADS\n\n  CUSTOM-KEY  \nbirads\n";
  }
  MaskRuleSet rules = load_mask_rules(p);
  REQUIRE(rules.keywords.size() == 3);
  CHECK(rules.keywords[0] == "BI-RADS");
  CHECK(rules.keywords[1] == "CUSTOM-KEY");
  CHECK(rules.keywords[2] == "birads");

  MaskTextResult r = mask_birads_mentions("custom-key 3", rules);
  CHECK(r.removed == 1);
  fs::remove(p);

  CHECK_THROWS_AS(load_mask_rules(fs::temp_directory_path() /
                                  "medlabel-no-such-rules.txt"),
                  DataError);

  fs::path empty = fs::temp_directory_path() / "medlabel-mask-empty.txt";
  { std::ofstream out(empty); }
  CHECK_THROWS_AS(load_mask_rules(empty), UsageError);
  fs::remove(empty);

  MaskRuleSet bad;
  bad.keywords = {""};
  CHECK_THROWS_AS(bad.validate(), UsageError);
}
