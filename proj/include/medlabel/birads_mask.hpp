#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace medlabel {

// Ordered keyword variants that anchor a score mention. A mention is the
// keyword (matched case-insensitively over ASCII), an optional short run
// of separators (space, tab, ':', '-') and one digit 0-6 not followed by
// another digit.
struct MaskRuleSet {
  std::vector<std::string> keywords;

  static MaskRuleSet defaults();
  void validate() const;
};

struct MaskTextResult {
  std::string text;
  int removed = 0;
};

// Strips the separator+digit tail of every mention, leaving the keyword as
// written. Idempotent; digits not anchored by a keyword are untouched.
MaskTextResult mask_birads_mentions(std::string_view text,
                                    const MaskRuleSet& rules);

// One keyword per line; blank lines skipped.
MaskRuleSet load_mask_rules(const std::filesystem::path& path);

}  // namespace medlabel
