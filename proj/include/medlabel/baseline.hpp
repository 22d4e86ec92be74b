#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "medlabel/corpus.hpp"

namespace medlabel {

// True iff any keyword occurs in the text; ASCII-case-insensitive
// substring search over the whole report.
bool keyword_match(std::string_view text,
                   const std::vector<std::string>& keywords);

bool keyword_biopsy_classifier(const Report& report,
                               const std::vector<std::string>& keywords);

// One phrase per line; blank lines skipped.
std::vector<std::string> load_keywords(const std::filesystem::path& path);

}  // namespace medlabel
