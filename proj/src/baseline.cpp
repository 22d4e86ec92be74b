#include "medlabel/baseline.hpp"

#include <algorithm>
#include <fstream>

#include "medlabel/errors.hpp"

namespace medlabel {
namespace {

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](char c) {
    return c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c;
  });
  return out;
}

}  // namespace

bool keyword_match(std::string_view text,
                   const std::vector<std::string>& keywords) {
  if (keywords.empty()) throw UsageError("keyword list is empty");
  const std::string haystack = ascii_lower(text);
  for (const std::string& k : keywords) {
    if (k.empty()) throw UsageError("empty keyword");
    if (haystack.find(ascii_lower(k)) != std::string::npos) return true;
  }
  return false;
}

bool keyword_biopsy_classifier(const Report& report,
                               const std::vector<std::string>& keywords) {
  return keyword_match(report.text, keywords);
}

std::vector<std::string> load_keywords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw DataError("cannot open keywords file '" + path.string() + "'");
  std::vector<std::string> keywords;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
      line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    keywords.push_back(line.substr(start));
  }
  if (keywords.empty())
    throw DataError("keywords file '" + path.string() + "' has no entries");
  return keywords;
}

}  // namespace medlabel
