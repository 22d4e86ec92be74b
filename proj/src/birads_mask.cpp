#include "medlabel/birads_mask.hpp"

#include <fstream>

#include "medlabel/errors.hpp"

namespace medlabel {
namespace {

constexpr int kMaxSeparators = 3;

char ascii_lower(char c) {
  return c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c;
}

bool is_separator(char c) {
  return c == ' ' || c == '\t' || c == ':' || c == '-';
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool keyword_at(std::string_view text, std::size_t pos,
                const std::string& keyword) {
  if (pos + keyword.size() > text.size()) return false;
  for (std::size_t i = 0; i < keyword.size(); ++i)
    if (ascii_lower(text[pos + i]) != ascii_lower(keyword[i])) return false;
  return true;
}

// Length of a separator+score tail starting at pos, or 0 if none.
std::size_t tail_length(std::string_view text, std::size_t pos) {
  std::size_t j = pos;
  int seps = 0;
  while (j < text.size() && seps < kMaxSeparators && is_separator(text[j])) {
    ++j;
    ++seps;
  }
  if (j >= text.size()) return 0;
  if (text[j] < '0' || text[j] > '6') return 0;
  if (j + 1 < text.size() && is_digit(text[j + 1])) return 0;
  return j + 1 - pos;
}

}  // namespace

MaskRuleSet MaskRuleSet::defaults() {
  return {{"BI-RADS", "BI RADS", "BIRADS", "בירדס"}};
}

void MaskRuleSet::validate() const {
  if (keywords.empty()) throw UsageError("mask rules: no keywords");
  for (const std::string& k : keywords)
    if (k.empty()) throw UsageError("mask rules: empty keyword");
}

MaskTextResult mask_birads_mentions(std::string_view text,
                                    const MaskRuleSet& rules) {
  rules.validate();
  MaskTextResult result;
  result.text.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t matched_len = 0;
    for (const std::string& k : rules.keywords) {
      if (keyword_at(text, i, k)) {
        matched_len = k.size();
        break;
      }
    }
    if (matched_len == 0) {
      result.text += text[i++];
      continue;
    }
    // Keep the keyword as written, then drop every separator+digit tail so
    // a rerun finds nothing ("BIRADS 4 3" loses both digits).
    result.text.append(text.substr(i, matched_len));
    i += matched_len;
    for (std::size_t tail = tail_length(text, i); tail > 0;
         tail = tail_length(text, i)) {
      i += tail;
      ++result.removed;
    }
  }
  return result;
}

MaskRuleSet load_mask_rules(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open rules file '" + path.string() + "'");
  MaskRuleSet rules;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
      line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    rules.keywords.push_back(line.substr(start));
  }
  rules.validate();
  return rules;
}

}  // namespace medlabel
