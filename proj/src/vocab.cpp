#include "medlabel/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "medlabel/corpus.hpp"
#include "medlabel/errors.hpp"

namespace medlabel {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

// Splits a UTF-8 string into codepoint substrings. Bytes that do not form
// a valid sequence are passed through one byte at a time.
std::vector<std::string> split_codepoints(std::string_view word) {
  std::vector<std::string> cps;
  std::size_t i = 0;
  while (i < word.size()) {
    unsigned char c = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if ((c & 0x80) == 0x00) len = 1;
    else if ((c & 0xE0) == 0xC0) len = 2;
    else if ((c & 0xF0) == 0xE0) len = 3;
    else if ((c & 0xF8) == 0xF0) len = 4;
    if (i + len > word.size()) len = 1;
    cps.emplace_back(word.substr(i, len));
    i += len;
  }
  return cps;
}

std::string strip_continuation(const std::string& piece) {
  if (piece.rfind(Vocab::kContinuation, 0) == 0) return piece.substr(2);
  return piece;
}

void index_tokens(Vocab& v) {
  v.token_to_id.clear();
  for (int i = 0; i < v.size(); ++i) {
    if (!v.token_to_id.emplace(v.tokens[i], i).second)
      throw DataError("vocab: duplicate token '" + v.tokens[i] + "'");
  }
  auto find = [&](const char* tok) {
    auto it = v.token_to_id.find(tok);
    if (it == v.token_to_id.end())
      throw DataError(std::string("vocab: missing special token ") + tok);
    return it->second;
  };
  v.pad_id = find(Vocab::kPad);
  v.unk_id = find(Vocab::kUnk);
  v.cls_id = find(Vocab::kCls);
  v.sep_id = find(Vocab::kSep);
  v.mask_id = find(Vocab::kMask);
  if (v.pad_id != 0) throw DataError("vocab: [PAD] must have id 0");
}

}  // namespace

int Vocab::id_of(std::string_view token) const {
  auto it = token_to_id.find(std::string(token));
  return it == token_to_id.end() ? -1 : it->second;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

Vocab build_vocab(const Corpus& corpus, int target_size) {
  // Word frequency table over the whole corpus.
  std::map<std::string, std::int64_t> word_freq;
  for (const Report& r : corpus.reports)
    for (std::string& w : split_words(r.text)) word_freq[std::move(w)] += 1;
  if (word_freq.empty()) throw DataError("build_vocab: empty corpus");

  // Each word as a symbol sequence: first codepoint plain, rest with "##".
  struct WordEntry {
    std::vector<std::string> symbols;
    std::int64_t freq;
  };
  std::vector<WordEntry> words;
  std::set<std::string> char_forms;
  for (auto& [word, freq] : word_freq) {
    WordEntry e;
    e.freq = freq;
    auto cps = split_codepoints(word);
    for (std::size_t i = 0; i < cps.size(); ++i) {
      std::string sym = i == 0 ? cps[i] : Vocab::kContinuation + cps[i];
      char_forms.insert(sym);
      e.symbols.push_back(std::move(sym));
    }
    words.push_back(std::move(e));
  }

  const int n_specials = 5;
  const int min_size = n_specials + static_cast<int>(char_forms.size());
  if (target_size < min_size)
    throw UsageError("build_vocab: target_size " + std::to_string(target_size) +
                     " too small; minimum is " + std::to_string(min_size) +
                     " (5 specials + " + std::to_string(char_forms.size()) +
                     " character forms)");

  Vocab v;
  v.tokens = {Vocab::kPad, Vocab::kUnk, Vocab::kCls, Vocab::kSep, Vocab::kMask};
  v.tokens.insert(v.tokens.end(), char_forms.begin(), char_forms.end());

  // Greedy pair merging; ties broken lexicographically for determinism.
  std::set<std::string> in_vocab(v.tokens.begin(), v.tokens.end());
  while (v.size() < target_size) {
    std::map<std::pair<std::string, std::string>, std::int64_t> pair_freq;
    for (const WordEntry& e : words)
      for (std::size_t i = 0; i + 1 < e.symbols.size(); ++i)
        pair_freq[{e.symbols[i], e.symbols[i + 1]}] += e.freq;

    const std::pair<std::string, std::string>* best = nullptr;
    std::int64_t best_freq = 1;  // never merge pairs occurring once
    for (auto& [pair, freq] : pair_freq) {
      std::string merged = pair.first + strip_continuation(pair.second);
      if (in_vocab.count(merged)) continue;
      if (freq > best_freq) {
        best_freq = freq;
        best = &pair;
      }
    }
    if (!best) break;

    std::string merged = best->first + strip_continuation(best->second);
    v.tokens.push_back(merged);
    in_vocab.insert(merged);
    for (WordEntry& e : words) {
      std::vector<std::string> out;
      out.reserve(e.symbols.size());
      std::size_t i = 0;
      while (i < e.symbols.size()) {
        if (i + 1 < e.symbols.size() && e.symbols[i] == best->first &&
            e.symbols[i + 1] == best->second) {
          out.push_back(merged);
          i += 2;
        } else {
          out.push_back(e.symbols[i]);
          i += 1;
        }
      }
      e.symbols = std::move(out);
    }
  }

  index_tokens(v);
  return v;
}

std::string vocab_to_string(const Vocab& vocab) {
  std::string out;
  for (const std::string& t : vocab.tokens) {
    out += t;
    out += '\n';
  }
  return out;
}

void save_vocab(const Vocab& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocab file: " + path.string());
  out << vocab_to_string(vocab);
}

Vocab load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocab file: " + path.string());
  Vocab v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    v.tokens.push_back(line);
  }
  // A trailing newline produces no extra token; empty lines elsewhere are
  // invalid tokens and the duplicate check below will catch repeats.
  while (!v.tokens.empty() && v.tokens.back().empty()) v.tokens.pop_back();
  if (v.tokens.empty()) throw DataError("vocab file is empty: " + path.string());
  index_tokens(v);
  return v;
}

std::uint64_t vocab_hash(const Vocab& vocab) {
  const std::string s = vocab_to_string(vocab);
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

// Greedy longest-match decomposition of one word; empty result means the
// word cannot be covered and maps to [UNK].
std::vector<int> wordpiece(const std::string& word, const Vocab& vocab) {
  auto cps = split_codepoints(word);
  std::vector<int> pieces;
  std::size_t i = 0;
  while (i < cps.size()) {
    int match = -1;
    std::size_t match_len = 0;
    std::string prefix = i == 0 ? "" : Vocab::kContinuation;
    for (std::size_t len = cps.size() - i; len >= 1; --len) {
      std::string candidate = prefix;
      for (std::size_t j = i; j < i + len; ++j) candidate += cps[j];
      int id = vocab.id_of(candidate);
      if (id >= 0) {
        match = id;
        match_len = len;
        break;
      }
    }
    if (match < 0) return {};
    pieces.push_back(match);
    i += match_len;
  }
  return pieces;
}

}  // namespace

std::vector<int> tokenize_stream(std::string_view text, const Vocab& vocab) {
  std::vector<int> ids;
  for (const std::string& word : split_words(text)) {
    std::vector<int> pieces = wordpiece(word, vocab);
    if (pieces.empty())
      ids.push_back(vocab.unk_id);
    else
      ids.insert(ids.end(), pieces.begin(), pieces.end());
  }
  return ids;
}

TokenSequence tokenize(std::string_view text, const Vocab& vocab, int max_len) {
  if (max_len < 2) throw UsageError("tokenize: max_len must be >= 2");
  std::vector<int> body = tokenize_stream(text, vocab);
  if (body.size() > static_cast<std::size_t>(max_len - 2))
    body.resize(max_len - 2);

  TokenSequence seq;
  seq.ids.reserve(max_len);
  seq.ids.push_back(vocab.cls_id);
  seq.ids.insert(seq.ids.end(), body.begin(), body.end());
  seq.ids.push_back(vocab.sep_id);
  seq.length = static_cast<int>(seq.ids.size());
  seq.ids.resize(max_len, vocab.pad_id);
  return seq;
}

}  // namespace medlabel
