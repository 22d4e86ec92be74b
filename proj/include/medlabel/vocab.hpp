#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace medlabel {

struct Corpus;

// WordPiece vocabulary. Ids are dense in [0, size()); [PAD] is pinned to
// id 0 and the other four specials are located by token lookup.
struct Vocab {
  static constexpr const char* kPad = "[PAD]";
  static constexpr const char* kUnk = "[UNK]";
  static constexpr const char* kCls = "[CLS]";
  static constexpr const char* kSep = "[SEP]";
  static constexpr const char* kMask = "[MASK]";
  static constexpr const char* kContinuation = "##";

  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> token_to_id;
  int pad_id = 0, unk_id = 1, cls_id = 2, sep_id = 3, mask_id = 4;

  int size() const { return static_cast<int>(tokens.size()); }
  bool is_special(int id) const {
    return id == pad_id || id == unk_id || id == cls_id || id == sep_id ||
           id == mask_id;
  }
  int id_of(std::string_view token) const;  // -1 if absent
};

// Deterministic frequency-greedy subword induction: all observed character
// forms plus merged pieces up to target_size, continuation pieces carrying
// the "##" prefix.
Vocab build_vocab(const Corpus& corpus, int target_size);

// vocab.txt: UTF-8, one token per line, line index = id.
Vocab load_vocab(const std::filesystem::path& path);
void save_vocab(const Vocab& vocab, const std::filesystem::path& path);
std::string vocab_to_string(const Vocab& vocab);

// FNV-1a over the serialized vocab; embedded in checkpoints to detect
// checkpoint/vocab mismatches.
std::uint64_t vocab_hash(const Vocab& vocab);

struct TokenSequence {
  std::vector<int> ids;  // always max_len long, [PAD]-padded tail
  int length = 0;        // positions before padding, includes [CLS]/[SEP]
};

// Whitespace split, then greedy longest-match WordPiece per word; a word
// with no full decomposition maps to a single [UNK]. [CLS]/[SEP] are added
// and truncation keeps the head while preserving the trailing [SEP].
TokenSequence tokenize(std::string_view text, const Vocab& vocab, int max_len);

// Piece ids of the raw text without specials, truncation, or padding.
// Used for corpus-level token statistics.
std::vector<int> tokenize_stream(std::string_view text, const Vocab& vocab);

// Splits a UTF-8 string into whitespace-separated words.
std::vector<std::string> split_words(std::string_view text);

}  // namespace medlabel
