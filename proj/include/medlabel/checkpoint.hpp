#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "medlabel/encoder.hpp"
#include "medlabel/heads.hpp"

namespace medlabel {

// Model container: encoder parameters, optionally a classifier head, plus
// enough metadata to refuse mismatched inputs later (vocabulary hash, task
// name, preprocessing flag).
struct Checkpoint {
  Parameters params;
  std::optional<ClassifierHead> head;
  std::string task;              // "", "biopsy" or "birads"
  bool birads_masked = false;    // text was masked before tokenization
  std::uint64_t vocab_hash = 0;
};

// File layout: a line-oriented UTF-8 header (config, metadata and a tensor
// manifest of name / rows / cols / byte offset), a DATA marker, then raw
// little-endian float32 payloads. Save -> load -> save is byte-identical.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace medlabel
