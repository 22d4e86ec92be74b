#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "medlabel/corpus.hpp"
#include "medlabel/encoder.hpp"
#include "medlabel/training.hpp"

namespace medlabel {

// INI-style config: [section] headers, key = value lines, full-line
// comments starting with '#' or ';'. Sections map onto the pipeline
// stages; command-line flags override file values.
struct ConfigFile {
  std::map<std::string, std::map<std::string, std::string>> sections;

  static ConfigFile parse(const std::filesystem::path& path);
  static ConfigFile parse_string(std::string_view text,
                                 const std::string& origin);

  bool has(const std::string& section, const std::string& key) const;
  std::optional<std::string> get(const std::string& section,
                                 const std::string& key) const;
};

// Overlay the file section onto a default-initialized struct; unknown keys
// in the section are errors.
void apply_corpus_section(const ConfigFile& file, GeneratorConfig& cfg);
void apply_encoder_section(const ConfigFile& file, EncoderConfig& cfg);
void apply_pretrain_section(const ConfigFile& file, PretrainConfig& cfg);
void apply_finetune_section(const ConfigFile& file, FineTuneConfig& cfg);

// key = value dumps of the fully-resolved configs, for run provenance.
std::string describe(const GeneratorConfig& cfg);
std::string describe(const EncoderConfig& cfg);
std::string describe(const PretrainConfig& cfg);
std::string describe(const FineTuneConfig& cfg);

}  // namespace medlabel
