#include "medlabel/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "medlabel/errors.hpp"
#include "medlabel/format.hpp"

namespace medlabel {
namespace {

std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_key(const std::string& section, const std::string& key) {
  throw UsageError("config: unknown key '" + key + "' in section [" + section +
                   "]");
}

template <class T>
T parse_number(const std::string& section, const std::string& key,
               const std::string& value) {
  T v{};
  auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
    throw UsageError("config: bad value '" + value + "' for " + section + "." +
                     key);
  return v;
}

// Dispatches every key of a section through fn; fn returns false for keys
// it does not recognize.
template <class Fn>
void for_section(const ConfigFile& file, const std::string& section, Fn fn) {
  auto it = file.sections.find(section);
  if (it == file.sections.end()) return;
  for (const auto& [key, value] : it->second)
    if (!fn(key, value)) bad_key(section, key);
}

}  // namespace

ConfigFile ConfigFile::parse_string(std::string_view text,
                                    const std::string& origin) {
  ConfigFile file;
  std::istringstream in{std::string(text)};
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3)
        throw UsageError(origin + ":" + std::to_string(line_no) +
                         ": malformed section header '" + t + "'");
      section = trim(t.substr(1, t.size() - 2));
      file.sections[section];
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw UsageError(origin + ":" + std::to_string(line_no) +
                       ": expected 'key = value', got '" + t + "'");
    if (section.empty())
      throw UsageError(origin + ":" + std::to_string(line_no) +
                       ": key outside any [section]");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty())
      throw UsageError(origin + ":" + std::to_string(line_no) + ": empty key");
    file.sections[section][key] = trim(t.substr(eq + 1));
  }
  return file;
}

ConfigFile ConfigFile::parse(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path.string());
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  return get(section, key).has_value();
}

std::optional<std::string> ConfigFile::get(const std::string& section,
                                           const std::string& key) const {
  auto s = sections.find(section);
  if (s == sections.end()) return std::nullopt;
  auto k = s->second.find(key);
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

void apply_corpus_section(const ConfigFile& file, GeneratorConfig& cfg) {
  for_section(file, "corpus", [&](const std::string& k, const std::string& v) {
    if (k == "n_reports") cfg.n_reports = parse_number<int>("corpus", k, v);
    else if (k == "misparse_rate")
      cfg.misparse_rate = parse_number<double>("corpus", k, v);
    else if (k == "biopsy_positive_rate")
      cfg.biopsy_positive_rate = parse_number<double>("corpus", k, v);
    else if (k == "seed")
      cfg.seed = parse_number<std::uint64_t>("corpus", k, v);
    else return false;
    return true;
  });
}

void apply_encoder_section(const ConfigFile& file, EncoderConfig& cfg) {
  for_section(file, "encoder", [&](const std::string& k, const std::string& v) {
    if (k == "layers") cfg.layers = parse_number<int>("encoder", k, v);
    else if (k == "d_model") cfg.d_model = parse_number<int>("encoder", k, v);
    else if (k == "n_heads") cfg.n_heads = parse_number<int>("encoder", k, v);
    else if (k == "d_ff") cfg.d_ff = parse_number<int>("encoder", k, v);
    else if (k == "max_len") cfg.max_len = parse_number<int>("encoder", k, v);
    else if (k == "dropout")
      cfg.dropout = parse_number<double>("encoder", k, v);
    else return false;
    return true;
  });
}

void apply_pretrain_section(const ConfigFile& file, PretrainConfig& cfg) {
  for_section(file, "pretrain", [&](const std::string& k,
                                    const std::string& v) {
    if (k == "epochs") cfg.epochs = parse_number<int>("pretrain", k, v);
    else if (k == "batch_size")
      cfg.batch_size = parse_number<int>("pretrain", k, v);
    else if (k == "lr") cfg.lr = parse_number<double>("pretrain", k, v);
    else if (k == "val_fraction")
      cfg.val_fraction = parse_number<double>("pretrain", k, v);
    else if (k == "seed")
      cfg.seed = parse_number<std::uint64_t>("pretrain", k, v);
    else return false;
    return true;
  });
}

void apply_finetune_section(const ConfigFile& file, FineTuneConfig& cfg) {
  for_section(file, "finetune", [&](const std::string& k,
                                    const std::string& v) {
    if (k == "lr_base") cfg.lr_base = parse_number<double>("finetune", k, v);
    else if (k == "gamma") cfg.gamma = parse_number<double>("finetune", k, v);
    else if (k == "batch_size")
      cfg.batch_size = parse_number<int>("finetune", k, v);
    else if (k == "epochs") cfg.epochs = parse_number<int>("finetune", k, v);
    else if (k == "temperature")
      cfg.temperature = parse_number<double>("finetune", k, v);
    else if (k == "epsilon")
      cfg.epsilon = parse_number<double>("finetune", k, v);
    else if (k == "seed")
      cfg.seed = parse_number<std::uint64_t>("finetune", k, v);
    else if (k == "selection_metric") cfg.selection_metric = v;
    else return false;
    return true;
  });
}

std::string describe(const GeneratorConfig& cfg) {
  std::string out;
  out += "n_reports = " + std::to_string(cfg.n_reports) + '\n';
  out += "misparse_rate = " + format_double(cfg.misparse_rate) + '\n';
  out += "biopsy_positive_rate = " + format_double(cfg.biopsy_positive_rate) +
         '\n';
  out += "seed = " + std::to_string(cfg.seed) + '\n';
  return out;
}

std::string describe(const EncoderConfig& cfg) {
  std::string out;
  out += "layers = " + std::to_string(cfg.layers) + '\n';
  out += "d_model = " + std::to_string(cfg.d_model) + '\n';
  out += "n_heads = " + std::to_string(cfg.n_heads) + '\n';
  out += "d_ff = " + std::to_string(cfg.d_ff) + '\n';
  out += "max_len = " + std::to_string(cfg.max_len) + '\n';
  out += "vocab_size = " + std::to_string(cfg.vocab_size) + '\n';
  out += "dropout = " + format_double(cfg.dropout) + '\n';
  return out;
}

std::string describe(const PretrainConfig& cfg) {
  std::string out;
  out += "epochs = " + std::to_string(cfg.epochs) + '\n';
  out += "batch_size = " + std::to_string(cfg.batch_size) + '\n';
  out += "lr = " + format_double(cfg.lr) + '\n';
  out += "val_fraction = " + format_double(cfg.val_fraction) + '\n';
  out += "seed = " + std::to_string(cfg.seed) + '\n';
  return out;
}

std::string describe(const FineTuneConfig& cfg) {
  std::string out;
  out += "lr_base = " + format_double(cfg.lr_base) + '\n';
  out += "gamma = " + format_double(cfg.gamma) + '\n';
  out += "batch_size = " + std::to_string(cfg.batch_size) + '\n';
  out += "epochs = " + std::to_string(cfg.epochs) + '\n';
  out += "temperature = " + format_double(cfg.temperature) + '\n';
  out += "epsilon = " + format_double(cfg.epsilon) + '\n';
  out += "seed = " + std::to_string(cfg.seed) + '\n';
  out += "selection_metric = " + cfg.selection_metric + '\n';
  return out;
}

}  // namespace medlabel
