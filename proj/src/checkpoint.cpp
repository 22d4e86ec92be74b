#include "medlabel/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "medlabel/errors.hpp"
#include "medlabel/format.hpp"

namespace medlabel {
namespace {

constexpr char kMagic[] = "medlabel checkpoint v1";

double parse_double(const std::string& s, const std::string& what) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw DataError("checkpoint: bad " + what + " value '" + s + "'");
  return v;
}

long parse_long(const std::string& s, const std::string& what) {
  long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw DataError("checkpoint: bad " + what + " value '" + s + "'");
  return v;
}

void append_f32(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  out.push_back(static_cast<char>(bits & 0xff));
  out.push_back(static_cast<char>((bits >> 8) & 0xff));
  out.push_back(static_cast<char>((bits >> 16) & 0xff));
  out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

double read_f32(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 3; i >= 0; --i)
    bits = (bits << 8) | static_cast<std::uint8_t>(p[i]);
  return static_cast<double>(std::bit_cast<float>(bits));
}

struct ManifestEntry {
  std::string name;
  long rows = 0, cols = 0, offset = 0;
};

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(std::move(tok));
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  ckpt.params.config.validate();
  if (ckpt.head) ckpt.head->validate();

  std::ostringstream header;
  std::string payload;
  const auto& cfg = ckpt.params.config;
  header << kMagic << '\n'
         << "layers " << cfg.layers << '\n'
         << "d_model " << cfg.d_model << '\n'
         << "n_heads " << cfg.n_heads << '\n'
         << "d_ff " << cfg.d_ff << '\n'
         << "max_len " << cfg.max_len << '\n'
         << "vocab_size " << cfg.vocab_size << '\n'
         << "dropout " << format_double(cfg.dropout) << '\n'
         << "vocab_hash " << std::hex << ckpt.vocab_hash << std::dec << '\n'
         << "task " << (ckpt.task.empty() ? "-" : ckpt.task) << '\n'
         << "birads_masked " << (ckpt.birads_masked ? 1 : 0) << '\n'
         << "head " << (ckpt.head ? 1 : 0) << '\n';
  if (ckpt.head) {
    header << "n_classes " << ckpt.head->n_classes() << '\n'
           << "temperature " << format_double(ckpt.head->temperature) << '\n';
  }

  auto emit = [&](const std::string& name, const Mat& m) {
    header << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << ' '
           << payload.size() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) append_f32(payload, m(r, c));
  };
  visit_tensors(ckpt.params, emit);
  if (ckpt.head) visit_head_tensors(*ckpt.head, emit);
  header << "data " << payload.size() << '\n';

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  const std::string head = header.str();
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line) || line != kMagic)
    throw DataError("'" + path.string() + "' is not a medlabel checkpoint");

  EncoderConfig cfg;
  Checkpoint ckpt;
  bool has_head = false;
  long n_classes = 0;
  double temperature = 1.0;
  long payload_size = -1;
  std::vector<ManifestEntry> manifest;

  while (payload_size < 0 && std::getline(in, line)) {
    auto fields = split_fields(line);
    if (fields.empty()) throw DataError("checkpoint: blank header line");
    const std::string& key = fields[0];
    if (key == "tensor") {
      if (fields.size() != 5) throw DataError("checkpoint: bad tensor line '" + line + "'");
      manifest.push_back({fields[1], parse_long(fields[2], "rows"),
                          parse_long(fields[3], "cols"),
                          parse_long(fields[4], "offset")});
      continue;
    }
    if (fields.size() != 2)
      throw DataError("checkpoint: bad header line '" + line + "'");
    const std::string& val = fields[1];
    if (key == "layers") cfg.layers = static_cast<int>(parse_long(val, key));
    else if (key == "d_model") cfg.d_model = static_cast<int>(parse_long(val, key));
    else if (key == "n_heads") cfg.n_heads = static_cast<int>(parse_long(val, key));
    else if (key == "d_ff") cfg.d_ff = static_cast<int>(parse_long(val, key));
    else if (key == "max_len") cfg.max_len = static_cast<int>(parse_long(val, key));
    else if (key == "vocab_size") cfg.vocab_size = static_cast<int>(parse_long(val, key));
    else if (key == "dropout") cfg.dropout = parse_double(val, key);
    else if (key == "vocab_hash") {
      std::uint64_t h = 0;
      auto res = std::from_chars(val.data(), val.data() + val.size(), h, 16);
      if (res.ec != std::errc{} || res.ptr != val.data() + val.size())
        throw DataError("checkpoint: bad vocab_hash '" + val + "'");
      ckpt.vocab_hash = h;
    } else if (key == "task") ckpt.task = (val == "-") ? "" : val;
    else if (key == "birads_masked") ckpt.birads_masked = parse_long(val, key) != 0;
    else if (key == "head") has_head = parse_long(val, key) != 0;
    else if (key == "n_classes") n_classes = parse_long(val, key);
    else if (key == "temperature") temperature = parse_double(val, key);
    else if (key == "data") payload_size = parse_long(val, key);
    else throw DataError("checkpoint: unknown header key '" + key + "'");
  }
  if (payload_size < 0) throw DataError("checkpoint: truncated header");
  cfg.validate();

  std::string payload(static_cast<std::size_t>(payload_size), '\0');
  in.read(payload.data(), payload_size);
  if (in.gcount() != payload_size)
    throw DataError("checkpoint: payload shorter than declared");

  ckpt.params = Parameters::zeros(cfg);
  if (has_head) {
    if (n_classes < 2) throw DataError("checkpoint: head with n_classes < 2");
    ckpt.head = ClassifierHead::zeros(static_cast<int>(n_classes), cfg.d_model,
                                      temperature);
  }

  std::size_t next = 0;
  auto absorb = [&](const std::string& name, Mat& m) {
    if (next >= manifest.size())
      throw DataError("checkpoint: missing tensor '" + name + "'");
    const ManifestEntry& e = manifest[next++];
    if (e.name != name || e.rows != m.rows() || e.cols != m.cols())
      throw DataError("checkpoint: tensor mismatch, expected '" + name +
                      "' " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()) + ", found '" + e.name + "' " +
                      std::to_string(e.rows) + "x" + std::to_string(e.cols));
    const long bytes = e.rows * e.cols * 4;
    if (e.offset < 0 || e.offset + bytes > payload_size)
      throw DataError("checkpoint: tensor '" + name + "' out of payload range");
    const char* p = payload.data() + e.offset;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c, p += 4) m(r, c) = read_f32(p);
  };
  visit_tensors(ckpt.params, absorb);
  if (ckpt.head) visit_head_tensors(*ckpt.head, absorb);
  if (next != manifest.size())
    throw DataError("checkpoint: unexpected extra tensor '" +
                    manifest[next].name + "'");
  return ckpt;
}

}  // namespace medlabel
