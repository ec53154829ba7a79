#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "protoset/dataset.hpp"

namespace protoset {

namespace {

constexpr std::string_view kDatasetMagic = "PSET";
constexpr std::string_view kDatasetVersion = "v1";

void append_double(std::string& out, double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  out.append(buf, end);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const auto start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view tok, T& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (!tok.empty() && tok.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

struct Line {
  std::string_view text;
  std::size_t number;  // 1-based
  bool terminated;
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  std::size_t start = 0;
  std::size_t number = 1;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back({text.substr(start), number, false});
      break;
    }
    lines.push_back({text.substr(start, nl - start), number, true});
    start = nl + 1;
    ++number;
  }
  return lines;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  validate(ds);
  std::size_t records = 0;
  for (const auto& s : ds.sets) records += s.media.size();

  std::string out;
  out += "PSET v1 dim=" + std::to_string(ds.dim) + " records=" + std::to_string(records) + "\n";
  for (const auto& s : ds.sets) {
    for (std::size_t i = 0; i < s.media.size(); ++i) {
      const auto& m = s.media[i];
      out += std::to_string(s.subject_id);
      out += ' ';
      out += std::to_string(s.set_id);
      out += ' ';
      out += std::to_string(m.media_id);
      out += ' ';
      out += std::to_string(static_cast<int>(m.modality));
      for (Index j = 0; j < m.vector.size(); ++j) {
        out += ' ';
        append_double(out, m.vector[j]);
      }
      if (s.planted_mode) {
        out += " #mode=" + std::to_string((*s.planted_mode)[i]);
      }
      out += '\n';
    }
  }
  write_file(path, out);
}

Dataset load_dataset(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const auto lines = split_lines(text);
  if (lines.empty()) throw ParseError(1, "missing PSET header");

  // Header: PSET v1 dim=<d> [records=<n>]
  const auto header = split_ws(lines.front().text);
  if (header.size() < 3 || header[0] != kDatasetMagic || header[1] != kDatasetVersion ||
      header[2].substr(0, 4) != "dim=") {
    throw ParseError(1, "expected header 'PSET v1 dim=<d>'");
  }
  Index dim = 0;
  if (!parse_number(header[2].substr(4), dim) || dim < 1) {
    throw ParseError(1, "invalid dimension in header");
  }
  std::optional<std::size_t> expected_records;
  for (std::size_t i = 3; i < header.size(); ++i) {
    if (header[i].substr(0, 8) == "records=") {
      std::size_t n = 0;
      if (!parse_number(header[i].substr(8), n)) throw ParseError(1, "invalid record count");
      expected_records = n;
    } else {
      throw ParseError(1, "unexpected header field '" + std::string(header[i]) + "'");
    }
  }

  Dataset ds;
  ds.dim = dim;
  std::unordered_map<std::int64_t, std::size_t> slot;
  std::vector<bool> has_modes;
  std::size_t records = 0;

  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto& line = lines[li];
    auto body = line.text;
    std::optional<int> mode;
    if (const auto hash = body.find('#'); hash != std::string_view::npos) {
      const auto tag = split_ws(body.substr(hash));
      body = body.substr(0, hash);
      int m = 0;
      if (tag.size() != 1 || tag[0].substr(0, 6) != "#mode=" || !parse_number(tag[0].substr(6), m)) {
        throw ParseError(line.number, "malformed trailing tag");
      }
      mode = m;
    }
    const auto tok = split_ws(body);
    if (tok.empty()) {
      if (mode) throw ParseError(line.number, "tag without record");
      continue;
    }
    const auto expected_tokens = static_cast<std::size_t>(4 + dim);
    if (tok.size() != expected_tokens) {
      if (!line.terminated || tok.size() < 4) {
        throw ParseError(line.number, "truncated record (" + std::to_string(tok.size()) +
                                          " fields, expected " + std::to_string(expected_tokens) + ")");
      }
      throw FormatError("record " + std::to_string(line.number) + ": " +
                        std::to_string(tok.size() - 4) + " feature values, header says dim=" +
                        std::to_string(dim));
    }

    std::int64_t subject = 0;
    std::int64_t set_id = 0;
    std::int64_t media_id = 0;
    int modality = 0;
    if (!parse_number(tok[0], subject) || !parse_number(tok[1], set_id) ||
        !parse_number(tok[2], media_id) || !parse_number(tok[3], modality)) {
      throw ParseError(line.number, "invalid integer field");
    }
    if (modality != 0 && modality != 1) throw ParseError(line.number, "modality must be 0 or 1");

    MediaFeature f;
    f.media_id = media_id;
    f.modality = static_cast<Modality>(modality);
    f.vector.resize(dim);
    for (Index j = 0; j < dim; ++j) {
      double v = 0.0;
      if (!parse_number(tok[static_cast<std::size_t>(4 + j)], v)) {
        throw ParseError(line.number, "invalid value '" + std::string(tok[static_cast<std::size_t>(4 + j)]) + "'");
      }
      f.vector[j] = v;
    }

    auto [it, fresh] = slot.try_emplace(set_id, ds.sets.size());
    if (fresh) {
      MediaSet s;
      s.set_id = set_id;
      s.subject_id = subject;
      if (mode) s.planted_mode.emplace();
      ds.sets.push_back(std::move(s));
      has_modes.push_back(mode.has_value());
    }
    auto& set = ds.sets[it->second];
    if (set.subject_id != subject) {
      throw FormatError("record " + std::to_string(line.number) + ": set " + std::to_string(set_id) +
                        " assigned to two subjects");
    }
    if (has_modes[it->second] != mode.has_value()) {
      throw FormatError("record " + std::to_string(line.number) + ": set " + std::to_string(set_id) +
                        " mixes media with and without #mode tags");
    }
    set.media.push_back(std::move(f));
    if (mode) set.planted_mode->push_back(*mode);
    ++records;
  }

  if (expected_records && records != *expected_records) {
    throw ParseError(records + 2, "file ends after " + std::to_string(records) + " of " +
                                      std::to_string(*expected_records) + " records");
  }
  validate(ds);
  return ds;
}

void save_pairs(const std::vector<PairRecord>& pairs, const std::filesystem::path& path) {
  std::string out;
  for (const auto& p : pairs) {
    out += std::to_string(p.set_a) + ' ' + std::to_string(p.set_b) + ' ' + std::to_string(p.label) + '\n';
  }
  write_file(path, out);
}

std::vector<PairRecord> load_pairs(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<PairRecord> pairs;
  for (const auto& line : split_lines(text)) {
    const auto tok = split_ws(line.text);
    if (tok.empty()) continue;
    PairRecord p;
    if (tok.size() != 3 || !parse_number(tok[0], p.set_a) || !parse_number(tok[1], p.set_b) ||
        !parse_number(tok[2], p.label) || (p.label != 0 && p.label != 1)) {
      throw ParseError(line.number, "expected '<set_id_a> <set_id_b> <0|1>'");
    }
    pairs.push_back(p);
  }
  return pairs;
}

}  // namespace protoset
