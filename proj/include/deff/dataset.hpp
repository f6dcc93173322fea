#pragma once

// Corpus ingestion (TSV / JSONL), per-domain indexing, and the
// source/target partition.

#include <array>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "deff/error.hpp"
#include "deff/frame.hpp"

namespace deff {

enum class Split { train = 0, eval = 1, test = 2 };

inline constexpr std::array<Split, 3> kAllSplits = {Split::train, Split::eval,
                                                    Split::test};

inline std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::train: return "train";
    case Split::eval: return "eval";
    case Split::test: return "test";
  }
  return "train";
}

inline std::optional<Split> parse_split(std::string_view text) noexcept {
  if (text == "train") return Split::train;
  if (text == "eval") return Split::eval;
  if (text == "test") return Split::test;
  return std::nullopt;
}

struct CorpusRow {
  std::string domain;
  std::string utterance;
  Frame frame;
  Split split = Split::train;
};

class CorpusTable {
 public:
  CorpusTable() = default;

  explicit CorpusTable(std::vector<CorpusRow> rows) : rows_(std::move(rows)) {
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      if (rows_[i].domain.empty()) {
        throw Error("row " + std::to_string(i) + " has an empty domain");
      }
      index_[rows_[i].domain]
          .by_split[static_cast<std::size_t>(rows_[i].split)]
          .push_back(i);
    }
  }

  const std::vector<CorpusRow>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }
  const CorpusRow& row(std::size_t i) const { return rows_.at(i); }

  // Sorted domain names.
  std::vector<std::string> domains() const {
    std::vector<std::string> out;
    out.reserve(index_.size());
    for (const auto& [name, _] : index_) out.push_back(name);
    return out;
  }

  bool has_domain(std::string_view domain) const {
    return index_.find(domain) != index_.end();
  }

  // Row positions of one domain and split, in file order.
  std::span<const std::size_t> rows_of(std::string_view domain,
                                       Split split) const {
    return entry(domain).by_split[static_cast<std::size_t>(split)];
  }

  std::size_t domain_size(std::string_view domain) const {
    const auto& e = entry(domain);
    return e.by_split[0].size() + e.by_split[1].size() + e.by_split[2].size();
  }

 private:
  struct DomainIndex {
    std::array<std::vector<std::size_t>, 3> by_split;
  };

  const DomainIndex& entry(std::string_view domain) const {
    auto it = index_.find(domain);
    if (it == index_.end()) {
      throw Error("unknown domain '" + std::string(domain) + "'");
    }
    return it->second;
  }

  std::vector<CorpusRow> rows_;
  std::map<std::string, DomainIndex, std::less<>> index_;
};

enum class CorpusFormat { tsv, jsonl };

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  for (;;) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      cols.push_back(line.substr(start));
      return cols;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

inline Frame parse_row_frame(std::string_view text, const std::string& source,
                             std::size_t line) {
  try {
    return parse_frame(text);
  } catch (const FrameParseError& e) {
    throw CorpusError(source, line, std::string("bad frame: ") + e.what());
  }
}

inline std::string_view chomp(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

inline std::vector<CorpusRow> read_tsv(std::istream& in, Split default_split,
                                       const std::string& source) {
  std::vector<CorpusRow> rows;
  std::string raw;
  if (!std::getline(in, raw)) return rows;  // empty file
  std::size_t line_no = 1;
  const auto header = split_tabs(chomp(raw));
  const bool has_split =
      header.size() == 4 && header[3] == "split";
  if (header.size() < 3 || header.size() > 4 || header[0] != "domain" ||
      header[1] != "utterance" || header[2] != "semantic_parse" ||
      (header.size() == 4 && !has_split)) {
    throw CorpusError(source, 1,
                      "expected header 'domain<TAB>utterance<TAB>"
                      "semantic_parse[<TAB>split]'");
  }
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = chomp(raw);
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    if (cols.size() != header.size()) {
      throw CorpusError(source, line_no,
                        "expected " + std::to_string(header.size()) +
                            " columns, found " + std::to_string(cols.size()));
    }
    if (cols[0].empty()) throw CorpusError(source, line_no, "empty domain");
    Split split = default_split;
    if (has_split) {
      auto s = parse_split(cols[3]);
      if (!s) {
        throw CorpusError(source, line_no,
                          "unknown split '" + std::string(cols[3]) + "'");
      }
      split = *s;
    }
    rows.push_back(CorpusRow{std::string(cols[0]), std::string(cols[1]),
                             parse_row_frame(cols[2], source, line_no), split});
  }
  return rows;
}

inline std::vector<CorpusRow> read_jsonl(std::istream& in, Split default_split,
                                         const std::string& source) {
  std::vector<CorpusRow> rows;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = chomp(raw);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw CorpusError(source, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw CorpusError(source, line_no, "expected an object");
    auto field = [&](const char* key) -> std::string {
      auto it = obj.find(key);
      if (it == obj.end() || !it->is_string()) {
        throw CorpusError(source, line_no,
                          std::string("missing string field '") + key + "'");
      }
      return it->get<std::string>();
    };
    std::string domain = field("domain");
    if (domain.empty()) throw CorpusError(source, line_no, "empty domain");
    std::string utterance = field("utterance");
    const std::string parse = field("semantic_parse");
    Split split = default_split;
    if (obj.contains("split")) {
      auto s = obj["split"].is_string()
                   ? parse_split(obj["split"].get<std::string>())
                   : std::nullopt;
      if (!s) throw CorpusError(source, line_no, "invalid 'split'");
      split = *s;
    }
    rows.push_back(CorpusRow{std::move(domain), std::move(utterance),
                             parse_row_frame(parse, source, line_no), split});
  }
  return rows;
}

}  // namespace detail

// Split implied by a `_train` / `_eval` / `_test` filename suffix (before the
// extension); train otherwise.
inline Split split_from_filename(const std::filesystem::path& path) {
  const std::string stem = path.stem().string();
  if (stem.ends_with("_eval")) return Split::eval;
  if (stem.ends_with("_test")) return Split::test;
  return Split::train;
}

inline CorpusFormat format_from_extension(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".json") return CorpusFormat::jsonl;
  return CorpusFormat::tsv;
}

// Reads rows from a stream. An explicit split column/key overrides
// default_split. Frames are parsed eagerly.
inline std::vector<CorpusRow> read_corpus_rows(std::istream& in,
                                               CorpusFormat format,
                                               Split default_split,
                                               const std::string& source) {
  return format == CorpusFormat::tsv
             ? detail::read_tsv(in, default_split, source)
             : detail::read_jsonl(in, default_split, source);
}

inline CorpusTable load_corpus(const std::filesystem::path& path,
                               CorpusFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read corpus file '" + path.string() + "'");
  return CorpusTable(read_corpus_rows(in, format, split_from_filename(path),
                                      path.string()));
}

inline CorpusTable load_corpus(const std::filesystem::path& path) {
  return load_corpus(path, format_from_extension(path));
}

// Concatenates several files (e.g. the `_train/_eval/_test` files of a
// distribution) in the given order.
inline CorpusTable load_corpus(std::span<const std::filesystem::path> paths) {
  std::vector<CorpusRow> rows;
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read corpus file '" + path.string() + "'");
    auto part = read_corpus_rows(in, format_from_extension(path),
                                 split_from_filename(path), path.string());
    for (auto& r : part) rows.push_back(std::move(r));
  }
  return CorpusTable(std::move(rows));
}

// Writes the table as TSV with a split column and canonical frames.
inline void write_corpus_tsv(std::ostream& out, const CorpusTable& table) {
  out << "domain\tutterance\tsemantic_parse\tsplit\n";
  for (const auto& row : table.rows()) {
    out << row.domain << '\t' << row.utterance << '\t'
        << serialize_frame(row.frame) << '\t' << to_string(row.split) << '\n';
  }
}

struct DomainStats {
  std::string domain;
  std::array<std::size_t, 3> split_counts{};  // indexed by Split
  // Root-intent label (with IN: prefix) -> count over the train split.
  std::map<std::string, std::size_t> intent_histogram;

  std::size_t count(Split split) const {
    return split_counts[static_cast<std::size_t>(split)];
  }
  std::size_t total() const {
    return split_counts[0] + split_counts[1] + split_counts[2];
  }
};

inline DomainStats domain_stats(const CorpusTable& table,
                                std::string_view domain) {
  DomainStats stats;
  stats.domain = std::string(domain);
  for (Split split : kAllSplits) {
    stats.split_counts[static_cast<std::size_t>(split)] =
        table.rows_of(domain, split).size();
  }
  for (std::size_t i : table.rows_of(domain, Split::train)) {
    ++stats.intent_histogram[table.row(i).frame.root_label()];
  }
  return stats;
}

struct Partition {
  std::vector<std::size_t> source_rows;
  std::vector<std::size_t> target_rows;
};

// Source = every row outside the target domain; target = the domain's rows.
inline Partition partition(const CorpusTable& table,
                           std::string_view target_domain) {
  if (!table.has_domain(target_domain)) {
    throw Error("unknown target domain '" + std::string(target_domain) + "'");
  }
  if (table.domains().size() < 2) {
    throw Error("partition needs at least one source domain besides '" +
                std::string(target_domain) + "'");
  }
  Partition p;
  for (std::size_t i = 0; i < table.size(); ++i) {
    (table.row(i).domain == target_domain ? p.target_rows : p.source_rows)
        .push_back(i);
  }
  return p;
}

}  // namespace deff
