#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <unistd.h>

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "deff/deff.hpp"

namespace deff::testing {

inline CorpusRow make_row(std::string domain, const std::string& frame,
                          Split split = Split::train) {
  return CorpusRow{std::move(domain), "utt", parse_frame(frame), split};
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("deff_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Random valid frame: depth <= max_depth, branching <= max_branch.
class FrameGenerator {
 public:
  explicit FrameGenerator(std::uint64_t seed) : rng_(seed) {}

  Frame operator()(int max_depth = 4, int max_branch = 4) {
    return Frame(node(NodeKind::intent, 1, max_depth, max_branch));
  }

 private:
  std::string label(NodeKind kind) {
    static const char* intents[] = {"GET_WEATHER", "GET_SUNSET", "CREATE_TIMER",
                                    "SEND_MESSAGE", "PLAY_MUSIC", "GET_TODO"};
    static const char* slots[] = {"LOCATION", "DATE_TIME", "CONTENT_EXACT",
                                  "RECIPIENT", "MUSIC_TYPE", "TODO"};
    const auto i = std::uniform_int_distribution<int>(0, 5)(rng_);
    return std::string(kind == NodeKind::intent ? "IN:" : "SL:") +
           (kind == NodeKind::intent ? intents[i] : slots[i]);
  }

  std::string token() {
    static const char* words[] = {"what", "s", "the", "boston", "forecast",
                                  "7pm", "tell", "mom", "(ok)", "l'amour"};
    return words[std::uniform_int_distribution<int>(0, 9)(rng_)];
  }

  FrameNode node(NodeKind kind, int depth, int max_depth, int max_branch) {
    FrameNode n{kind, label(kind), {}};
    const int children = std::uniform_int_distribution<int>(0, max_branch)(rng_);
    const NodeKind nested = kind == NodeKind::intent ? NodeKind::slot : NodeKind::intent;
    for (int c = 0; c < children; ++c) {
      if (depth < max_depth && std::bernoulli_distribution(0.4)(rng_)) {
        n.children.push_back(node(nested, depth + 1, max_depth, max_branch));
      } else {
        n.children.push_back(FrameNode::token(token()));
      }
    }
    return n;
  }

  std::mt19937_64 rng_;
};

// Multi-domain corpus: `per_domain` train rows per domain plus eval/test
// rows, intents drawn from a small per-domain pool.
inline CorpusTable synthetic_corpus(const std::vector<std::string>& domains,
                                    std::size_t per_domain, std::size_t test_per_domain,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<CorpusRow> rows;
  for (const auto& d : domains) {
    std::string upper;
    for (char c : d) upper += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    auto frame = [&] {
      const int intent = std::uniform_int_distribution<int>(0, 3)(rng);
      const int slot = std::uniform_int_distribution<int>(0, 2)(rng);
      return "[IN:" + upper + "_" + std::string(1, static_cast<char>('A' + intent)) +
             " word [SL:" + upper + "_S" + std::string(1, static_cast<char>('A' + slot)) +
             " x ] ]";
    };
    for (std::size_t i = 0; i < per_domain; ++i) rows.push_back(make_row(d, frame(), Split::train));
    for (std::size_t i = 0; i < per_domain / 10 + 1; ++i) rows.push_back(make_row(d, frame(), Split::eval));
    for (std::size_t i = 0; i < test_per_domain; ++i) rows.push_back(make_row(d, frame(), Split::test));
  }
  return CorpusTable(std::move(rows));
}

inline std::string corpus_tsv(const CorpusTable& table) {
  std::ostringstream out;
  write_corpus_tsv(out, table);
  return out.str();
}

inline std::vector<EfficiencyPoint> points_on(const CurveParams& p,
                                              const std::vector<double>& xs,
                                              std::int64_t seed = 0) {
  std::vector<EfficiencyPoint> out;
  for (double x : xs) out.push_back({x, p(x), seed, "m", "d"});
  return out;
}

inline const std::vector<double>& schedule_positive_sizes() {
  static const std::vector<double> xs{1, 2, 4, 7, 12, 21, 36, 60, 100};
  return xs;
}

}  // namespace deff::testing
