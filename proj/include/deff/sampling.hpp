#pragma once

// Subset-size schedule and the two target-domain samplers (uniform, SPIS).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "deff/dataset.hpp"
#include "deff/error.hpp"
#include "deff/frame.hpp"
#include "deff/rng.hpp"

namespace deff {

// Logarithmically spaced subset sizes in percent:
//   g(x) = base^(x-1) - 1,  base = 101^(1/(n-1)),  x = 1..n
// so that g(1) = 0 and g(n) = 100; sizes are ceil(g(x)).
struct Schedule {
  int n = 0;
  double base = 0.0;
  std::vector<double> raw;
  std::vector<int> sizes;
};

inline Schedule make_schedule(int n) {
  if (n < 2) throw Error("schedule needs n >= 2, got " + std::to_string(n));
  Schedule s;
  s.n = n;
  s.base = std::pow(101.0, 1.0 / (n - 1));
  s.raw.resize(n);
  s.sizes.resize(n);
  for (int x = 1; x <= n; ++x) {
    double g;
    if (x == 1) {
      g = 0.0;
    } else if (x == n) {
      g = 100.0;  // pow round-off would otherwise ceil to 101
    } else {
      g = std::pow(s.base, x - 1) - 1.0;
    }
    s.raw[x - 1] = g;
    // Values within 1e-9 of an integer are treated as that integer.
    s.sizes[x - 1] = static_cast<int>(std::ceil(g - 1e-9));
  }
  return s;
}

inline void to_json(nlohmann::json& j, const Schedule& s) {
  j = nlohmann::json{{"n", s.n}, {"base", s.base}, {"raw", s.raw},
                     {"sizes", s.sizes}};
}

enum class Algorithm { uniform, spis };

inline std::string_view to_string(Algorithm a) noexcept {
  return a == Algorithm::uniform ? "uniform" : "spis";
}

inline Algorithm parse_algorithm(std::string_view text) {
  if (text == "uniform") return Algorithm::uniform;
  if (text == "spis") return Algorithm::spis;
  throw Error("unknown sampling algorithm '" + std::string(text) + "'");
}

struct SubsetSpec {
  std::string target_domain;
  Algorithm algorithm = Algorithm::uniform;
  // Percent in [0, 100] for uniform; minimum label occurrences (>= 1) for spis.
  double size_param = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const SubsetSpec&, const SubsetSpec&) = default;
};

struct Subset {
  SubsetSpec spec;
  std::vector<std::size_t> row_ids;

  friend bool operator==(const Subset&, const Subset&) = default;
};

inline void to_json(nlohmann::json& j, const SubsetSpec& s) {
  j = nlohmann::json{{"target_domain", s.target_domain},
                     {"algorithm", std::string(to_string(s.algorithm))},
                     {"size_param", s.size_param},
                     {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, SubsetSpec& s) {
  s.target_domain = j.at("target_domain").get<std::string>();
  s.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
  s.size_param = j.at("size_param").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
}

inline void to_json(nlohmann::json& j, const Subset& s) {
  j = nlohmann::json{{"spec", s.spec}, {"row_ids", s.row_ids}};
}

inline void from_json(const nlohmann::json& j, Subset& s) {
  s.spec = j.at("spec").get<SubsetSpec>();
  s.row_ids = j.at("row_ids").get<std::vector<std::size_t>>();
}

namespace detail {

// Every draw is keyed on the whole spec, so subsets for different sizes are
// independent (uniform subsets are not nested).
inline CounterRng subset_rng(const SubsetSpec& spec) {
  std::uint64_t domain_hash = 0xCBF29CE484222325ULL;  // FNV-1a
  for (unsigned char c : spec.target_domain) {
    domain_hash = (domain_hash ^ c) * 0x100000001B3ULL;
  }
  return CounterRng(derive_key({spec.seed,
                                static_cast<std::uint64_t>(spec.algorithm),
                                key_bits(spec.size_param), domain_hash}));
}

// Fisher-Yates over `items`, stopping after the first `prefix` positions:
// for i in [0, prefix): swap(items[i], items[i + below(n - i)]).
inline void shuffle_prefix(std::vector<std::size_t>& items, std::size_t prefix,
                           CounterRng& rng) {
  const std::size_t n = items.size();
  for (std::size_t i = 0; i < prefix && i + 1 < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(items[i], items[j]);
  }
}

}  // namespace detail

// ceil(percent/100 * domain_rows), with 0 for percent == 0.
inline std::size_t uniform_subset_size(double percent,
                                       std::size_t domain_rows) {
  if (percent <= 0.0) return 0;
  const double exact = percent * static_cast<double>(domain_rows) / 100.0;
  const auto size = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  return std::min(size, domain_rows);
}

inline Subset uniform_sample(const CorpusTable& table, const SubsetSpec& spec) {
  if (spec.algorithm != Algorithm::uniform) {
    throw Error("uniform_sample called with a non-uniform spec");
  }
  if (!(spec.size_param >= 0.0 && spec.size_param <= 100.0)) {
    throw Error("uniform subset percent must lie in [0, 100]");
  }
  const auto pool_view = table.rows_of(spec.target_domain, Split::train);
  const std::size_t size = uniform_subset_size(spec.size_param, pool_view.size());
  if (spec.size_param > 0.0 && pool_view.empty()) {
    throw Error("domain '" + spec.target_domain +
                "' has no train rows to sample from");
  }
  std::vector<std::size_t> pool(pool_view.begin(), pool_view.end());
  CounterRng rng = detail::subset_rng(spec);
  detail::shuffle_prefix(pool, size, rng);
  pool.resize(size);
  return Subset{spec, std::move(pool)};
}

// Single-pass greedy cover: visit the domain's train rows in seeded-shuffled
// order and keep a row iff one of its labels is still below k occurrences.
// Labels with total count >= k end at >= k; rarer labels are fully included.
inline Subset spis_sample(const CorpusTable& table, const SubsetSpec& spec) {
  if (spec.algorithm != Algorithm::spis) {
    throw Error("spis_sample called with a non-spis spec");
  }
  if (!(spec.size_param >= 1.0)) {
    throw Error("spis needs k >= 1");
  }
  const auto pool_view = table.rows_of(spec.target_domain, Split::train);
  std::vector<std::size_t> order(pool_view.begin(), pool_view.end());
  CounterRng rng = detail::subset_rng(spec);
  detail::shuffle_prefix(order, order.size(), rng);

  const auto k = static_cast<std::size_t>(std::ceil(spec.size_param));
  LabelMultiset achieved;
  Subset subset{spec, {}};
  for (std::size_t id : order) {
    const LabelMultiset labels = ontology_labels(table.row(id).frame);
    bool needed = false;
    for (const auto& [label, _] : labels) {
      auto it = achieved.find(label);
      if (it == achieved.end() || it->second < k) {
        needed = true;
        break;
      }
    }
    if (!needed) continue;
    subset.row_ids.push_back(id);
    for (const auto& [label, count] : labels) achieved[label] += count;
  }
  return subset;
}

inline Subset draw_subset(const CorpusTable& table, const SubsetSpec& spec) {
  return spec.algorithm == Algorithm::uniform ? uniform_sample(table, spec)
                                              : spis_sample(table, spec);
}

struct SubsetReport {
  std::size_t row_count = 0;
  double percent_of_domain = 0.0;  // relative to the domain's train split
  LabelMultiset label_counts;
};

inline SubsetReport subset_size_report(const Subset& subset,
                                       const CorpusTable& table) {
  SubsetReport report;
  report.row_count = subset.row_ids.size();
  const std::size_t train =
      table.rows_of(subset.spec.target_domain, Split::train).size();
  report.percent_of_domain =
      train == 0 ? 0.0
                 : 100.0 * static_cast<double>(report.row_count) /
                       static_cast<double>(train);
  for (std::size_t id : subset.row_ids) {
    for (const auto& [label, count] : ontology_labels(table.row(id).frame)) {
      report.label_counts[label] += count;
    }
  }
  return report;
}

}  // namespace deff
