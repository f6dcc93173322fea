#pragma once

// Case-study aggregation: intent complexity classes and per-class curves,
// multi-seed summaries, and multi-model comparison tables.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "deff/curve.hpp"
#include "deff/dataset.hpp"
#include "deff/error.hpp"
#include "deff/frame.hpp"
#include "deff/protocol.hpp"

namespace deff {

// none < closed < semi(-open) < open
enum class ComplexityClass { none = 0, closed = 1, semi = 2, open = 3 };

inline constexpr std::array<ComplexityClass, 4> kAllComplexityClasses = {
    ComplexityClass::none, ComplexityClass::closed, ComplexityClass::semi,
    ComplexityClass::open};

inline std::string_view to_string(ComplexityClass c) noexcept {
  switch (c) {
    case ComplexityClass::none: return "none";
    case ComplexityClass::closed: return "closed";
    case ComplexityClass::semi: return "semi";
    case ComplexityClass::open: return "open";
  }
  return "none";
}

inline std::optional<ComplexityClass> parse_complexity(std::string_view s) noexcept {
  if (s == "none") return ComplexityClass::none;
  if (s == "closed") return ComplexityClass::closed;
  if (s == "semi" || s == "semi-open") return ComplexityClass::semi;
  if (s == "open") return ComplexityClass::open;
  return std::nullopt;
}

// An intent is as complex as its most complex slot; no slots means none.
inline ComplexityClass intent_complexity_from_slots(
    std::span<const ComplexityClass> slot_classes) {
  ComplexityClass out = ComplexityClass::none;
  for (ComplexityClass c : slot_classes) out = std::max(out, c);
  return out;
}

struct ComplexityAnnotations {
  std::string domain;
  std::map<std::string, ComplexityClass, std::less<>> classes;
};

// Two-column CSV `intent,class`; an `intent,class` header line is optional.
inline ComplexityAnnotations parse_annotations(std::istream& in,
                                               std::string domain,
                                               const std::string& source) {
  ComplexityAnnotations out;
  out.domain = std::move(domain);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos) {
      throw CorpusError(source, line_no, "expected 'intent,class'");
    }
    const std::string_view intent = line.substr(0, comma);
    const std::string_view cls = line.substr(comma + 1);
    if (line_no == 1 && intent == "intent" && cls == "class") continue;
    if (!intent.starts_with("IN:") || intent.size() == 3) {
      throw CorpusError(source, line_no,
                        "intent '" + std::string(intent) + "' lacks the IN: prefix");
    }
    auto parsed = parse_complexity(cls);
    if (!parsed) {
      throw CorpusError(source, line_no,
                        "unknown complexity class '" + std::string(cls) + "'");
    }
    if (!out.classes.emplace(std::string(intent), *parsed).second) {
      throw CorpusError(source, line_no,
                        "duplicate intent '" + std::string(intent) + "'");
    }
  }
  return out;
}

// The domain name is the file stem (e.g. weather.csv -> weather).
inline ComplexityAnnotations load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read annotations '" + path.string() + "'");
  return parse_annotations(in, path.stem().string(), path.string());
}

using IntentPoints = std::map<std::string, std::vector<EfficiencyPoint>>;

// Exact match per reference root intent for every successful run. Test rows
// are keyed by their reference root label; intents with fewer than
// min_occurrences rows in the target test split are dropped.
inline IntentPoints per_intent_points(const Ledger& ledger,
                                      const CorpusTable& table,
                                      std::size_t min_occurrences = 10) {
  IntentPoints out;
  for (const auto& e : ledger.entries()) {
    if (e.status != RunStatus::succeeded) continue;
    const auto test_rows = table.rows_of(e.manifest.target_domain, Split::test);
    const auto& predictions = e.result->predictions;
    std::map<std::size_t, const std::string*> by_row;
    for (const auto& p : predictions) by_row[p.row_id] = &p.frame;

    std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // hits, total
    for (std::size_t id : test_rows) {
      auto it = by_row.find(id);
      if (it == by_row.end()) {
        throw Error("run '" + e.manifest.run_id +
                    "' has no per-example output for test row " + std::to_string(id));
      }
      const Frame& reference = table.row(id).frame;
      bool hit = false;
      try {
        hit = parse_frame(*it->second) == reference;
      } catch (const FrameParseError&) {
        hit = false;  // malformed system output never matches
      }
      auto& [hits, total] = tally[reference.root_label()];
      hits += hit ? 1 : 0;
      ++total;
    }
    for (const auto& [intent, ht] : tally) {
      if (ht.second < min_occurrences) continue;
      out[intent].push_back(
          {e.manifest.subset_percent,
           100.0 * static_cast<double>(ht.first) / static_cast<double>(ht.second),
           static_cast<std::int64_t>(e.result->seed), e.manifest.model_id,
           e.manifest.target_domain});
    }
  }
  return out;
}

struct ClassPoint {
  double subset_percent = 0.0;
  double exact_match = 0.0;  // unweighted mean over member intents
  std::size_t members = 0;
};

using ClassCurves = std::map<ComplexityClass, std::vector<ClassPoint>>;

namespace detail {

// Mean EM per subset percent (over seeds) for one intent.
inline std::map<double, double> mean_by_size(std::span<const EfficiencyPoint> points) {
  std::map<double, std::vector<double>> groups;
  for (const auto& p : points) groups[p.subset_percent].push_back(p.exact_match);
  std::map<double, double> out;
  for (auto& [x, ys] : groups) {
    std::sort(ys.begin(), ys.end());
    double sum = 0.0;
    for (double y : ys) sum += y;
    out[x] = sum / static_cast<double>(ys.size());
  }
  return out;
}

}  // namespace detail

// Averages member intents per complexity class at each subset percent.
// Every class is present; classes without annotated intents map to an empty
// series.
inline ClassCurves per_class_curves(const IntentPoints& per_intent,
                                    const ComplexityAnnotations& annotations) {
  std::map<ComplexityClass, std::map<double, std::vector<double>>> grouped;
  for (const auto& [intent, points] : per_intent) {
    auto it = annotations.classes.find(intent);
    if (it == annotations.classes.end()) {
      throw Error("intent '" + intent + "' has no complexity annotation" +
                  (annotations.domain.empty() ? "" : " in " + annotations.domain));
    }
    for (const auto& [x, y] : detail::mean_by_size(points)) {
      grouped[it->second][x].push_back(y);
    }
  }
  ClassCurves out;
  for (ComplexityClass c : kAllComplexityClasses) {
    auto& series = out[c];
    for (auto& [x, ys] : grouped[c]) {
      std::sort(ys.begin(), ys.end());
      double sum = 0.0;
      for (double y : ys) sum += y;
      series.push_back({x, sum / static_cast<double>(ys.size()), ys.size()});
    }
  }
  return out;
}

struct SeedStats {
  double subset_percent = 0.0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t seed_count = 0;

  double spread() const { return max - min; }
};

struct InverseSpread {
  double target = 0.0;
  // Required subset percent per seed; nullopt where the target is above
  // that seed's asymptote.
  std::map<std::int64_t, std::optional<double>> per_seed;
  std::size_t reachable = 0;
  double min = 0.0;
  double max = 0.0;

  double spread() const { return max - min; }
};

struct SeedAggregate {
  std::vector<SeedStats> by_size;  // ascending subset percent
  std::map<std::int64_t, CurveModel> per_seed_fits;
  std::vector<InverseSpread> inverse;
};

// Per-size mean/min/max over seeds, one curve per seed (where a seed has
// enough points to fit), and the spread of h^-1(y) across those curves.
inline SeedAggregate aggregate_seeds(std::span<const EfficiencyPoint> points,
                                     std::span<const double> em_targets = {}) {
  if (points.empty()) throw Error("aggregate_seeds needs at least one point");
  for (const auto& p : points) {
    if (p.model_id != points.front().model_id || p.domain != points.front().domain) {
      throw Error("aggregate_seeds expects points from one (model, domain) pair");
    }
  }
  SeedAggregate agg;
  std::map<double, std::vector<double>> by_size;
  std::map<std::int64_t, std::vector<EfficiencyPoint>> by_seed;
  for (const auto& p : points) {
    by_size[p.subset_percent].push_back(p.exact_match);
    by_seed[p.seed].push_back(p);
  }
  for (auto& [x, ys] : by_size) {
    std::sort(ys.begin(), ys.end());
    double sum = 0.0;
    for (double y : ys) sum += y;
    agg.by_size.push_back({x, sum / static_cast<double>(ys.size()), ys.front(),
                           ys.back(), ys.size()});
  }
  for (auto& [seed, seed_points] : by_seed) {
    std::sort(seed_points.begin(), seed_points.end(),
              [](const EfficiencyPoint& l, const EfficiencyPoint& r) {
                return l.subset_percent < r.subset_percent ||
                       (l.subset_percent == r.subset_percent && l.exact_match < r.exact_match);
              });
    try {
      agg.per_seed_fits.emplace(seed, fit_curve(seed_points));
    } catch (const Error&) {
      // Too few distinct sizes for this seed; it still counts in by_size.
    }
  }
  for (double y : em_targets) {
    InverseSpread s;
    s.target = y;
    for (const auto& [seed, model] : agg.per_seed_fits) {
      std::optional<double> x;
      try {
        x = invert(model, y).subset_percent;
      } catch (const Error&) {
      }
      s.per_seed[seed] = x;
      if (x) {
        s.min = s.reachable == 0 ? *x : std::min(s.min, *x);
        s.max = s.reachable == 0 ? *x : std::max(s.max, *x);
        ++s.reachable;
      }
    }
    agg.inverse.push_back(std::move(s));
  }
  return agg;
}

struct Requirement {
  enum class Kind { reachable, exceeds_full_data, unreachable, missing };
  Kind kind = Kind::missing;
  double subset_percent = 0.0;
};

struct ComparisonRow {
  std::string model_id;
  std::vector<Requirement> cells;  // one per target
};

struct ComparisonTable {
  std::string domain;
  std::vector<double> targets;
  std::vector<ComparisonRow> rows;
};

namespace detail {

inline int requirement_rank(const Requirement& r) {
  switch (r.kind) {
    case Requirement::Kind::reachable:
    case Requirement::Kind::exceeds_full_data: return 0;
    case Requirement::Kind::unreachable: return 1;
    case Requirement::Kind::missing: return 2;
  }
  return 2;
}

// Most data-efficient first at the first target; ties by model id.
inline void sort_rows(std::vector<ComparisonRow>& rows) {
  std::sort(rows.begin(), rows.end(), [](const ComparisonRow& l, const ComparisonRow& r) {
    const Requirement& a = l.cells.front();
    const Requirement& b = r.cells.front();
    const int ra = requirement_rank(a);
    const int rb = requirement_rank(b);
    if (ra != rb) return ra < rb;
    if (ra == 0 && a.subset_percent != b.subset_percent) {
      return a.subset_percent < b.subset_percent;
    }
    return l.model_id < r.model_id;
  });
}

}  // namespace detail

inline ComparisonTable compare_models(const std::map<std::string, CurveModel>& curves,
                                      std::span<const double> em_targets,
                                      std::string domain = {}) {
  if (em_targets.empty()) throw Error("compare_models needs at least one EM target");
  if (curves.size() < 2) throw Error("compare_models needs at least two models");
  ComparisonTable table;
  table.domain = std::move(domain);
  table.targets.assign(em_targets.begin(), em_targets.end());
  for (const auto& [model_id, curve] : curves) {
    if (!curve.well_formed()) {
      throw Error("curve for '" + model_id + "' is not well formed (need a < 0, b > 0, 0 < c < 200)");
    }
    ComparisonRow row{model_id, {}};
    for (double y : em_targets) {
      try {
        const Inversion inv = invert(curve, y);
        row.cells.push_back({inv.exceeds_full_data ? Requirement::Kind::exceeds_full_data
                                                   : Requirement::Kind::reachable,
                             inv.subset_percent});
      } catch (const UnreachableTarget&) {
        row.cells.push_back({Requirement::Kind::unreachable, 0.0});
      }
    }
    table.rows.push_back(std::move(row));
  }
  detail::sort_rows(table.rows);
  return table;
}

// Builds a table from recorded requirements, e.g.
// {"domain": "weather", "targets": [90], "requirements": {"model": [30.67]}}.
// null cells are reported as missing.
inline ComparisonTable comparison_from_reference(const nlohmann::json& j) {
  ComparisonTable table;
  table.domain = j.value("domain", std::string{});
  table.targets = j.at("targets").get<std::vector<double>>();
  if (table.targets.empty()) throw Error("reference comparison has no targets");
  for (const auto& [model_id, values] : j.at("requirements").items()) {
    if (values.size() != table.targets.size()) {
      throw Error("reference row '" + model_id + "' does not match the target count");
    }
    ComparisonRow row{model_id, {}};
    for (const auto& v : values) {
      if (v.is_null()) {
        row.cells.push_back({Requirement::Kind::missing, 0.0});
      } else {
        const double x = v.get<double>();
        row.cells.push_back({x > 100.0 ? Requirement::Kind::exceeds_full_data
                                       : Requirement::Kind::reachable,
                             x});
      }
    }
    table.rows.push_back(std::move(row));
  }
  detail::sort_rows(table.rows);
  return table;
}

inline std::string format_requirement(const Requirement& r) {
  switch (r.kind) {
    case Requirement::Kind::reachable: return format_percent(r.subset_percent);
    case Requirement::Kind::exceeds_full_data:
      return "exceeds_full_data(" + format_percent(r.subset_percent) + ")";
    case Requirement::Kind::unreachable: return "unreachable";
    case Requirement::Kind::missing: return "n/a";
  }
  return "n/a";
}

inline std::string comparison_to_csv(const ComparisonTable& table) {
  std::string out = "model";
  for (double y : table.targets) out += ",em_" + detail::format_size(y);
  out += '\n';
  for (const auto& row : table.rows) {
    out += row.model_id;
    for (const auto& cell : row.cells) out += "," + format_requirement(cell);
    out += '\n';
  }
  return out;
}

inline std::string comparison_to_text(const ComparisonTable& table) {
  std::vector<std::vector<std::string>> grid;
  grid.push_back({"model"});
  for (double y : table.targets) grid.back().push_back("EM " + detail::format_size(y) + "%");
  for (const auto& row : table.rows) {
    grid.push_back({row.model_id});
    for (const auto& cell : row.cells) grid.back().push_back(format_requirement(cell));
  }
  std::vector<std::size_t> width(grid.front().size(), 0);
  for (const auto& line : grid) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::string out;
  if (!table.domain.empty()) out += "domain: " + table.domain + "\n";
  for (const auto& line : grid) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c == 0) {
        out += line[c] + std::string(width[c] - line[c].size(), ' ');
      } else {
        out += "  " + std::string(width[c] - line[c].size(), ' ') + line[c];
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace deff
