#pragma once

// The four-stage protocol driver: training manifests per (subset size, seed),
// a pluggable runner that turns a manifest into an exact-match result, and
// the ledger that collects results into discrete efficiency points.

#include <sys/wait.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "deff/curve.hpp"
#include "deff/dataset.hpp"
#include "deff/error.hpp"
#include "deff/frame.hpp"
#include "deff/rng.hpp"
#include "deff/sampling.hpp"

namespace deff {

// One fine-tuning job. train_rows holds every source-domain train row
// followed by the target subset; eval_rows holds the source-domain eval rows
// followed by the target-domain eval rows; test_rows is the target test split.
struct Manifest {
  std::string run_id;
  std::string model_id;
  std::string target_domain;
  SubsetSpec subset;
  // Nominal percent for uniform subsets, achieved percent for SPIS subsets.
  double subset_percent = 0.0;
  std::vector<std::size_t> subset_rows;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> eval_rows;
  std::vector<std::size_t> test_rows;
};

inline void to_json(nlohmann::json& j, const Manifest& m) {
  j = nlohmann::json{{"run_id", m.run_id},
                     {"model_id", m.model_id},
                     {"target_domain", m.target_domain},
                     {"subset", m.subset},
                     {"subset_percent", m.subset_percent},
                     {"subset_rows", m.subset_rows},
                     {"train_rows", m.train_rows},
                     {"eval_rows", m.eval_rows},
                     {"test_rows", m.test_rows}};
}

inline void from_json(const nlohmann::json& j, Manifest& m) {
  m.run_id = j.at("run_id").get<std::string>();
  m.model_id = j.at("model_id").get<std::string>();
  m.target_domain = j.at("target_domain").get<std::string>();
  m.subset = j.at("subset").get<SubsetSpec>();
  m.subset_percent = j.at("subset_percent").get<double>();
  m.subset_rows = j.at("subset_rows").get<std::vector<std::size_t>>();
  m.train_rows = j.at("train_rows").get<std::vector<std::size_t>>();
  m.eval_rows = j.at("eval_rows").get<std::vector<std::size_t>>();
  m.test_rows = j.at("test_rows").get<std::vector<std::size_t>>();
}

// A system frame for one test row.
struct Prediction {
  std::size_t row_id = 0;
  std::string frame;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct RunResult {
  std::string run_id;
  double exact_match = 0.0;
  std::uint64_t seed = 0;
  double wall_time = 0.0;  // seconds
  std::vector<Prediction> predictions;  // optional per-example output

  friend bool operator==(const RunResult&, const RunResult&) = default;
};

inline void to_json(nlohmann::json& j, const RunResult& r) {
  j = nlohmann::json{{"run_id", r.run_id},
                     {"exact_match", r.exact_match},
                     {"seed", r.seed},
                     {"wall_time", r.wall_time}};
  if (!r.predictions.empty()) {
    auto& preds = j["predictions"] = nlohmann::json::array();
    for (const auto& p : r.predictions) {
      preds.push_back({{"row_id", p.row_id}, {"frame", p.frame}});
    }
  }
}

inline void from_json(const nlohmann::json& j, RunResult& r) {
  r.run_id = j.value("run_id", std::string{});
  r.exact_match = j.at("exact_match").get<double>();
  r.seed = j.value("seed", std::uint64_t{0});
  r.wall_time = j.value("wall_time", 0.0);
  r.predictions.clear();
  if (j.contains("predictions")) {
    for (const auto& p : j.at("predictions")) {
      r.predictions.push_back({p.at("row_id").get<std::size_t>(),
                               p.at("frame").get<std::string>()});
    }
  }
}

struct ManifestSummary {
  std::string run_id;
  std::string model_id;
  std::string target_domain;
  SubsetSpec subset;
  double subset_percent = 0.0;
  std::size_t subset_size = 0;
  std::size_t train_size = 0;
  std::size_t eval_size = 0;
  std::size_t test_size = 0;

  static ManifestSummary of(const Manifest& m) {
    return {m.run_id,           m.model_id,          m.target_domain,
            m.subset,           m.subset_percent,    m.subset_rows.size(),
            m.train_rows.size(), m.eval_rows.size(), m.test_rows.size()};
  }
};

inline void to_json(nlohmann::json& j, const ManifestSummary& m) {
  j = nlohmann::json{{"run_id", m.run_id},
                     {"model_id", m.model_id},
                     {"target_domain", m.target_domain},
                     {"subset", m.subset},
                     {"subset_percent", m.subset_percent},
                     {"subset_size", m.subset_size},
                     {"train_size", m.train_size},
                     {"eval_size", m.eval_size},
                     {"test_size", m.test_size}};
}

inline void from_json(const nlohmann::json& j, ManifestSummary& m) {
  m.run_id = j.at("run_id").get<std::string>();
  m.model_id = j.at("model_id").get<std::string>();
  m.target_domain = j.at("target_domain").get<std::string>();
  m.subset = j.at("subset").get<SubsetSpec>();
  m.subset_percent = j.at("subset_percent").get<double>();
  m.subset_size = j.at("subset_size").get<std::size_t>();
  m.train_size = j.at("train_size").get<std::size_t>();
  m.eval_size = j.at("eval_size").get<std::size_t>();
  m.test_size = j.at("test_size").get<std::size_t>();
}

enum class RunStatus { pending, succeeded, failed };

inline std::string_view to_string(RunStatus s) noexcept {
  switch (s) {
    case RunStatus::pending: return "pending";
    case RunStatus::succeeded: return "succeeded";
    case RunStatus::failed: return "failed";
  }
  return "pending";
}

struct LedgerEntry {
  ManifestSummary manifest;
  RunStatus status = RunStatus::pending;
  std::optional<RunResult> result;
  std::string error;
};

// Append-only record of one protocol execution, keyed by run id. Results may
// only be recorded against registered manifests, once each.
class Ledger {
 public:
  void add_manifest(ManifestSummary summary) {
    if (by_id_.contains(summary.run_id)) {
      throw Error("duplicate run id '" + summary.run_id + "'");
    }
    by_id_.emplace(summary.run_id, entries_.size());
    entries_.push_back({std::move(summary), RunStatus::pending, {}, {}});
  }

  void record_result(RunResult result) {
    LedgerEntry& e = pending_entry(result.run_id);
    if (!(result.exact_match >= 0.0 && result.exact_match <= 100.0)) {
      throw Error("run '" + result.run_id + "' reported exact match outside [0, 100]");
    }
    e.status = RunStatus::succeeded;
    e.result = std::move(result);
  }

  void record_failure(const std::string& run_id, std::string message) {
    LedgerEntry& e = pending_entry(run_id);
    e.status = RunStatus::failed;
    e.error = std::move(message);
  }

  const std::vector<LedgerEntry>& entries() const noexcept { return entries_; }

  const LedgerEntry* find(const std::string& run_id) const {
    auto it = by_id_.find(run_id);
    return it == by_id_.end() ? nullptr : &entries_[it->second];
  }

  std::size_t count(RunStatus status) const {
    return static_cast<std::size_t>(
        std::count_if(entries_.begin(), entries_.end(),
                      [&](const LedgerEntry& e) { return e.status == status; }));
  }

 private:
  LedgerEntry& pending_entry(const std::string& run_id) {
    auto it = by_id_.find(run_id);
    if (it == by_id_.end()) {
      throw Error("result for unknown run id '" + run_id + "'");
    }
    LedgerEntry& e = entries_[it->second];
    if (e.status != RunStatus::pending) {
      throw Error("run '" + run_id + "' already has a recorded outcome");
    }
    return e;
  }

  std::vector<LedgerEntry> entries_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

inline void to_json(nlohmann::json& j, const Ledger& ledger) {
  auto entries = nlohmann::json::array();
  for (const auto& e : ledger.entries()) {
    nlohmann::json entry{{"manifest", e.manifest},
                         {"status", std::string(to_string(e.status))}};
    if (e.result) entry["result"] = *e.result;
    if (!e.error.empty()) entry["error"] = e.error;
    entries.push_back(std::move(entry));
  }
  j = nlohmann::json{{"entries", std::move(entries)}};
}

inline void from_json(const nlohmann::json& j, Ledger& ledger) {
  ledger = Ledger{};
  for (const auto& entry : j.at("entries")) {
    auto summary = entry.at("manifest").get<ManifestSummary>();
    const std::string run_id = summary.run_id;
    ledger.add_manifest(std::move(summary));
    const auto status = entry.at("status").get<std::string>();
    if (status == "succeeded") {
      ledger.record_result(entry.at("result").get<RunResult>());
    } else if (status == "failed") {
      ledger.record_failure(run_id, entry.value("error", std::string{}));
    } else if (status != "pending") {
      throw Error("unknown run status '" + status + "'");
    }
  }
}

inline std::string serialize_ledger(const Ledger& ledger) {
  return nlohmann::json(ledger).dump(2) + "\n";
}

inline Ledger parse_ledger(std::string_view text) {
  return nlohmann::json::parse(text).get<Ledger>();
}

namespace detail {

inline std::string format_size(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

inline std::vector<std::size_t> rows_outside(const CorpusTable& table,
                                             std::string_view target,
                                             Split split) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& row = table.row(i);
    if (row.split == split && row.domain != target) out.push_back(i);
  }
  return out;
}

}  // namespace detail

inline std::string make_run_id(const std::string& model_id,
                               const SubsetSpec& spec) {
  return model_id + "." + spec.target_domain + "." +
         std::string(to_string(spec.algorithm)) +
         detail::format_size(spec.size_param) + ".s" +
         std::to_string(spec.seed);
}

// One manifest per (size, seed), seeds outermost. Repeated sizes (a long
// schedule can ceil two raw values to the same percent) are dropped.
inline std::vector<Manifest> build_manifests(
    const CorpusTable& table, const std::string& target_domain,
    std::span<const double> sizes, Algorithm algorithm,
    std::span<const std::uint64_t> seeds, const std::string& model_id) {
  // Validates the target and that at least one source domain exists.
  (void)partition(table, target_domain);
  if (seeds.empty()) throw Error("build_manifests needs at least one seed");

  std::vector<double> unique_sizes;
  for (double s : sizes) {
    if (std::find(unique_sizes.begin(), unique_sizes.end(), s) ==
        unique_sizes.end()) {
      unique_sizes.push_back(s);
    }
  }

  const auto source_train = detail::rows_outside(table, target_domain, Split::train);
  const auto source_eval = detail::rows_outside(table, target_domain, Split::eval);
  const auto target_eval = table.rows_of(target_domain, Split::eval);
  const auto target_test = table.rows_of(target_domain, Split::test);

  std::vector<Manifest> manifests;
  manifests.reserve(unique_sizes.size() * seeds.size());
  for (std::uint64_t seed : seeds) {
    for (double size : unique_sizes) {
      Manifest m;
      m.model_id = model_id;
      m.target_domain = target_domain;
      m.subset = SubsetSpec{target_domain, algorithm, size, seed};
      Subset subset = draw_subset(table, m.subset);
      m.subset_percent = algorithm == Algorithm::uniform
                             ? size
                             : subset_size_report(subset, table).percent_of_domain;
      m.run_id = make_run_id(model_id, m.subset);
      m.subset_rows = std::move(subset.row_ids);
      m.train_rows = source_train;
      m.train_rows.insert(m.train_rows.end(), m.subset_rows.begin(),
                          m.subset_rows.end());
      m.eval_rows = source_eval;
      m.eval_rows.insert(m.eval_rows.end(), target_eval.begin(), target_eval.end());
      m.test_rows.assign(target_test.begin(), target_test.end());
      manifests.push_back(std::move(m));
    }
  }
  return manifests;
}

inline std::vector<Manifest> build_manifests(
    const CorpusTable& table, const std::string& target_domain,
    const Schedule& schedule, Algorithm algorithm,
    std::span<const std::uint64_t> seeds, const std::string& model_id) {
  std::vector<double> sizes(schedule.sizes.begin(), schedule.sizes.end());
  return build_manifests(table, target_domain, sizes, algorithm, seeds, model_id);
}

// Turns a manifest into an exact-match result. Implementations must be safe
// to call concurrently; failures are reported by throwing.
class Runner {
 public:
  virtual ~Runner() = default;
  virtual RunResult run(const Manifest& manifest) const = 0;
};

struct SimulatedRunnerConfig {
  CurveParams truth{-27.26, 0.35, 97.79};
  double noise_sigma = 0.0;
  double em_at_zero = 0.0;  // reported for the 0% subset, where h has a pole
  std::uint64_t seed = 0;
  // Per-example output: each test row is predicted correctly with
  // probability EM/100; rows whose root intent appears in intent_truth use
  // that curve instead of `truth`.
  bool emit_predictions = false;
  std::map<std::string, CurveParams> intent_truth;
};

inline void validate(const SimulatedRunnerConfig& config) {
  if (!(config.noise_sigma >= 0.0)) throw Error("noise sigma must be >= 0");
  if (!(config.em_at_zero >= 0.0 && config.em_at_zero <= 100.0)) {
    throw Error("em_at_zero must lie in [0, 100]");
  }
}

namespace detail {

inline double simulated_mean(const CurveParams& truth, double k,
                             double em_at_zero) {
  return k > 0.0 ? truth(k) : em_at_zero;
}

// Noise is keyed by (config seed, run seed, subset percent) so results do not
// depend on execution order.
inline CounterRng simulation_rng(const SimulatedRunnerConfig& config,
                                 const Manifest& manifest) {
  return CounterRng(derive_key(
      {config.seed, manifest.subset.seed, key_bits(manifest.subset_percent)}));
}

}  // namespace detail

// EM = clamp(h(k) + eps, 0, 100) for k > 0 and clamp(em_at_zero + eps, 0, 100)
// for k = 0, with eps ~ N(0, sigma^2).
inline RunResult simulated_run(const Manifest& manifest,
                               const SimulatedRunnerConfig& config) {
  validate(config);
  CounterRng rng = detail::simulation_rng(config, manifest);
  const double noise = config.noise_sigma > 0.0 ? config.noise_sigma * rng.normal() : 0.0;
  const double mean =
      detail::simulated_mean(config.truth, manifest.subset_percent, config.em_at_zero);
  RunResult r;
  r.run_id = manifest.run_id;
  r.seed = manifest.subset.seed;
  r.exact_match = std::clamp(mean + noise, 0.0, 100.0);
  return r;
}

class SimulatedRunner final : public Runner {
 public:
  // table is required only when config.emit_predictions is set.
  explicit SimulatedRunner(SimulatedRunnerConfig config,
                           const CorpusTable* table = nullptr)
      : config_(std::move(config)), table_(table) {
    validate(config_);
    if (config_.emit_predictions && table_ == nullptr) {
      throw Error("simulated predictions need the corpus table");
    }
  }

  RunResult run(const Manifest& manifest) const override {
    RunResult r = simulated_run(manifest, config_);
    if (!config_.emit_predictions || manifest.test_rows.empty()) return r;

    const double noise = r.exact_match -
        std::clamp(detail::simulated_mean(config_.truth, manifest.subset_percent,
                                          config_.em_at_zero),
                   0.0, 100.0);
    std::vector<Frame> system;
    std::vector<Frame> reference;
    for (std::size_t id : manifest.test_rows) {
      const Frame& ref = table_->row(id).frame;
      auto it = config_.intent_truth.find(ref.root_label());
      const CurveParams& curve =
          it == config_.intent_truth.end() ? config_.truth : it->second;
      const double p =
          std::clamp(detail::simulated_mean(curve, manifest.subset_percent,
                                            config_.em_at_zero) + noise,
                     0.0, 100.0) / 100.0;
      CounterRng row_rng(derive_key({config_.seed, manifest.subset.seed,
                                     key_bits(manifest.subset_percent), id}));
      FrameNode predicted = ref.root();
      if (row_rng.unit() > p) {
        predicted.children.push_back(FrameNode::token("<unk>"));
      }
      Frame frame(std::move(predicted));
      r.predictions.push_back({id, serialize_frame(frame)});
      system.push_back(std::move(frame));
      reference.push_back(ref);
    }
    r.exact_match = exact_match(system, reference);
    return r;
  }

  const SimulatedRunnerConfig& config() const noexcept { return config_; }

 private:
  SimulatedRunnerConfig config_;
  const CorpusTable* table_;
};

namespace detail {

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

}  // namespace detail

// Writes the manifest to <work_dir>/<run_id>.json, runs
// `<command> <manifest path>`, and reads a RunResult JSON from its stdout.
// A nonzero exit status fails the run.
class ExternalCommandRunner final : public Runner {
 public:
  ExternalCommandRunner(std::string command, std::filesystem::path work_dir)
      : command_(std::move(command)), work_dir_(std::move(work_dir)) {
    std::filesystem::create_directories(work_dir_);
  }

  RunResult run(const Manifest& manifest) const override {
    const auto path = work_dir_ / (manifest.run_id + ".json");
    {
      std::ofstream out(path, std::ios::binary);
      if (!out) throw Error("cannot write manifest '" + path.string() + "'");
      out << nlohmann::json(manifest).dump() << '\n';
    }
    const auto start = std::chrono::steady_clock::now();
    const std::string cmd = command_ + " " + detail::shell_quote(path.string());
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (pipe == nullptr) throw Error("cannot start runner command: " + command_);
    std::string output;
    char buf[4096];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, got);
    const int status = ::pclose(pipe);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      throw Error("runner command failed for '" + manifest.run_id +
                  "' (status " + std::to_string(status) + ")");
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(output);
    } catch (const nlohmann::json::exception& e) {
      throw Error("runner output for '" + manifest.run_id +
                  "' is not valid JSON: " + e.what());
    }
    RunResult r = j.get<RunResult>();
    if (r.run_id.empty()) r.run_id = manifest.run_id;
    if (r.run_id != manifest.run_id) {
      throw Error("runner answered for '" + r.run_id + "' instead of '" +
                  manifest.run_id + "'");
    }
    if (!j.contains("seed")) r.seed = manifest.subset.seed;
    if (!j.contains("wall_time")) r.wall_time = elapsed;
    return r;
  }

 private:
  std::string command_;
  std::filesystem::path work_dir_;
};

// Executes every manifest once with up to `jobs` concurrent runs. A throwing
// run is recorded as failed and the rest continue. Outcomes are appended in
// manifest order, so the ledger does not depend on scheduling.
inline Ledger run_protocol(std::span<const Manifest> manifests,
                           const Runner& runner, unsigned jobs = 1) {
  Ledger ledger;
  for (const auto& m : manifests) ledger.add_manifest(ManifestSummary::of(m));

  using Outcome = std::variant<RunResult, std::string>;
  std::vector<std::optional<Outcome>> outcomes(manifests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= manifests.size()) return;
      try {
        RunResult r = runner.run(manifests[i]);
        r.run_id = manifests[i].run_id;
        outcomes[i] = std::move(r);
      } catch (const std::exception& e) {
        outcomes[i] = std::string(e.what());
      }
    }
  };
  jobs = std::clamp<unsigned>(jobs, 1, static_cast<unsigned>(std::max<std::size_t>(manifests.size(), 1)));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(jobs);
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }

  for (std::size_t i = 0; i < manifests.size(); ++i) {
    if (auto* r = std::get_if<RunResult>(&*outcomes[i])) {
      if (r->exact_match >= 0.0 && r->exact_match <= 100.0) {
        ledger.record_result(std::move(*r));
      } else {
        ledger.record_failure(manifests[i].run_id, "exact match outside [0, 100]");
      }
    } else {
      ledger.record_failure(manifests[i].run_id, std::get<std::string>(*outcomes[i]));
    }
  }
  return ledger;
}

// One point per successful run. All runs must share a (model, domain) pair.
inline std::vector<EfficiencyPoint> ledger_to_curve(const Ledger& ledger) {
  std::vector<EfficiencyPoint> points;
  for (const auto& e : ledger.entries()) {
    if (e.status != RunStatus::succeeded) continue;
    if (!points.empty() && (points.front().model_id != e.manifest.model_id ||
                            points.front().domain != e.manifest.target_domain)) {
      throw Error("ledger mixes (model, domain) pairs: (" +
                  points.front().model_id + ", " + points.front().domain +
                  ") and (" + e.manifest.model_id + ", " +
                  e.manifest.target_domain + ")");
    }
    points.push_back({e.manifest.subset_percent, e.result->exact_match,
                      static_cast<std::int64_t>(e.result->seed),
                      e.manifest.model_id, e.manifest.target_domain});
  }
  if (points.empty()) throw Error("ledger has no successful runs");
  return points;
}

}  // namespace deff
