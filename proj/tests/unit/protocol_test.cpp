#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "deff/protocol.hpp"
#include "fixtures.hpp"

namespace deff {
namespace {

using testing::TempDir;
using testing::write_text;

const CorpusTable& corpus() {
  static const CorpusTable t =
      testing::synthetic_corpus({"alarm", "music", "weather"}, 200, 30, 5);
  return t;
}

std::vector<Manifest> ten_manifests(std::vector<std::uint64_t> seeds = {0}) {
  return build_manifests(corpus(), "weather", make_schedule(10), Algorithm::uniform,
                         seeds, "bart");
}

class FailOn final : public Runner {
 public:
  FailOn(const Runner& inner, std::string run_id) : inner_(inner), run_id_(std::move(run_id)) {}
  RunResult run(const Manifest& m) const override {
    if (m.run_id == run_id_) throw Error("out of memory");
    return inner_.run(m);
  }

 private:
  const Runner& inner_;
  std::string run_id_;
};

TEST(BuildManifests, TenSizeSchedule) {
  const auto ms = ten_manifests();
  ASSERT_EQ(ms.size(), 10u);
  std::vector<double> percents;
  for (const auto& m : ms) percents.push_back(m.subset_percent);
  EXPECT_EQ(percents, (std::vector<double>{0, 1, 2, 4, 7, 12, 21, 36, 60, 100}));
  EXPECT_EQ(ms.front().run_id, "bart.weather.uniform0.s0");
  EXPECT_EQ(ms.back().subset_rows.size(), corpus().rows_of("weather", Split::train).size());
}

TEST(BuildManifests, ThreeSeedsGiveUniqueRunIds) {
  const auto ms = ten_manifests({1, 2, 3});
  ASSERT_EQ(ms.size(), 30u);
  std::set<std::string> ids;
  for (const auto& m : ms) ids.insert(m.run_id);
  EXPECT_EQ(ids.size(), 30u);
}

TEST(BuildManifests, ZeroPercentTrainsOnSourceOnly) {
  const auto ms = ten_manifests();
  const Manifest& zero = ms.front();
  ASSERT_EQ(zero.subset_percent, 0.0);
  EXPECT_TRUE(zero.subset_rows.empty());
  EXPECT_FALSE(zero.train_rows.empty());
  for (std::size_t id : zero.train_rows) {
    EXPECT_NE(corpus().row(id).domain, "weather");
    EXPECT_EQ(corpus().row(id).split, Split::train);
  }
}

TEST(BuildManifests, DisjointnessHoldsForEveryManifest) {
  for (Algorithm alg : {Algorithm::uniform, Algorithm::spis}) {
    const std::vector<double> sizes =
        alg == Algorithm::uniform ? std::vector<double>{0, 1, 12, 60, 100}
                                  : std::vector<double>{1, 2, 5};
    const std::vector<std::uint64_t> seeds{0, 1};
    for (const auto& target : corpus().domains()) {
      for (const auto& m : build_manifests(corpus(), target, sizes, alg, seeds, "m")) {
        const std::set<std::size_t> train(m.train_rows.begin(), m.train_rows.end());
        for (std::size_t t : m.test_rows) {
          EXPECT_FALSE(train.contains(t));
          EXPECT_EQ(corpus().row(t).domain, target);
          EXPECT_EQ(corpus().row(t).split, Split::test);
        }
        for (std::size_t s : m.subset_rows) EXPECT_EQ(corpus().row(s).domain, target);
        const std::size_t source = m.train_rows.size() - m.subset_rows.size();
        for (std::size_t i = 0; i < source; ++i) {
          EXPECT_NE(corpus().row(m.train_rows[i]).domain, target);
        }
        for (std::size_t e : m.eval_rows) EXPECT_EQ(corpus().row(e).split, Split::eval);
      }
    }
  }
}

TEST(BuildManifests, Errors) {
  const std::vector<double> sizes{1};
  const std::vector<std::uint64_t> seeds{0};
  EXPECT_THROW(build_manifests(corpus(), "nope", sizes, Algorithm::uniform, seeds, "m"), Error);
  EXPECT_THROW(build_manifests(corpus(), "weather", sizes, Algorithm::uniform, {}, "m"), Error);
}

TEST(ManifestJson, RoundTrip) {
  const auto ms = ten_manifests();
  const nlohmann::json j = ms[4];
  const Manifest back = j.get<Manifest>();
  EXPECT_EQ(nlohmann::json(back).dump(), j.dump());
  EXPECT_EQ(back.train_rows, ms[4].train_rows);
}

TEST(RunProtocol, EveryManifestRunsOnce) {
  const auto ms = ten_manifests();
  const SimulatedRunner runner({});
  const Ledger ledger = run_protocol(ms, runner);
  EXPECT_EQ(ledger.entries().size(), 10u);
  EXPECT_EQ(ledger.count(RunStatus::succeeded), 10u);
  for (const auto& m : ms) ASSERT_NE(ledger.find(m.run_id), nullptr);
}

TEST(RunProtocol, OneFailureIsIsolated) {
  const auto ms = ten_manifests();
  const SimulatedRunner sim({});
  const FailOn runner(sim, ms[3].run_id);
  for (unsigned jobs : {1u, 4u}) {
    const Ledger ledger = run_protocol(ms, runner, jobs);
    EXPECT_EQ(ledger.count(RunStatus::succeeded), 9u);
    EXPECT_EQ(ledger.count(RunStatus::failed), 1u);
    const LedgerEntry* e = ledger.find(ms[3].run_id);
    ASSERT_NE(e, nullptr);
    EXPECT_EQ(e->status, RunStatus::failed);
    EXPECT_EQ(e->error, "out of memory");
    EXPECT_EQ(ledger_to_curve(ledger).size(), 9u);
  }
}

TEST(RunProtocol, DeterministicAcrossRunsAndThreadCounts) {
  const auto ms = ten_manifests({4, 5, 6});
  SimulatedRunnerConfig config;
  config.noise_sigma = 0.5;
  config.seed = 99;
  const SimulatedRunner runner(config);
  const std::string first = serialize_ledger(run_protocol(ms, runner, 1));
  EXPECT_EQ(serialize_ledger(run_protocol(ms, runner, 1)), first);
  EXPECT_EQ(serialize_ledger(run_protocol(ms, runner, 8)), first);
}

TEST(Ledger, RejectsInconsistentUpdates) {
  Ledger ledger;
  const auto ms = ten_manifests();
  ledger.add_manifest(ManifestSummary::of(ms[0]));
  EXPECT_THROW(ledger.add_manifest(ManifestSummary::of(ms[0])), Error);
  EXPECT_THROW(ledger.record_result({"unknown", 50, 0, 0, {}}), Error);
  EXPECT_THROW(ledger.record_result({ms[0].run_id, 101, 0, 0, {}}), Error);
  ledger.record_result({ms[0].run_id, 50, 0, 0, {}});
  EXPECT_THROW(ledger.record_result({ms[0].run_id, 50, 0, 0, {}}), Error);
}

TEST(Ledger, SerializationRoundTripsByteIdentically) {
  const auto ms = ten_manifests();
  const SimulatedRunner sim({});
  const FailOn runner(sim, ms[7].run_id);
  const std::string text = serialize_ledger(run_protocol(ms, runner));
  EXPECT_EQ(serialize_ledger(parse_ledger(text)), text);
}

TEST(SimulatedRun, Examples) {
  Manifest m;
  m.subset.seed = 3;
  m.subset_percent = 1;
  EXPECT_NEAR(simulated_run(m, {}).exact_match, 70.53, 1e-12);
  SimulatedRunnerConfig zero;
  zero.em_at_zero = 10;
  m.subset_percent = 0;
  EXPECT_EQ(simulated_run(m, zero).exact_match, 10.0);
}

TEST(SimulatedRun, FiveSigmaBound) {
  SimulatedRunnerConfig config;
  config.noise_sigma = 0.5;
  config.seed = 2024;
  const CurveParams truth = config.truth;
  int inside = 0;
  constexpr int kDraws = 10000;
  for (int i = 0; i < kDraws; ++i) {
    Manifest m;
    m.subset.seed = static_cast<std::uint64_t>(i);
    m.subset_percent = testing::schedule_positive_sizes()[i % 9];
    const double em = simulated_run(m, config).exact_match;
    if (std::abs(em - truth(m.subset_percent)) <= 2.5) ++inside;
  }
  EXPECT_GE(inside, kDraws * 999 / 1000);
}

TEST(SimulatedRun, InvalidConfig) {
  SimulatedRunnerConfig bad;
  bad.noise_sigma = -1;
  EXPECT_THROW(SimulatedRunner{bad}, Error);
  bad = {};
  bad.em_at_zero = 120;
  EXPECT_THROW(SimulatedRunner{bad}, Error);
  SimulatedRunnerConfig preds;
  preds.emit_predictions = true;
  EXPECT_THROW(SimulatedRunner{preds}, Error);
}

TEST(SimulatedRunner, PredictionsAgreeWithReportedEm) {
  const auto ms = ten_manifests();
  SimulatedRunnerConfig config;
  config.emit_predictions = true;
  const SimulatedRunner runner(config, &corpus());
  const RunResult r = runner.run(ms[5]);
  ASSERT_EQ(r.predictions.size(), ms[5].test_rows.size());
  std::size_t correct = 0;
  for (const auto& p : r.predictions) {
    correct += serialize_frame(parse_frame(p.frame)) ==
               serialize_frame(corpus().row(p.row_id).frame);
  }
  EXPECT_DOUBLE_EQ(r.exact_match, 100.0 * correct / r.predictions.size());
}

TEST(LedgerToCurve, ProjectsSuccessfulRuns) {
  const auto ms = ten_manifests();
  const Ledger ledger = run_protocol(ms, SimulatedRunner({}));
  const auto points = ledger_to_curve(ledger);
  ASSERT_EQ(points.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(points[i].subset_percent, ms[i].subset_percent);
    EXPECT_EQ(points[i].model_id, "bart");
    EXPECT_EQ(points[i].domain, "weather");
  }
}

TEST(LedgerToCurve, Errors) {
  const auto weather = ten_manifests();
  const auto music = build_manifests(corpus(), "music", make_schedule(10), Algorithm::uniform,
                                     std::vector<std::uint64_t>{0}, "bart");
  std::vector<Manifest> mixed = weather;
  mixed.insert(mixed.end(), music.begin(), music.end());
  EXPECT_THROW(ledger_to_curve(run_protocol(mixed, SimulatedRunner({}))), Error);

  const auto one = std::vector<Manifest>{weather[2]};
  const SimulatedRunner sim({});
  const FailOn runner(sim, weather[2].run_id);
  EXPECT_THROW(ledger_to_curve(run_protocol(one, runner)), Error);
}

TEST(EndToEnd, NoiselessRecoveryOfSimulatorTruth) {
  SimulatedRunnerConfig config;
  config.truth = {-27.26, 0.35, 97.79};
  const Ledger ledger = run_protocol(ten_manifests(), SimulatedRunner(config));
  const CurveModel m = fit_curve(ledger_to_curve(ledger));
  EXPECT_LE(std::abs(m.a - config.truth.a), 1e-3 * std::abs(config.truth.a));
  EXPECT_LE(std::abs(m.b - config.truth.b), 1e-3 * std::abs(config.truth.b));
  EXPECT_LE(std::abs(m.c - config.truth.c), 1e-3 * std::abs(config.truth.c));
}

TEST(ExternalCommandRunner, ReadsResultFromStdout) {
  TempDir dir;
  write_text(dir / "ok.sh",
             "#!/bin/sh\n"
             "test -f \"$1\" || exit 3\n"
             "echo '{\"exact_match\": 61.5}'\n");
  write_text(dir / "fail.sh", "#!/bin/sh\nexit 1\n");
  write_text(dir / "wrong.sh", "#!/bin/sh\necho '{\"run_id\": \"other\", \"exact_match\": 1}'\n");
  const auto ms = ten_manifests();

  const ExternalCommandRunner ok("sh " + (dir / "ok.sh").string(), dir / "work");
  const RunResult r = ok.run(ms[2]);
  EXPECT_EQ(r.run_id, ms[2].run_id);
  EXPECT_EQ(r.exact_match, 61.5);
  EXPECT_EQ(r.seed, ms[2].subset.seed);
  EXPECT_GE(r.wall_time, 0.0);
  const auto written = nlohmann::json::parse(testing::read_text(dir / "work" / (ms[2].run_id + ".json")));
  EXPECT_EQ(written.get<Manifest>().train_rows, ms[2].train_rows);

  EXPECT_THROW(ExternalCommandRunner("sh " + (dir / "fail.sh").string(), dir / "work").run(ms[0]),
               Error);
  EXPECT_THROW(ExternalCommandRunner("sh " + (dir / "wrong.sh").string(), dir / "work").run(ms[0]),
               Error);
}

}  // namespace
}  // namespace deff
