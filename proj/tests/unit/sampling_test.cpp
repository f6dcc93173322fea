#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "deff/rng.hpp"
#include "deff/sampling.hpp"
#include "fixtures.hpp"

namespace deff {
namespace {

using testing::make_row;

TEST(CounterRng, MatchesSplitMix64Reference) {
  // Published SplitMix64 outputs for seed 0.
  CounterRng rng(0);
  EXPECT_EQ(rng.next(), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(rng.next(), 0x6E789E6AA1B965F4ULL);
  EXPECT_EQ(rng.next(), 0x06C45D188009454FULL);
}

TEST(CounterRng, BelowStaysInRangeAndCoversIt) {
  CounterRng rng(42);
  std::array<int, 7> hist{};
  for (int i = 0; i < 7000; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    ++hist[v];
  }
  for (int h : hist) EXPECT_GT(h, 800);
}

TEST(CounterRng, NormalMoments) {
  CounterRng rng(5);
  double sum = 0, sq = 0;
  constexpr int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Schedule, TableOne) {
  const Schedule s = make_schedule(10);
  const std::vector<double> raw{0.00, 0.67, 1.79, 3.66, 6.78, 11.99, 20.69, 35.22, 59.48, 100.00};
  for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_NEAR(s.raw[i], raw[i], 0.005) << i;
  EXPECT_EQ(s.sizes, (std::vector<int>{0, 1, 2, 4, 7, 12, 21, 36, 60, 100}));
  EXPECT_NEAR(s.raw[4], 6.78, 0.01);
  EXPECT_NEAR(s.base, std::pow(101.0, 1.0 / 9.0), 1e-15);
}

TEST(Schedule, TwoPoints) {
  const Schedule s = make_schedule(2);
  EXPECT_EQ(s.sizes, (std::vector<int>{0, 100}));
}

TEST(Schedule, RejectsTooShort) {
  EXPECT_THROW(make_schedule(1), Error);
  EXPECT_THROW(make_schedule(0), Error);
}

TEST(Schedule, EndpointsAndMonotonicityForManyN) {
  for (int n = 2; n <= 60; ++n) {
    const Schedule s = make_schedule(n);
    EXPECT_EQ(s.raw.front(), 0.0);
    EXPECT_NEAR(s.raw.back(), 100.0, 1e-9);
    EXPECT_EQ(s.sizes.front(), 0);
    EXPECT_EQ(s.sizes.back(), 100);
    for (int i = 1; i < n; ++i) {
      EXPECT_GT(s.raw[i], s.raw[i - 1]);
      EXPECT_GE(s.sizes[i], s.sizes[i - 1]);
      // Interior values agree with the closed form.
      if (i < n - 1) {
        EXPECT_NEAR(s.raw[i], std::pow(101.0, double(i) / (n - 1)) - 1.0, 1e-9);
      }
    }
  }
}

CorpusTable big_domain(std::size_t n) {
  std::vector<CorpusRow> rows;
  for (std::size_t i = 0; i < n; ++i) {
    rows.push_back(make_row("weather", i % 3 ? "[IN:GET_WEATHER ]" : "[IN:GET_SUNSET ]"));
  }
  rows.push_back(make_row("alarm", "[IN:CREATE_ALARM ]"));
  rows.push_back(make_row("weather", "[IN:GET_WEATHER t ]", Split::test));
  return CorpusTable(std::move(rows));
}

TEST(UniformSample, TwelvePercentOfThousand) {
  const CorpusTable t = big_domain(1000);
  const Subset s = uniform_sample(t, {"weather", Algorithm::uniform, 12, 9});
  EXPECT_EQ(s.row_ids.size(), 120u);
  std::set<std::size_t> unique(s.row_ids.begin(), s.row_ids.end());
  EXPECT_EQ(unique.size(), 120u);
  for (std::size_t id : s.row_ids) {
    EXPECT_EQ(t.row(id).domain, "weather");
    EXPECT_EQ(t.row(id).split, Split::train);
  }
  const SubsetReport rep = subset_size_report(s, t);
  EXPECT_EQ(rep.row_count, 120u);
  EXPECT_DOUBLE_EQ(rep.percent_of_domain, 12.0);
}

TEST(UniformSample, Bounds) {
  const CorpusTable t = big_domain(50);
  EXPECT_TRUE(uniform_sample(t, {"weather", Algorithm::uniform, 0, 1}).row_ids.empty());
  const Subset all = uniform_sample(t, {"weather", Algorithm::uniform, 100, 1});
  std::vector<std::size_t> sorted = all.row_ids;
  std::sort(sorted.begin(), sorted.end());
  const auto train = t.rows_of("weather", Split::train);
  EXPECT_TRUE(std::equal(sorted.begin(), sorted.end(), train.begin(), train.end()));
  EXPECT_FALSE(std::equal(all.row_ids.begin(), all.row_ids.end(), train.begin(), train.end()))
      << "100% subset should come back shuffled";
}

TEST(UniformSample, CeilingSizes) {
  const CorpusTable t = big_domain(37);
  for (double k : {1.0, 2.0, 4.0, 7.0, 12.0, 21.0, 36.0, 60.0, 0.67, 33.3}) {
    const auto expected = static_cast<std::size_t>(std::ceil(k * 37 / 100.0));
    EXPECT_EQ(uniform_sample(t, {"weather", Algorithm::uniform, k, 3}).row_ids.size(), expected) << k;
  }
}

TEST(UniformSample, DeterministicAndSeedSensitive) {
  const CorpusTable t = big_domain(300);
  const SubsetSpec spec{"weather", Algorithm::uniform, 21, 77};
  EXPECT_EQ(uniform_sample(t, spec), uniform_sample(t, spec));
  SubsetSpec other = spec;
  other.seed = 78;
  EXPECT_NE(uniform_sample(t, spec).row_ids, uniform_sample(t, other).row_ids);
}

TEST(UniformSample, FrozenDraw) {
  // Pins the documented generator + Fisher-Yates prefix so any change to the
  // draw algorithm is caught.
  const CorpusTable t = big_domain(20);
  const Subset s = uniform_sample(t, {"weather", Algorithm::uniform, 25, 2024});
  std::vector<std::size_t> pool(20);
  std::iota(pool.begin(), pool.end(), 0);
  CounterRng rng = detail::subset_rng(s.spec);
  for (std::size_t i = 0; i < 5; ++i) {
    const std::size_t j = i + rng.below(20 - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(5);
  EXPECT_EQ(s.row_ids, pool);
}

TEST(UniformSample, Errors) {
  const CorpusTable t = big_domain(10);
  EXPECT_THROW(uniform_sample(t, {"nope", Algorithm::uniform, 10, 0}), Error);
  EXPECT_THROW(uniform_sample(t, {"weather", Algorithm::uniform, 101, 0}), Error);
  EXPECT_THROW(uniform_sample(t, {"weather", Algorithm::uniform, -1, 0}), Error);
  const CorpusTable no_train({make_row("weather", "[IN:A ]", Split::test),
                              make_row("alarm", "[IN:B ]")});
  EXPECT_THROW(uniform_sample(no_train, {"weather", Algorithm::uniform, 5, 0}), Error);
  EXPECT_TRUE(uniform_sample(no_train, {"weather", Algorithm::uniform, 0, 0}).row_ids.empty());
}

TEST(SpisSample, DistinctIntentsAllSelected) {
  const CorpusTable t({make_row("d", "[IN:A ]"), make_row("d", "[IN:B ]"), make_row("d", "[IN:C ]"),
                       make_row("d", "[IN:D ]"), make_row("e", "[IN:A ]")});
  const Subset s = spis_sample(t, {"d", Algorithm::spis, 1, 5});
  EXPECT_EQ(s.row_ids.size(), 4u);
}

TEST(SpisSample, LargeKTakesWholeDomain) {
  const CorpusTable t = testing::synthetic_corpus({"d", "e"}, 40, 3, 4);
  const Subset s = spis_sample(t, {"d", Algorithm::spis, 1000, 1});
  EXPECT_EQ(s.row_ids.size(), t.rows_of("d", Split::train).size());
}

TEST(SpisSample, Errors) {
  const CorpusTable t({make_row("d", "[IN:A ]")});
  EXPECT_THROW(spis_sample(t, {"d", Algorithm::spis, 0, 0}), Error);
  EXPECT_THROW(spis_sample(t, {"x", Algorithm::spis, 1, 0}), Error);
}

// Six rows carrying IN:A x4 and SL:B x2.
CorpusTable six_row_fixture() {
  return CorpusTable({make_row("d", "[IN:A [SL:B x ] ]"), make_row("d", "[IN:A ]"),
                      make_row("d", "[IN:A ]"), make_row("d", "[IN:A [SL:B y ] ]"),
                      make_row("e", "[IN:Z ]"), make_row("e", "[IN:Z ]")});
}

// Independent replay of a greedy pass over one ordering.
std::set<std::size_t> greedy_over(const CorpusTable& t, const std::vector<std::size_t>& order,
                                  std::size_t k) {
  std::map<std::string, std::size_t> have;
  std::set<std::size_t> chosen;
  for (std::size_t id : order) {
    const std::string text = serialize_frame(t.row(id).frame);
    const bool has_b = text.find("SL:B") != std::string::npos;
    const bool wants = have["IN:A"] < k || (has_b && have["SL:B"] < k);
    if (!wants) continue;
    chosen.insert(id);
    ++have["IN:A"];
    if (has_b) ++have["SL:B"];
  }
  return chosen;
}

TEST(SpisSample, SixRowFixtureAgainstAllOrderings) {
  const CorpusTable t = six_row_fixture();
  const std::size_t k = 2;
  std::vector<std::size_t> order{0, 1, 2, 3};
  std::set<std::set<std::size_t>> outcomes;
  std::set<std::size_t> sizes;
  do {
    const auto chosen = greedy_over(t, order, k);
    // Guarantee holds on every ordering.
    std::size_t a = 0, b = 0;
    for (std::size_t id : chosen) {
      ++a;
      b += serialize_frame(t.row(id).frame).find("SL:B") != std::string::npos;
    }
    ASSERT_GE(a, 2u);
    ASSERT_GE(b, 2u);
    outcomes.insert(chosen);
    sizes.insert(chosen.size());
  } while (std::next_permutation(order.begin(), order.end()));
  // Some orderings stop after two rows, others need more.
  EXPECT_EQ(*sizes.begin(), 2u);
  EXPECT_GT(*sizes.rbegin(), 2u);

  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Subset s = spis_sample(t, {"d", Algorithm::spis, double(k), seed});
    const std::set<std::size_t> got(s.row_ids.begin(), s.row_ids.end());
    EXPECT_TRUE(outcomes.contains(got)) << "seed " << seed;
    const SubsetReport rep = subset_size_report(s, t);
    EXPECT_GE(rep.label_counts.at("IN:A"), 2u);
    EXPECT_GE(rep.label_counts.at("SL:B"), 2u);
  }
}

TEST(SpisSample, CoverageProperty) {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<CorpusRow> rows;
    const int n = std::uniform_int_distribution<int>(1, 60)(gen);
    for (int i = 0; i < n; ++i) {
      const int intent = std::uniform_int_distribution<int>(0, 5)(gen);
      const int slots = std::uniform_int_distribution<int>(0, 3)(gen);
      std::string f = "[IN:I" + std::string(1, char('A' + intent));
      for (int s = 0; s < slots; ++s) {
        f += " [SL:S" + std::string(1, char('A' + std::uniform_int_distribution<int>(0, 7)(gen))) + " w ]";
      }
      rows.push_back(make_row("d", f + " ]"));
    }
    const CorpusTable t(std::move(rows));
    LabelMultiset total;
    for (const auto& r : t.rows()) {
      for (const auto& [l, c] : ontology_labels(r.frame)) total[l] += c;
    }
    for (std::size_t k : {1u, 2u, 5u}) {
      const Subset s = spis_sample(t, {"d", Algorithm::spis, double(k), std::uint64_t(trial)});
      const auto rep = subset_size_report(s, t);
      for (const auto& [label, count] : total) {
        const auto it = rep.label_counts.find(label);
        const std::size_t got = it == rep.label_counts.end() ? 0 : it->second;
        EXPECT_GE(got, std::min(k, count)) << label;
      }
    }
  }
}

TEST(SubsetReport, EmptySubset) {
  const CorpusTable t = big_domain(10);
  const Subset s{{"weather", Algorithm::uniform, 0, 0}, {}};
  const auto rep = subset_size_report(s, t);
  EXPECT_EQ(rep.row_count, 0u);
  EXPECT_EQ(rep.percent_of_domain, 0.0);
  EXPECT_TRUE(rep.label_counts.empty());
}

TEST(SubsetJson, RoundTrip) {
  const CorpusTable t = big_domain(30);
  const Subset s = uniform_sample(t, {"weather", Algorithm::uniform, 36, 0xFFFFFFFFFFFFFFFFULL});
  const nlohmann::json j = s;
  EXPECT_EQ(j.get<Subset>(), s);
  EXPECT_EQ(j["spec"]["algorithm"], "uniform");
}

}  // namespace
}  // namespace deff
