/*
 * Copyright 2026 The FedRec Arena Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <numeric>

#include "fedrec_arena/aggregation.hpp"
#include "fedrec_arena/rng.hpp"
#include "oracles.hpp"

namespace fedrec {
namespace {

std::vector<Vector> random_rows(Rng& rng, std::size_t n, std::size_t d, bool with_ties = false) {
    std::vector<Vector> rows(n, Vector(d));
    for (auto& r : rows) {
        for (double& x : r) {
            x = with_ties ? static_cast<double>(rng.below(3)) : rng.uniform(-5, 5);
        }
    }
    return rows;
}

std::size_t nonzeros(const Vector& v) {
    return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](double x) { return x != 0; }));
}

TEST(FedAvg, Examples) {
    EXPECT_EQ(agg_fedavg({{1, 1}, {3, 3}}), (Vector{2, 2}));
    EXPECT_EQ(agg_fedavg({{0.7, -2}}), (Vector{0.7, -2}));
    EXPECT_EQ(agg_fedavg({{1}, {-1}}), (Vector{0}));
    EXPECT_THROW(agg_fedavg({}), AggregationError);
    EXPECT_THROW(agg_fedavg({{1}, {1, 2}}), DimensionError);
}

TEST(Median, Examples) {
    EXPECT_EQ(agg_median({{1}, {2}, {100}}), (Vector{2}));
    EXPECT_EQ(agg_median({{1}, {2}, {3}, {100}}), (Vector{2}));
    EXPECT_EQ(agg_median({{100}, {1}, {3}, {2}}), (Vector{2}));
    EXPECT_EQ(agg_median({{4, -1}}), (Vector{4, -1}));
    EXPECT_THROW(agg_median({}), AggregationError);
}

TEST(TrimmedMean, Examples) {
    EXPECT_EQ(agg_trimmed_mean({{1}, {2}, {3}, {100}}, 1), (Vector{2.5}));
    EXPECT_EQ(agg_trimmed_mean({{5}, {5}, {5}}, 1), (Vector{5}));
    EXPECT_EQ(agg_trimmed_mean({{1, 2}, {3, 5}}, 0), agg_fedavg({{1, 2}, {3, 5}}));
    EXPECT_THROW(agg_trimmed_mean({{1}, {2}}, 1), AggregationError);
    EXPECT_THROW(agg_trimmed_mean({{1}, {2}, {3}, {4}}, 2), AggregationError);
}

TEST(Krum, Examples) {
    const std::vector<Vector> rows{{0}, {0.1}, {10}};
    // Each point keeps 1 neighbour: scores 0.01, 0.01, 98.01 -> tie, lowest index.
    EXPECT_EQ(krum_select(rows, 0), oracle::krum_index(rows, 0));
    EXPECT_EQ(agg_krum(rows, 0), (Vector{0}));
    EXPECT_EQ(krum_select({{3, 3}, {3, 3}, {3, 3}}, 0), 0u);
    EXPECT_THROW(agg_krum(rows, 1), AggregationError);
}

TEST(Clip, Examples) {
    EXPECT_EQ(agg_clip({{6, 0}}, 3), (Vector{3, 0}));
    EXPECT_EQ(agg_clip({{1, 0}, {0, 2}}, 3), agg_fedavg({{1, 0}, {0, 2}}));
    EXPECT_EQ(agg_clip({{0, 0}}, 3), (Vector{0, 0}));
    EXPECT_THROW(agg_clip({{1}}, 0), AggregationError);
    const std::vector<Vector> rows{{100, -3}, {2, 9}};
    EXPECT_EQ(agg_clip(rows, std::numeric_limits<double>::infinity()), agg_fedavg(rows));
}

TEST(Hics, SingleContributorFixedPoint) {
    const HicsResult r = agg_hics({}, {{0.6, -0.8}}, 2);
    EXPECT_EQ(r.output, (Vector{0.6, -0.8}));
    EXPECT_EQ(r.bank, (Vector{0, 0}));
}

TEST(Hics, ZeroResidualTraceOverTwoRounds) {
    const std::vector<Vector> in{{1, 0, 0}};
    HicsResult r1 = agg_hics({}, in, 1);
    EXPECT_EQ(r1.output, (Vector{1, 0, 0}));
    EXPECT_EQ(r1.bank, (Vector{0, 0, 0}));
    HicsResult r2 = agg_hics(r1.bank, in, 1);
    EXPECT_EQ(r2.output, (Vector{1, 0, 0}));
    EXPECT_EQ(r2.bank, (Vector{0, 0, 0}));
}

TEST(Hics, UnselectedMassPersistsUntilSelected) {
    // Hand trace with z=1 and input (1, 0.25, 0) each round:
    //   bank before selection: (1, .25k, 0); coordinate 0 wins until the
    //   second coordinate overtakes it in round 5.
    const std::vector<Vector> in{{1, 0.25, 0}};
    Vector bank;
    for (int round = 1; round <= 4; ++round) {
        HicsResult r = agg_hics(bank, in, 1);
        EXPECT_EQ(r.output, (Vector{1, 0, 0})) << "round " << round;
        EXPECT_EQ(r.bank, (Vector{0, 0.25 * round, 0})) << "round " << round;
        bank = r.bank;
    }
    HicsResult r5 = agg_hics(bank, in, 1);
    EXPECT_EQ(r5.output, (Vector{0, 0.25, 0}));
    EXPECT_EQ(r5.bank, (Vector{1, 1.0, 0}));
}

TEST(Hics, ClipsToMeanNorm) {
    // z = d = 2: sparse vectors are the inputs; norms 5 and 1, mean 3.
    const HicsResult r = agg_hics({}, {{3, 4}, {1, 0}}, 2);
    EXPECT_NEAR(r.output[0], (3 * 0.6 + 1) / 2, 1e-15);
    EXPECT_NEAR(r.output[1], (3 * 0.8) / 2, 1e-15);
    EXPECT_NEAR(r.bank[0], 4 - 2 * r.output[0], 1e-15);
    EXPECT_NEAR(r.bank[1], 4 - 2 * r.output[1], 1e-15);
}

TEST(Hics, IdenticalContributorsGiveExactlyZNonzeros) {
    const Vector v{0.3, -1.2, 0.8, 2.0, -0.1};
    for (std::size_t z = 1; z <= v.size(); ++z) {
        const HicsResult r = agg_hics({}, {v, v, v}, z);
        EXPECT_EQ(nonzeros(r.output), z);
    }
    EXPECT_THROW(agg_hics({}, {v}, 0), AggregationError);
    EXPECT_THROW(agg_hics({}, {v}, 6), AggregationError);
}

TEST(AggregatorOracle, RandomCasesMatchBruteForce) {
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(9);
        const std::size_t d = 1 + rng.below(4);
        const auto rows = random_rows(rng, n, d, trial % 4 == 0);
        EXPECT_EQ(agg_median(rows), oracle::median(rows));
        for (std::size_t beta = 0; 2 * beta < n; ++beta) {
            const Vector got = agg_trimmed_mean(rows, beta);
            const Vector want = oracle::trimmed_mean(rows, beta);
            for (std::size_t k = 0; k < d; ++k) {
                EXPECT_NEAR(got[k], want[k], 1e-12);
            }
        }
        const Vector fa = agg_fedavg(rows);
        const Vector tm0 = agg_trimmed_mean(rows, 0);
        for (std::size_t k = 0; k < d; ++k) {
            EXPECT_NEAR(tm0[k], fa[k], 1e-12);
        }
        for (std::size_t m = 0; m + 3 <= n; ++m) {
            EXPECT_EQ(krum_select(rows, m), oracle::krum_index(rows, m));
        }
        std::vector<Vector> clipped = rows;
        for (Vector& v : clipped) {
            clip_to_norm(v, 3.0);
            EXPECT_LE(oracle::l2(v), 3.0 + 1e-9);
        }
        EXPECT_LE(oracle::l2(agg_clip(rows, 3.0)), 3.0 + 1e-9);
        const std::size_t z = 1 + rng.below(d);
        EXPECT_LE(nonzeros(agg_hics({}, rows, z).output), z);
    }
}

TEST(AggregatorOracle, RobustRulesResistOneOutlier) {
    std::vector<Vector> rows{{1e6, 1e6}, {0.01, -0.02}, {-0.01, 0.0}, {0.02, 0.01}, {0.0, 0.01}};
    EXPECT_LT(oracle::l2(agg_median(rows)), 1.0);
    EXPECT_LT(oracle::l2(agg_trimmed_mean(rows, 1)), 1.0);
    EXPECT_GT(oracle::l2(agg_fedavg(rows)), 1.0);
}

std::vector<Contribution> contributions(const std::vector<Vector>& rows) {
    std::vector<Contribution> out;
    for (UserId u = 0; u < rows.size(); ++u) {
        out.push_back({u * 3 + 1, rows[u]});
    }
    return out;
}

TEST(Aggregator, PermutationInvariantForEveryRule) {
    Rng rng(9);
    for (auto rule : {AggregationRule::FedAvg, AggregationRule::Median, AggregationRule::TrimmedMean,
                      AggregationRule::Krum, AggregationRule::Clip, AggregationRule::HiCS}) {
        for (int trial = 0; trial < 50; ++trial) {
            const auto rows = random_rows(rng, 7, 3);
            auto contribs = contributions(rows);
            AggregatorSpec spec;
            spec.rule = rule;
            spec.krum_m = 2;
            spec.hics_z = 2;
            Aggregator a(spec, 1), b(spec, 1);
            const ItemAggregate first = a.aggregate_item(0, contribs);
            for (std::size_t i = contribs.size(); i > 1; --i) std::swap(contribs[i - 1], contribs[rng.below(i)]);
            const ItemAggregate second = b.aggregate_item(0, contribs);
            EXPECT_EQ(first.delta, second.delta) << to_string(rule);
            EXPECT_EQ(a.bank(0), b.bank(0));
        }
    }
}

TEST(Aggregator, SortsByContributor) {
    Aggregator agg(AggregatorSpec{}, 1);
    EXPECT_EQ(agg.aggregate_item(0, {{3, {2}}, {1, {4}}}).delta, (Vector{3}));
    AggregatorSpec med;
    med.rule = AggregationRule::Median;
    Aggregator m(med, 1);
    EXPECT_EQ(m.aggregate_item(0, {{5, {7.5}}}).delta, (Vector{7.5}));
    EXPECT_THROW(agg.aggregate_item(0, {}), AggregationError);
}

TEST(Aggregator, FallsBackToMedianWithWarning) {
    AggregatorSpec spec;
    spec.rule = AggregationRule::TrimmedMean;
    spec.trim_beta = 2;
    Aggregator agg(spec, 4);
    const ItemAggregate r = agg.aggregate_item(3, {{0, {1}}, {1, {2}}, {2, {50}}});
    EXPECT_EQ(r.delta, (Vector{2}));
    ASSERT_TRUE(r.warning.has_value());
    EXPECT_NE(r.warning->find("item 3"), std::string::npos);

    AggregatorSpec krum;
    krum.rule = AggregationRule::Krum;
    krum.krum_m = 1;
    Aggregator k(krum, 1);
    EXPECT_TRUE(k.aggregate_item(0, {{0, {1}}, {1, {2}}, {2, {3}}}).warning.has_value());
}

TEST(Aggregator, DefaultBetaScalesWithContributors) {
    AggregatorSpec spec;
    EXPECT_EQ(spec.beta_for(3), 1u);
    EXPECT_EQ(spec.beta_for(45), 4u);
    spec.trim_beta = 0;
    EXPECT_EQ(spec.beta_for(45), 0u);
}

TEST(Aggregator, HicsBankIsPerItem) {
    AggregatorSpec spec;
    spec.rule = AggregationRule::HiCS;
    spec.hics_z = 1;
    Aggregator agg(spec, 2);
    agg.aggregate_item(0, {{0, {1, 0.25, 0}}});
    EXPECT_EQ(agg.bank(0), (Vector{0, 0.25, 0}));
    EXPECT_TRUE(agg.bank(1).empty());
    agg.aggregate_item(1, {{0, {0, 0, 2}}});
    EXPECT_EQ(agg.bank(0), (Vector{0, 0.25, 0}));
}

TEST(RuleNames, ParseAndPrint) {
    EXPECT_EQ(parse_rule("TrimmedMean"), AggregationRule::TrimmedMean);
    EXPECT_EQ(parse_rule("trimmed-mean"), AggregationRule::TrimmedMean);
    EXPECT_EQ(parse_rule("HICS"), AggregationRule::HiCS);
    EXPECT_FALSE(parse_rule("mean").has_value());
    for (auto r : {AggregationRule::FedAvg, AggregationRule::Median, AggregationRule::TrimmedMean,
                   AggregationRule::Krum, AggregationRule::Clip, AggregationRule::HiCS}) {
        EXPECT_EQ(parse_rule(to_string(r)), r);
    }
}

}  // namespace
}  // namespace fedrec
