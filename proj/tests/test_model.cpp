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
#include <cmath>
#include <numeric>
#include <set>

#include "fedrec_arena/model.hpp"

namespace fedrec {
namespace {

using Pairs = std::vector<std::pair<ItemId, ItemId>>;

ItemEmbeddings make_items(const std::vector<Vector>& rows) {
    ItemEmbeddings v(rows.size(), rows.front().size());
    for (ItemId i = 0; i < rows.size(); ++i) {
        std::copy(rows[i].begin(), rows[i].end(), v.row(i).begin());
    }
    return v;
}

UserProfile user_with(Vector u, std::vector<ItemId> interacted = {}) {
    UserProfile p;
    p.user_embedding = std::move(u);
    p.interacted = interacted;
    p.train_items = interacted;
    return p;
}

// Oracle loss, written directly from the definition without the softplus form.
double naive_loss(const Vector& u, const ItemEmbeddings& v, const Pairs& pairs) {
    double loss = 0;
    for (const auto& [p, n] : pairs) {
        double m = 0;
        for (std::size_t k = 0; k < u.size(); ++k) m += u[k] * (v.row(p)[k] - v.row(n)[k]);
        loss -= std::log(1.0 / (1.0 + std::exp(-m)));
    }
    return loss;
}

struct Instance {
    Vector u;
    ItemEmbeddings items;
    Pairs pairs;
};

Instance random_instance(Rng& rng) {
    const std::size_t d = 1 + rng.below(4);
    const std::size_t m = 2 + rng.below(5);
    Instance in;
    in.u.resize(d);
    for (double& x : in.u) x = rng.uniform(-1, 1);
    in.items = ItemEmbeddings(m, d);
    for (ItemId i = 0; i < m; ++i) {
        for (double& x : in.items.row(i)) x = rng.uniform(-1, 1);
    }
    const std::size_t r = 1 + rng.below(5);
    for (std::size_t j = 0; j < r; ++j) {
        const auto p = static_cast<ItemId>(rng.below(m));
        auto n = static_cast<ItemId>(rng.below(m - 1));
        if (n >= p) ++n;
        in.pairs.emplace_back(p, n);
    }
    return in;
}

TEST(PredictScore, Examples) {
    EXPECT_EQ(predict_score(Vector{1, 0}, Vector{0, 1}), 0.0);
    EXPECT_EQ(predict_score(Vector{1, 2}, Vector{3, 4}), 11.0);
    EXPECT_EQ(predict_score(Vector{0, 0, 0}, Vector{0, 0, 0}), 0.0);
    EXPECT_THROW(predict_score(Vector{1}, Vector{1, 2}), DimensionError);
}

TEST(BprLoss, Examples) {
    const auto v = make_items({{1.0}, {1.0}, {-49.0}});
    const Vector u{1.0};
    EXPECT_NEAR(bpr_loss(u, v, Pairs{{0, 1}}), std::log(2.0), 1e-15);
    EXPECT_LE(bpr_loss(u, v, Pairs{{0, 2}}), 1e-20);
    const double one = bpr_loss(u, v, Pairs{{0, 1}});
    EXPECT_EQ(bpr_loss(u, v, Pairs{{0, 1}, {0, 1}}), 2 * one);
}

TEST(BprLoss, StableForLargeNegativeMargin) {
    const auto v = make_items({{-1000.0}, {1000.0}});
    const double l = bpr_loss(Vector{1.0}, v, Pairs{{0, 1}});
    EXPECT_TRUE(std::isfinite(l));
    EXPECT_NEAR(l, 2000.0, 1e-9);
}

TEST(LocalTrain, EmptyPairs) {
    auto v = make_items({{0.3, 0.1}});
    UserProfile p = user_with({0.5, -0.2});
    const Vector before = p.user_embedding;
    EXPECT_TRUE(local_train(p, v, Pairs{}, 0.05).empty());
    EXPECT_EQ(p.user_embedding, before);
}

TEST(LocalTrain, HandDerivedOneDimensional) {
    const auto v = make_items({{0.0}, {0.0}});
    UserProfile p = user_with({1.0});
    const SparseUpdate upd = local_train(p, v, Pairs{{0, 1}}, 1.0);
    // L = -ln s(u vp - u vn); dL/dvp = -s(0) u = -0.5, dL/dvn = +0.5.
    EXPECT_DOUBLE_EQ(upd.at(0)[0], 0.5);
    EXPECT_DOUBLE_EQ(upd.at(1)[0], -0.5);
    EXPECT_DOUBLE_EQ(p.user_embedding[0], 1.0);  // s(0)(vp - vn) = 0
}

TEST(LocalTrain, RejectsBadLearningRate) {
    const auto v = make_items({{0.0}, {0.0}});
    UserProfile p = user_with({1.0});
    EXPECT_THROW(local_train(p, v, Pairs{{0, 1}}, 0.0), Error);
    EXPECT_THROW(local_train(p, v, Pairs{{0, 1}}, -1.0), Error);
}

TEST(LocalTrain, MatchesFiniteDifferences) {
    Rng rng(20260101);
    const double eps = 1e-5;
    const double lr = 0.05;
    double worst = 0;
    for (int trial = 0; trial < 200; ++trial) {
        Instance in = random_instance(rng);
        UserProfile p = user_with(in.u);
        const SparseUpdate upd = local_train(p, in.items, in.pairs, lr);
        auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); };
        for (ItemId i = 0; i < in.items.num_items(); ++i) {
            for (std::size_t k = 0; k < in.u.size(); ++k) {
                ItemEmbeddings plus = in.items, minus = in.items;
                plus.row(i)[k] += eps;
                minus.row(i)[k] -= eps;
                const double fd = (naive_loss(in.u, plus, in.pairs) - naive_loss(in.u, minus, in.pairs)) / (2 * eps);
                const double analytic = upd.contains(i) ? -upd.at(i)[k] / lr : 0.0;
                if (fd == 0 && analytic == 0) continue;
                worst = std::max(worst, rel(analytic, fd));
            }
        }
        for (std::size_t k = 0; k < in.u.size(); ++k) {
            Vector plus = in.u, minus = in.u;
            plus[k] += eps;
            minus[k] -= eps;
            const double fd = (naive_loss(plus, in.items, in.pairs) - naive_loss(minus, in.items, in.pairs)) / (2 * eps);
            const double analytic = (in.u[k] - p.user_embedding[k]) / lr;
            worst = std::max(worst, rel(analytic, fd));
        }
    }
    EXPECT_LT(worst, 1e-4);
}

TEST(LocalTrain, SupportIsPairItems) {
    Rng rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        Instance in = random_instance(rng);
        UserProfile p = user_with(in.u);
        const SparseUpdate upd = local_train(p, in.items, in.pairs, 0.1);
        std::set<ItemId> expected;
        for (const auto& [a, b] : in.pairs) {
            expected.insert(a);
            expected.insert(b);
        }
        const auto keys = upd.keys();
        EXPECT_EQ(std::set<ItemId>(keys.begin(), keys.end()), expected);
    }
}

TEST(LocalTrain, SmallStepDescends) {
    Rng rng(78);
    for (int trial = 0; trial < 200; ++trial) {
        Instance in = random_instance(rng);
        UserProfile p = user_with(in.u);
        const double before = bpr_loss(in.u, in.items, in.pairs);
        const SparseUpdate upd = local_train(p, in.items, in.pairs, 1e-3);
        ItemEmbeddings after = in.items;
        for (const auto& [i, delta] : upd.entries()) {
            for (std::size_t k = 0; k < delta.size(); ++k) after.row(i)[k] += delta[k];
        }
        EXPECT_LE(bpr_loss(p.user_embedding, after, in.pairs), before + 1e-12);
    }
}

TEST(RecommendTopK, Examples) {
    const auto v = make_items({{2, 0}, {1, 0}, {3, 0}});
    EXPECT_EQ(recommend_topk(user_with({1, 0}), v, 2), (std::vector<ItemId>{2, 0}));
    EXPECT_TRUE(recommend_topk(user_with({1, 0}, {0, 1, 2}), v, 2).empty());
    const auto tied = make_items({{1, 0}, {1, 0}});
    EXPECT_EQ(recommend_topk(user_with({1, 0}), tied, 1), (std::vector<ItemId>{0}));
    EXPECT_EQ(recommend_topk(user_with({1, 0}, {1}), v, 5), (std::vector<ItemId>{2, 0}));
    EXPECT_THROW(recommend_topk(user_with({1, 0}), v, 0), Error);
}

TEST(RecommendTopK, InvariantToStorageOrder) {
    Rng rng(5);
    const std::size_t m = 20, d = 3;
    ItemEmbeddings v(m, d);
    for (ItemId i = 0; i < m; ++i) {
        for (double& x : v.row(i)) x = rng.uniform(-1, 1);
    }
    std::vector<ItemId> perm(m);
    std::iota(perm.begin(), perm.end(), ItemId{0});
    for (std::size_t i = m; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    ItemEmbeddings shuffled(m, d);
    for (ItemId i = 0; i < m; ++i) {
        std::copy(v.row(i).begin(), v.row(i).end(), shuffled.row(perm[i]).begin());
    }
    const UserProfile p = user_with({0.3, -0.7, 0.2}, {});
    const auto a = recommend_topk(p, v, 7);
    const auto b = recommend_topk(p, shuffled, 7);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t j = 0; j < a.size(); ++j) EXPECT_EQ(perm[a[j]], b[j]);
}

TEST(Init, UniformWithinScaleAndSeeded) {
    Rng a(3), b(3);
    const auto x = init_item_embeddings(50, 8, 0.05, a);
    const auto y = init_item_embeddings(50, 8, 0.05, b);
    EXPECT_EQ(x, y);
    for (double e : x.data()) {
        EXPECT_LE(std::abs(e), 0.05);
    }
    EXPECT_TRUE(x.all_finite());
}

TEST(SparseUpdate, DropsZeroVectors) {
    SparseUpdate u;
    u.set(3, {0.0, 0.0});
    EXPECT_TRUE(u.empty());
    u.set(3, {0.0, 1.0});
    u.set(1, {2.0, 0.0});
    EXPECT_EQ(u.keys(), (std::vector<ItemId>{1, 3}));
    u.set(3, {0.0, 0.0});
    EXPECT_EQ(u.size(), 1u);
}

}  // namespace
}  // namespace fedrec
