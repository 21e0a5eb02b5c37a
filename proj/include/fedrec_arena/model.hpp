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

#ifndef FEDREC_ARENA_MODEL_HPP
#define FEDREC_ARENA_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "fedrec_arena/data.hpp"
#include "fedrec_arena/rng.hpp"
#include "fedrec_arena/types.hpp"

namespace fedrec {

inline Real predict_score(std::span<const Real> user_embedding, std::span<const Real> item_embedding) {
    return dot(user_embedding, item_embedding);
}

/// log(1 + exp(x)) without overflow.
inline Real softplus(Real x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline Real sigmoid(Real x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const Real e = std::exp(x);
    return e / (1.0 + e);
}

/// BPR objective: sum over pairs of -ln sigmoid(score(p) - score(n)).
inline Real bpr_loss(std::span<const Real> user_embedding, const ItemEmbeddings& items,
                     std::span<const std::pair<ItemId, ItemId>> pairs) {
    Real loss = 0;
    for (const auto& [pos, neg] : pairs) {
        const Real margin =
            predict_score(user_embedding, items.row(pos)) - predict_score(user_embedding, items.row(neg));
        loss += softplus(-margin);
    }
    return loss;
}

/**
 * One full-batch gradient step of the BPR objective on `pairs`.
 *
 * Both gradients are evaluated at the incoming (user, item) state. The user
 * embedding is moved in place by -lr * dL/du; the returned update holds
 * -lr * dL/dv_i for every item occurring in a pair.
 */
inline SparseUpdate local_train(UserProfile& profile, const ItemEmbeddings& items,
                                std::span<const std::pair<ItemId, ItemId>> pairs, Real learning_rate) {
    if (!(learning_rate > 0)) {
        throw Error("local_train: learning_rate must be positive");
    }
    const std::size_t d = items.dim();
    const std::span<const Real> u = profile.user_embedding;
    if (u.size() != d) {
        throw DimensionError("local_train: user embedding dimension does not match item embeddings");
    }

    std::map<ItemId, Vector> item_grad;
    Vector user_grad(d, 0.0);
    for (const auto& [pos, neg] : pairs) {
        const auto vp = items.row(pos);
        const auto vn = items.row(neg);
        // dL/dmargin = -sigmoid(-margin)
        const Real w = sigmoid(-(predict_score(u, vp) - predict_score(u, vn)));
        auto& gp = item_grad.try_emplace(pos, d, 0.0).first->second;
        auto& gn = item_grad.try_emplace(neg, d, 0.0).first->second;
        for (std::size_t k = 0; k < d; ++k) {
            gp[k] -= w * u[k];
            gn[k] += w * u[k];
            user_grad[k] -= w * (vp[k] - vn[k]);
        }
    }

    SparseUpdate update;
    for (auto& [item, g] : item_grad) {
        for (Real& x : g) {
            x *= -learning_rate;
        }
        update.set(item, std::move(g));
    }
    for (std::size_t k = 0; k < d; ++k) {
        profile.user_embedding[k] -= learning_rate * user_grad[k];
    }
    return update;
}

/**
 * The K highest-scoring items the user has not trained on, best first.
 * Equal scores are ordered by smaller item id.
 */
inline std::vector<ItemId> recommend_topk(const UserProfile& profile, const ItemEmbeddings& items, std::size_t k) {
    if (k == 0) {
        throw Error("recommend_topk: K must be at least 1");
    }
    std::vector<std::pair<Real, ItemId>> cands;
    cands.reserve(items.num_items());
    for (ItemId i = 0; i < items.num_items(); ++i) {
        if (!profile.has_interacted(i)) {
            cands.emplace_back(predict_score(profile.user_embedding, items.row(i)), i);
        }
    }
    const auto better = [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    };
    const std::size_t take = std::min(k, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(take), cands.end(), better);
    std::vector<ItemId> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        out.push_back(cands[i].second);
    }
    return out;
}

/// I.i.d. uniform entries on [-scale, scale].
inline void fill_uniform(std::span<Real> out, Real scale, Rng& rng) {
    for (Real& x : out) {
        x = rng.uniform(-scale, scale);
    }
}

inline ItemEmbeddings init_item_embeddings(std::size_t num_items, std::size_t dim, Real scale, Rng& rng) {
    ItemEmbeddings v(num_items, dim);
    for (ItemId i = 0; i < num_items; ++i) {
        fill_uniform(v.row(i), scale, rng);
    }
    return v;
}

/// Builds the client profile of user `u` from a split dataset.
inline UserProfile make_profile(const InteractionDataset& ds, UserId u, std::size_t dim, Real scale, Rng& rng) {
    UserProfile p;
    p.user_id = u;
    p.user_embedding.assign(dim, 0.0);
    fill_uniform(p.user_embedding, scale, rng);
    p.train_items = ds.train_set.at(u);
    p.interacted = p.train_items;
    std::sort(p.interacted.begin(), p.interacted.end());
    p.interacted.erase(std::unique(p.interacted.begin(), p.interacted.end()), p.interacted.end());
    p.held_out = ds.test_set.at(u);
    return p;
}

}  // namespace fedrec

#endif  // FEDREC_ARENA_MODEL_HPP
