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

#ifndef FEDREC_ARENA_ATTACK_HPP
#define FEDREC_ARENA_ATTACK_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedrec_arena/data.hpp"
#include "fedrec_arena/defaults.hpp"
#include "fedrec_arena/model.hpp"
#include "fedrec_arena/rng.hpp"
#include "fedrec_arena/types.hpp"

namespace fedrec {

enum class AttackKind { None, Random, Popular, Bandwagon, PoisonFRS };

inline std::string_view to_string(AttackKind k) {
    switch (k) {
        case AttackKind::None:
            return "none";
        case AttackKind::Random:
            return "random";
        case AttackKind::Popular:
            return "popular";
        case AttackKind::Bandwagon:
            return "bandwagon";
        case AttackKind::PoisonFRS:
            return "poisonfrs";
    }
    return "?";
}

inline std::optional<AttackKind> parse_attack_kind(std::string_view name) {
    std::string key;
    for (char c : name) {
        key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    for (auto k : {AttackKind::None, AttackKind::Random, AttackKind::Popular, AttackKind::Bandwagon,
                   AttackKind::PoisonFRS}) {
        if (key == to_string(k)) {
            return k;
        }
    }
    return std::nullopt;
}

/**
 * Sign of the filler-item upload. Away: v^l - v^s, which keeps pushing the
 * most drifted items further and so tends to re-select the same fillers.
 * Toward: v^s - v^l, which pulls fillers back onto their snapshot.
 */
enum class FillerDirection { Away, Toward };

inline std::string_view to_string(FillerDirection d) { return d == FillerDirection::Away ? "away" : "toward"; }

inline std::optional<FillerDirection> parse_filler_direction(std::string_view s) {
    if (s == "away") {
        return FillerDirection::Away;
    }
    if (s == "toward") {
        return FillerDirection::Toward;
    }
    return std::nullopt;
}

struct AttackConfig {
    AttackKind kind = AttackKind::None;
    /// Fake users as a fraction of genuine users.
    double fake_fraction = defaults::kFakeFraction;
    /// First round in which fake users take part.
    int start_round = defaults::kAttackStart;
    double lambda = defaults::kLambda;
    std::size_t popular_k = defaults::kPopularK;
    std::size_t fillers = defaults::kFillers;
    double noise_std = defaults::kNoiseStd;
    /// Share of Bandwagon fillers taken from the most popular items.
    double bandwagon_popular_share = defaults::kBandwagonPopularShare;
    FillerDirection filler_direction = FillerDirection::Away;
    /// Unset: the least-interacted item (lowest id on ties).
    std::optional<ItemId> target;
};

/// ceil(fraction * genuine), and at least one fake whenever fraction > 0.
inline std::size_t fake_user_count(double fake_fraction, std::size_t num_genuine) {
    if (!(fake_fraction > 0)) {
        return 0;
    }
    const double raw = fake_fraction * static_cast<double>(num_genuine);
    const auto n = static_cast<std::size_t>(std::ceil(raw - 1e-9));
    return std::max<std::size_t>(1, n);
}

/// The item with the fewest training interactions; lowest id on ties.
inline ItemId least_popular_item(const InteractionDataset& ds) {
    const auto counts = ds.train_counts();
    return static_cast<ItemId>(std::min_element(counts.begin(), counts.end()) - counts.begin());
}

namespace detail {

/// Ids sorted by key, ascending or descending, with lower id first on ties.
inline std::vector<ItemId> order_by(const std::vector<Real>& key, bool descending) {
    std::vector<ItemId> ids(key.size());
    std::iota(ids.begin(), ids.end(), ItemId{0});
    std::stable_sort(ids.begin(), ids.end(), [&](ItemId a, ItemId b) {
        return descending ? key[a] > key[b] : key[a] < key[b];
    });
    return ids;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PoisonFRS. Everything below up to the baselines reads item embeddings only.
// ---------------------------------------------------------------------------

/**
 * Estimated popular items: the k items whose embedding has the smallest
 * inner product with the mean item embedding. Returned in ascending order of
 * that inner product.
 */
inline std::vector<ItemId> estimate_popular(const ItemEmbeddings& snapshot, std::size_t k) {
    const std::size_t m = snapshot.num_items();
    if (k < 1 || k > m) {
        throw Error("estimate_popular: k must lie in [1, num_items]");
    }
    Vector avg(snapshot.dim(), 0.0);
    for (ItemId i = 0; i < m; ++i) {
        const auto v = snapshot.row(i);
        for (std::size_t c = 0; c < avg.size(); ++c) {
            avg[c] += v[c];
        }
    }
    for (Real& x : avg) {
        x /= static_cast<Real>(m);
    }
    std::vector<Real> p(m);
    for (ItemId i = 0; i < m; ++i) {
        p[i] = dot(snapshot.row(i), avg);
    }
    std::vector<ItemId> ids = detail::order_by(p, false);
    ids.resize(k);
    return ids;
}

struct TargetModel {
    /// Mean of the popular items' embeddings: the minimiser of their mean squared distance.
    Vector base;
    /// lambda * base.
    Vector scaled;
};

inline TargetModel build_target(const ItemEmbeddings& snapshot, const std::vector<ItemId>& popular, Real lambda) {
    if (popular.empty()) {
        throw Error("build_target: popular set is empty");
    }
    if (!(lambda > 0)) {
        throw Error("build_target: lambda must be positive");
    }
    TargetModel t;
    t.base.assign(snapshot.dim(), 0.0);
    for (ItemId i : popular) {
        const auto v = snapshot.row(i);
        for (std::size_t c = 0; c < t.base.size(); ++c) {
            t.base[c] += v[c];
        }
    }
    for (Real& x : t.base) {
        x /= static_cast<Real>(popular.size());
    }
    t.scaled = t.base;
    for (Real& x : t.scaled) {
        x *= lambda;
    }
    return t;
}

/**
 * The f items that drifted furthest (l2) from the snapshot, excluding the
 * target. Ties go to the lower id. Returned in descending drift order.
 */
inline std::vector<ItemId> select_fillers(const ItemEmbeddings& snapshot, const ItemEmbeddings& current, std::size_t f,
                                          ItemId target) {
    if (snapshot.num_items() != current.num_items() || snapshot.dim() != current.dim()) {
        throw DimensionError("select_fillers: snapshot and current embeddings differ in shape");
    }
    std::vector<Real> drift(snapshot.num_items());
    for (ItemId i = 0; i < snapshot.num_items(); ++i) {
        drift[i] = std::sqrt(squared_distance(snapshot.row(i), current.row(i)));
    }
    std::vector<ItemId> out;
    out.reserve(f);
    for (ItemId i : detail::order_by(drift, true)) {
        if (out.size() == f) {
            break;
        }
        if (i != target) {
            out.push_back(i);
        }
    }
    return out;
}

struct PoisonParams {
    ItemId target = 0;
    Real lambda = defaults::kLambda;
    std::size_t popular_k = defaults::kPopularK;
    std::size_t fillers = defaults::kFillers;
    Real noise_std = defaults::kNoiseStd;
    FillerDirection filler_direction = FillerDirection::Away;
};

/// Attacker memory, fixed once the attack starts.
struct PoisonState {
    int start_round = 0;
    PoisonParams params;
    ItemEmbeddings snapshot;
    std::vector<ItemId> popular_set;
    Vector base_target;
    Vector scaled_target;
};

/// Builds the attacker state from the broadcast model of the first attack round.
inline PoisonState begin_poisonfrs(const ItemEmbeddings& broadcast, const PoisonParams& params) {
    if (params.target >= broadcast.num_items()) {
        throw Error("poisonfrs: target item out of range");
    }
    PoisonState s;
    s.start_round = broadcast.round();
    s.params = params;
    s.snapshot = broadcast;
    s.popular_set = estimate_popular(broadcast, params.popular_k);
    TargetModel t = build_target(broadcast, s.popular_set, params.lambda);
    s.base_target = std::move(t.base);
    s.scaled_target = std::move(t.scaled);
    return s;
}

/**
 * One fake user's upload for the round whose broadcast is `current`: the
 * target entry is v'_t - v^l_t, so an unopposed upload lands the target on
 * the scaled target embedding; each filler entry follows FillerDirection.
 * Zero entries are dropped. With noise_std > 0, i.i.d. Gaussian noise is
 * added to every uploaded coordinate.
 */
inline SparseUpdate craft_poisonfrs_update(const PoisonState& state, const ItemEmbeddings& current, Rng& rng) {
    if (current.round() < state.start_round) {
        throw Error("poisonfrs: round precedes the attack start");
    }
    const std::size_t d = current.dim();
    const ItemId t = state.params.target;

    std::vector<std::pair<ItemId, Vector>> entries;
    {
        Vector g(d);
        const auto vt = current.row(t);
        for (std::size_t c = 0; c < d; ++c) {
            g[c] = state.scaled_target[c] - vt[c];
        }
        entries.emplace_back(t, std::move(g));
    }
    const Real sign = state.params.filler_direction == FillerDirection::Away ? 1.0 : -1.0;
    for (ItemId i : select_fillers(state.snapshot, current, state.params.fillers, t)) {
        Vector g(d);
        const auto vs = state.snapshot.row(i);
        const auto vl = current.row(i);
        for (std::size_t c = 0; c < d; ++c) {
            g[c] = sign * (vl[c] - vs[c]);
        }
        entries.emplace_back(i, std::move(g));
    }

    SparseUpdate update;
    for (auto& [item, g] : entries) {
        if (is_zero(g)) {
            continue;
        }
        if (state.params.noise_std > 0) {
            for (Real& x : g) {
                x += rng.normal(0.0, state.params.noise_std);
            }
        }
        update.set(item, std::move(g));
    }
    return update;
}

// ---------------------------------------------------------------------------
// Fake-user sources driven by the federation engine.
// ---------------------------------------------------------------------------

struct FakeUpload {
    UserId user = 0;
    SparseUpdate update;
};

/// Produces the fake users' uploads of one round. Called only for rounds >= the attack start.
class FakeUserSource {
public:
    virtual ~FakeUserSource() = default;
    virtual std::vector<FakeUpload> contribute(const ItemEmbeddings& broadcast) = 0;
    virtual std::size_t size() const = 0;
};

/**
 * The PoisonFRS attacker. Its only inputs are its parameters, the id range
 * of its fake accounts, a seed for the camouflage noise, and the broadcast
 * item embeddings it receives each round.
 */
class PoisonFrsFakes final : public FakeUserSource {
public:
    PoisonFrsFakes(PoisonParams params, UserId first_id, std::size_t count, std::uint64_t noise_seed)
        : params_(params), first_id_(first_id), count_(count), noise_seed_(noise_seed) {}

    std::vector<FakeUpload> contribute(const ItemEmbeddings& broadcast) override {
        if (!state_) {
            state_ = begin_poisonfrs(broadcast, params_);
        }
        std::vector<FakeUpload> out;
        out.reserve(count_);
        for (std::size_t j = 0; j < count_; ++j) {
            Rng rng = make_stream(noise_seed_, Stream::FakeNoise, static_cast<std::uint64_t>(broadcast.round()), j);
            out.push_back({static_cast<UserId>(first_id_ + j), craft_poisonfrs_update(*state_, broadcast, rng)});
        }
        return out;
    }

    std::size_t size() const override { return count_; }

    /// Empty until the first attack round.
    const std::optional<PoisonState>& state() const { return state_; }

private:
    PoisonParams params_;
    UserId first_id_;
    std::size_t count_;
    std::uint64_t noise_seed_;
    std::optional<PoisonState> state_;
};

// ---------------------------------------------------------------------------
// Baselines: fabricated profiles that then train like genuine users.
// ---------------------------------------------------------------------------

struct BaselineParams {
    AttackKind kind = AttackKind::Random;
    std::size_t filler_count = defaults::kFillers;
    ItemId target = 0;
    double popular_share = defaults::kBandwagonPopularShare;
    std::size_t count = 1;
    UserId first_id = 0;
    std::size_t dim = defaults::kEmbeddingDim;
    Real init_scale = defaults::kInitScale;
    /// Seed for the fakes' user-embedding initialisation (per fake id).
    std::uint64_t init_seed = 0;
};

/**
 * Fake profiles that interacted with the target and `filler_count` fillers.
 * Random: uniform without replacement. Popular: highest training counts.
 * Bandwagon: ceil(share * filler_count) most popular, the rest uniform.
 * Fillers never include the target.
 */
inline std::vector<UserProfile> make_baseline_fakes(const BaselineParams& p, const InteractionDataset& ds, Rng& rng) {
    if (p.kind != AttackKind::Random && p.kind != AttackKind::Popular && p.kind != AttackKind::Bandwagon) {
        throw Error("make_baseline_fakes: kind must be random, popular or bandwagon");
    }
    if (p.filler_count >= ds.num_items) {
        throw Error("make_baseline_fakes: filler_count must be less than the number of items");
    }
    if (p.target >= ds.num_items) {
        throw Error("make_baseline_fakes: target out of range");
    }
    const auto counts = ds.train_counts();
    std::vector<Real> key(counts.begin(), counts.end());
    std::vector<ItemId> by_popularity;
    for (ItemId i : detail::order_by(key, true)) {
        if (i != p.target) {
            by_popularity.push_back(i);
        }
    }
    const std::size_t fillers = std::min(p.filler_count, by_popularity.size());

    std::size_t n_popular = 0;
    switch (p.kind) {
        case AttackKind::Popular:
            n_popular = fillers;
            break;
        case AttackKind::Bandwagon:
            n_popular = std::min(fillers, static_cast<std::size_t>(std::ceil(p.popular_share * fillers - 1e-9)));
            break;
        default:
            break;
    }

    std::vector<UserProfile> fakes;
    fakes.reserve(p.count);
    for (std::size_t j = 0; j < p.count; ++j) {
        std::vector<ItemId> chosen(by_popularity.begin(), by_popularity.begin() + static_cast<std::ptrdiff_t>(n_popular));
        std::vector<ItemId> pool(by_popularity.begin() + static_cast<std::ptrdiff_t>(n_popular), by_popularity.end());
        std::sort(pool.begin(), pool.end());
        // partial Fisher-Yates for the random remainder
        for (std::size_t r = 0; chosen.size() < fillers; ++r) {
            const std::size_t pick = r + static_cast<std::size_t>(rng.below(pool.size() - r));
            std::swap(pool[r], pool[pick]);
            chosen.push_back(pool[r]);
        }

        UserProfile f;
        f.user_id = static_cast<UserId>(p.first_id + j);
        f.train_items.push_back(p.target);
        f.train_items.insert(f.train_items.end(), chosen.begin(), chosen.end());
        f.interacted = f.train_items;
        std::sort(f.interacted.begin(), f.interacted.end());
        f.user_embedding.assign(p.dim, 0.0);
        Rng init = make_stream(p.init_seed, Stream::UserInit, f.user_id);
        fill_uniform(f.user_embedding, p.init_scale, init);
        fakes.push_back(std::move(f));
    }
    return fakes;
}

/// Baseline fakes: each round they sample pairs and run ordinary local training.
class BaselineFakes final : public FakeUserSource {
public:
    BaselineFakes(std::vector<UserProfile> profiles, Real learning_rate, std::uint64_t pair_seed)
        : profiles_(std::move(profiles)), learning_rate_(learning_rate), pair_seed_(pair_seed) {}

    std::vector<FakeUpload> contribute(const ItemEmbeddings& broadcast) override {
        std::vector<FakeUpload> out;
        out.reserve(profiles_.size());
        for (UserProfile& p : profiles_) {
            Rng rng = make_stream(pair_seed_, Stream::Pairs, static_cast<std::uint64_t>(broadcast.round()), p.user_id);
            try {
                const PairBatch batch = sample_pairs(p, broadcast.num_items(), rng);
                out.push_back({p.user_id, local_train(p, broadcast, batch.pairs, learning_rate_)});
            } catch (const DegenerateUserError&) {
                // no valid negatives: this fake sits the round out
            }
        }
        return out;
    }

    std::size_t size() const override { return profiles_.size(); }
    const std::vector<UserProfile>& profiles() const { return profiles_; }

private:
    std::vector<UserProfile> profiles_;
    Real learning_rate_;
    std::uint64_t pair_seed_;
};

}  // namespace fedrec

#endif  // FEDREC_ARENA_ATTACK_HPP
