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

#ifndef FEDREC_ARENA_FEDERATION_HPP
#define FEDREC_ARENA_FEDERATION_HPP

#include <algorithm>
#include <chrono>
#include <exception>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "fedrec_arena/aggregation.hpp"
#include "fedrec_arena/attack.hpp"
#include "fedrec_arena/data.hpp"
#include "fedrec_arena/defaults.hpp"
#include "fedrec_arena/evaluation.hpp"
#include "fedrec_arena/model.hpp"
#include "fedrec_arena/rng.hpp"
#include "fedrec_arena/types.hpp"

namespace fedrec {

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Runs fn(i) for i in [0, n) on up to `threads` workers (static stride partition).
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += threads) {
                    fn(i);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

struct RoundLedger {
    int round = 0;
    /// (item, number of contributors), ascending item id; exactly the touched items.
    std::vector<std::pair<ItemId, std::size_t>> contributor_counts;
    /// Aggregated delta applied to each touched item.
    std::map<ItemId, Vector> aggregated;
    /// (user, uploaded item ids), ascending user id.
    std::vector<std::pair<UserId, std::vector<ItemId>>> uploads;
    double wall_seconds = 0;
    std::vector<std::string> warnings;
};

struct RoundSettings {
    Real learning_rate = defaults::kLearningRate;
    std::uint64_t seed = defaults::kSeed;
    double participation = defaults::kParticipation;
    std::size_t threads = 1;
    /// Fake users take part in this round.
    bool attack_active = false;
    /// Item whose raw contributions should be captured, if any.
    std::optional<ItemId> capture_item;
};

struct RoundResult {
    ItemEmbeddings next;
    RoundLedger ledger;
    std::vector<std::pair<UserId, Vector>> captured;
};

/**
 * One global round. The broadcast model `embeddings` (round l) is read by
 * every participating genuine user, which samples fresh pairs and trains
 * locally; fake users upload if the attack is active; every touched item is
 * then moved by the aggregate of its contributions. Untouched items carry
 * over unchanged.
 */
inline RoundResult run_round(const ItemEmbeddings& embeddings, std::vector<UserProfile>& genuine,
                             FakeUserSource* fakes, Aggregator& aggregator, const RoundSettings& settings) {
    const auto t0 = std::chrono::steady_clock::now();
    if (!embeddings.all_finite()) {
        throw Error("run_round: incoming embeddings contain non-finite entries");
    }
    const int l = embeddings.round();
    const std::size_t m = embeddings.num_items();

    std::vector<std::optional<SparseUpdate>> genuine_updates(genuine.size());
    parallel_for(genuine.size(), settings.threads, [&](std::size_t idx) {
        UserProfile& p = genuine[idx];
        if (settings.participation < 1.0) {
            Rng coin = make_stream(settings.seed, Stream::Participation, static_cast<std::uint64_t>(l), p.user_id);
            if (coin.uniform01() >= settings.participation) {
                return;
            }
        }
        Rng rng = make_stream(settings.seed, Stream::Pairs, static_cast<std::uint64_t>(l), p.user_id);
        try {
            const PairBatch batch = sample_pairs(p, m, rng);
            genuine_updates[idx] = local_train(p, embeddings, batch.pairs, settings.learning_rate);
        } catch (const DegenerateUserError&) {
            // skipped for this round
        }
    });

    std::vector<FakeUpload> fake_updates;
    if (fakes != nullptr && settings.attack_active) {
        fake_updates = fakes->contribute(embeddings);
    }

    RoundResult out;
    out.ledger.round = l;
    std::vector<std::vector<Contribution>> buckets(m);
    auto collect = [&](UserId user, const SparseUpdate& update) {
        if (update.empty()) {
            return;
        }
        out.ledger.uploads.emplace_back(user, update.keys());
        for (const auto& [item, delta] : update.entries()) {
            buckets.at(item).push_back({user, delta});
            if (settings.capture_item == item) {
                out.captured.emplace_back(user, delta);
            }
        }
    };
    for (std::size_t idx = 0; idx < genuine.size(); ++idx) {
        if (genuine_updates[idx]) {
            collect(genuine[idx].user_id, *genuine_updates[idx]);
        }
    }
    for (const FakeUpload& f : fake_updates) {
        collect(f.user, f.update);
    }
    std::sort(out.ledger.uploads.begin(), out.ledger.uploads.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::sort(out.captured.begin(), out.captured.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    std::vector<ItemId> touched;
    for (ItemId i = 0; i < m; ++i) {
        if (!buckets[i].empty()) {
            touched.push_back(i);
            out.ledger.contributor_counts.emplace_back(i, buckets[i].size());
        }
    }
    std::vector<ItemAggregate> results(touched.size());
    parallel_for(touched.size(), settings.threads, [&](std::size_t k) {
        const ItemId i = touched[k];
        results[k] = aggregator.aggregate_item(i, std::move(buckets[i]));
    });

    out.next = embeddings;
    out.next.set_round(l + 1);
    for (std::size_t k = 0; k < touched.size(); ++k) {
        const ItemId i = touched[k];
        auto row = out.next.row(i);
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] += results[k].delta[c];
        }
        if (results[k].warning) {
            out.ledger.warnings.push_back(*results[k].warning);
        }
        out.ledger.aggregated.emplace(i, std::move(results[k].delta));
    }
    out.ledger.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

enum class DatasetKind { Synthetic, File };

struct DatasetSource {
    DatasetKind kind = DatasetKind::Synthetic;
    /// Rating file or serialized dataset (detected from its header).
    std::string path;
    RatingFormat format;
    SyntheticParams synthetic;
    std::uint64_t synthetic_seed = defaults::kSynthSeed;
};

struct ExperimentConfig {
    DatasetSource dataset;
    std::size_t dim = defaults::kEmbeddingDim;
    Real learning_rate = defaults::kLearningRate;
    Real init_scale = defaults::kInitScale;
    int rounds = defaults::kRounds;
    double participation = defaults::kParticipation;
    AggregatorSpec aggregator;
    /// Unset: the true number of fake users.
    std::optional<std::size_t> krum_m;
    AttackConfig attack;
    int eval_every = defaults::kEvalEvery;
    std::vector<std::size_t> top_k{defaults::kTopK.begin(), defaults::kTopK.end()};
    /// Round whose contributions to the target item are exported.
    std::optional<int> dump_round;
    std::uint64_t seed = defaults::kSeed;
    std::size_t threads = 1;
    bool keep_ledgers = false;
};

struct ExperimentResult {
    std::vector<MetricsRecord> metrics;
    ItemEmbeddings final_embeddings;
    std::vector<UserProfile> final_profiles;
    std::vector<RoundLedger> ledgers;  // filled only with keep_ledgers
    std::optional<PoisonState> poison_state;
    std::optional<UpdateDump> dump;
    ItemId target_item = 0;
    std::size_t num_genuine = 0;
    std::size_t num_fakes = 0;
    std::size_t krum_m = 0;
    std::size_t warnings = 0;
    /// Items uploaded by any fake user over the whole run.
    std::vector<ItemId> fake_item_union;
    double wall_seconds = 0;
};

inline void validate(const ExperimentConfig& c) {
    if (c.rounds < 1) {
        throw ConfigError("federation.rounds: must be at least 1");
    }
    if (!(c.learning_rate > 0)) {
        throw ConfigError("model.learning_rate: must be positive");
    }
    if (c.dim < 1) {
        throw ConfigError("model.dim: must be at least 1");
    }
    if (!(c.init_scale >= 0)) {
        throw ConfigError("model.init_scale: must be non-negative");
    }
    if (!(c.participation > 0 && c.participation <= 1)) {
        throw ConfigError("federation.participation: must lie in (0, 1]");
    }
    if (c.eval_every < 1) {
        throw ConfigError("eval.every: must be at least 1");
    }
    if (c.top_k.empty() || std::find(c.top_k.begin(), c.top_k.end(), std::size_t{0}) != c.top_k.end()) {
        throw ConfigError("eval.top_k: must be a non-empty list of positive integers");
    }
    if (!(c.aggregator.clip_bound > 0)) {
        throw ConfigError("aggregator.clip_bound: must be positive");
    }
    if (c.aggregator.hics_z < 1 || c.aggregator.hics_z > c.dim) {
        throw ConfigError("aggregator.hics_z: must lie in [1, model.dim]");
    }
    if (c.attack.kind != AttackKind::None) {
        if (c.attack.start_round < 1 || c.attack.start_round > c.rounds) {
            throw ConfigError("attack.start_round: must lie in [1, federation.rounds]");
        }
        if (!(c.attack.fake_fraction > 0)) {
            throw ConfigError("attack.fake_fraction: must be positive when an attack is configured");
        }
        if (!(c.attack.lambda > 0)) {
            throw ConfigError("attack.lambda: must be positive");
        }
        if (!(c.attack.noise_std >= 0)) {
            throw ConfigError("attack.noise_std: must be non-negative");
        }
        if (!(c.attack.bandwagon_popular_share >= 0 && c.attack.bandwagon_popular_share <= 1)) {
            throw ConfigError("attack.bandwagon_popular_share: must lie in [0, 1]");
        }
    }
}

inline InteractionDataset load_source(const DatasetSource& src) {
    InteractionDataset ds;
    if (src.kind == DatasetKind::Synthetic) {
        Rng rng = make_stream(src.synthetic_seed, Stream::Synthetic);
        ds = generate_synthetic(src.synthetic, rng);
    } else {
        std::ifstream in(src.path);
        if (!in) {
            throw ConfigError("dataset.path: cannot open '" + src.path + "'");
        }
        ds = load_dataset(in, src.format);
    }
    return leave_one_out_split(std::move(ds));
}

using LedgerObserver = std::function<void(const RoundLedger&)>;

/**
 * Full timeline: initialise from the master seed, run `rounds` global rounds,
 * inject fake users from the attack start on, and evaluate after every
 * `eval_every`-th round and after the last one. `dataset` must be split.
 */
inline ExperimentResult run_experiment(const ExperimentConfig& config, const InteractionDataset& dataset,
                                       const LedgerObserver& observer = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    validate(config);
    if (!dataset.is_split()) {
        throw ConfigError("dataset: leave-one-out split has not been applied");
    }
    const std::size_t m = dataset.num_items;
    const std::size_t num_genuine = dataset.num_users;

    ExperimentResult res;
    res.num_genuine = num_genuine;
    res.target_item = config.attack.target ? *config.attack.target : least_popular_item(dataset);
    if (res.target_item >= m) {
        throw ConfigError("attack.target: item id out of range");
    }
    for (std::size_t k : config.top_k) {
        if (k > m) {
            throw ConfigError("eval.top_k: K exceeds the number of items");
        }
    }

    Rng init_rng = make_stream(config.seed, Stream::ItemInit);
    ItemEmbeddings v = init_item_embeddings(m, config.dim, config.init_scale, init_rng);
    v.set_round(1);

    std::vector<UserProfile> profiles;
    profiles.reserve(num_genuine);
    for (UserId u = 0; u < num_genuine; ++u) {
        Rng r = make_stream(config.seed, Stream::UserInit, u);
        profiles.push_back(make_profile(dataset, u, config.dim, config.init_scale, r));
    }
    if (std::all_of(profiles.begin(), profiles.end(), [&](const UserProfile& p) { return p.has_seen(res.target_item); })) {
        throw ConfigError("attack.target: every user has interacted with the target item");
    }
    if (std::none_of(profiles.begin(), profiles.end(), [](const UserProfile& p) { return p.held_out.has_value(); })) {
        throw ConfigError("dataset: no user has a held-out test item");
    }

    std::unique_ptr<FakeUserSource> fakes;
    PoisonFrsFakes* poison = nullptr;
    if (config.attack.kind != AttackKind::None) {
        res.num_fakes = fake_user_count(config.attack.fake_fraction, num_genuine);
        const auto first_fake = static_cast<UserId>(num_genuine);
        if (config.attack.kind == AttackKind::PoisonFRS) {
            PoisonParams pp;
            pp.target = res.target_item;
            pp.lambda = config.attack.lambda;
            pp.popular_k = config.attack.popular_k;
            pp.fillers = config.attack.fillers;
            pp.noise_std = config.attack.noise_std;
            pp.filler_direction = config.attack.filler_direction;
            if (pp.popular_k < 1 || pp.popular_k > m) {
                throw ConfigError("attack.popular_k: must lie in [1, num_items]");
            }
            if (pp.fillers >= m) {
                throw ConfigError("attack.fillers: must be less than the number of items");
            }
            auto src = std::make_unique<PoisonFrsFakes>(pp, first_fake, res.num_fakes, config.seed);
            poison = src.get();
            fakes = std::move(src);
        } else {
            BaselineParams bp;
            bp.kind = config.attack.kind;
            bp.filler_count = config.attack.fillers;
            bp.target = res.target_item;
            bp.popular_share = config.attack.bandwagon_popular_share;
            bp.count = res.num_fakes;
            bp.first_id = first_fake;
            bp.dim = config.dim;
            bp.init_scale = config.init_scale;
            bp.init_seed = config.seed;
            if (bp.filler_count >= m) {
                throw ConfigError("attack.fillers: must be less than the number of items");
            }
            Rng rng = make_stream(config.seed, Stream::FakeProfiles);
            fakes = std::make_unique<BaselineFakes>(make_baseline_fakes(bp, dataset, rng), config.learning_rate,
                                                    config.seed);
        }
    }

    AggregatorSpec spec = config.aggregator;
    spec.krum_m = config.krum_m ? *config.krum_m : res.num_fakes;
    res.krum_m = spec.krum_m;
    Aggregator aggregator(spec, m);

    FootprintTracker footprint(num_genuine + res.num_fakes);
    const auto first_fake = static_cast<UserId>(num_genuine);
    const auto end_fake = static_cast<UserId>(num_genuine + res.num_fakes);

    for (int l = 1; l <= config.rounds; ++l) {
        RoundSettings rs;
        rs.learning_rate = config.learning_rate;
        rs.seed = config.seed;
        rs.participation = config.participation;
        rs.threads = config.threads;
        rs.attack_active = fakes != nullptr && l >= config.attack.start_round;
        if (config.dump_round == l) {
            rs.capture_item = res.target_item;
        }

        RoundResult rr = run_round(v, profiles, fakes.get(), aggregator, rs);
        v = std::move(rr.next);
        for (const auto& [user, items] : rr.ledger.uploads) {
            footprint.record(user, items);
        }
        res.warnings += rr.ledger.warnings.size();
        if (rs.capture_item && !rr.captured.empty()) {
            res.dump = dump_target_updates(l, res.target_item, rr.captured, num_genuine);
        }

        if (l % config.eval_every == 0 || l == config.rounds) {
            MetricsRecord rec = evaluate(l, profiles, v, res.target_item, config.top_k);
            rec.footprint = footprint.stats(0, first_fake);
            if (res.num_fakes > 0) {
                rec.fake_footprint = footprint.stats(first_fake, end_fake);
            }
            res.metrics.push_back(std::move(rec));
        }
        if (observer) {
            observer(rr.ledger);
        }
        if (config.keep_ledgers) {
            res.ledgers.push_back(std::move(rr.ledger));
        }
    }

    if (poison != nullptr) {
        res.poison_state = poison->state();
    }
    res.fake_item_union = footprint.union_of(first_fake, end_fake);
    res.final_embeddings = std::move(v);
    res.final_profiles = std::move(profiles);
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

inline ExperimentResult run_experiment(const ExperimentConfig& config, const LedgerObserver& observer = {}) {
    validate(config);
    return run_experiment(config, load_source(config.dataset), observer);
}

}  // namespace fedrec

#endif  // FEDREC_ARENA_FEDERATION_HPP
