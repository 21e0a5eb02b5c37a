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

#ifndef FEDREC_ARENA_DATA_HPP
#define FEDREC_ARENA_DATA_HPP

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <istream>
#include <iterator>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fedrec_arena/defaults.hpp"
#include "fedrec_arena/rng.hpp"
#include "fedrec_arena/types.hpp"

namespace fedrec {

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class EmptyDatasetError : public Error {
public:
    EmptyDatasetError() : Error("dataset contains no interactions") {}
};

/// Raised when a user has no valid negative item to sample.
class DegenerateUserError : public Error {
public:
    using Error::Error;
};

struct Interaction {
    UserId user = 0;
    ItemId item = 0;
    std::int64_t order = 0;

    friend bool operator==(const Interaction&, const Interaction&) = default;
};

/**
 * Implicit-feedback interactions plus the leave-one-out split. `train_set`
 * and `test_set` are empty until leave_one_out_split() has run.
 */
struct InteractionDataset {
    std::size_t num_users = 0;
    std::size_t num_items = 0;
    std::vector<Interaction> interactions;
    std::vector<std::vector<ItemId>> train_set;       // per user, chronological
    std::vector<std::optional<ItemId>> test_set;      // per user

    bool is_split() const { return train_set.size() == num_users; }

    /// Number of training interactions per item.
    std::vector<std::size_t> train_counts() const {
        std::vector<std::size_t> counts(num_items, 0);
        for (const auto& items : train_set) {
            for (ItemId i : items) {
                ++counts[i];
            }
        }
        return counts;
    }
};

enum class Delimiter { Auto, DoubleColon, Tab, Comma };

struct RatingFormat {
    Delimiter delimiter = Delimiter::Auto;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\n')) {
        s.remove_suffix(1);
    }
    while (!s.empty() && s.front() == ' ') {
        s.remove_prefix(1);
    }
    return s;
}

inline std::vector<std::string_view> split(std::string_view s, std::string_view sep) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t next = s.find(sep, pos);
        if (next == std::string_view::npos) {
            out.push_back(s.substr(pos));
            return out;
        }
        out.push_back(s.substr(pos, next - pos));
        pos = next + sep.size();
    }
}

inline Delimiter detect_delimiter(std::string_view line) {
    if (line.find("::") != std::string_view::npos) {
        return Delimiter::DoubleColon;
    }
    if (line.find('\t') != std::string_view::npos) {
        return Delimiter::Tab;
    }
    return Delimiter::Comma;
}

inline std::string_view separator(Delimiter d) {
    switch (d) {
        case Delimiter::DoubleColon:
            return "::";
        case Delimiter::Tab:
            return "\t";
        default:
            return ",";
    }
}

template <typename T>
bool parse_integer(std::string_view s, T& out) {
    s = trim(s);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return !s.empty() && ec == std::errc{} && ptr == s.data() + s.size();
}

inline bool is_real(std::string_view s) {
    s = trim(s);
    double x = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    return !s.empty() && ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace detail

/**
 * Reads a rating file: one `user, item, rating, order_key` record per line.
 * Raw ids are arbitrary tokens, re-indexed densely from 0 in order of first
 * appearance. Ratings are validated and then dropped. A repeated
 * (user, item) pair keeps only its earliest record (smallest order key,
 * file order on ties). Blank lines are skipped.
 */
inline InteractionDataset parse_ratings(std::istream& in, RatingFormat format = {}) {
    std::unordered_map<std::string, UserId> user_ids;
    std::unordered_map<std::string, ItemId> item_ids;
    std::unordered_map<std::uint64_t, std::size_t> seen;  // (user, item) -> index in out
    InteractionDataset out;

    Delimiter delim = format.delimiter;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view body = detail::trim(line);
        if (body.empty()) {
            continue;
        }
        if (delim == Delimiter::Auto) {
            delim = detail::detect_delimiter(body);
        }
        const auto fields = detail::split(body, detail::separator(delim));
        if (fields.size() != 4) {
            throw ParseError(line_no, "expected 4 fields (user, item, rating, order_key), got " +
                                          std::to_string(fields.size()));
        }
        const std::string user_tok(detail::trim(fields[0]));
        const std::string item_tok(detail::trim(fields[1]));
        if (user_tok.empty() || item_tok.empty()) {
            throw ParseError(line_no, "empty user or item id");
        }
        if (!detail::is_real(fields[2])) {
            throw ParseError(line_no, "rating is not a number");
        }
        std::int64_t order = 0;
        if (!detail::parse_integer(fields[3], order)) {
            throw ParseError(line_no, "order key is not an integer");
        }

        const auto [uit, unew] = user_ids.try_emplace(user_tok, static_cast<UserId>(user_ids.size()));
        const auto [iit, inew] = item_ids.try_emplace(item_tok, static_cast<ItemId>(item_ids.size()));
        const UserId u = uit->second;
        const ItemId i = iit->second;
        const std::uint64_t key = (std::uint64_t{u} << 32) | i;
        if (const auto pos = seen.find(key); pos != seen.end()) {
            Interaction& prev = out.interactions[pos->second];
            prev.order = std::min(prev.order, order);
            continue;
        }
        seen.emplace(key, out.interactions.size());
        out.interactions.push_back({u, i, order});
    }
    if (out.interactions.empty()) {
        throw EmptyDatasetError();
    }
    out.num_users = user_ids.size();
    out.num_items = item_ids.size();
    return out;
}

/**
 * Holds out each user's latest interaction (maximal order key, larger item
 * id on ties) as the test item. Users with a single interaction keep it for
 * training and get no test item.
 */
inline InteractionDataset leave_one_out_split(InteractionDataset ds) {
    std::vector<std::vector<Interaction>> per_user(ds.num_users);
    for (const Interaction& x : ds.interactions) {
        per_user[x.user].push_back(x);
    }
    ds.train_set.assign(ds.num_users, {});
    ds.test_set.assign(ds.num_users, std::nullopt);
    for (std::size_t u = 0; u < ds.num_users; ++u) {
        auto& rows = per_user[u];
        std::stable_sort(rows.begin(), rows.end(), [](const Interaction& a, const Interaction& b) {
            return a.order != b.order ? a.order < b.order : a.item < b.item;
        });
        if (rows.size() >= 2) {
            ds.test_set[u] = rows.back().item;
            rows.pop_back();
        }
        for (const Interaction& x : rows) {
            ds.train_set[u].push_back(x.item);
        }
    }
    return ds;
}

/// Positive/negative pairs for one user's local round.
struct PairBatch {
    UserId owner = 0;
    std::vector<std::pair<ItemId, ItemId>> pairs;  // (positive, negative)
};

/**
 * One uniformly drawn negative per training item. Negatives are rejection
 * sampled against the user's training items and held-out item.
 */
inline PairBatch sample_pairs(const UserProfile& profile, std::size_t num_items, Rng& rng) {
    if (profile.train_items.empty()) {
        throw DegenerateUserError("user " + std::to_string(profile.user_id) + " has no training items");
    }
    std::size_t excluded = profile.interacted.size();
    if (profile.held_out && !profile.has_interacted(*profile.held_out)) {
        ++excluded;
    }
    if (excluded >= num_items) {
        throw DegenerateUserError("user " + std::to_string(profile.user_id) + " has no valid negative item");
    }
    PairBatch batch;
    batch.owner = profile.user_id;
    batch.pairs.reserve(profile.train_items.size());
    for (ItemId pos : profile.train_items) {
        ItemId neg = 0;
        do {
            neg = static_cast<ItemId>(rng.below(num_items));
        } while (profile.has_seen(neg));
        batch.pairs.emplace_back(pos, neg);
    }
    return batch;
}

struct SyntheticParams {
    std::size_t num_users = defaults::kSynthUsers;
    std::size_t num_items = defaults::kSynthItems;
    std::size_t latent_dim = defaults::kSynthLatentDim;
    std::size_t interactions_per_user = defaults::kSynthPerUser;
    double popularity_skew = defaults::kSynthSkew;
    /// Weight of the planted low-rank preference relative to popularity.
    double preference_scale = defaults::kSynthPreferenceScale;
};

/**
 * Plants a low-rank preference structure with power-law item popularity.
 *
 * Each item gets a random popularity rank r and log-weight -skew * ln(r + 1);
 * users and items get standard-normal latent factors. A user's utility for an
 * item is preference_scale * <p_u, q_i> / sqrt(latent_dim) plus the item's
 * log-weight. The user then draws `interactions_per_user` distinct items
 * sequentially without replacement with probability proportional to
 * exp(utility) (Gumbel top-k), and the draw position becomes the order key.
 */
inline InteractionDataset generate_synthetic(const SyntheticParams& p, Rng& rng) {
    if (p.num_users == 0 || p.num_items == 0) {
        throw Error("generate_synthetic: need at least one user and one item");
    }
    if (p.latent_dim == 0) {
        throw Error("generate_synthetic: latent_dim must be positive");
    }
    if (p.interactions_per_user < 2) {
        throw Error("generate_synthetic: interactions_per_user must be at least 2");
    }
    if (p.num_items <= p.interactions_per_user) {
        throw Error("generate_synthetic: num_items must exceed interactions_per_user");
    }
    if (!(p.popularity_skew >= 0) || !(p.preference_scale >= 0)) {
        throw Error("generate_synthetic: popularity_skew and preference_scale must be non-negative");
    }

    std::vector<std::size_t> rank(p.num_items);
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    for (std::size_t i = p.num_items; i > 1; --i) {
        std::swap(rank[i - 1], rank[rng.below(i)]);
    }
    std::vector<double> log_weight(p.num_items);
    for (std::size_t i = 0; i < p.num_items; ++i) {
        log_weight[i] = -p.popularity_skew * std::log(static_cast<double>(rank[i] + 1));
    }

    auto draw_factors = [&](std::size_t rows) {
        std::vector<double> m(rows * p.latent_dim);
        for (double& x : m) {
            x = rng.normal();
        }
        return m;
    };
    const std::vector<double> item_f = draw_factors(p.num_items);
    const std::vector<double> user_f = draw_factors(p.num_users);
    const double scale = p.preference_scale / std::sqrt(static_cast<double>(p.latent_dim));

    InteractionDataset ds;
    ds.num_users = p.num_users;
    ds.num_items = p.num_items;
    ds.interactions.reserve(p.num_users * p.interactions_per_user);
    std::vector<std::pair<double, ItemId>> keyed(p.num_items);
    for (std::size_t u = 0; u < p.num_users; ++u) {
        const std::span<const double> pu(user_f.data() + u * p.latent_dim, p.latent_dim);
        for (std::size_t i = 0; i < p.num_items; ++i) {
            const std::span<const double> qi(item_f.data() + i * p.latent_dim, p.latent_dim);
            double uni = rng.uniform01();
            while (uni <= 0.0) {
                uni = rng.uniform01();
            }
            const double gumbel = -std::log(-std::log(uni));
            keyed[i] = {scale * dot(pu, qi) + log_weight[i] + gumbel, static_cast<ItemId>(i)};
        }
        std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(p.interactions_per_user),
                          keyed.end(), [](const auto& a, const auto& b) {
                              return a.first != b.first ? a.first > b.first : a.second < b.second;
                          });
        for (std::size_t k = 0; k < p.interactions_per_user; ++k) {
            ds.interactions.push_back({static_cast<UserId>(u), keyed[k].second, static_cast<std::int64_t>(k)});
        }
    }
    return ds;
}

/// Writes the `users=<n> items=<m>` header followed by `u<TAB>i<TAB>order` lines.
inline void write_dataset(std::ostream& out, const InteractionDataset& ds) {
    out << "users=" << ds.num_users << " items=" << ds.num_items << '\n';
    for (const Interaction& x : ds.interactions) {
        out << x.user << '\t' << x.item << '\t' << x.order << '\n';
    }
}

/// Reads the format produced by write_dataset(). Ids are taken verbatim.
inline InteractionDataset read_dataset(std::istream& in) {
    InteractionDataset ds;
    std::string line;
    if (!std::getline(in, line)) {
        throw EmptyDatasetError();
    }
    {
        std::istringstream header(line);
        std::string users_tok, items_tok;
        header >> users_tok >> items_tok;
        if (users_tok.rfind("users=", 0) != 0 || items_tok.rfind("items=", 0) != 0 ||
            !detail::parse_integer(std::string_view(users_tok).substr(6), ds.num_users) ||
            !detail::parse_integer(std::string_view(items_tok).substr(6), ds.num_items)) {
            throw ParseError(1, "expected header 'users=<n> items=<m>'");
        }
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view body = detail::trim(line);
        if (body.empty()) {
            continue;
        }
        const auto fields = detail::split(body, "\t");
        Interaction x;
        if (fields.size() != 3 || !detail::parse_integer(fields[0], x.user) ||
            !detail::parse_integer(fields[1], x.item) || !detail::parse_integer(fields[2], x.order)) {
            throw ParseError(line_no, "expected 'user<TAB>item<TAB>order'");
        }
        if (x.user >= ds.num_users || x.item >= ds.num_items) {
            throw ParseError(line_no, "id out of range of header counts");
        }
        ds.interactions.push_back(x);
    }
    if (ds.interactions.empty()) {
        throw EmptyDatasetError();
    }
    return ds;
}

/// Loads either the serialized format (detected by its header) or a rating file.
inline InteractionDataset load_dataset(std::istream& in, RatingFormat format = {}) {
    const std::string all{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    std::istringstream stream(all);
    if (all.rfind("users=", 0) == 0) {
        return read_dataset(stream);
    }
    return parse_ratings(stream, format);
}

}  // namespace fedrec

#endif  // FEDREC_ARENA_DATA_HPP
