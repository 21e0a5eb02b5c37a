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

#ifndef FEDREC_ARENA_TYPES_HPP
#define FEDREC_ARENA_TYPES_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedrec {

using Real = double;
using UserId = std::uint32_t;
using ItemId = std::uint32_t;
using Vector = std::vector<Real>;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

inline Real dot(std::span<const Real> a, std::span<const Real> b) {
    if (a.size() != b.size()) {
        throw DimensionError("dot: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()) + ")");
    }
    Real s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

inline Real squared_norm(std::span<const Real> a) {
    Real s = 0;
    for (Real x : a) {
        s += x * x;
    }
    return s;
}

inline Real norm(std::span<const Real> a) { return std::sqrt(squared_norm(a)); }

inline Real squared_distance(std::span<const Real> a, std::span<const Real> b) {
    if (a.size() != b.size()) {
        throw DimensionError("squared_distance: dimension mismatch");
    }
    Real s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Real diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

inline bool is_zero(std::span<const Real> a) {
    for (Real x : a) {
        if (x != 0) {
            return false;
        }
    }
    return true;
}

/**
 * The global model: one row of `dim` reals per item, tagged with the round
 * it belongs to. Row-major storage.
 */
class ItemEmbeddings {
public:
    ItemEmbeddings() = default;
    ItemEmbeddings(std::size_t num_items, std::size_t dim)
        : num_items_(num_items), dim_(dim), data_(num_items * dim, 0.0) {}

    std::size_t num_items() const { return num_items_; }
    std::size_t dim() const { return dim_; }
    int round() const { return round_; }
    void set_round(int r) { round_ = r; }

    std::span<const Real> row(ItemId i) const { return {data_.data() + std::size_t{i} * dim_, dim_}; }
    std::span<Real> row(ItemId i) { return {data_.data() + std::size_t{i} * dim_, dim_}; }

    std::span<const Real> data() const { return data_; }

    bool all_finite() const {
        for (Real x : data_) {
            if (!std::isfinite(x)) {
                return false;
            }
        }
        return true;
    }

    friend bool operator==(const ItemEmbeddings&, const ItemEmbeddings&) = default;

private:
    std::size_t num_items_ = 0;
    std::size_t dim_ = 0;
    int round_ = 0;
    std::vector<Real> data_;
};

/**
 * A per-user model update: item id -> delta vector. Exactly-zero vectors are
 * never stored, so the key set is the set of items the user actually uploads.
 */
class SparseUpdate {
public:
    using Map = std::map<ItemId, Vector>;

    /// Stores `delta` under `item`, or erases the entry when `delta` is all zeros.
    void set(ItemId item, Vector delta) {
        if (is_zero(delta)) {
            entries_.erase(item);
        } else {
            entries_[item] = std::move(delta);
        }
    }

    const Map& entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    bool contains(ItemId item) const { return entries_.count(item) != 0; }
    const Vector& at(ItemId item) const { return entries_.at(item); }

    std::vector<ItemId> keys() const {
        std::vector<ItemId> out;
        out.reserve(entries_.size());
        for (const auto& [item, _] : entries_) {
            out.push_back(item);
        }
        return out;
    }

private:
    Map entries_;
};

/**
 * Client-private state. `interacted` is the sorted set of items the client
 * trains on; the held-out evaluation item, when present, is kept apart so
 * that it remains a recommendation candidate but is never sampled as a
 * negative. The user embedding never leaves the client.
 */
struct UserProfile {
    UserId user_id = 0;
    Vector user_embedding;
    std::vector<ItemId> interacted;   // sorted, unique
    std::vector<ItemId> train_items;  // chronological
    std::optional<ItemId> held_out;

    bool has_interacted(ItemId item) const {
        return std::binary_search(interacted.begin(), interacted.end(), item);
    }

    /// True if `item` is a training item or the held-out item.
    bool has_seen(ItemId item) const { return has_interacted(item) || held_out == item; }
};

}  // namespace fedrec

#endif  // FEDREC_ARENA_TYPES_HPP
